//! Quantized Metropolis consensus on static and time-varying graphs.
//!
//! - [`graph`]: connected graphs, integer-time schedules, generators, file I/O.
//! - [`metro`]: Metropolis rates and chain, hitting times, hidden vertex, Φ.
//! - [`pairchain`]: analytic two-walker meeting times and the absorbing pair
//!   chain with its spectral bounds.
//! - [`sim`]: event-driven Poisson simulation of the consensus dynamics and
//!   of the walker processes.
//! - [`study`]: Monte Carlo estimates, the bound suite, scaling studies.

pub mod exec;
pub mod graph;
pub mod linalg;
pub mod metro;
pub mod pairchain;
pub mod sim;
pub mod study;

pub use exec::Execution;
pub use graph::{generate, Family, Graph, GraphError, Schedule};
pub use metro::ChainProfile;
pub use pairchain::{Process, TimeModel};
