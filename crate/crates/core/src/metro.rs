//! Metropolis edge rates, the Metropolis chain, hitting times, hidden
//! vertices and the Φ potential for a fixed graph.

use serde::Serialize;
use thiserror::Error;

use crate::graph::Graph;
use crate::linalg::{self, LinalgError, Matrix};

/// Slack allowed when comparing `H(θ,x) ≤ H(x,θ)`.
pub const HIDDEN_VERTEX_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetroError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("no hidden vertex found within tolerance {0:e}")]
    NoHiddenVertex(f64),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
}

/// Poisson rates of the edges (and optionally the self-loops) of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    n: usize,
    /// `(i, j, λ_ij)` with `i < j`, in the graph's edge order.
    edges: Vec<(usize, usize, f64)>,
    /// Per-vertex `(neighbor, λ)` lists in ascending neighbor order.
    incident: Vec<Vec<(usize, f64)>>,
    self_loops: Option<Vec<f64>>,
    total_rate: f64,
}

impl RateTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn incident(&self, x: usize) -> &[(usize, f64)] {
        &self.incident[x]
    }

    /// `λ_xy`, zero for non-edges and for `x == y`.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        self.incident[x]
            .binary_search_by_key(&y, |&(v, _)| v)
            .map_or(0.0, |i| self.incident[x][i].1)
    }

    /// `Λ_x`: sum of the rates of the edges at `x`, self-loop excluded.
    pub fn vertex_rate(&self, x: usize) -> f64 {
        self.incident[x].iter().map(|&(_, r)| r).sum()
    }

    pub fn self_loops(&self) -> Option<&[f64]> {
        self.self_loops.as_deref()
    }

    pub fn self_loop(&self, x: usize) -> f64 {
        self.self_loops.as_ref().map_or(0.0, |s| s[x])
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }
}

/// Metropolis rates `λ_ij = 1/max(d_i, d_j)`. With `with_self_loops`, each
/// vertex also gets `λ_xx = 1 − ½ Σ_i λ_{x x_i}`, making the total rate `n`.
pub fn metropolis_rates(g: &Graph, with_self_loops: bool) -> RateTable {
    let n = g.n();
    let edges: Vec<_> = g
        .edges()
        .iter()
        .map(|&(i, j)| (i, j, 1.0 / g.degree(i).max(g.degree(j)) as f64))
        .collect();
    let mut incident = vec![Vec::new(); n];
    for &(i, j, r) in &edges {
        incident[i].push((j, r));
        incident[j].push((i, r));
    }
    for list in &mut incident {
        list.sort_by_key(|&(v, _)| v);
    }
    let edge_total: f64 = edges.iter().map(|e| e.2).sum();
    let self_loops = with_self_loops.then(|| {
        incident
            .iter()
            .map(|list| 1.0 - 0.5 * list.iter().map(|&(_, r)| r).sum::<f64>())
            .collect::<Vec<f64>>()
    });
    let total_rate = edge_total + self_loops.as_ref().map_or(0.0, |s| s.iter().sum());
    RateTable {
        n,
        edges,
        incident,
        self_loops,
        total_rate,
    }
}

/// The Metropolis transition matrix: off-diagonal `λ_ij` on edges, the
/// remaining mass on the diagonal.
pub fn metropolis_matrix(g: &Graph) -> Matrix {
    let rates = metropolis_rates(g, false);
    let n = g.n();
    let mut m = Matrix::zeros(n, n);
    for &(i, j, r) in rates.edges() {
        m[(i, j)] = r;
        m[(j, i)] = r;
    }
    for x in 0..n {
        m[(x, x)] = 1.0 - rates.vertex_rate(x);
    }
    m
}

/// Expected number of steps for the chain `m` to go from `x` to `y`, for
/// all pairs. One dense solve per target.
pub fn hitting_times(m: &Matrix) -> Result<Matrix, MetroError> {
    let n = m.rows();
    if m.cols() != n {
        return Err(MetroError::NotSquare(m.rows(), m.cols()));
    }
    let mut h = Matrix::zeros(n, n);
    for y in 0..n {
        let others: Vec<usize> = (0..n).filter(|&x| x != y).collect();
        let k = others.len();
        let mut a = Matrix::zeros(k, k);
        for (r, &x) in others.iter().enumerate() {
            for (c, &z) in others.iter().enumerate() {
                a[(r, c)] = if r == c { 1.0 } else { 0.0 } - m[(x, z)];
            }
        }
        let sol = linalg::solve(a, vec![1.0; k])?;
        for (r, &x) in others.iter().enumerate() {
            h[(x, y)] = sol[r];
        }
    }
    Ok(h)
}

/// Smallest index `θ` with `H(θ,x) ≤ H(x,θ)` for every `x`.
pub fn hidden_vertex(h: &Matrix) -> Result<usize, MetroError> {
    let n = h.rows();
    (0..n)
        .find(|&theta| (0..n).all(|x| h[(theta, x)] <= h[(x, theta)] + HIDDEN_VERTEX_TOL))
        .ok_or(MetroError::NoHiddenVertex(HIDDEN_VERTEX_TOL))
}

/// `Φ(x,y) = H(x,y) + H(y,θ) − H(θ,y)`.
pub fn phi(h: &Matrix, theta: usize) -> Matrix {
    let n = h.rows();
    let mut p = Matrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            p[(x, y)] = h[(x, y)] + h[(y, theta)] - h[(theta, y)];
        }
    }
    p
}

/// Everything derived from the Metropolis chain of one graph.
#[derive(Debug, Clone, Serialize)]
pub struct ChainProfile {
    pub metropolis: Matrix,
    pub hitting: Matrix,
    /// 0-based hidden vertex.
    pub theta: usize,
    pub phi: Matrix,
}

impl ChainProfile {
    pub fn analyze(g: &Graph) -> Result<Self, MetroError> {
        let metropolis = metropolis_matrix(g);
        let hitting = hitting_times(&metropolis)?;
        let theta = hidden_vertex(&hitting)?;
        let phi = phi(&hitting, theta);
        Ok(ChainProfile {
            metropolis,
            hitting,
            theta,
            phi,
        })
    }

    /// Largest `|H(x,y)+H(y,z)+H(z,x) − H(x,z)−H(z,y)−H(y,x)|` over triples.
    pub fn transitivity_residual(&self) -> f64 {
        let h = &self.hitting;
        let n = h.rows();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let fwd = h[(x, y)] + h[(y, z)] + h[(z, x)];
                    let back = h[(x, z)] + h[(z, y)] + h[(y, x)];
                    worst = worst.max((fwd - back).abs());
                }
            }
        }
        worst
    }

    /// Largest `|Φ(x,y) − Φ(y,x)|`.
    pub fn phi_asymmetry(&self) -> f64 {
        let n = self.phi.rows();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in 0..x {
                worst = worst.max((self.phi[(x, y)] - self.phi[(y, x)]).abs());
            }
        }
        worst
    }

    /// Largest residual of the two-walker recursion satisfied by Φ off the
    /// diagonal: `Φ(x,y) = 2/Λ_xy + Σ λ_{x x_i}/Λ_xy Φ(x_i,y) + Σ λ_{y y_i}/Λ_xy Φ(x,y_i)`.
    pub fn phi_recursion_residual(&self, g: &Graph) -> f64 {
        let rates = metropolis_rates(g, false);
        let n = g.n();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let lam = rates.vertex_rate(x) + rates.vertex_rate(y);
                let mut rhs = 2.0 / lam;
                for &(xi, r) in rates.incident(x) {
                    rhs += r / lam * self.phi[(xi, y)];
                }
                for &(yi, r) in rates.incident(y) {
                    rhs += r / lam * self.phi[(x, yi)];
                }
                worst = worst.max((self.phi[(x, y)] - rhs).abs());
            }
        }
        worst
    }
}
