//! Event-driven Poisson simulation of quantized Metropolis consensus and of
//! the two-walker meeting processes.
//!
//! All edge (and self-loop) Poisson processes of the active frame are
//! superposed into one clock of rate `total_rate`; the firing event is then
//! drawn proportionally to its rate. A waiting time that would cross the
//! next integer time is discarded and the clock restarts at the boundary
//! with the next frame's rates, which is exact by memorylessness. At an
//! integer time the frame switch happens before any arrival.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;
use thiserror::Error;

use crate::graph::Schedule;
use crate::metro::{metropolis_rates, RateTable};
use crate::pairchain::{Process, TimeModel};

/// Simulated-time cap applied when none is given.
pub const DEFAULT_MAX_TIME: f64 = 1e6;

/// Seed used when the caller does not provide one.
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Generator used for every trajectory, recorded in reports for replay.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(rand_chacha 0.9) seeded by seed_from_u64; \
trial k of master seed s uses stream_seed(s, k) = splitmix64(s ^ splitmix64(k + 1))";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time cap {0} reached before termination")]
    TimeCapReached(f64),
    #[error("initial configuration is already in the consensus set")]
    AlreadyInConsensus,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sub-stream `k` of `master`.
pub fn stream_seed(master: u64, k: u64) -> u64 {
    splitmix64(master ^ splitmix64(k.wrapping_add(1)))
}

pub fn trial_rng(master: u64, k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, k))
}

/// Something that can register a Poisson arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Event {
    /// 0-based endpoints, `i < j`.
    Edge(usize, usize),
    SelfLoop(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub event: Event,
    pub time: f64,
}

#[derive(Debug, Clone)]
struct FrameClock {
    events: Vec<Event>,
    cumulative: Vec<f64>,
    total: f64,
}

impl FrameClock {
    fn new(rates: &RateTable) -> Self {
        let mut events = Vec::new();
        let mut weights = Vec::new();
        for &(i, j, r) in rates.edges() {
            events.push(Event::Edge(i, j));
            weights.push(r);
        }
        if let Some(loops) = rates.self_loops() {
            for (x, &r) in loops.iter().enumerate() {
                if r > 0.0 {
                    events.push(Event::SelfLoop(x));
                    weights.push(r);
                }
            }
        }
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().expect("connected graphs have events");
        FrameClock {
            events,
            cumulative,
            total,
        }
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Event {
        let u = rng.random::<f64>() * self.total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.events[i.min(self.events.len() - 1)]
    }
}

/// Superposed arrival clock for a schedule under one rate model.
#[derive(Debug, Clone)]
pub struct EventClock<'a> {
    schedule: &'a Schedule,
    frames: Vec<FrameClock>,
}

impl<'a> EventClock<'a> {
    pub fn new(schedule: &'a Schedule, model: TimeModel) -> Self {
        let frames = schedule
            .frames()
            .iter()
            .map(|g| FrameClock::new(&metropolis_rates(g, model.self_loops())))
            .collect();
        EventClock { schedule, frames }
    }

    /// Total arrival rate of the frame active at `t`.
    pub fn total_rate_at(&self, t: f64) -> f64 {
        self.frames[self.schedule.frame_index_at(t)].total
    }

    /// Next arrival strictly after `t`.
    pub fn next_arrival<R: Rng + ?Sized>(&self, mut t: f64, rng: &mut R) -> Arrival {
        loop {
            let frame = &self.frames[self.schedule.frame_index_at(t)];
            let wait: f64 = rng.sample::<f64, _>(Exp1) / frame.total;
            if self.schedule.switches_after(t) {
                let boundary = t.floor() + 1.0;
                if t + wait >= boundary {
                    t = boundary;
                    continue;
                }
            }
            return Arrival {
                event: frame.pick(rng),
                time: t + wait,
            };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Nontrivial,
    TrivialEqual,
    TrivialSwap,
}

/// The quantized pairwise update applied to both endpoints of an edge.
pub fn quantized_update(xi: i64, xj: i64) -> (i64, i64, UpdateKind) {
    use std::cmp::Ordering::*;
    let step = |a: i64, b: i64| match a.cmp(&b) {
        Greater => a - 1,
        Less => a + 1,
        Equal => a,
    };
    let kind = match (xi - xj).abs() {
        0 => UpdateKind::TrivialEqual,
        1 => UpdateKind::TrivialSwap,
        _ => UpdateKind::Nontrivial,
    };
    (step(xi, xj), step(xj, xi), kind)
}

fn spread(values: &[i64]) -> i64 {
    let (lo, hi) = values
        .iter()
        .fold((i64::MAX, i64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub schedule: Schedule,
    pub initial_values: Vec<i64>,
    pub time_model: TimeModel,
    pub seed: u64,
    pub max_time: f64,
    /// Optional `[l, L]` the initial values must lie in.
    pub value_range: Option<(i64, i64)>,
}

impl SimConfig {
    pub fn new(schedule: Schedule, initial_values: Vec<i64>) -> Self {
        SimConfig {
            schedule,
            initial_values,
            time_model: TimeModel::Static,
            seed: DEFAULT_SEED,
            max_time: DEFAULT_MAX_TIME,
            value_range: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.schedule.n();
        if self.initial_values.len() != n {
            return Err(SimError::InvalidConfig(format!(
                "{} initial values for {n} vertices",
                self.initial_values.len()
            )));
        }
        if !(self.max_time > 0.0) {
            return Err(SimError::InvalidConfig("max_time must be positive".into()));
        }
        if let Some((lo, hi)) = self.value_range {
            if let Some(v) = self.initial_values.iter().find(|&&v| v < lo || v > hi) {
                return Err(SimError::InvalidConfig(format!(
                    "initial value {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub stop_time: f64,
    pub events: u64,
    pub nontrivial_updates: u64,
    pub final_values: Vec<i64>,
    /// `(time, max − min)` at the start and at every decrease.
    pub lyapunov_trace: Vec<(f64, i64)>,
}

/// What an observer sees after each arrival.
#[derive(Debug)]
pub struct Step<'v> {
    pub arrival: Arrival,
    pub kind: Option<UpdateKind>,
    pub values: &'v [i64],
}

#[derive(Clone, Copy, PartialEq)]
enum StopRule {
    Consensus,
    FirstNontrivial,
}

/// Consensus dynamics on a schedule, reusable across trials.
#[derive(Debug, Clone)]
pub struct ConsensusSim<'a> {
    clock: EventClock<'a>,
    max_time: f64,
}

impl<'a> ConsensusSim<'a> {
    pub fn new(schedule: &'a Schedule, model: TimeModel, max_time: f64) -> Self {
        ConsensusSim {
            clock: EventClock::new(schedule, model),
            max_time,
        }
    }

    /// Runs until the spread is at most one or the time cap passes.
    pub fn run<R: Rng + ?Sized>(&self, initial: &[i64], rng: &mut R) -> ConvergenceReport {
        self.run_observed(initial, rng, |_| {})
    }

    pub fn run_observed<R, F>(&self, initial: &[i64], rng: &mut R, observer: F) -> ConvergenceReport
    where
        R: Rng + ?Sized,
        F: FnMut(&Step<'_>),
    {
        self.simulate(initial, rng, StopRule::Consensus, observer)
    }

    /// Time of the first nontrivial update.
    pub fn first_nontrivial<R: Rng + ?Sized>(
        &self,
        initial: &[i64],
        rng: &mut R,
    ) -> Result<f64, SimError> {
        if spread(initial) <= 1 {
            return Err(SimError::AlreadyInConsensus);
        }
        let report = self.simulate(initial, rng, StopRule::FirstNontrivial, |_| {});
        if report.nontrivial_updates == 0 {
            return Err(SimError::TimeCapReached(self.max_time));
        }
        Ok(report.stop_time)
    }

    fn simulate<R, F>(
        &self,
        initial: &[i64],
        rng: &mut R,
        rule: StopRule,
        mut observer: F,
    ) -> ConvergenceReport
    where
        R: Rng + ?Sized,
        F: FnMut(&Step<'_>),
    {
        let mut values = initial.to_vec();
        let mut v = spread(&values);
        let mut report = ConvergenceReport {
            converged: v <= 1,
            stop_time: 0.0,
            events: 0,
            nontrivial_updates: 0,
            final_values: Vec::new(),
            lyapunov_trace: vec![(0.0, v)],
        };
        let mut t = 0.0;
        while v > 1 {
            let arrival = self.clock.next_arrival(t, rng);
            if arrival.time > self.max_time {
                report.stop_time = self.max_time;
                break;
            }
            t = arrival.time;
            report.events += 1;
            let kind = match arrival.event {
                Event::Edge(i, j) => {
                    let (a, b, kind) = quantized_update(values[i], values[j]);
                    values[i] = a;
                    values[j] = b;
                    Some(kind)
                }
                Event::SelfLoop(_) => None,
            };
            observer(&Step {
                arrival,
                kind,
                values: &values,
            });
            if kind == Some(UpdateKind::Nontrivial) {
                report.nontrivial_updates += 1;
                let next = spread(&values);
                if next < v {
                    v = next;
                    report.lyapunov_trace.push((t, v));
                }
                if rule == StopRule::FirstNontrivial {
                    report.stop_time = t;
                    break;
                }
            }
            if v <= 1 {
                report.converged = true;
                report.stop_time = t;
            }
        }
        report.final_values = values;
        report
    }
}

/// Runs one consensus trajectory. Hitting the time cap is reported through
/// `converged == false`, not as an error.
pub fn run_consensus(cfg: &SimConfig) -> Result<ConvergenceReport, SimError> {
    cfg.validate()?;
    let sim = ConsensusSim::new(&cfg.schedule, cfg.time_model, cfg.max_time);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(sim.run(&cfg.initial_values, &mut rng))
}

pub fn first_nontrivial_time(cfg: &SimConfig) -> Result<f64, SimError> {
    cfg.validate()?;
    let sim = ConsensusSim::new(&cfg.schedule, cfg.time_model, cfg.max_time);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sim.first_nontrivial(&cfg.initial_values, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeetingSample {
    pub tau: f64,
    /// 0-based start positions.
    pub start: (usize, usize),
    pub process: Process,
    pub events: u64,
}

/// Two walkers driven by the arrivals of a schedule. Only arrivals incident
/// to a walker are resolved to a specific edge; all others are counted as
/// idle events.
#[derive(Debug, Clone)]
pub struct MeetingSim<'a> {
    schedule: &'a Schedule,
    frames: Vec<RateTable>,
    process: Process,
    model: TimeModel,
    max_time: f64,
}

impl<'a> MeetingSim<'a> {
    pub fn new(schedule: &'a Schedule, process: Process, model: TimeModel, max_time: f64) -> Self {
        let frames = schedule
            .frames()
            .iter()
            .map(|g| metropolis_rates(g, model.self_loops()))
            .collect();
        MeetingSim {
            schedule,
            frames,
            process,
            model,
            max_time,
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        x: usize,
        y: usize,
        rng: &mut R,
    ) -> Result<MeetingSample, SimError> {
        let n = self.schedule.n();
        if x >= n || y >= n {
            return Err(SimError::InvalidConfig(format!(
                "walker start ({}, {}) outside 1..={n}",
                x + 1,
                y + 1
            )));
        }
        let mut sample = MeetingSample {
            tau: 0.0,
            start: (x, y),
            process: self.process,
            events: 0,
        };
        let (mut a, mut b) = (x, y);
        let mut t = 0.0;
        while a != b {
            let rates = &self.frames[self.schedule.frame_index_at(t)];
            let shared = rates.rate(a, b);
            let meet_rate = match self.process {
                Process::Original => shared,
                Process::Virtual => 2.0 * shared,
            };
            // The doubled edge adds rate in the static model; with self-loops
            // the endpoints' loops give it up and the total stays n.
            let total = match (self.process, self.model) {
                (Process::Virtual, TimeModel::Static) => rates.total_rate() + shared,
                _ => rates.total_rate(),
            };
            let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
            if self.schedule.switches_after(t) {
                let boundary = t.floor() + 1.0;
                if t + wait >= boundary {
                    t = boundary;
                    continue;
                }
            }
            t += wait;
            if t > self.max_time {
                return Err(SimError::TimeCapReached(self.max_time));
            }
            sample.events += 1;
            let mut u = rng.random::<f64>() * total;
            if u < meet_rate {
                sample.tau = t;
                return Ok(sample);
            }
            u -= meet_rate;
            if let Some(next) = pick_move(rates.incident(a), b, &mut u) {
                a = next;
            } else if let Some(next) = pick_move(rates.incident(b), a, &mut u) {
                b = next;
            }
        }
        Ok(sample)
    }
}

/// Consumes `u` against the rates of the edges at one walker (skipping the
/// edge to the other walker) and returns the chosen destination, if any.
fn pick_move(incident: &[(usize, f64)], other: usize, u: &mut f64) -> Option<usize> {
    for &(v, r) in incident {
        if v == other {
            continue;
        }
        if *u < r {
            return Some(v);
        }
        *u -= r;
    }
    None
}

/// One meeting-time sample from 0-based starts `x`, `y`.
pub fn run_meeting(
    schedule: &Schedule,
    x: usize,
    y: usize,
    process: Process,
    model: TimeModel,
    seed: u64,
) -> Result<MeetingSample, SimError> {
    MeetingSim::new(schedule, process, model, DEFAULT_MAX_TIME).sample(
        x,
        y,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}
