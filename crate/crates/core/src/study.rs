//! Monte Carlo estimates, the analytic bound suite, and convergence-time
//! scaling studies.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::graph::{generate, Family, Graph, GraphError, Schedule};
use crate::linalg::Matrix;
use crate::metro::{ChainProfile, MetroError};
use crate::pairchain::{meeting_times_analytic, pd_matrices, PairError, Process, TimeModel};
use crate::sim::{stream_seed, trial_rng, ConsensusSim, MeetingSim, SimError, DEFAULT_MAX_TIME};

/// Largest `n` the bound suite accepts by default.
pub const ANALYTIC_LIMIT: usize = 12;
/// Absolute slack for the identity-style checks.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Slack on `1/(1 − λ_max(D)) ≤ max absorption`.
pub const ABSORPTION_TOL: f64 = 1e-6;
/// Fewest trials accepted per scaling point.
pub const MIN_SCALING_TRIALS: usize = 30;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metro(#[from] MetroError),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trial {trial} (n = {n}) was censored at time cap {max_time}")]
    Censored { n: usize, trial: usize, max_time: f64 },
    #[error("n = {n} exceeds the analytic limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub ci95: (f64, f64),
}

impl Estimate {
    /// Sample mean with standard error `s/√trials` and a normal 95% interval.
    pub fn from_samples(samples: &[f64]) -> Result<Self, StudyError> {
        let trials = samples.len();
        if trials < 2 {
            return Err(StudyError::InvalidArgument(format!(
                "need at least 2 trials, got {trials}"
            )));
        }
        let n = trials as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        Ok(Estimate {
            mean,
            stderr,
            trials,
            ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
        })
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Mean meeting time from 0-based `start` over independent trials.
pub fn estimate_meeting(
    schedule: &Schedule,
    start: (usize, usize),
    process: Process,
    model: TimeModel,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Estimate, StudyError> {
    let sim = MeetingSim::new(schedule, process, model, DEFAULT_MAX_TIME);
    let samples = map_indexed(exec, trials, |k| {
        sim.sample(start.0, start.1, &mut trial_rng(seed, k as u64))
            .map(|s| s.tau)
    });
    let taus = collect_censored(schedule.n(), samples)?;
    Estimate::from_samples(&taus)
}

/// Mean time to the first nontrivial update from `initial`.
pub fn estimate_first_nontrivial(
    schedule: &Schedule,
    initial: &[i64],
    model: TimeModel,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Estimate, StudyError> {
    if initial.len() != schedule.n() {
        return Err(StudyError::InvalidArgument(format!(
            "{} initial values for {} vertices",
            initial.len(),
            schedule.n()
        )));
    }
    let sim = ConsensusSim::new(schedule, model, DEFAULT_MAX_TIME);
    let samples = map_indexed(exec, trials, |k| {
        sim.first_nontrivial(initial, &mut trial_rng(seed, k as u64))
    });
    let times = collect_censored(schedule.n(), samples)?;
    Estimate::from_samples(&times)
}

fn collect_censored(n: usize, samples: Vec<Result<f64, SimError>>) -> Result<Vec<f64>, StudyError> {
    samples
        .into_iter()
        .enumerate()
        .map(|(trial, s)| match s {
            Err(SimError::TimeCapReached(max_time)) => Err(StudyError::Censored {
                n,
                trial,
                max_time,
            }),
            other => other.map_err(StudyError::from),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub frame: usize,
    pub value: f64,
    pub sense: Sense,
    pub limit: f64,
    /// Distance to the limit on the passing side; negative means failure.
    pub margin: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn new(name: &'static str, frame: usize, value: f64, sense: Sense, limit: f64) -> Self {
        let margin = match sense {
            Sense::AtMost => limit - value,
            Sense::AtLeast => value - limit,
        };
        BoundCheck {
            name,
            frame,
            value,
            sense,
            limit,
            margin,
            passed: margin >= 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub time_model: TimeModel,
    pub frames: usize,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Largest `λ_max(D)` over the frames.
    pub fn lambda_max(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name == "lambda_max_d")
            .map(|c| c.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn max_entry(m: &Matrix) -> f64 {
    m.to_rows().iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn frame_checks(g: &Graph, frame: usize, model: TimeModel) -> Result<Vec<BoundCheck>, StudyError> {
    use Sense::*;
    let n = g.n();
    let nf = n as f64;
    let profile = ChainProfile::analyze(g)?;
    let mo = meeting_times_analytic(g, Process::Original, model)?;
    let mv = meeting_times_analytic(g, Process::Virtual, model)?;
    let spectrum = pd_matrices(g)?;
    let mut excess = f64::NEG_INFINITY;
    for x in 0..n {
        for y in 0..n {
            excess = excess.max(mv[(x, y)] - 0.5 * profile.phi[(x, y)]);
        }
    }
    let max_mv = max_entry(&mv);
    let max_mo = max_entry(&mo);
    Ok(vec![
        BoundCheck::new("hitting_le_6n2", frame, max_entry(&profile.hitting), AtMost, 6.0 * nf * nf),
        BoundCheck::new("transitivity_residual", frame, profile.transitivity_residual(), AtMost, IDENTITY_TOL),
        BoundCheck::new("phi_asymmetry", frame, profile.phi_asymmetry(), AtMost, IDENTITY_TOL),
        BoundCheck::new("mv_le_half_phi", frame, excess, AtMost, IDENTITY_TOL),
        BoundCheck::new("mv_le_6n2", frame, max_mv, AtMost, 6.0 * nf * nf),
        BoundCheck::new("mo_le_twice_max_mv", frame, max_mo, AtMost, 2.0 * max_mv + IDENTITY_TOL),
        BoundCheck::new("mo_le_12n2", frame, max_mo, AtMost, 12.0 * nf * nf),
        BoundCheck::new("lambda_max_d", frame, spectrum.lambda_max, AtMost, 1.0 - 1.0 / (6.0 * nf.powi(3))),
        BoundCheck::new("lambda_min_d", frame, spectrum.lambda_min, AtLeast, 1.0 - 4.0 / nf),
        BoundCheck::new(
            "inverse_gap_le_absorption",
            frame,
            1.0 / (1.0 - spectrum.lambda_max),
            AtMost,
            spectrum.max_absorption() + ABSORPTION_TOL,
        ),
    ])
}

/// Runs every analytic bound on each frame of `schedule`. Violations are
/// report entries; errors are reserved for inputs the suite cannot analyse.
pub fn verify_bounds(
    schedule: &Schedule,
    model: TimeModel,
    limit: usize,
) -> Result<BoundReport, StudyError> {
    let n = schedule.n();
    if n > limit {
        return Err(StudyError::TooLarge { n, limit });
    }
    let mut checks = Vec::new();
    for (frame, g) in schedule.frames().iter().enumerate() {
        checks.extend(frame_checks(g, frame, model)?);
    }
    Ok(BoundReport {
        n,
        time_model: model,
        frames: schedule.frames().len(),
        checks,
    })
}

/// A graph family or a two-frame alternating schedule of families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleFamily {
    Single(Family),
    Alternating(Family, Family),
}

impl ScaleFamily {
    /// The schedule on `n` vertices. Random families draw from `seed`.
    pub fn schedule(&self, n: usize, seed: u64) -> Result<Schedule, GraphError> {
        match *self {
            ScaleFamily::Single(f) => Ok(Schedule::fixed(generate(f, n, seed)?)),
            ScaleFamily::Alternating(a, b) => Schedule::new(
                vec![generate(a, n, seed)?, generate(b, n, stream_seed(seed, 1))?],
                true,
            ),
        }
    }
}

impl fmt::Display for ScaleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleFamily::Single(family) => write!(f, "{family}"),
            ScaleFamily::Alternating(a, b) => write!(f, "alt:{a}/{b}"),
        }
    }
}

impl FromStr for ScaleFamily {
    type Err = String;

    /// `<family>` or `alt:<family>/<family>`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("alt:") {
            Some(rest) => {
                let (a, b) = rest
                    .split_once('/')
                    .ok_or_else(|| format!("expected alt:<family>/<family>, found `{s}`"))?;
                Ok(ScaleFamily::Alternating(a.parse()?, b.parse()?))
            }
            None => Ok(ScaleFamily::Single(s.parse()?)),
        }
    }
}

/// One node at `n`, one at `0`, the rest at `n/2` rounded half up.
pub fn worst_spread(n: usize) -> Vec<i64> {
    let mid = (n as i64 + 1) / 2;
    let mut v = vec![mid; n];
    v[0] = n as i64;
    v[n - 1] = 0;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub time: Estimate,
    /// `T(n)/(n² ln n)` (static) or `T(n)/(n² ln² n)` (time-varying).
    pub normalized: f64,
    pub mean_events: f64,
    pub mean_nontrivial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub family: String,
    pub time_model: TimeModel,
    pub seed: u64,
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `ln T` against `ln n`.
    pub fit_exponent: f64,
}

impl ScalingResult {
    /// `max/min` of the normalized series.
    pub fn normalized_ratio(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.normalized), hi.max(p.normalized)));
        hi / lo
    }
}

pub fn normalize(n: usize, time: f64, model: TimeModel) -> f64 {
    let nf = n as f64;
    let log = nf.ln();
    match model {
        TimeModel::Static => time / (nf * nf * log),
        TimeModel::TimeVarying => time / (nf * nf * log * log),
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean convergence time from [`worst_spread`] for each `n`.
pub fn scaling_study(
    family: ScaleFamily,
    ns: &[usize],
    trials: usize,
    model: TimeModel,
    seed: u64,
    exec: Execution,
) -> Result<ScalingResult, StudyError> {
    if trials < MIN_SCALING_TRIALS {
        return Err(StudyError::InvalidArgument(format!(
            "scaling needs at least {MIN_SCALING_TRIALS} trials per point, got {trials}"
        )));
    }
    if ns.is_empty() || ns.iter().any(|&n| n < 2) {
        return Err(StudyError::InvalidArgument("every n must be at least 2".into()));
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut points = Vec::with_capacity(ns.len());
    for &n in &ns {
        let point_seed = stream_seed(seed, n as u64);
        let schedule = family.schedule(n, point_seed)?;
        let initial = worst_spread(n);
        let sim = ConsensusSim::new(&schedule, model, DEFAULT_MAX_TIME);
        let reports = map_indexed(exec, trials, |k| {
            sim.run(&initial, &mut trial_rng(point_seed, k as u64))
        });
        if let Some(trial) = reports.iter().position(|r| !r.converged) {
            return Err(StudyError::Censored {
                n,
                trial,
                max_time: DEFAULT_MAX_TIME,
            });
        }
        let times: Vec<f64> = reports.iter().map(|r| r.stop_time).collect();
        let time = Estimate::from_samples(&times)?;
        let count = trials as f64;
        points.push(ScalingPoint {
            n,
            normalized: normalize(n, time.mean, model),
            time,
            mean_events: reports.iter().map(|r| r.events as f64).sum::<f64>() / count,
            mean_nontrivial: reports.iter().map(|r| r.nontrivial_updates as f64).sum::<f64>() / count,
        });
    }
    let fit_exponent = if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.time.mean.ln()).collect();
        fit_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(ScalingResult {
        family: family.to_string(),
        time_model: model,
        seed,
        points,
        fit_exponent,
    })
}
