//! `qmc`: analysis, simulation and scaling studies for quantized Metropolis
//! consensus.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or runtime error,
//! 3 bound-verification failure.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qmc_core::metro::ChainProfile;
use qmc_core::pairchain::meeting_times_analytic;
use qmc_core::sim::{run_consensus, ConvergenceReport, SimConfig, DEFAULT_MAX_TIME, DEFAULT_SEED};
use qmc_core::study::{
    estimate_meeting, scaling_study, verify_bounds, worst_spread, BoundReport, Estimate,
    ScaleFamily, ScalingResult, ANALYTIC_LIMIT,
};
use qmc_core::{Execution, Graph, Process, Schedule, TimeModel};

use output::{csv_row, to_json, write_artifact, Format, Meta};

#[derive(Parser)]
#[command(name = "qmc", version, about = "Quantized Metropolis consensus toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the Metropolis chain profile (M, H, hidden vertex, Φ) of a graph.
    Analyze(AnalyzeArgs),
    /// Simulate one consensus trajectory.
    Run(RunArgs),
    /// Estimate an expected meeting time by Monte Carlo.
    Meet(MeetArgs),
    /// Check the analytic bound suite on a graph or every frame of a schedule.
    Verify(VerifyArgs),
    /// Convergence-time scaling study over a family of graphs or schedules.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct Common {
    /// Output file; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Topology {
    /// Graph file (`n <count>` header, then `u v` edges, 1-indexed).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Schedule file (`{"cycle": bool, "frames": [paths]}`).
    #[arg(long)]
    schedule: Option<PathBuf>,
}

impl Topology {
    /// The schedule and every file it was read from.
    fn load(&self) -> Result<(Schedule, Vec<PathBuf>), CliError> {
        if let Some(path) = &self.graph {
            let g = Graph::load(path).map_err(input)?;
            return Ok((Schedule::fixed(g), vec![path.clone()]));
        }
        let path = self.schedule.as_ref().expect("clap enforces one input");
        let (schedule, frames) = Schedule::load(path).map_err(input)?;
        let mut files = vec![path.clone()];
        files.extend(frames);
        Ok((schedule, files))
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    topology: Topology,
    /// Comma-separated initial integers, or `worst` for the extreme-spread layout.
    #[arg(long)]
    init: String,
    #[arg(long, default_value = "static")]
    time_model: TimeModel,
    #[arg(long, default_value_t = DEFAULT_MAX_TIME)]
    max_time: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MeetArgs {
    #[command(flatten)]
    topology: Topology,
    /// First walker (1-indexed).
    #[arg(long)]
    x: usize,
    /// Second walker (1-indexed).
    #[arg(long)]
    y: usize,
    #[arg(long, default_value = "original")]
    process: Process,
    #[arg(long, default_value = "static")]
    time_model: TimeModel,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    topology: Topology,
    #[arg(long, default_value = "time_varying")]
    time_model: TimeModel,
    /// Largest vertex count analysed.
    #[arg(long, default_value_t = ANALYTIC_LIMIT)]
    limit: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScaleArgs {
    /// `path|cycle|complete|star|er:<p>` or `alt:<family>/<family>`.
    #[arg(long, required_unless_present = "spec")]
    family: Option<ScaleFamily>,
    /// Comma-separated vertex counts.
    #[arg(long, value_delimiter = ',', required_unless_present = "spec")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value = "static")]
    time_model: TimeModel,
    /// JSON study file; replaces family, ns, trials, time model and seed.
    #[arg(long, conflicts_with_all = ["family", "ns"])]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    common: Common,
}

/// Batch study file for `scale --spec`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudySpec {
    family: String,
    ns: Vec<usize>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_time_model")]
    time_model: TimeModel,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_trials() -> usize {
    50
}

fn default_time_model() -> TimeModel {
    TimeModel::Static
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Input(anyhow::Error),
    BoundFailure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::BoundFailure(_) => 3,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Input(e)
    }
}

fn input<E: std::error::Error + Send + Sync + 'static>(e: E) -> CliError {
    CliError::Input(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Run(a) => run(a),
        Command::Meet(a) => meet(a),
        Command::Verify(a) => verify(a),
        Command::Scale(a) => scale(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("qmc: usage: {msg}"),
                CliError::Input(err) => eprintln!("qmc: error: {err:#}"),
                CliError::BoundFailure(msg) => {
                    println!("{msg}");
                    eprintln!("qmc: bound verification failed");
                }
            }
            ExitCode::from(e.code())
        }
    }
}

fn label(x: usize) -> usize {
    x + 1
}

#[derive(Serialize)]
struct AnalyzeBody<'a> {
    n: usize,
    /// 1-indexed hidden vertex.
    theta: usize,
    metropolis: &'a qmc_core::linalg::Matrix,
    hitting: &'a qmc_core::linalg::Matrix,
    phi: &'a qmc_core::linalg::Matrix,
}

fn analyze(args: AnalyzeArgs) -> Result<String, CliError> {
    let g = Graph::load(&args.graph).map_err(input)?;
    let profile = ChainProfile::analyze(&g).map_err(input)?;
    let meta = Meta::new("analyze", args.common.seed, &[args.graph.clone()])?;
    let contents = match args.common.format {
        Format::Json => to_json(
            &meta,
            &AnalyzeBody {
                n: g.n(),
                theta: label(profile.theta),
                metropolis: &profile.metropolis,
                hitting: &profile.hitting,
                phi: &profile.phi,
            },
        )?,
        Format::Csv => {
            let mut out = meta.csv_header();
            out.push_str(&format!("# theta={}\n", label(profile.theta)));
            out.push_str(&csv_row(["matrix", "x", "y", "value"]));
            for (name, m) in [
                ("metropolis", &profile.metropolis),
                ("hitting", &profile.hitting),
                ("phi", &profile.phi),
            ] {
                for x in 0..g.n() {
                    for y in 0..g.n() {
                        out.push_str(&csv_row([
                            name.to_string(),
                            label(x).to_string(),
                            label(y).to_string(),
                            m[(x, y)].to_string(),
                        ]));
                    }
                }
            }
            out
        }
    };
    write_artifact(args.common.out.as_deref(), &contents)?;
    Ok(format!(
        "analyze: n={} hidden_vertex={} max_hitting={}",
        g.n(),
        label(profile.theta),
        profile.hitting.to_rows().iter().flatten().fold(0.0f64, |a, &b| a.max(b))
    ))
}

fn parse_init(spec: &str, n: usize) -> Result<Vec<i64>, CliError> {
    if spec == "worst" {
        return Ok(worst_spread(n));
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<i64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("--init: {e}")))?;
    if values.len() != n {
        return Err(CliError::Usage(format!(
            "--init has {} values for {n} vertices",
            values.len()
        )));
    }
    Ok(values)
}

#[derive(Serialize)]
struct RunBody<'a> {
    config: RunEcho<'a>,
    report: &'a ConvergenceReport,
}

#[derive(Serialize)]
struct RunEcho<'a> {
    n: usize,
    frames: usize,
    cycle: bool,
    initial_values: &'a [i64],
    time_model: TimeModel,
    max_time: f64,
}

fn run(args: RunArgs) -> Result<String, CliError> {
    let (schedule, files) = args.topology.load()?;
    let initial = parse_init(&args.init, schedule.n())?;
    let mut cfg = SimConfig::new(schedule, initial);
    cfg.time_model = args.time_model;
    cfg.seed = args.common.seed;
    cfg.max_time = args.max_time;
    let report = run_consensus(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let meta = Meta::new("run", args.common.seed, &files)?;
    let contents = match args.common.format {
        Format::Json => to_json(
            &meta,
            &RunBody {
                config: RunEcho {
                    n: cfg.schedule.n(),
                    frames: cfg.schedule.frames().len(),
                    cycle: cfg.schedule.cycles(),
                    initial_values: &cfg.initial_values,
                    time_model: cfg.time_model,
                    max_time: cfg.max_time,
                },
                report: &report,
            },
        )?,
        Format::Csv => {
            let mut out = meta.csv_header();
            out.push_str(&format!(
                "# converged={} stop_time={} events={} nontrivial_updates={}\n",
                report.converged, report.stop_time, report.events, report.nontrivial_updates
            ));
            out.push_str(&csv_row(["time", "spread"]));
            for (t, v) in &report.lyapunov_trace {
                out.push_str(&csv_row([t.to_string(), v.to_string()]));
            }
            out
        }
    };
    write_artifact(args.common.out.as_deref(), &contents)?;
    Ok(format!(
        "run: converged={} stop_time={} events={} nontrivial={} final_spread={}",
        report.converged,
        report.stop_time,
        report.events,
        report.nontrivial_updates,
        report.lyapunov_trace.last().map_or(0, |p| p.1)
    ))
}

#[derive(Serialize)]
struct MeetBody {
    start: (usize, usize),
    process: Process,
    time_model: TimeModel,
    estimate: Estimate,
    /// Linear-solve value when the input is a single graph within the
    /// analytic limit.
    analytic: Option<f64>,
}

fn meet(args: MeetArgs) -> Result<String, CliError> {
    let (schedule, files) = args.topology.load()?;
    let n = schedule.n();
    for v in [args.x, args.y] {
        if v == 0 || v > n {
            return Err(CliError::Usage(format!("walker {v} outside 1..={n}")));
        }
    }
    let start = (args.x - 1, args.y - 1);
    let estimate = estimate_meeting(
        &schedule,
        start,
        args.process,
        args.time_model,
        args.trials,
        args.common.seed,
        Execution::from_jobs(args.jobs),
    )
    .map_err(input)?;
    let analytic = match schedule.frames() {
        [g] if n <= ANALYTIC_LIMIT => {
            let m = meeting_times_analytic(g, args.process, args.time_model).map_err(input)?;
            Some(m[start])
        }
        _ => None,
    };
    let body = MeetBody {
        start: (args.x, args.y),
        process: args.process,
        time_model: args.time_model,
        estimate,
        analytic,
    };
    let meta = Meta::new("meet", args.common.seed, &files)?;
    let contents = match args.common.format {
        Format::Json => to_json(&meta, &body)?,
        Format::Csv => {
            let mut out = meta.csv_header();
            out.push_str(&csv_row([
                "x", "y", "process", "time_model", "trials", "mean", "stderr", "ci95_lo", "ci95_hi",
                "analytic",
            ]));
            out.push_str(&csv_row([
                args.x.to_string(),
                args.y.to_string(),
                args.process.to_string(),
                args.time_model.to_string(),
                estimate.trials.to_string(),
                estimate.mean.to_string(),
                estimate.stderr.to_string(),
                estimate.ci95.0.to_string(),
                estimate.ci95.1.to_string(),
                analytic.map_or(String::new(), |a| a.to_string()),
            ]));
            out
        }
    };
    write_artifact(args.common.out.as_deref(), &contents)?;
    Ok(format!(
        "meet: mean={} stderr={} trials={}{}",
        estimate.mean,
        estimate.stderr,
        estimate.trials,
        analytic.map_or(String::new(), |a| format!(" analytic={a}"))
    ))
}

fn verify(args: VerifyArgs) -> Result<String, CliError> {
    let (schedule, files) = args.topology.load()?;
    let report: BoundReport =
        verify_bounds(&schedule, args.time_model, args.limit).map_err(input)?;
    let meta = Meta::new("verify", args.common.seed, &files)?;
    let contents = match args.common.format {
        Format::Json => to_json(&meta, &report)?,
        Format::Csv => {
            let mut out = meta.csv_header();
            out.push_str(&csv_row(["frame", "check", "value", "sense", "limit", "margin", "passed"]));
            for c in &report.checks {
                out.push_str(&csv_row([
                    c.frame.to_string(),
                    c.name.to_string(),
                    c.value.to_string(),
                    match c.sense {
                        qmc_core::study::Sense::AtMost => "<=".to_string(),
                        qmc_core::study::Sense::AtLeast => ">=".to_string(),
                    },
                    c.limit.to_string(),
                    c.margin.to_string(),
                    c.passed.to_string(),
                ]));
            }
            out
        }
    };
    write_artifact(args.common.out.as_deref(), &contents)?;
    let passed = report.checks.iter().filter(|c| c.passed).count();
    let summary = format!(
        "verify: {passed}/{} checks passed over {} frame(s); lambda_max(D)={}",
        report.checks.len(),
        report.frames,
        report.lambda_max()
    );
    if report.passed() {
        Ok(summary)
    } else {
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        Err(CliError::BoundFailure(format!("{summary}; failed: {}", failed.join(","))))
    }
}

fn load_study(path: &Path) -> Result<StudySpec, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(CliError::Input)
}

fn scale(args: ScaleArgs) -> Result<String, CliError> {
    let (family, ns, trials, model, seed, files) = match &args.spec {
        Some(path) => {
            let spec = load_study(path)?;
            let family: ScaleFamily = spec
                .family
                .parse()
                .map_err(|e: String| CliError::Input(anyhow!("{}: {e}", path.display())))?;
            (family, spec.ns, spec.trials, spec.time_model, spec.seed, vec![path.clone()])
        }
        None => (
            args.family.expect("clap requires --family"),
            args.ns.clone(),
            args.trials,
            args.time_model,
            args.common.seed,
            Vec::new(),
        ),
    };
    let result: ScalingResult =
        scaling_study(family, &ns, trials, model, seed, Execution::from_jobs(args.jobs))
            .map_err(input)?;
    let meta = Meta::new("scale", seed, &files)?;
    let contents = match args.common.format {
        Format::Json => to_json(&meta, &result)?,
        Format::Csv => {
            let mut out = meta.csv_header();
            out.push_str(&format!(
                "# family={} time_model={} fit_exponent={}\n",
                result.family, result.time_model, result.fit_exponent
            ));
            out.push_str(&csv_row([
                "n", "trials", "mean_time", "stderr", "ci95_lo", "ci95_hi", "normalized",
                "mean_events", "mean_nontrivial",
            ]));
            for p in &result.points {
                out.push_str(&csv_row([
                    p.n.to_string(),
                    p.time.trials.to_string(),
                    p.time.mean.to_string(),
                    p.time.stderr.to_string(),
                    p.time.ci95.0.to_string(),
                    p.time.ci95.1.to_string(),
                    p.normalized.to_string(),
                    p.mean_events.to_string(),
                    p.mean_nontrivial.to_string(),
                ]));
            }
            out
        }
    };
    write_artifact(args.common.out.as_deref(), &contents)?;
    Ok(format!(
        "scale: family={} points={} fit_exponent={} normalized_max_over_min={}",
        result.family,
        result.points.len(),
        result.fit_exponent,
        result.normalized_ratio()
    ))
}
