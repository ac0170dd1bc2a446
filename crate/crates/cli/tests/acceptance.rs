//! Acceptance gate. Runs every exit criterion at its fixed tolerance, prints
//! one `PASS`/`FAIL` line per criterion and exits non-zero if any failed.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmc_core::exec::map_indexed;
use qmc_core::pairchain::meeting_times_analytic;
use qmc_core::sim::{stream_seed, trial_rng, ConsensusSim, DEFAULT_MAX_TIME};
use qmc_core::study::{
    estimate_first_nontrivial, estimate_meeting, scaling_study, verify_bounds, Estimate,
    ScaleFamily, ANALYTIC_LIMIT,
};
use qmc_core::{generate, Execution, Family, Graph, Process, Schedule, TimeModel};

const SEED: u64 = 0xacce_97ed;
const SIGMAS: f64 = 3.0;
const EXACT_TOL: f64 = 1e-9;
const PAR: Execution = Execution::Parallel { threads: 0 };

const PROCESSES: [Process; 2] = [Process::Original, Process::Virtual];
const MODELS: [TimeModel; 2] = [TimeModel::Static, TimeModel::TimeVarying];

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

/// `(mean − value)/stderr`.
fn z_score(est: &Estimate, value: f64) -> f64 {
    (est.mean - value) / est.stderr
}

fn complete(n: usize) -> Graph {
    generate(Family::Complete, n, 0).unwrap()
}

fn exact_small_oracles() -> Outcome {
    // (graph, original, virtual)
    let cases = [(complete(2), 1.0, 0.5), (complete(3), 2.0, 1.0)];
    let mut exact_err = 0.0f64;
    let mut worst_z = 0.0f64;
    let mut failures = Vec::new();
    let mut case = 0;
    for (g, mo, mv) in &cases {
        let schedule = Schedule::fixed(g.clone());
        for model in MODELS {
            for (process, expected) in [(Process::Original, *mo), (Process::Virtual, *mv)] {
                let m = meeting_times_analytic(g, process, model).unwrap();
                exact_err = exact_err.max((m[(0, 1)] - expected).abs());
                let seed = stream_seed(SEED, case);
                case += 1;
                let est = estimate_meeting(&schedule, (0, 1), process, model, 100_000, seed, PAR)
                    .unwrap();
                let z = z_score(&est, expected);
                worst_z = worst_z.max(z.abs());
                if !est.agrees_with(expected, SIGMAS) {
                    failures.push(format!("K{} {process} {model} z={z:.2}", g.n()));
                }
            }
        }
    }
    Outcome::new(
        exact_err <= EXACT_TOL && failures.is_empty(),
        format!(
            "max analytic error {exact_err:.1e} (tol {EXACT_TOL:.0e}); 8 MC means, worst |z|={worst_z:.2}{}",
            fmt_failures(&failures)
        ),
    )
}

fn fmt_failures(failures: &[String]) -> String {
    if failures.is_empty() {
        String::new()
    } else {
        format!("; failed: {}", failures.join(", "))
    }
}

fn monte_carlo_matches_linear_solve() -> Outcome {
    let mut comparisons = 0;
    let mut worst_z = 0.0f64;
    let mut sum_z2 = 0.0;
    let mut failures = Vec::new();
    for i in 0..20u64 {
        let n = 2 + (i as usize % 5);
        let g = generate(Family::ErdosRenyi(0.5), n, stream_seed(SEED, 100 + i)).unwrap();
        let schedule = Schedule::fixed(g.clone());
        for process in PROCESSES {
            for model in MODELS {
                let m = meeting_times_analytic(&g, process, model).unwrap();
                for x in 0..n {
                    for y in x + 1..n {
                        let seed = stream_seed(SEED, 1_000 + comparisons);
                        comparisons += 1;
                        let est =
                            estimate_meeting(&schedule, (x, y), process, model, 10_000, seed, PAR)
                                .unwrap();
                        let z = z_score(&est, m[(x, y)]);
                        worst_z = worst_z.max(z.abs());
                        sum_z2 += z * z;
                        if !est.agrees_with(m[(x, y)], SIGMAS) {
                            failures.push(format!(
                                "graph {i} (n={n}) pair ({},{}) {process} {model} z={z:.2}",
                                x + 1,
                                y + 1
                            ));
                        }
                    }
                }
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{comparisons} pair estimates on 20 graphs, worst |z|={worst_z:.2}, mean z^2={:.3}, \
             {} outside {SIGMAS} sigma ({:.1} expected by chance){}",
            sum_z2 / comparisons as f64,
            failures.len(),
            comparisons as f64 * 0.0027,
            fmt_failures(&failures)
        ),
    )
}

fn bound_suite_graphs() -> Vec<(String, Graph)> {
    let mut graphs = Vec::new();
    for n in 2..=12usize {
        let mut push = |family: Family, seed: u64| {
            let g = generate(family, n, seed).unwrap();
            graphs.push((format!("{family} n={n} seed={seed}"), g));
        };
        push(Family::Path, 0);
        if n >= 3 {
            push(Family::Cycle, 0);
        }
        push(Family::Complete, 0);
        push(Family::Star, 0);
        for s in 0..4 {
            push(Family::ErdosRenyi(0.3), stream_seed(SEED, 200 + s));
        }
        for s in 0..3 {
            push(Family::ErdosRenyi(0.6), stream_seed(SEED, 300 + s));
        }
    }
    graphs
}

fn bound_suite() -> Outcome {
    let graphs = bound_suite_graphs();
    let reports = map_indexed(PAR, graphs.len() * 2, |k| {
        let (label, g) = &graphs[k / 2];
        let model = MODELS[k % 2];
        let report = verify_bounds(&Schedule::fixed(g.clone()), model, ANALYTIC_LIMIT);
        (label.clone(), model, report)
    });
    let mut checks = 0;
    let mut failures = Vec::new();
    for (label, model, report) in reports {
        match report {
            Ok(r) => {
                checks += r.checks.len();
                failures.extend(r.failures().map(|c| format!("{label} {model} {}", c.name)));
            }
            Err(e) => failures.push(format!("{label} {model}: {e}")),
        }
    }
    Outcome::new(
        graphs.len() >= 100 && failures.is_empty(),
        format!(
            "{} graphs x 2 rate models, {checks} checks, {} failures{}",
            graphs.len(),
            failures.len(),
            fmt_failures(&failures)
        ),
    )
}

struct RandomRun {
    schedule: Schedule,
    model: TimeModel,
    initial: Vec<i64>,
}

fn random_run(rng: &mut ChaCha8Rng) -> RandomRun {
    let n = rng.random_range(2..=32usize);
    let frames = rng.random_range(1..=3usize);
    let graphs = (0..frames)
        .map(|_| {
            let p = rng.random_range(0.15..0.8);
            generate(Family::ErdosRenyi(p), n, rng.random()).unwrap()
        })
        .collect();
    let schedule = Schedule::new(graphs, rng.random_bool(0.5)).unwrap();
    let model = if rng.random_bool(0.5) {
        TimeModel::Static
    } else {
        TimeModel::TimeVarying
    };
    let hi = 2 * n as i64;
    let initial = (0..n).map(|_| rng.random_range(-hi..=hi)).collect();
    RandomRun {
        schedule,
        model,
        initial,
    }
}

fn protocol_invariants() -> Outcome {
    const RUNS: usize = 1_000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let runs: Vec<RandomRun> = (0..RUNS).map(|_| random_run(&mut rng)).collect();
    let verdicts = map_indexed(PAR, RUNS, |k| {
        let run = &runs[k];
        let sum: i64 = run.initial.iter().sum();
        let mut prev_spread = spread(&run.initial);
        let mut violation = None;
        let sim = ConsensusSim::new(&run.schedule, run.model, DEFAULT_MAX_TIME);
        let report = sim.run_observed(&run.initial, &mut trial_rng(SEED, k as u64), |step| {
            let s = spread(step.values);
            if violation.is_none() {
                if step.values.iter().sum::<i64>() != sum {
                    violation = Some("sum changed");
                } else if s > prev_spread {
                    violation = Some("spread increased");
                }
            }
            prev_spread = s;
        });
        let floor = sum.div_euclid(run.initial.len() as i64);
        if let Some(v) = violation {
            Err(format!("run {k}: {v}"))
        } else if !report.converged {
            Err(format!("run {k}: time cap reached"))
        } else if report
            .final_values
            .iter()
            .any(|&v| v != floor && v != floor + 1)
        {
            Err(format!("run {k}: final values outside {{{floor}, {}}}", floor + 1))
        } else {
            Ok(report.events)
        }
    });
    let events: u64 = verdicts.iter().filter_map(|v| v.as_ref().ok()).sum();
    let failures: Vec<String> = verdicts.into_iter().filter_map(Result::err).collect();
    Outcome::new(
        failures.is_empty(),
        format!(
            "{RUNS} runs, {events} events, {} violations{}",
            failures.len(),
            fmt_failures(&failures)
        ),
    )
}

fn spread(values: &[i64]) -> i64 {
    values.iter().max().unwrap() - values.iter().min().unwrap()
}

fn static_scaling() -> Outcome {
    let result = scaling_study(
        ScaleFamily::Single(Family::Path),
        &[8, 16, 32, 64],
        50,
        TimeModel::Static,
        SEED,
        PAR,
    )
    .unwrap();
    let ratio = result.normalized_ratio();
    let exponent = result.fit_exponent;
    Outcome::new(
        (1.6..=2.6).contains(&exponent) && ratio <= 4.0,
        format!(
            "path n=8..64, 50 trials: fit exponent {exponent:.3} (band [1.6, 2.6]), normalized max/min {ratio:.3} (limit 4)"
        ),
    )
}

fn time_varying_scaling() -> Outcome {
    let result = scaling_study(
        ScaleFamily::Alternating(Family::Path, Family::Star),
        &[8, 16, 32],
        50,
        TimeModel::TimeVarying,
        SEED,
        PAR,
    )
    .unwrap();
    let ratio = result.normalized_ratio();
    let series: Vec<String> = result
        .points
        .iter()
        .map(|p| format!("{}:{:.4}", p.n, p.normalized))
        .collect();
    Outcome::new(
        ratio <= 4.0,
        format!(
            "alternating path/star n=8,16,32, 50 trials: normalized [{}] max/min {ratio:.3} (limit 4), fit exponent {:.3}",
            series.join(" "),
            result.fit_exponent
        ),
    )
}

fn first_update_matches_meeting_time() -> Outcome {
    let graphs = [
        generate(Family::Path, 4, 0).unwrap(),
        generate(Family::Star, 5, 0).unwrap(),
        generate(Family::Cycle, 6, 0).unwrap(),
        generate(Family::Complete, 4, 0).unwrap(),
        generate(Family::ErdosRenyi(0.5), 6, stream_seed(SEED, 400)).unwrap(),
    ];
    let mut worst_z = 0.0f64;
    let mut failures = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        let n = g.n();
        let (a, b) = (0, n - 1);
        let v = 3;
        let mut initial = vec![v + 1; n];
        initial[a] = v + 2;
        initial[b] = v;
        let mo = meeting_times_analytic(g, Process::Original, TimeModel::Static).unwrap();
        let est = estimate_first_nontrivial(
            &Schedule::fixed(g.clone()),
            &initial,
            TimeModel::Static,
            10_000,
            stream_seed(SEED, 500 + i as u64),
            PAR,
        )
        .unwrap();
        let z = z_score(&est, mo[(a, b)]);
        worst_z = worst_z.max(z.abs());
        if !est.agrees_with(mo[(a, b)], SIGMAS) {
            failures.push(format!("graph {i} mean {:.4} vs {:.4} z={z:.2}", est.mean, mo[(a, b)]));
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("5 graphs, worst |z|={worst_z:.2}{}", fmt_failures(&failures)),
    )
}

fn qmc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qmc"))
        .args(args)
        .output()
        .expect("spawn qmc")
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("cycle5.txt");
    std::fs::write(&graph, generate(Family::Cycle, 5, 0).unwrap().to_text()).unwrap();
    let g = graph.to_str().unwrap();
    let invocations: Vec<Vec<&str>> = vec![
        vec!["analyze", "--graph", g],
        vec!["run", "--graph", g, "--init", "worst", "--seed", "11"],
        vec!["run", "--graph", g, "--init", "worst", "--seed", "11", "--format", "csv"],
        vec!["meet", "--graph", g, "--x", "1", "--y", "3", "--trials", "2000", "--seed", "12"],
        vec!["meet", "--graph", g, "--x", "1", "--y", "3", "--trials", "2000", "--seed", "12", "--jobs", "4"],
        vec!["verify", "--graph", g, "--format", "csv"],
        vec!["scale", "--family", "path", "--ns", "6,10", "--trials", "30", "--seed", "13"],
        vec!["scale", "--family", "alt:path/star", "--ns", "6,10", "--trials", "30", "--time-model", "time_varying", "--format", "csv", "--jobs", "3"],
    ];
    let mut failures = Vec::new();
    for (i, args) in invocations.iter().enumerate() {
        let bytes: Vec<Option<Vec<u8>>> = (0..2)
            .map(|rep| {
                let out = dir.path().join(format!("out_{i}_{rep}"));
                let mut full = args.clone();
                full.extend(["--out", out.to_str().unwrap()]);
                let status = qmc(&full).status;
                status.success().then(|| read(&out))
            })
            .collect();
        match (&bytes[0], &bytes[1]) {
            (Some(a), Some(b)) if a == b && !a.is_empty() => {}
            (Some(_), Some(_)) => failures.push(format!("`{}` differs", args[0])),
            _ => failures.push(format!("`{}` did not succeed", args[0])),
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} invocations repeated, all artifacts byte-identical={}{}",
            invocations.len(),
            failures.is_empty(),
            fmt_failures(&failures)
        ),
    )
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("exact small-graph meeting times", exact_small_oracles),
        ("Monte Carlo vs linear solve", monte_carlo_matches_linear_solve),
        ("analytic bound suite", bound_suite),
        ("protocol invariants", protocol_invariants),
        ("static scaling", static_scaling),
        ("time-varying scaling", time_varying_scaling),
        ("first nontrivial update vs meeting time", first_update_matches_meeting_time),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} [{:.1}s] {}",
            i + 1,
            if outcome.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
