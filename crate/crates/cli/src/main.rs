//! Batch front end: load a scenario, run solve/simulate/verify pipelines and
//! emit deterministic JSON/CSV reports.
//!
//! Exit codes: 0 success, 1 I/O-or-parse failure, 2 scenario/flag validation
//! failure, 3 verification failure.

mod report;
mod scenario_file;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_merton::nalgebra::DVector;
use robust_merton::{
    estimate_expected_utility, hjb_residual, hjb_sample_points, martingale_check,
    martingale_check_powered, saddle_point_scan, shape_check, simulate_wealth_cash,
    simulate_wealth_fraction, solve, theta_candidates, Error as CoreError, MartingaleVerdict,
    ParameterPath, PathConfig, PiGridSpec, RobustSolution, Scenario, Scheme,
};

use report::{
    format_float, to_json_string, verdict_name, write_atomic, CellReport, HjbSuiteReport,
    MartingaleLeg, MartingaleSuiteReport, SaddleCellReport, ShapeSuiteReport, SolveReport,
    ValuePoint, VerifyReport, TOOL_VERSION,
};
use scenario_file::{ParameterPathFile, ScenarioFile};

const HJB_RESIDUAL_THRESHOLD: f64 = 1e-6;
const SADDLE_GAP_THRESHOLD: f64 = 1e-8;
const MARTINGALE_PERTURBATION: f64 = 0.5;

#[derive(Parser)]
#[command(
    name = "robust-merton",
    version,
    about = "Robust Merton strategies under drift/volatility uncertainty: solve, simulate, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write the closed-form solution report (JSON).
    Solve {
        /// Scenario JSON file (schema version "1").
        scenario: PathBuf,
        /// Output report path.
        #[arg(short, long)]
        output: PathBuf,
        /// Extra points "t:x" at which to report the value function.
        #[arg(long = "at", value_name = "T:X")]
        at: Vec<String>,
    },
    /// Simulate terminal wealth under the solved strategy (CSV).
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long = "steps-per-year", default_value_t = 252)]
        steps_per_year: u32,
        /// Master seed; every path derives its own stream from it.
        #[arg(long, env = "ROBUST_MERTON_SEED", default_value_t = 42)]
        seed: u64,
        /// "worst" for the worst-case parameters, or a parameter-path JSON file.
        #[arg(long, default_value = "worst")]
        theta: String,
        /// "exact" or "euler".
        #[arg(long, default_value = "exact")]
        scheme: String,
    },
    /// Run verification suites against the closed-form solution (JSON).
    Verify {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// One of: saddle, hjb, martingale, shape, all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, env = "ROBUST_MERTON_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Multiply every per-cell rate by this factor before verifying
        /// (sensitivity/corruption testing; 1.0 is the identity).
        #[arg(long = "inject-rate-scale", default_value_t = 1.0)]
        inject_rate_scale: f64,
    },
}

/// Failure modes mapped onto exit codes.
enum Failure {
    /// Exit 1: I/O, JSON, or argument-format problems.
    Parse(String),
    /// Exit 2: the scenario or the run parameters fail validation.
    Validation(Vec<String>),
    /// Exit 3: a verification suite did not pass.
    Verification(String),
}

impl Failure {
    fn parse(msg: impl Into<String>) -> Self {
        Failure::Parse(msg.into())
    }

    fn validation_one(msg: impl Into<String>) -> Self {
        Failure::Validation(vec![msg.into()])
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Validation(violations) => {
                Failure::Validation(violations.iter().map(|v| v.to_string()).collect())
            }
            other => Failure::Parse(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Parse(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(violations)) => {
            eprintln!("validation failed:");
            for v in violations {
                eprintln!("  - {v}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve { scenario, output, at } => cmd_solve(&scenario, &output, &at),
        Command::Simulate { scenario, output, paths, steps_per_year, seed, theta, scheme } => {
            cmd_simulate(&scenario, &output, paths, steps_per_year, seed, &theta, &scheme)
        }
        Command::Verify { scenario, output, suite, seed, paths, inject_rate_scale } => {
            cmd_verify(&scenario, &output, &suite, seed, paths, inject_rate_scale)
        }
    }
}

fn load_scenario(path: &Path) -> Result<(ScenarioFile, Scenario), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::parse(format!("cannot read {}: {e}", path.display())))?;
    let file: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| Failure::parse(format!("cannot parse {}: {e}", path.display())))?;
    let scenario = file
        .to_scenario()
        .map_err(|v| Failure::Validation(v.iter().map(|x| x.to_string()).collect()))?;
    Ok((file, scenario))
}

fn solve_validated(scenario: &Scenario) -> Result<RobustSolution, Failure> {
    solve(scenario).map_err(Failure::from)
}

fn cmd_solve(scenario_path: &Path, output: &Path, at: &[String]) -> Result<(), Failure> {
    let (_, scenario) = load_scenario(scenario_path)?;
    let solution = solve_validated(&scenario)?;
    let mut values = Vec::new();
    for spec in at {
        let (t, x) = parse_point(spec)?;
        let value = solution.value_at(t, x).map_err(Failure::from)?;
        values.push(ValuePoint { t, x, value });
    }
    let report = SolveReport {
        tool_version: TOOL_VERSION.to_string(),
        scenario: ScenarioFile::from_scenario(&scenario),
        cells: CellReport::from_solution(&solution),
        value_at_t0: solution.value_at(0.0, scenario.x0).map_err(Failure::from)?,
        values,
    };
    let json = to_json_string(&report).map_err(|e| Failure::parse(e.to_string()))?;
    write_atomic(output, &json).map_err(|e| Failure::parse(e.to_string()))?;
    println!(
        "solved {} cell(s); V(0, x0) = {}",
        report.cells.len(),
        format_float(report.value_at_t0)
    );
    Ok(())
}

fn parse_point(spec: &str) -> Result<(f64, f64), Failure> {
    let (t, x) = spec
        .split_once(':')
        .ok_or_else(|| Failure::parse(format!("bad --at value {spec:?}, expected T:X")))?;
    let t: f64 = t.trim().parse().map_err(|_| Failure::parse(format!("bad time in {spec:?}")))?;
    let x: f64 =
        x.trim().parse().map_err(|_| Failure::parse(format!("bad wealth in {spec:?}")))?;
    Ok((t, x))
}

fn parse_scheme(scheme: &str) -> Result<Scheme, Failure> {
    match scheme {
        "exact" => Ok(Scheme::Exact),
        "euler" => Ok(Scheme::Euler),
        other => Err(Failure::parse(format!("unknown scheme {other:?}, expected exact|euler"))),
    }
}

fn cmd_simulate(
    scenario_path: &Path,
    output: &Path,
    paths: usize,
    steps_per_year: u32,
    seed: u64,
    theta: &str,
    scheme: &str,
) -> Result<(), Failure> {
    let (_, scenario) = load_scenario(scenario_path)?;
    if paths == 0 {
        return Err(Failure::validation_one("--paths must be at least 1"));
    }
    if steps_per_year == 0 {
        return Err(Failure::validation_one("--steps-per-year must be at least 1"));
    }
    let solution = solve_validated(&scenario)?;
    let horizon = scenario.horizon();

    let path = if theta == "worst" {
        ParameterPath::worst_case(&solution)
    } else {
        let text = std::fs::read_to_string(theta)
            .map_err(|e| Failure::parse(format!("cannot read theta file {theta:?}: {e}")))?;
        let file: ParameterPathFile = serde_json::from_str(&text)
            .map_err(|e| Failure::parse(format!("cannot parse theta file {theta:?}: {e}")))?;
        let path = file.to_path().map_err(Failure::parse)?;
        if (path.t_start() - 0.0).abs() > 1e-12 || (path.t_end() - horizon).abs() > 1e-12 {
            return Err(Failure::validation_one(format!(
                "theta path spans [{}, {}] but the scenario horizon is [0, {horizon}]",
                path.t_start(),
                path.t_end()
            )));
        }
        path
    };

    let config = PathConfig::new(paths, steps_per_year, seed).with_scheme(parse_scheme(scheme)?);
    let policy = solution.optimal_policy(0.0, horizon).map_err(Failure::from)?;
    let wealth = if scenario.utility.is_cash_strategy() {
        simulate_wealth_cash(&path, &policy, scenario.x0, scenario.r, &config)
    } else {
        simulate_wealth_fraction(&path, &policy, scenario.x0, scenario.r, &config)
    }
    .map_err(Failure::from)?;

    let estimate =
        estimate_expected_utility(&wealth, &scenario.utility, seed).map_err(Failure::from)?;

    let mut csv = String::with_capacity(wealth.len() * 48 + 64);
    csv.push_str("path_id,terminal_wealth,utility_value\n");
    for (i, &x) in wealth.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{}",
            format_float(x),
            format_float(scenario.utility.evaluate_unchecked(x))
        );
    }
    let _ = writeln!(csv, "summary,{},{}", format_float(estimate.mean), format_float(estimate.std_error));
    write_atomic(output, &csv).map_err(|e| Failure::parse(e.to_string()))?;

    let mean_wealth = wealth.iter().sum::<f64>() / wealth.len() as f64;
    let discount = (scenario.r * horizon).exp();
    println!(
        "simulated {} paths (seed {seed}): mean utility {} +- {}",
        wealth.len(),
        format_float(estimate.mean),
        format_float(estimate.std_error)
    );
    println!(
        "mean terminal wealth: discounted {}, undiscounted {}",
        format_float(mean_wealth),
        format_float(mean_wealth * discount)
    );
    println!(
        "analytic V(0, x0) = {}",
        format_float(solution.value_at(0.0, scenario.x0).map_err(Failure::from)?)
    );
    Ok(())
}

fn run_saddle_suite(solution: &RobustSolution, seed: u64) -> Result<Vec<SaddleCellReport>, Failure> {
    let scenario = &solution.scenario;
    let d = scenario.dim();
    let mut reports = Vec::new();
    for (i, cell) in scenario.schedule.cells.iter().enumerate() {
        let candidates =
            theta_candidates(cell, scenario.r, 50, seed.wrapping_add(i as u64)).map_err(Failure::from)?;
        let strategy = &solution.cells[i].strategy;
        // Box covering the analytic strategy with at least 50% margin.
        let half_width = strategy.amax().max(1.0) * 2.0;
        let points = match d {
            1 => 1001,
            2 => 101,
            _ => 31,
        };
        let grid = PiGridSpec::symmetric(d, half_width, points);
        let scan = saddle_point_scan(
            cell,
            scenario.r,
            scenario.x0,
            &scenario.utility,
            &grid,
            &candidates,
            10,
        )
        .map_err(Failure::from)?;
        let arg_ok = (0..d).all(|k| {
            (scan.arg_pi[k] - strategy[k]).abs() <= scan.grid.final_step * (1.0 + 1e-9)
        });
        let pass = scan.gap.abs() <= SADDLE_GAP_THRESHOLD && scan.gap >= -1e-12 && arg_ok;
        reports.push(SaddleCellReport {
            cell_index: i,
            maximin: scan.maximin,
            minimax: scan.minimax,
            gap: scan.gap,
            arg_pi: scan.arg_pi.iter().copied().collect(),
            arg_mu: scan.arg_mu.iter().copied().collect(),
            arg_sigma: (0..d)
                .map(|row| (0..d).map(|col| scan.arg_sigma[(row, col)]).collect())
                .collect(),
            analytic_strategy: strategy.iter().copied().collect(),
            grid_lower: scan.grid.lower.iter().copied().collect(),
            grid_upper: scan.grid.upper.iter().copied().collect(),
            grid_points_per_dim: scan.grid.points_per_dim,
            grid_refinements: scan.grid.refinements,
            final_grid_step: scan.grid.final_step,
            pass,
        });
    }
    Ok(reports)
}

fn run_hjb_suite(solution: &RobustSolution, seed: u64) -> Result<HjbSuiteReport, Failure> {
    let x0 = solution.scenario.x0;
    let points = hjb_sample_points(solution, 100, 0.5 * x0, 2.5 * x0, seed);
    let report = hjb_residual(solution, &points).map_err(Failure::from)?;
    Ok(HjbSuiteReport {
        points_per_cell: 100,
        max_abs_relative_residual: report.max_abs_relative_residual,
        threshold: HJB_RESIDUAL_THRESHOLD,
        pass: report.max_abs_relative_residual <= HJB_RESIDUAL_THRESHOLD,
    })
}

fn run_martingale_suite(
    solution: &RobustSolution,
    seed: u64,
    paths: usize,
) -> Result<MartingaleSuiteReport, Failure> {
    let scenario = &solution.scenario;
    let (s, t) = (0.0, 0.5 * scenario.horizon());
    let x = scenario.x0;
    let config = PathConfig::new(paths, 16, seed);

    let optimal_policy = solution.optimal_policy(s, t).map_err(Failure::from)?;
    let optimal = martingale_check(solution, &optimal_policy, s, t, x, &config).map_err(Failure::from)?;

    let delta = DVector::from_element(scenario.dim(), MARTINGALE_PERTURBATION);
    let perturbed_policy = optimal_policy.perturbed(&delta).map_err(Failure::from)?;
    let perturbed = martingale_check_powered(
        solution,
        &perturbed_policy,
        s,
        t,
        x,
        &PathConfig::new(paths / 4 + 1, 16, seed.wrapping_add(1)),
        4_000_000,
    )
    .map_err(Failure::from)?;

    let perturbed_ok = perturbed.verdict == MartingaleVerdict::StrictSupermartingale
        && perturbed.lhs.std_error < perturbed.deficit() / 5.0;
    let pass = optimal.verdict == MartingaleVerdict::Martingale && perturbed_ok;
    Ok(MartingaleSuiteReport {
        s,
        t,
        optimal: MartingaleLeg {
            mean: optimal.lhs.mean,
            std_error: optimal.lhs.std_error,
            n_paths: optimal.lhs.n_paths,
            reference_value: optimal.rhs,
            verdict: verdict_name(optimal.verdict).to_string(),
        },
        perturbed: MartingaleLeg {
            mean: perturbed.lhs.mean,
            std_error: perturbed.lhs.std_error,
            n_paths: perturbed.lhs.n_paths,
            reference_value: perturbed.rhs,
            verdict: verdict_name(perturbed.verdict).to_string(),
        },
        perturbation: MARTINGALE_PERTURBATION,
        pass,
    })
}

fn run_shape_suite(solution: &RobustSolution, seed: u64) -> Result<ShapeSuiteReport, Failure> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let x0 = solution.scenario.x0;
    let grid: Vec<f64> = (0..50)
        .map(|i| 0.25 * x0 * (16.0f64).powf(i as f64 / 49.0))
        .collect();
    let horizon = solution.horizon();
    let mut times = Vec::with_capacity(10);
    let mut pass = true;
    for _ in 0..10 {
        let t: f64 = rng.gen_range(0.0..=horizon);
        times.push(t);
        let report = shape_check(solution, t, &grid).map_err(Failure::from)?;
        pass &= report.passed();
    }
    Ok(ShapeSuiteReport { times, grid_points: grid.len(), pass })
}

fn cmd_verify(
    scenario_path: &Path,
    output: &Path,
    suite: &str,
    seed: u64,
    paths: usize,
    inject_rate_scale: f64,
) -> Result<(), Failure> {
    if !["saddle", "hjb", "martingale", "shape", "all"].contains(&suite) {
        return Err(Failure::parse(format!(
            "unknown suite {suite:?}, expected saddle|hjb|martingale|shape|all"
        )));
    }
    let (_, scenario) = load_scenario(scenario_path)?;
    if paths == 0 {
        return Err(Failure::validation_one("--paths must be at least 1"));
    }
    let solution = solve_validated(&scenario)?.with_rate_scale(inject_rate_scale);

    let want = |name: &str| suite == name || suite == "all";
    let saddle = if want("saddle") { Some(run_saddle_suite(&solution, seed)?) } else { None };
    let hjb = if want("hjb") { Some(run_hjb_suite(&solution, seed)?) } else { None };
    let martingale = if want("martingale") {
        Some(run_martingale_suite(&solution, seed, paths)?)
    } else {
        None
    };
    let shape = if want("shape") { Some(run_shape_suite(&solution, seed)?) } else { None };

    let pass = saddle.as_ref().is_none_or(|s| s.iter().all(|c| c.pass))
        && hjb.as_ref().is_none_or(|h| h.pass)
        && martingale.as_ref().is_none_or(|m| m.pass)
        && shape.as_ref().is_none_or(|s| s.pass);

    let report = VerifyReport {
        tool_version: TOOL_VERSION.to_string(),
        scenario: ScenarioFile::from_scenario(&scenario),
        seed,
        inject_rate_scale,
        saddle,
        hjb,
        martingale,
        shape,
        pass,
    };
    let json = to_json_string(&report).map_err(|e| Failure::parse(e.to_string()))?;
    write_atomic(output, &json).map_err(|e| Failure::parse(e.to_string()))?;

    for (name, ok) in [
        ("saddle", report.saddle.as_ref().map(|s| s.iter().all(|c| c.pass))),
        ("hjb", report.hjb.as_ref().map(|h| h.pass)),
        ("martingale", report.martingale.as_ref().map(|m| m.pass)),
        ("shape", report.shape.as_ref().map(|s| s.pass)),
    ] {
        if let Some(ok) = ok {
            println!("{name}: {}", if ok { "pass" } else { "FAIL" });
        }
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "one or more suites failed; see {}",
            output.display()
        )))
    }
}
