//! Command-line interface: solving, verification, figure data, λ sweeps.
//!
//! Four subcommands over scenario files:
//!
//! * `solve <scenario> <output>` — write the equilibrium summary as JSON;
//! * `verify <scenario>` — run the structural check suite (plus the
//!   deviation oracle with `--with-oracle`) and print the report as JSON;
//! * `figures <scenario> <outdir>` — emit the five figure datasets as CSVs;
//! * `sweep <scenario> --lambda-min --lambda-max --steps` — write the
//!   S₀(λ) curve and its kinks.
//!
//! Exit codes: `0` success, `1` solve/runtime error, `2` input error
//! (unreadable or schema-invalid scenario, bad flags), `3` verification
//! failure.
//!
//! All emitted numbers use a fixed scientific format with 17 significant
//! digits, `.` as the decimal separator, and `\n` line endings, so repeated
//! runs are byte-identical and every float round-trips exactly. Output
//! files are rendered in memory before anything is written: a failing run
//! leaves no partial artifacts behind. The environment variable
//! `RADNER_GRID` overrides the default evaluation grid size (2001 points);
//! an explicit `--grid` flag or a scenario `grid` key takes precedence over
//! it.

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::scenario::{load_scenario, Scenario};
use crate::statics::{kink_points, lambda_sweep, SweepResult};
use crate::verification::{deviation_oracle, run_all_checks};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

/// Default evaluation grid size (uniform points before breakpoints).
pub const DEFAULT_GRID: usize = 2001;

/// Largest accepted grid size from any source.
const MAX_GRID: usize = 1_000_001;

/// Convergence tolerance handed to the deviation oracle.
const ORACLE_TOL: f64 = 1e-12;

/// Fixed λ grid for the S₀-versus-λ figure: 200 points spanning `(0, 2]`.
const FIG5_STEPS: usize = 200;
const FIG5_LAMBDA_MAX: f64 = 2.0;

/// Exit statuses promised by the interface contract.
const EXIT_OK: i32 = 0;
const EXIT_RUNTIME: i32 = 1;
const EXIT_INPUT: i32 = 2;
const EXIT_VERIFICATION: i32 = 3;

#[derive(Parser)]
#[command(
    name = "radner",
    version,
    about = "Solve and verify multi-agent Radner equilibria with proportional trading costs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write the equilibrium summary as JSON.
    Solve {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Output path for the summary JSON.
        output: PathBuf,
    },
    /// Run the verification suite and print its report as JSON.
    Verify {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Evaluation grid size (uniform points before breakpoints).
        #[arg(long)]
        grid: Option<usize>,
        /// Oracle grid intervals (at least 50).
        #[arg(long, default_value_t = 400)]
        oracle_n: usize,
        /// Also re-optimize every agent's problem with the discrete oracle.
        #[arg(long)]
        with_oracle: bool,
        /// Corrupt the solved stop times before verifying (testing aid).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Emit the five figure datasets as CSV files.
    Figures {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Directory for the CSV files (created if missing).
        outdir: PathBuf,
        /// Comma-separated 1-based agents for the strategy figure
        /// (default: all agents).
        #[arg(long)]
        agents: Option<String>,
        /// Two comma-separated λ values for the drift-comparison figure.
        #[arg(long, default_value = "0.1,0.2")]
        fig4_lambdas: String,
        /// Evaluation grid size (uniform points before breakpoints).
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Sweep λ over (min, max] and write the S₀ curve plus its kinks.
    Sweep {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Lower end of the λ range (exclusive; 0 is allowed).
        #[arg(long)]
        lambda_min: f64,
        /// Upper end of the λ range (inclusive).
        #[arg(long)]
        lambda_max: f64,
        /// Number of grid points in (min, max]; at least 3.
        #[arg(long)]
        steps: usize,
        /// Directory for sweep.csv and kinks.json.
        #[arg(long, default_value = ".")]
        outdir: PathBuf,
    },
}

/// A failure tagged with the stage it belongs to, deciding the exit code.
enum Failure {
    Input(Error),
    Runtime(Error),
}

type CmdResult<T> = std::result::Result<T, Failure>;

trait Stage<T> {
    /// Marks an error as an input problem (exit 2).
    fn input(self) -> CmdResult<T>;
    /// Marks an error as a runtime problem (exit 1).
    fn runtime(self) -> CmdResult<T>;
}

impl<T> Stage<T> for Result<T> {
    fn input(self) -> CmdResult<T> {
        self.map_err(Failure::Input)
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(Failure::Runtime)
    }
}

/// Parses `std::env::args`, runs the command, and returns the exit status.
pub fn run() -> i32 {
    // Clap reports usage problems on stderr and exits 2 on its own, which
    // matches the input-error contract.
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(command: Command) -> CmdResult<i32> {
    match command {
        Command::Solve { scenario, output } => cmd_solve(&scenario, &output),
        Command::Verify {
            scenario,
            grid,
            oracle_n,
            with_oracle,
            inject_fault,
        } => cmd_verify(&scenario, grid, oracle_n, with_oracle, inject_fault),
        Command::Figures {
            scenario,
            outdir,
            agents,
            fig4_lambdas,
            grid,
        } => cmd_figures(&scenario, &outdir, agents.as_deref(), &fig4_lambdas, grid),
        Command::Sweep {
            scenario,
            lambda_min,
            lambda_max,
            steps,
            outdir,
        } => cmd_sweep(&scenario, lambda_min, lambda_max, steps, &outdir),
    }
}

fn load(path: &Path) -> CmdResult<Scenario> {
    let scenario = load_scenario(path).input()?;
    for warning in &scenario.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(scenario)
}

/// Grid precedence: `--grid` flag, then the scenario's `grid` key, then the
/// `RADNER_GRID` environment variable, then the built-in default.
fn resolve_grid(flag: Option<usize>, scenario: &Scenario) -> Result<usize> {
    let from_env = || -> Result<Option<usize>> {
        match std::env::var("RADNER_GRID") {
            Ok(text) => {
                let n: usize = text.trim().parse().map_err(|_| {
                    Error::Spec(format!("RADNER_GRID must be an integer, got {text:?}"))
                })?;
                Ok(Some(n))
            }
            Err(_) => Ok(None),
        }
    };
    let grid = match flag {
        Some(n) => n,
        None => match scenario.grid {
            Some(n) => n,
            None => from_env()?.unwrap_or(DEFAULT_GRID),
        },
    };
    if !(2..=MAX_GRID).contains(&grid) {
        return Err(Error::Spec(format!(
            "grid size must be between 2 and {MAX_GRID}, got {grid}"
        )));
    }
    Ok(grid)
}

fn cmd_solve(scenario_path: &Path, output: &Path) -> CmdResult<i32> {
    let scenario = load(scenario_path)?;
    let solution = EquilibriumSolution::solve(scenario.spec, &scenario.model).runtime()?;
    let rendered = to_json_string(&solution_summary(&solution)).runtime()?;
    std::fs::write(output, rendered)
        .map_err(Error::from)
        .runtime()?;
    Ok(EXIT_OK)
}

fn solution_summary(solution: &EquilibriumSolution) -> Value {
    let ordering = solution.ordering();
    let count = solution.agent_count();
    let permutation: Vec<usize> = ordering.perm.iter().map(|&i| i + 1).collect();
    let ranks: Vec<Value> = (0..count)
        .map(|idx| {
            json!({
                "rank": idx + 1,
                "agent": ordering.perm[idx] + 1,
                "tau": ordering.tau[idx],
                "a_rank": ordering.a_rank[idx],
                "a_deviation": ordering.a_cap[idx],
                "c": ordering.c[idx],
            })
        })
        .collect();
    json!({
        "s0": solution.initial_price(),
        "lambda": solution.spec().lambda,
        "horizon": solution.model().horizon(),
        "agent_count": count,
        "permutation": permutation,
        "ranks": ranks,
    })
}

fn cmd_verify(
    scenario_path: &Path,
    grid_flag: Option<usize>,
    oracle_n: usize,
    with_oracle: bool,
    inject_fault: bool,
) -> CmdResult<i32> {
    let scenario = load(scenario_path)?;
    let grid = resolve_grid(grid_flag, &scenario).input()?;
    if with_oracle && oracle_n < 50 {
        return Err(Failure::Input(Error::Spec(format!(
            "--oracle-n must be at least 50, got {oracle_n}"
        ))));
    }

    let mut solution =
        EquilibriumSolution::solve(scenario.spec, &scenario.model).runtime()?;
    if inject_fault {
        solution.inject_tau_fault(0.05);
    }
    let report = run_all_checks(&solution, grid).runtime()?;

    let mut oracle_passed = true;
    let oracle_json = if with_oracle {
        let mut rows = Vec::new();
        for rank in 1..=solution.agent_count() {
            let outcome = deviation_oracle(&solution, rank, oracle_n, ORACLE_TOL).runtime()?;
            let tolerance = 1e-9 * (1.0 + outcome.candidate_objective.abs());
            let passed = outcome.gap.abs() <= tolerance;
            oracle_passed &= passed;
            rows.push(json!({
                "rank": rank,
                "candidate_objective": outcome.candidate_objective,
                "oracle_objective": outcome.oracle_objective,
                "gap": outcome.gap,
                "gap_tolerance": tolerance,
                "max_norm_deviation": outcome.max_norm_deviation,
                "sweeps": outcome.sweeps,
                "passed": passed,
            }));
        }
        json!({ "n": oracle_n, "tol": ORACLE_TOL, "ranks": rows, "passed": oracle_passed })
    } else {
        Value::Null
    };

    let passed = report.passed && oracle_passed;
    let mut doc = serde_json::to_value(&report).map_err(Error::from).runtime()?;
    doc["oracle"] = oracle_json;
    doc["passed"] = json!(passed);
    print!("{}", to_json_string(&doc).runtime()?);
    Ok(if passed { EXIT_OK } else { EXIT_VERIFICATION })
}

fn cmd_figures(
    scenario_path: &Path,
    outdir: &Path,
    agents_flag: Option<&str>,
    fig4_lambdas: &str,
    grid_flag: Option<usize>,
) -> CmdResult<i32> {
    let scenario = load(scenario_path)?;
    let grid = resolve_grid(grid_flag, &scenario).input()?;
    let agent_count = scenario.spec.agents.len();
    let agents = match agents_flag {
        Some(text) => parse_agent_list(text, agent_count).input()?,
        None => (0..agent_count).collect(),
    };
    let (lambda_a, lambda_b) = parse_lambda_pair(fig4_lambdas).input()?;

    let spec = scenario.spec.clone();
    let model = &scenario.model;
    let solution = EquilibriumSolution::solve(spec.clone(), model).runtime()?;
    let times = solution.evaluation_grid(grid);

    // Figure 1: stop-trade time against trading target, one row per agent.
    let mut fig1 = String::from("agent,target,tau\n");
    for (i, agent) in spec.agents.iter().enumerate() {
        let rank = solution
            .ordering()
            .rank_of_agent(i)
            .expect("every agent holds exactly one rank");
        let tau = solution.ordering().tau[rank - 1];
        let _ = writeln!(fig1, "{},{},{}", i + 1, sci(agent.target), sci(tau));
    }

    // Figure 2: the equilibrium drift path.
    let mut fig2 = String::from("t,mu\n");
    for &t in &times {
        let _ = writeln!(fig2, "{},{}", sci(t), sci(solution.drift(t).runtime()?));
    }

    // Figure 3: holdings of the requested agents.
    let mut fig3 = String::from("t");
    for &agent in &agents {
        let _ = write!(fig3, ",theta_{}", agent + 1);
    }
    fig3.push('\n');
    for &t in &times {
        let _ = write!(fig3, "{}", sci(t));
        for &agent in &agents {
            let rank = solution
                .ordering()
                .rank_of_agent(agent)
                .expect("every agent holds exactly one rank");
            let _ = write!(fig3, ",{}", sci(solution.strategy(rank, t).runtime()?));
        }
        fig3.push('\n');
    }

    // Figure 4: drift paths under two cost levels on a merged grid.
    let sol_a = EquilibriumSolution::solve(spec.with_lambda(lambda_a), model).runtime()?;
    let sol_b = EquilibriumSolution::solve(spec.with_lambda(lambda_b), model).runtime()?;
    let mut merged = sol_a.evaluation_grid(grid);
    merged.extend(sol_b.evaluation_grid(grid));
    merged.sort_by(f64::total_cmp);
    merged.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * model.horizon().max(1.0));
    let mut fig4 = String::from("t,mu_lambda1,mu_lambda2\n");
    for &t in &merged {
        let _ = writeln!(
            fig4,
            "{},{},{}",
            sci(t),
            sci(sol_a.drift(t).runtime()?),
            sci(sol_b.drift(t).runtime()?)
        );
    }

    // Figure 5: the initial price as a function of λ over (0, 2].
    let lambdas = lambda_grid(0.0, FIG5_LAMBDA_MAX, FIG5_STEPS);
    let sweep = lambda_sweep(&spec, model, &lambdas).runtime()?;
    let mut fig5 = String::from("lambda,s0\n");
    for (lambda, s0) in sweep.lambdas.iter().zip(&sweep.s0) {
        let _ = writeln!(fig5, "{},{}", sci(*lambda), sci(*s0));
    }

    std::fs::create_dir_all(outdir)
        .map_err(Error::from)
        .runtime()?;
    for (name, content) in [
        ("fig1_stop_times.csv", fig1),
        ("fig2_drift.csv", fig2),
        ("fig3_strategies.csv", fig3),
        ("fig4_drift_pair.csv", fig4),
        ("fig5_s0_vs_lambda.csv", fig5),
    ] {
        std::fs::write(outdir.join(name), content)
            .map_err(Error::from)
            .runtime()?;
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(
    scenario_path: &Path,
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    outdir: &Path,
) -> CmdResult<i32> {
    let scenario = load(scenario_path)?;
    if !(lambda_min.is_finite() && lambda_max.is_finite() && lambda_min >= 0.0) {
        return Err(Failure::Input(Error::Spec(format!(
            "λ range must satisfy 0 ≤ min < max, got [{lambda_min}, {lambda_max}]"
        ))));
    }
    if lambda_max <= lambda_min {
        return Err(Failure::Input(Error::Spec(format!(
            "λ range must satisfy min < max, got [{lambda_min}, {lambda_max}]"
        ))));
    }
    if !(3..=100_000).contains(&steps) {
        return Err(Failure::Input(Error::Spec(format!(
            "steps must be between 3 and 100000, got {steps}"
        ))));
    }

    let lambdas = lambda_grid(lambda_min, lambda_max, steps);
    let sweep = lambda_sweep(&scenario.spec, &scenario.model, &lambdas).runtime()?;
    let kinks = kink_points(&sweep).runtime()?;

    let csv = sweep_csv(&sweep);
    let kinks_doc = json!({
        "kinks": kinks,
        "resolution": 1e-8,
        "permutations": sweep
            .permutations
            .iter()
            .map(|perm| perm.iter().map(|&i| i + 1).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    });
    let kinks_json = to_json_string(&kinks_doc).runtime()?;

    std::fs::create_dir_all(outdir)
        .map_err(Error::from)
        .runtime()?;
    std::fs::write(outdir.join("sweep.csv"), csv)
        .map_err(Error::from)
        .runtime()?;
    std::fs::write(outdir.join("kinks.json"), kinks_json)
        .map_err(Error::from)
        .runtime()?;
    Ok(EXIT_OK)
}

/// `steps` λ values in the half-open interval `(min, max]`, evenly spaced,
/// with the endpoint hit exactly.
fn lambda_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    (1..=steps)
        .map(|i| {
            if i == steps {
                max
            } else {
                min + (max - min) * i as f64 / steps as f64
            }
        })
        .collect()
}

fn sweep_csv(sweep: &SweepResult) -> String {
    let count = sweep.taus.first().map_or(0, Vec::len);
    let mut csv = String::from("lambda,s0,active_count,perm_id");
    for j in 1..=count {
        let _ = write!(csv, ",tau_{j}");
    }
    for j in 1..=count {
        let _ = write!(csv, ",c_{j}");
    }
    csv.push('\n');
    for (k, &lambda) in sweep.lambdas.iter().enumerate() {
        let _ = write!(
            csv,
            "{},{},{},{}",
            sci(lambda),
            sci(sweep.s0[k]),
            sweep.active_counts[k],
            sweep.perm_ids[k]
        );
        for &tau in &sweep.taus[k] {
            let _ = write!(csv, ",{}", sci(tau));
        }
        for c in &sweep.c[k] {
            match c {
                Some(value) => {
                    let _ = write!(csv, ",{}", sci(*value));
                }
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    csv
}

/// Comma-separated 1-based agent list → 0-based indices.
fn parse_agent_list(text: &str, agent_count: usize) -> Result<Vec<usize>> {
    let mut agents = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let agent: usize = part
            .parse()
            .map_err(|_| Error::Spec(format!("--agents entries must be integers, got {part:?}")))?;
        if !(1..=agent_count).contains(&agent) {
            return Err(Error::Spec(format!(
                "--agents entries must be between 1 and {agent_count}, got {agent}"
            )));
        }
        agents.push(agent - 1);
    }
    if agents.is_empty() {
        return Err(Error::Spec("--agents must name at least one agent".to_string()));
    }
    Ok(agents)
}

fn parse_lambda_pair(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Spec(format!(
            "--fig4-lambdas must be two comma-separated values, got {text:?}"
        )));
    }
    let mut values = [0.0; 2];
    for (slot, part) in values.iter_mut().zip(&parts) {
        let lambda: f64 = part
            .parse()
            .map_err(|_| Error::Spec(format!("--fig4-lambdas entries must be numbers, got {part:?}")))?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Spec(format!(
                "--fig4-lambdas entries must be positive, got {lambda}"
            )));
        }
        *slot = lambda;
    }
    Ok((values[0], values[1]))
}

/// Fixed scientific rendering with 17 significant digits: the unique,
/// locale-independent, exactly round-tripping format all outputs share.
/// Negative zero is folded into zero so equal values render identically.
fn sci(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

/// Serializes a JSON value pretty-printed, with every float in the same
/// 17-significant-digit scientific format as the CSVs.
fn to_json_string(value: &Value) -> Result<String> {
    let mut out = Vec::new();
    let mut serializer =
        serde_json::Serializer::with_formatter(&mut out, SciFormatter::new());
    value.serialize(&mut serializer)?;
    let mut text = String::from_utf8(out).expect("JSON serializer emits UTF-8");
    text.push('\n');
    Ok(text)
}

/// Pretty JSON formatter that renders floats as `{:.16e}`.
struct SciFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl SciFormatter {
    fn new() -> Self {
        SciFormatter {
            inner: serde_json::ser::PrettyFormatter::new(),
        }
    }
}

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        writer.write_all(sci(value).as_bytes())
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array(writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object(writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object_value(writer)
    }
}
