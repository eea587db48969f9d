//! Command-line front end: config loading, subcommand dispatch and
//! byte-reproducible output files.
//!
//! Every output starts with a header naming the tool version, the SHA-256 of
//! the canonical config and the seed. CSV floats use 17 significant digits
//! and LF line endings. Exit codes: 0 success, 1 solver or experiment
//! failure (diagnostics are still written), 2 configuration error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::checks::arb_check;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::lvr::run_lvr_experiment;
use crate::mfg::{lp_objective, solve_major_minor, solve_mfg, MfgSolution, SearchOutcome};
use crate::nplayer::convergence_study;
use crate::sde::{initial_states, make_noise, simulate};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "amm-mfg", version, about = "AMM mean-field game simulator and solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file of `section.key = value` lines; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `section.key=value`, applied after the file; repeatable.
    #[arg(long = "override", global = true)]
    pub overrides: Vec<String>,
    /// Record wall-clock runtime in summary.json (outputs then differ run to run).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate the population on the equilibrium policy for the configured LP path.
    Simulate,
    /// Solve the mean-field equilibrium for the configured LP path.
    SolveMfg,
    /// Search the LP's piecewise-constant control with the equilibrium nested inside.
    SolveMajorMinor,
    /// Compare the closed-form arbitrage trade with the brute-force oracle.
    ArbCheck,
    /// Arbitrage gains versus accumulated LVR at several step sizes.
    LvrCheck,
    /// ε-Nash gap of the equilibrium over the configured population sizes.
    NashTest,
    /// Print the effective config in canonical form.
    PrintConfig,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SolveMfg => "solve-mfg",
            Command::SolveMajorMinor => "solve-major-minor",
            Command::ArbCheck => "arb-check",
            Command::LvrCheck => "lvr-check",
            Command::NashTest => "nash-test",
            Command::PrintConfig => "print-config",
        }
    }
}

/// Provenance written at the top of every output.
struct Header {
    command: &'static str,
    config_hash: String,
    seed: u64,
}

impl Header {
    fn comment_block(&self) -> String {
        format!(
            "# tool: {TOOL} {VERSION}\n# command: {}\n# config_sha256: {}\n# seed: {}\n",
            self.command, self.config_hash, self.seed
        )
    }

    fn json(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "config_sha256": self.config_hash,
            "seed": self.seed,
        })
    }
}

pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// CSV table with a fixed column list.
struct Table {
    text: String,
    columns: usize,
}

impl Table {
    fn new(header: &Header, columns: &[&str]) -> Self {
        let mut text = header.comment_block();
        text.push_str(&columns.join(","));
        text.push('\n');
        Self {
            text,
            columns: columns.len(),
        }
    }

    fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    fn write(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::write(dir.join(name), &self.text)?;
        Ok(())
    }
}

fn f(x: f64) -> String {
    fmt_float(x)
}

fn i(x: usize) -> String {
    x.to_string()
}

fn status_code(status: &str) -> i32 {
    if status == "ok" {
        0
    } else {
        1
    }
}

/// Result of one subcommand before the summary is written.
struct Report {
    status: &'static str,
    objective: f64,
    final_residual: f64,
    extra: Map<String, Value>,
}

impl Report {
    fn new(status: &'static str, objective: f64, final_residual: f64) -> Self {
        Self {
            status,
            objective,
            final_residual,
            extra: Map::new(),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.to_owned(), value);
        self
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn write_summary(dir: &Path, header: &Header, report: &Report, runtime: Option<f64>) -> Result<()> {
    let mut m = Map::new();
    m.insert("header".into(), header.json());
    m.insert("status".into(), Value::String(report.status.into()));
    m.insert("objective".into(), num(report.objective));
    m.insert("final_residual".into(), num(report.final_residual));
    m.insert("runtime_seconds".into(), runtime.map_or(Value::Null, num));
    for (k, v) in &report.extra {
        m.insert(k.clone(), v.clone());
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(m)).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join("summary.json"), text)?;
    Ok(())
}

fn write_residuals(dir: &Path, header: &Header, history: &[f64]) -> Result<()> {
    let mut t = Table::new(header, &["iteration", "residual"]);
    for (k, r) in history.iter().enumerate() {
        t.row(&[i(k + 1), f(*r)]);
    }
    t.write(dir, "residuals.csv")
}

fn write_flows(dir: &Path, header: &Header, sol: &MfgSolution) -> Result<()> {
    let mut t = Table::new(
        header,
        &["step", "time", "price", "price_drift", "lvr_rate", "mean_control", "mean_state"],
    );
    let states = sol.flows.mean_states();
    let time = sol.policy.time;
    for n in 0..time.steps {
        t.row(&[
            i(n),
            f(time.time(n)),
            f(sol.env.price[n]),
            f(sol.env.price_drift[n]),
            f(sol.env.lvr_rate[n]),
            f(sol.env.mean_control[n]),
            f(states[n]),
        ]);
    }
    t.write(dir, "flows.csv")?;

    let mut t = Table::new(header, &["step", "state", "control"]);
    for n in 0..time.steps {
        for (k, x) in sol.policy.states.nodes().iter().enumerate() {
            t.row(&[i(n), f(*x), f(sol.policy.control_at(n, k))]);
        }
    }
    t.write(dir, "policy.csv")
}

fn run_simulate(cfg: &SimConfig, header: &Header, dir: &Path) -> Result<Report> {
    let params = cfg.model_params()?;
    let setup = cfg.mfg_setup()?;
    let lp = cfg.lp_path();
    let eq = solve_mfg(&params, &setup, &lp, &cfg.picard())?;
    let noise = make_noise(cfg.seed, &setup.time, cfg.harness_population);
    let x0 = initial_states(&setup.initial_law, &setup.states, &noise);
    let tr = simulate(&params, &setup.time, &x0, &eq.policy, None, &lp, &noise)?;

    let mut t = Table::new(
        header,
        &[
            "step",
            "time",
            "price",
            "external_price",
            "price_drift",
            "x_adj",
            "delta",
            "x_reserve",
            "y_reserve",
            "invariant",
            "lvr",
            "lvr_rate",
            "mean_control",
            "mf_mean_control",
            "lp_control",
            "lp_x",
            "lp_y",
            "lp_z",
            "mean_trader_x",
        ],
    );
    let m = tr.traders() as f64;
    for n in 0..tr.time.len() {
        let per_step = |v: &[f64]| v.get(n).map_or(String::new(), |x| f(*x));
        let lp_state = tr.lp_states[n];
        let mean_x = tr.trader_x.iter().map(|p| p[n]).sum::<f64>() / m;
        t.row(&[
            i(n),
            f(tr.time[n]),
            f(tr.price[n]),
            f(tr.external_price[n]),
            per_step(&tr.price_drift),
            f(tr.x_adj[n]),
            f(tr.delta[n]),
            f(tr.x_reserve[n]),
            f(tr.y_reserve[n]),
            f(tr.invariant[n]),
            f(tr.lvr[n]),
            per_step(&tr.lvr_rate),
            per_step(&tr.mean_control),
            per_step(&eq.env.mean_control),
            per_step(&tr.lp_control),
            f(lp_state.x_inventory),
            f(lp_state.y_inventory),
            f(lp_state.pool_share_value),
            f(mean_x),
        ]);
    }
    t.write(dir, "trajectory.csv")?;
    write_residuals(dir, header, &eq.residual_history)?;

    let mean_objective = tr.trader_objective.iter().sum::<f64>() / m;
    Ok(Report::new("ok", mean_objective, eq.certificate)
        .with("population", json!(tr.traders()))
        .with("mfg_iterations", json!(eq.residual_history.len()))
        .with("lp_reward", num(tr.lp_reward)))
}

fn run_solve_mfg(cfg: &SimConfig, header: &Header, dir: &Path) -> Result<Report> {
    let params = cfg.model_params()?;
    let setup = cfg.mfg_setup()?;
    let lp = cfg.lp_path();
    let sol = solve_mfg(&params, &setup, &lp, &cfg.picard())?;
    write_residuals(dir, header, &sol.residual_history)?;
    write_flows(dir, header, &sol)?;
    let objective = lp_objective(&params, &lp, &sol)?;
    Ok(Report::new("ok", objective, sol.certificate).with("iterations", json!(sol.residual_history.len())))
}

fn run_major_minor(cfg: &SimConfig, header: &Header, dir: &Path) -> Result<Report> {
    let params = cfg.model_params()?;
    let setup = cfg.mfg_setup()?;
    let sol = solve_major_minor(&params, &setup, &cfg.major_minor())?;

    let k = cfg.lp_segments;
    let point_cols: Vec<String> = (0..k).map(|s| format!("u{s}")).collect();
    let mut cols = vec!["evaluation", "objective", "best_so_far", "step"];
    cols.extend(point_cols.iter().map(String::as_str));
    let mut t = Table::new(header, &cols);
    for e in &sol.search.trace {
        let mut row = vec![i(e.evaluation), f(e.objective), f(e.best_so_far), f(e.step)];
        row.extend(e.point.iter().map(|v| f(*v)));
        t.row(&row);
    }
    t.write(dir, "search_trace.csv")?;

    let mut cols = vec!["neighbor", "objective", "improves"];
    cols.extend(point_cols.iter().map(String::as_str));
    let mut t = Table::new(header, &cols);
    for (j, (y, v)) in sol.neighbor_check.iter().enumerate() {
        let mut row = vec![i(j), f(*v), (*v < sol.objective).to_string()];
        row.extend(y.iter().map(|v| f(*v)));
        t.row(&row);
    }
    t.write(dir, "neighbors.csv")?;
    write_residuals(dir, header, &sol.mfg.residual_history)?;
    write_flows(dir, header, &sol.mfg)?;

    let status = if sol.is_locally_optimal() { "ok" } else { "failed" };
    let outcome = match sol.search.outcome {
        SearchOutcome::StepTolerance => "step_tolerance",
        SearchOutcome::BudgetExhausted => "budget_exhausted",
    };
    Ok(Report::new(status, sol.objective, sol.mfg.certificate)
        .with("lp_values", json!(sol.lp_values.iter().map(|v| num(*v)).collect::<Vec<_>>()))
        .with("final_step", num(sol.search.final_step))
        .with("evaluations", json!(sol.search.trace.len()))
        .with("search_outcome", json!(outcome))
        .with("locally_optimal", json!(sol.is_locally_optimal())))
}

const ARB_PROFIT_TOL: f64 = 1e-6;
const ARB_BAND_TOL: f64 = 1e-8;

fn run_arb_check(cfg: &SimConfig, header: &Header, dir: &Path) -> Result<Report> {
    let rows = arb_check(cfg.arb_draws, cfg.arb_grid_points, cfg.seed)?;
    let mut t = Table::new(
        header,
        &[
            "draw",
            "r_alpha",
            "r_beta",
            "m_p",
            "tau",
            "direction",
            "closed_profit",
            "oracle_profit",
            "abs_profit_discrepancy",
            "scaled_discrepancy",
            "band_error",
            "pass",
        ],
    );
    let mut max_abs = 0.0f64;
    let mut max_band = 0.0f64;
    let mut failures = 0;
    for (j, r) in rows.iter().enumerate() {
        let abs = (r.closed.profit - r.oracle.profit).abs();
        max_abs = max_abs.max(abs);
        max_band = max_band.max(r.band_error);
        let pass = r.passes(ARB_PROFIT_TOL, ARB_BAND_TOL);
        failures += usize::from(!pass);
        t.row(&[
            i(j),
            f(r.instance.r_alpha),
            f(r.instance.r_beta),
            f(r.instance.m_p),
            f(r.instance.tau),
            format!("{:?}", r.closed.direction),
            f(r.closed.profit),
            f(r.oracle.profit),
            f(abs),
            f(r.scaled_discrepancy),
            f(r.band_error),
            pass.to_string(),
        ]);
    }
    t.write(dir, "arb_check.csv")?;
    let status = if failures == 0 { "ok" } else { "failed" };
    Ok(Report::new(status, max_abs, max_band)
        .with("draws", json!(rows.len()))
        .with("failures", json!(failures)))
}

fn run_lvr_check(cfg: &SimConfig, header: &Header, dir: &Path) -> Result<Report> {
    let levels = run_lvr_experiment(&cfg.lvr_settings(), cfg.seed)?;
    let mut t = Table::new(
        header,
        &[
            "dt",
            "steps",
            "paths",
            "mean_abs_gap",
            "mean_gap",
            "stderr_gap",
            "mean_abs_decomposition_residual",
        ],
    );
    for l in &levels {
        t.row(&[
            f(l.dt),
            i(l.steps),
            i(l.paths.len()),
            f(l.mean_abs_gap),
            f(l.mean_gap),
            f(l.stderr_gap),
            f(l.mean_abs_decomposition_residual),
        ]);
    }
    t.write(dir, "lvr_check.csv")?;
    // ordered from coarse to fine
    let mut sorted: Vec<_> = levels.iter().collect();
    sorted.sort_by(|a, b| b.dt.total_cmp(&a.dt));
    let shrinking = sorted.windows(2).all(|w| w[0].mean_abs_gap >= 2.0 * w[1].mean_abs_gap);
    let finest = sorted[sorted.len() - 1];
    let unbiased = finest.mean_gap.abs() <= 3.0 * finest.stderr_gap;
    let status = if shrinking && unbiased { "ok" } else { "failed" };
    Ok(Report::new(status, finest.mean_abs_gap, finest.mean_abs_decomposition_residual)
        .with("gap_shrinks_by_two_per_level", json!(shrinking))
        .with("finest_mean_gap_within_3_stderr", json!(unbiased)))
}

fn run_nash_test(cfg: &SimConfig, header: &Header, dir: &Path) -> Result<Report> {
    let params = cfg.model_params()?;
    let setup = cfg.mfg_setup()?;
    let lp = cfg.lp_path();
    let eq = solve_mfg(&params, &setup, &lp, &cfg.picard())?;
    let report = convergence_study(
        &params,
        &setup,
        &eq,
        &cfg.harness_n_values,
        cfg.harness_replications,
        cfg.seed,
        cfg.gap_method()?,
    )?;
    let mut t = Table::new(header, &["n", "gap", "stderr", "paths", "dropped", "zero_gaps"]);
    for g in &report.gap_estimates {
        let zeros = g.samples.iter().filter(|s| **s == 0.0).count();
        t.row(&[i(g.n), f(g.gap), f(g.stderr), i(g.paths), i(g.dropped), i(zeros)]);
    }
    t.write(dir, "nash_report.csv")?;
    let pass = report.slope < 0.0 && report.within_noise();
    Ok(Report::new(if pass { "ok" } else { "failed" }, report.slope, eq.certificate)
        .with("slope", num(report.slope))
        .with("gaps_within_3_stderr", json!(report.within_noise()))
        .with("replications", json!(report.paths_per_estimate)))
}

fn print_config(cfg: &SimConfig, header: &Header, out: Option<&Path>) -> Result<()> {
    let text = format!("{}{}", header.comment_block(), cfg.canonical());
    print!("{text}");
    if let Some(dir) = out {
        std::fs::write(dir.join("config.toml"), text)?;
    }
    Ok(())
}

fn load(cli: &Cli) -> Result<SimConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    match &cli.config {
        Some(path) => SimConfig::load(path, &overrides),
        None => SimConfig::from_text("", &overrides),
    }
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match load(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let header = Header {
        command: cli.command.name(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    };
    if let Some(dir) = &cli.out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return 1;
        }
    }
    if cli.command == Command::PrintConfig {
        return match print_config(&cfg, &header, cli.out.as_deref()) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        };
    }
    let Some(dir) = cli.out.as_deref() else {
        eprintln!("error: --out is required for {}", cli.command.name());
        return 2;
    };

    let start = Instant::now();
    let result = match cli.command {
        Command::Simulate => run_simulate(&cfg, &header, dir),
        Command::SolveMfg => run_solve_mfg(&cfg, &header, dir),
        Command::SolveMajorMinor => run_major_minor(&cfg, &header, dir),
        Command::ArbCheck => run_arb_check(&cfg, &header, dir),
        Command::LvrCheck => run_lvr_check(&cfg, &header, dir),
        Command::NashTest => run_nash_test(&cfg, &header, dir),
        Command::PrintConfig => unreachable!(),
    };
    let runtime = cli.timing.then(|| start.elapsed().as_secs_f64());
    let (report, code) = match result {
        Ok(r) => {
            let code = status_code(r.status);
            (r, code)
        }
        Err(Error::Config { key, reason }) => {
            eprintln!("error: config error at `{key}`: {reason}");
            return 2;
        }
        Err(Error::NotConverged { history }) => {
            eprintln!("error: fixed point not reached after {} iterations", history.len());
            if let Err(e) = write_residuals(dir, &header, &history) {
                eprintln!("error: {e}");
            }
            let last = history.last().copied().unwrap_or(f64::NAN);
            (Report::new("not_converged", f64::NAN, last), 1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (Report::new("error", f64::NAN, f64::NAN).with("message", json!(e.to_string())), 1)
        }
    };
    if let Err(e) = write_summary(dir, &header, &report, runtime) {
        eprintln!("error: {e}");
        return 1;
    }
    code
}
