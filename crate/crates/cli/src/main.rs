//! Benchmark runner: executes scenarios from JSON configs, writes
//! reproducible trajectory logs plus separate timing files, and compares the
//! linear and nonlinear controllers side by side.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpcbench_core::metrics::{solve_stats, step_metrics, tracking_metrics, MetricsReport};
use mpcbench_core::scenario::{ControllerKind, ScenarioConfig};
use mpcbench_core::sim::{run_scenario, SimResult};

mod logcsv;

#[derive(Parser)]
#[command(name = "mpcbench", version, about = "Closed-loop MPC benchmark for multirotor tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and write log, timing and metrics files.
    Run(RunArgs),
    /// Run a scenario with both controllers and compare them.
    Suite(SuiteArgs),
    /// Recompute metrics from an existing trajectory log.
    Metrics(MetricsArgs),
    /// Write a default scenario config to edit from.
    Init(InitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario controller.
    #[arg(long, value_parser = parse_controller)]
    controller: Option<ControllerKind>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Scenario config (JSON); repeat for multiple scenarios. Each scenario
    /// runs with both controllers under identical weights; the config's own
    /// controller field is ignored.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Trajectory log written by `run`.
    #[arg(long)]
    log: PathBuf,
    /// Seconds of initial transient to exclude.
    #[arg(long, default_value_t = 2.0)]
    skip_transient: f64,
}

#[derive(Args)]
struct InitArgs {
    /// Where to write the config.
    #[arg(long, default_value = "scenario.json")]
    out: PathBuf,
    #[arg(long, default_value = "lmpc", value_parser = parse_controller)]
    controller: ControllerKind,
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    match s {
        "lmpc" => Ok(ControllerKind::Lmpc),
        "nmpc" => Ok(ControllerKind::Nmpc),
        other => Err(format!("unknown controller {other:?} (expected lmpc or nmpc)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Suite(args) => cmd_suite(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Init(args) => cmd_init(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, mpcbench_core::Error> {
    let s = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&s)
}

fn report_for(result: &SimResult, skip_transient: f64) -> Result<MetricsReport, mpcbench_core::Error> {
    Ok(MetricsReport {
        scenario: result.config.name.clone(),
        controller: result.config.controller.to_string(),
        tracking: tracking_metrics(&result.rows, skip_transient)?,
        step: step_metrics(&result.rows).ok(),
        solve: solve_stats(&result.solve_times),
        faults: result.rows.iter().filter(|r| r.fault).count(),
    })
}

fn run_and_write(cfg: &ScenarioConfig, dir: &Path) -> Result<MetricsReport, mpcbench_core::Error> {
    std::fs::create_dir_all(dir)?;
    let result = run_scenario(cfg)?;
    result.write_log_csv(&dir.join("log.csv"))?;
    result.write_timing_csv(&dir.join("timing.csv"))?;
    std::fs::write(dir.join("scenario.json"), cfg.to_json()?)?;
    let report = report_for(&result, 2.0_f64.min(cfg.duration / 2.0))?;
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn cmd_run(args: RunArgs) -> Result<(), mpcbench_core::Error> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(controller) = args.controller {
        cfg.controller = controller;
    }
    let report = run_and_write(&cfg, &args.out_dir)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_suite(args: SuiteArgs) -> Result<(), mpcbench_core::Error> {
    let mut scenarios = Vec::new();
    for path in &args.config {
        let mut cfg = load_config(path)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        scenarios.push(cfg);
    }
    // Deterministic report order regardless of the argument order.
    scenarios.sort_by(|a, b| a.name.cmp(&b.name));

    // Both controllers run each scenario from the same config (same weights,
    // wind, noise and seed); only the controller differs, so the cost
    // functions are identical by construction.
    let mut reports = Vec::new();
    for cfg in &scenarios {
        for kind in [ControllerKind::Lmpc, ControllerKind::Nmpc] {
            let mut c = cfg.clone();
            c.controller = kind;
            let dir = args.out_dir.join(&cfg.name).join(kind.to_string());
            reports.push(run_and_write(&c, &dir)?);
        }
    }
    std::fs::write(
        args.out_dir.join("report.json"),
        serde_json::to_string_pretty(&reports)?,
    )?;

    println!(
        "{:<20} {:<6} {:>14} {:>12} {:>12} {:>10} {:>10} {:>7}",
        "scenario",
        "ctrl",
        "rmse_total_cm",
        "rise_time_s",
        "overshoot_%",
        "mean_ms",
        "max_ms",
        "faults"
    );
    for r in &reports {
        let (rise, os) = r
            .step
            .as_ref()
            .map(|s| (format!("{:.3}", s.rise_time_s), format!("{:.1}", s.overshoot_pct)))
            .unwrap_or_else(|| ("-".into(), "-".into()));
        println!(
            "{:<20} {:<6} {:>14.3} {:>12} {:>12} {:>10.3} {:>10.3} {:>7}",
            r.scenario,
            r.controller,
            r.tracking.rmse_total_cm,
            rise,
            os,
            r.solve.mean_ms,
            r.solve.max_ms,
            r.faults
        );
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), mpcbench_core::Error> {
    let csv = std::fs::read_to_string(&args.log)?;
    let rows = logcsv::parse_log_csv(&csv)?;
    let tracking = tracking_metrics(&rows, args.skip_transient)?;
    let step = step_metrics(&rows).ok();
    let out = serde_json::json!({ "tracking": tracking, "step": step });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_init(args: InitArgs) -> Result<(), mpcbench_core::Error> {
    let cfg = ScenarioConfig::hover_default(args.controller);
    std::fs::write(&args.out, cfg.to_json()?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
