//! `quadsim` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure (thrust singularity or blow-up), 4 failed verification.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quadsim::analysis::{
    compare, compute_metrics, verify_lyapunov, Channel, LyapunovReport, Metrics,
    MONOTONICITY_TOLERANCE,
};
use quadsim::plot::emit_plots;
use quadsim::simulation::{run_scenario, ControllerKind, RunStatus, ScenarioConfig, SimTrace};
use quadsim::{scenario, trace_csv, SimError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// Relative tolerance on the Lyapunov derivative check.
const LYAPUNOV_RELATIVE_TOLERANCE: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "quadsim",
    version,
    about = "Quadrotor backstepping/PID simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and report tracking metrics.
    Run(RunArgs),
    /// Simulate two scenarios side by side.
    Compare(CompareArgs),
    /// Check the Lyapunov decrease along a backstepping run.
    VerifyLyapunov(VerifyArgs),
    /// Render SVG plots from trace CSV files.
    Plot(PlotArgs),
    /// Write the default wind-disturbance scenario file.
    ScenarioInit(InitArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML). Each subcommand has a built-in default.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the controller.
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Integration step (s).
    #[arg(long, allow_negative_numbers = true)]
    h: Option<f64>,
    /// Simulated duration (s).
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Backstepping gain overrides.
    #[arg(long, allow_negative_numbers = true)]
    c1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c3: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c4: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c5: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c6: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c7: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c8: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write trace and table CSV files.
    #[arg(long)]
    csv: bool,
    /// Write SVG plots.
    #[arg(long)]
    svg: bool,
    /// Suppress the report on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Second scenario; defaults to the first with the other controller.
    #[arg(long)]
    against: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Verify an existing trace instead of simulating.
    #[arg(long, conflicts_with = "scenario")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Trace CSV files to overlay.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct InitArgs {
    /// Destination file.
    #[arg(long, default_value = "scenario.toml")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

fn exit_code(e: &SimError) -> u8 {
    match e {
        SimError::ThrustSingularity { .. }
        | SimError::GimbalLock { .. }
        | SimError::NumericalBlowup { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig, SimError> {
        let cfg = match &self.scenario {
            Some(p) => scenario::load(p)?,
            None => ScenarioConfig::default(),
        };
        self.apply(cfg)
    }

    /// Applies the command-line overrides to a loaded scenario.
    fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig, SimError> {
        if let Some(c) = self.controller {
            cfg.controller = c;
        }
        if let Some(h) = self.h {
            cfg.h = h;
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        let overrides = [
            self.c1, self.c2, self.c3, self.c4, self.c5, self.c6, self.c7, self.c8,
        ];
        for (k, v) in overrides.iter().enumerate() {
            if let Some(v) = v {
                cfg.backstepping = cfg.backstepping.with(k + 1, *v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn status_code(trace: &SimTrace) -> u8 {
    match trace.meta.status {
        RunStatus::Completed => 0,
        _ => EXIT_NUMERICAL,
    }
}

fn print_metrics(m: &Metrics) {
    println!(
        "{:<10} {:>12} {:>12} {:>12} {:>14} {:>12}",
        "channel", "rmse", "post_rmse", "peak", "settling", "steady"
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    for c in &m.channels {
        println!(
            "{:<10} {:>12.6} {:>12} {:>12} {:>14} {:>12.6}",
            c.channel.name(),
            c.rmse,
            opt(c.post_rmse),
            opt(c.peak_after_onset),
            c.settling.to_string(),
            c.steady_state
        );
    }
    println!(
        "effort     u1 {:.6}  u2 {:.6}  u3 {:.6}  u4 {:.6}",
        m.effort[0], m.effort[1], m.effort[2], m.effort[3]
    );
}

fn write_metrics_csv(m: &Metrics, path: &Path) -> Result<(), SimError> {
    let mut text =
        String::from("channel,rmse,post_rmse,peak_after_onset,settling,band,steady_state\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for c in &m.channels {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.channel.name(),
            c.rmse,
            opt(c.post_rmse),
            opt(c.peak_after_onset),
            opt(c.settling.time()),
            c.band,
            c.steady_state
        ));
    }
    for (i, e) in m.effort.iter().enumerate() {
        text.push_str(&format!("effort_u{},{e},,,,,\n", i + 1));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(args: RunArgs) -> Result<u8, SimError> {
    let cfg = args.scenario.load()?;
    let trace = run_scenario(&cfg)?;
    let out = &args.output;
    if out.csv || out.svg {
        std::fs::create_dir_all(&out.out)?;
    }
    if out.csv {
        trace_csv::write_trace_file(&trace, &out.out.join("trace.csv"))?;
    }
    if out.svg && !trace.rows.is_empty() {
        emit_plots(&[&trace], &out.out)?;
    }
    if !out.quiet {
        println!(
            "controller {}  status {}  rows {}",
            trace.meta.controller,
            trace.meta.status,
            trace.rows.len()
        );
    }
    if !trace.rows.is_empty() {
        let m = compute_metrics(&trace, trace.meta.disturbance_onset)?;
        if out.csv {
            write_metrics_csv(&m, &out.out.join("metrics.csv"))?;
        }
        if !out.quiet {
            print_metrics(&m);
        }
    }
    Ok(status_code(&trace))
}

fn compare_cmd(args: CompareArgs) -> Result<u8, SimError> {
    let cfg_a = args.scenario.load()?;
    let cfg_b = match &args.against {
        Some(p) => scenario::load(p)?,
        None => {
            let mut b = cfg_a.clone();
            b.controller = match cfg_a.controller {
                ControllerKind::Backstepping => ControllerKind::Pid,
                ControllerKind::Pid => ControllerKind::Backstepping,
            };
            b
        }
    };
    let cmp = compare(&cfg_a, &cfg_b)?;
    let out = &args.output;
    if out.csv || out.svg {
        std::fs::create_dir_all(&out.out)?;
    }
    if out.csv {
        cmp.write_csv(std::fs::File::create(out.out.join("comparison.csv"))?)?;
        trace_csv::write_trace_file(&cmp.trace_a, &out.out.join("trace_a.csv"))?;
        trace_csv::write_trace_file(&cmp.trace_b, &out.out.join("trace_b.csv"))?;
    }
    if out.svg {
        emit_plots(&[&cmp.trace_a, &cmp.trace_b], &out.out)?;
    }
    if !out.quiet {
        print!("{cmp}");
        let (pa, pb) = (
            cmp.metrics_a.channel(Channel::Position),
            cmp.metrics_b.channel(Channel::Position),
        );
        println!(
            "position settling: {} {}  vs  {} {}",
            cmp.label_a, pa.settling, cmp.label_b, pb.settling
        );
    }
    Ok(status_code(&cmp.trace_a).max(status_code(&cmp.trace_b)))
}

fn print_report(rep: &LyapunovReport) {
    println!(
        "{:<8} {:>16} {:>11} {:>16} {:>10}",
        "subsys", "max_violation", "violations", "max_rel_mismatch", "at_t"
    );
    for s in &rep.subsystems {
        println!(
            "{:<8} {:>16.3e} {:>11} {:>16.3e} {:>10}",
            s.name,
            s.max_monotonicity_violation,
            s.violation_steps.len(),
            s.max_relative_mismatch,
            s.worst_mismatch_t
                .map_or_else(|| "-".to_string(), |t| format!("{t:.3}"))
        );
    }
    println!("interior points checked: {}", rep.checked_points);
    if rep.low_margin_ranges.is_empty() {
        println!("thrust margin stayed above 10x tolerance");
    }
    for (a, b) in &rep.low_margin_ranges {
        println!("low thrust margin: {a:.4} s .. {b:.4} s");
    }
}

fn verify(args: VerifyArgs) -> Result<u8, SimError> {
    let trace = match &args.trace {
        Some(p) => trace_csv::read_trace_file(p)?,
        None if args.scenario.scenario.is_some() => run_scenario(&args.scenario.load()?)?,
        None => {
            // Perturbed-attitude hover with constant references.
            let mut cfg = ScenarioConfig::hover();
            cfg.initial.phi = 0.3;
            cfg.outer_loop.enabled = false;
            run_scenario(&args.scenario.apply(cfg)?)?
        }
    };
    let gains = trace
        .meta
        .gains
        .ok_or_else(|| SimError::WrongController(trace.meta.controller.to_string()))?;
    let rep = verify_lyapunov(&trace, &gains)?;
    let out = &args.output;
    if out.csv {
        std::fs::create_dir_all(&out.out)?;
        trace_csv::write_trace_file(&trace, &out.out.join("trace.csv"))?;
    }
    if out.svg && !trace.rows.is_empty() {
        emit_plots(&[&trace], &out.out)?;
    }
    let ok = rep.passes(LYAPUNOV_RELATIVE_TOLERANCE, MONOTONICITY_TOLERANCE);
    if !out.quiet {
        print_report(&rep);
        println!("{}", if ok { "PASS" } else { "FAIL" });
    }
    Ok(match (status_code(&trace), ok) {
        (0, true) => 0,
        (0, false) => EXIT_VERIFY,
        (code, _) => code,
    })
}

fn plot(args: PlotArgs) -> Result<u8, SimError> {
    let traces = args
        .traces
        .iter()
        .map(|p| trace_csv::read_trace_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&SimTrace> = traces.iter().collect();
    let files = emit_plots(&refs, &args.out)?;
    if !args.quiet {
        for f in files {
            println!("{}", f.display());
        }
    }
    Ok(0)
}

fn scenario_init(args: InitArgs) -> Result<u8, SimError> {
    scenario::save(&ScenarioConfig::default(), &args.out)?;
    if !args.quiet {
        println!("wrote {}", args.out.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare_cmd(a),
        Command::VerifyLyapunov(a) => verify(a),
        Command::Plot(a) => plot(a),
        Command::ScenarioInit(a) => scenario_init(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
