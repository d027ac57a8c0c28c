//! `cpsconf`: monitor MTL formulas over traces, check closeness of two traces, and run
//! falsification, conformance-degree and mutant benchmark campaigns.
//!
//! Exit codes: 0 = pass or no finding, 1 = finding (negative robustness, not close, falsified),
//! 2 = error.

mod config;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpsconf_core::conformance::{is_close_parallel, conformance_robustness};
use cpsconf_core::monitor::{parse, EvalOptions, Evaluator, Norm, RobustnessKind};
use cpsconf_core::tss::parallel_concat;
use cpsconf_core::TimedStateSequence;

use report::sig12;

#[derive(Debug, Parser)]
#[command(name = "cpsconf", version, about = "Conformance testing of cyber-physical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Robustness of a formula over a trace (or a Model/Implementation pair) at time `t`.
    Monitor {
        /// Formula text, e.g. `[]_[0,2] (y < 1)`.
        #[arg(long, short)]
        formula: String,
        /// Model trace CSV.
        trace: PathBuf,
        /// Implementation trace CSV; the Model trace is used for both when absent.
        implementation: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "spatial")]
        kind: KindArg,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, value_enum, default_value = "euclidean")]
        norm: NormArg,
        /// Truncation horizon; defaults to the last time stamp.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        max_jumps: Option<u32>,
    },
    /// Whether two traces are (T, J, (tau, eps))-close.
    Check {
        model: PathBuf,
        implementation: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        eps: f64,
        /// Defaults to the later of the two last time stamps.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        max_jumps: Option<u32>,
        /// Also print the robustness of the closeness formula.
        #[arg(long, value_enum)]
        robustness: Option<KindArg>,
    },
    /// Falsification campaign from a TOML config (or a run manifest).
    Falsify {
        config: PathBuf,
        #[arg(long, short, default_value = "cpsconf-out")]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's budget.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Conformance degree by bisection (or a Pareto front over a tau grid).
    Degree {
        config: PathBuf,
        #[arg(long, short, default_value = "cpsconf-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Seeded campaigns of every mutant against its base system.
    Bench {
        config: PathBuf,
        #[arg(long, short, default_value = "cpsconf-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Spatial,
    Temporal,
}

impl From<KindArg> for RobustnessKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Spatial => RobustnessKind::Spatial,
            KindArg::Temporal => RobustnessKind::Temporal,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum NormArg {
    Euclidean,
    Max,
    Manhattan,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Euclidean => Norm::Euclidean,
            NormArg::Max => Norm::Max,
            NormArg::Manhattan => Norm::Manhattan,
        }
    }
}

/// A command that ran to completion: `true` when it produced a finding.
type Outcome = Result<bool, String>;

fn read_trace(path: &Path) -> Result<TimedStateSequence, String> {
    TimedStateSequence::from_csv_path(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_monitor(
    formula: &str,
    trace: &Path,
    implementation: Option<&Path>,
    kind: RobustnessKind,
    t: f64,
    norm: Norm,
    horizon: Option<f64>,
    max_jumps: Option<u32>,
) -> Outcome {
    let phi = parse(formula).map_err(|e| format!("formula: {e}"))?;
    let m = read_trace(trace)?;
    let i = match implementation {
        Some(p) => read_trace(p)?,
        None => m.clone(),
    };
    let horizon = horizon.unwrap_or(m.last_time().max(i.last_time()));
    let pt = parallel_concat(&m, &i, horizon, max_jumps.unwrap_or(u32::MAX)).map_err(|e| e.to_string())?;
    let opts = EvalOptions { norm, ..EvalOptions::default() };
    let r = Evaluator::with_options(&pt, kind, opts).at_time(&phi, t).map_err(|e| e.to_string())?;
    println!("{}", sig12(r.value()));
    Ok(r.is_negative())
}

fn cmd_check(
    model: &Path,
    implementation: &Path,
    tau: f64,
    eps: f64,
    horizon: Option<f64>,
    max_jumps: Option<u32>,
    robustness: Option<RobustnessKind>,
) -> Outcome {
    if !(tau > 0.0 && eps > 0.0) {
        return Err(format!("tau and eps must be positive (got tau = {tau}, eps = {eps})"));
    }
    let m = read_trace(model)?;
    let i = read_trace(implementation)?;
    let horizon = horizon.unwrap_or(m.last_time().max(i.last_time()));
    let pt = parallel_concat(&m, &i, horizon, max_jumps.unwrap_or(u32::MAX)).map_err(|e| e.to_string())?;
    let v = is_close_parallel(&pt, tau, eps);
    match v.witness {
        None => println!("CLOSE"),
        Some(w) => println!("NOT CLOSE, witness {w}"),
    }
    if let Some(kind) = robustness {
        let r = conformance_robustness(&pt, tau, eps, kind).map_err(|e| e.to_string())?;
        println!("robustness {}", sig12(r.value()));
    }
    Ok(!v.close)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Monitor { formula, trace, implementation, kind, t, norm, horizon, max_jumps } => cmd_monitor(
            &formula,
            &trace,
            implementation.as_deref(),
            kind.into(),
            t,
            norm.into(),
            horizon,
            max_jumps,
        ),
        Command::Check { model, implementation, tau, eps, horizon, max_jumps, robustness } => {
            cmd_check(&model, &implementation, tau, eps, horizon, max_jumps, robustness.map(Into::into))
        }
        Command::Falsify { config, out, seed, budget } => run::cmd_falsify(&config, &out, seed, budget),
        Command::Degree { config, out, seed } => run::cmd_degree(&config, &out, seed),
        Command::Bench { config, out, seed, runs } => run::cmd_bench(&config, &out, seed, runs),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
