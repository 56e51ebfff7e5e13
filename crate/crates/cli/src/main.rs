//! `gpcbf`: learn, bound, synthesize, simulate and plot from the command line.
//!
//! Exit codes: 0 success, 1 operational error, 2 infeasible template,
//! 3 iteration budget exhausted, 4 validation failure.

mod bound;
mod common;
mod learn;
mod manifest;
mod plot;
mod reproduce;
mod simulate;
mod svg;
mod synthesize;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gpcbf::dynamics::jet_engine_problem;
use serde::Serialize;

use common::{ensure_parent, Outcome};
use manifest::{sibling, RunManifest, Stage};

/// Number of worker threads when set.
const THREADS_ENV: &str = "GPCBF_THREADS";

#[derive(Parser, Debug)]
#[command(name = "gpcbf", version, about = "Safe controller synthesis with learned dynamics")]
struct Cli {
    /// More log output; repeat for debug messages.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the builtin jet-engine problem.
    Problem(ProblemArgs),
    /// Fit the Gaussian-process model of the drift.
    Learn(learn::LearnArgs),
    /// Build the model-error box from analytic or Monte-Carlo bounds.
    Bound(bound::BoundArgs),
    /// Search a certified robust control barrier function.
    Synthesize(synthesize::SynthesizeArgs),
    /// Simulate the safe controller in closed loop.
    Simulate(simulate::SimulateArgs),
    /// Emit SVG plots with their CSV data.
    Plot(plot::PlotArgs),
    /// Run every stage of the jet-engine benchmark.
    ReproduceJetEngine(reproduce::ReproduceArgs),
}

#[derive(Args, Debug, Serialize)]
struct ProblemArgs {
    #[arg(long)]
    out: PathBuf,
}

pub(crate) fn write_problem(out: &Path, manifest: &mut RunManifest) -> Result<()> {
    let mut stage = Stage::start("problem", serde_json::json!({ "builtin": "jet-engine" }))?;
    ensure_parent(out)?;
    gpcbf::io::write_json(out, &jet_engine_problem())?;
    stage.output(out);
    stage.finish(manifest, "success")
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn dispatch(command: &Command, manifest: &mut RunManifest) -> Result<(Outcome, PathBuf)> {
    Ok(match command {
        Command::Problem(a) => {
            write_problem(&a.out, manifest)?;
            (Outcome::Success, sibling(&a.out, "manifest.json"))
        }
        Command::Learn(a) => (learn::run(a, manifest)?, sibling(&a.out, "manifest.json")),
        Command::Bound(a) => (bound::run(a, manifest)?, sibling(&a.out, "manifest.json")),
        Command::Synthesize(a) => (synthesize::run(a, manifest)?, sibling(&a.out, "manifest.json")),
        Command::Simulate(a) => (simulate::run(a, manifest)?, a.out_dir.join("manifest.json")),
        Command::Plot(a) => {
            let (outcome, dir) = plot::run(a, manifest)?;
            let name = match &a.kind {
                plot::PlotKind::Field(_) => "field",
                plot::PlotKind::Sweep(_) => "sweep",
                plot::PlotKind::Trajectories(_) => "trajectories",
            };
            (outcome, dir.join(format!("{name}.manifest.json")))
        }
        Command::ReproduceJetEngine(a) => (reproduce::run(a, manifest)?, reproduce::manifest_path(a)),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let run = || -> Result<Outcome> {
        configure_threads()?;
        let mut manifest = RunManifest::new();
        let (outcome, manifest_path) = dispatch(&cli.command, &mut manifest)?;
        manifest.write(&manifest_path)?;
        Ok(outcome)
    };
    match run() {
        Ok(outcome) => {
            if outcome != Outcome::Success {
                eprintln!("gpcbf: {}", outcome.label());
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("gpcbf: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
