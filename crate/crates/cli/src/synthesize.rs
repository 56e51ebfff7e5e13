//! `gpcbf synthesize`: counterexample-guided barrier search.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use gpcbf::io::{read_problem, write_json};
use gpcbf::synthesis::{cegis, CegisConfig, VerifierConfig};
use gpcbf::{BarrierTemplate, SynthesisOutcome};
use serde::Serialize;

use crate::bound::read_bound;
use crate::common::{ensure_parent, input_map, load_model, Outcome};
use crate::manifest::{sibling, RunManifest, Stage};

#[derive(Args, Clone, Debug, Serialize)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bound: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    /// Total degree of the polynomial barrier.
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    #[arg(long, default_value_t = 50)]
    pub max_iterations: usize,
    /// Required value of `B` on unsafe samples.
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    /// Bound on every coefficient magnitude.
    #[arg(long, default_value_t = 1e6)]
    pub a_max: f64,
    /// Initial sample points per axis on each region.
    #[arg(long, default_value_t = 5)]
    pub initial_grid: usize,
    /// Initial verifier cells per axis on each region.
    #[arg(long, default_value_t = 32)]
    pub verifier_resolution: usize,
    /// Row-major `g`; the jet engine's `(0, -1)ᵀ` by default.
    #[arg(long, value_delimiter = ',')]
    pub input_matrix: Option<Vec<f64>>,
    /// Barrier JSON; the full run trace goes beside it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn trace_path(barrier: &Path) -> PathBuf {
    sibling(barrier, "trace.json")
}

pub fn run(args: &SynthesizeArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut stage = Stage::start("synthesize", args)?;
    for p in [&args.problem, &args.model, &args.bound] {
        stage.input(p);
    }
    let spec = read_problem(&args.problem)?;
    let gp = load_model(&args.model, &spec)?;
    let bound = read_bound(&args.bound)?;
    if bound.confidence_box.dim() != spec.n {
        bail!("bound has dimension {} but the problem has {}", bound.confidence_box.dim(), spec.n);
    }
    let g = input_map(&spec, args.input_matrix.as_deref())?;
    let template = BarrierTemplate::polynomial(spec.n, args.degree, args.a_max)?;
    let cfg = CegisConfig {
        margin: args.margin,
        max_iterations: args.max_iterations,
        initial_grid: args.initial_grid,
        verifier: VerifierConfig {
            resolution: args.verifier_resolution,
            ..VerifierConfig::default()
        },
        ..CegisConfig::default()
    };
    let result = cegis(&template, &gp, &g, &spec, &bound.confidence_box, &cfg)?;
    log::info!(
        "synthesis finished after {} iterations with {} samples",
        result.iterations,
        result.samples.len()
    );

    ensure_parent(&args.out)?;
    let trace = trace_path(&args.out);
    write_json(&trace, &result)?;
    stage.output(&trace);
    match result.candidate() {
        Some(candidate) => {
            write_json(&args.out, candidate)?;
            stage.output(&args.out);
        }
        None if args.out.exists() => fs::remove_file(&args.out)?,
        None => {}
    }
    let outcome = match &result.outcome {
        SynthesisOutcome::Certified { .. } => Outcome::Success,
        SynthesisOutcome::InfeasibleTemplate => Outcome::InfeasibleTemplate,
        SynthesisOutcome::BudgetExhausted { .. } => Outcome::BudgetExhausted,
        SynthesisOutcome::VerifierInconclusive { reason, .. } => {
            Outcome::ValidationFailed(format!("verifier inconclusive: {reason}"))
        }
    };
    stage.finish(manifest, &outcome.label())?;
    Ok(outcome)
}
