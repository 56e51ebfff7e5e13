//! `gpcbf reproduce-jet-engine`: every stage of the benchmark with pinned seeds.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use gpcbf::benchmark;
use serde::Serialize;

use crate::bound::{self, BoundArgs};
use crate::common::Outcome;
use crate::learn::{self, LearnArgs};
use crate::manifest::RunManifest;
use crate::plot::{self, FieldArgs, SweepArgs, SweepKernels, TrajectoriesArgs};
use crate::simulate::{self, PlantKind, Robustness, SimulateArgs};
use crate::synthesize::{self, SynthesizeArgs};

#[derive(Args, Clone, Debug, Serialize)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = benchmark::SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = benchmark::SAMPLE_COUNT)]
    pub samples: usize,
    #[arg(long, default_value_t = benchmark::MONTE_CARLO_TRIALS)]
    pub trials: u64,
    /// Containment lower bound below which the run counts as failed.
    #[arg(long, default_value_t = 0.95)]
    pub require_probability: f64,
    /// Initial states per axis of the initial box.
    #[arg(long, default_value_t = 10)]
    pub x0_grid: usize,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = benchmark::STD_GRID_PER_DIM)]
    pub std_grid: usize,
    /// Also run the sample-count sweep.
    #[arg(long)]
    pub sweep: bool,
}

pub fn run(args: &ReproduceArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir)?;
    let problem = dir.join("problem.json");
    crate::write_problem(&problem, manifest)?;
    let model = dir.join("model.json");
    let bound_path = dir.join("bound.json");
    let barrier = dir.join("barrier.json");

    let outcome = learn::run(
        &LearnArgs {
            problem: problem.clone(),
            data: None,
            generate: Some(args.samples),
            noise: benchmark::NOISE_STD,
            seed: args.seed,
            hyperparams: None,
            std_grid: args.std_grid,
            out: model.clone(),
        },
        manifest,
    )?;
    if outcome != Outcome::Success {
        return Ok(outcome);
    }

    let bound_outcome = bound::run(
        &BoundArgs {
            model: model.clone(),
            problem: problem.clone(),
            epsilon: None,
            rkhs_norm_bounds: Vec::new(),
            info_gains: Vec::new(),
            info_gain_budget: None,
            info_gain_grid: 30,
            target_halfwidth: Some(benchmark::HALF_WIDTH),
            half_widths: None,
            trials: args.trials,
            confidence: benchmark::MONTE_CARLO_CONFIDENCE,
            seed: args.seed,
            require_probability: Some(args.require_probability),
            std_grid: args.std_grid,
            out: bound_path.clone(),
        },
        manifest,
    )?;

    let outcome = synthesize::run(
        &SynthesizeArgs {
            model: model.clone(),
            bound: bound_path.clone(),
            problem: problem.clone(),
            degree: 2,
            max_iterations: benchmark::cegis_config().max_iterations,
            margin: benchmark::cegis_config().margin,
            a_max: benchmark::A_MAX,
            initial_grid: benchmark::cegis_config().initial_grid,
            verifier_resolution: benchmark::cegis_config().verifier.resolution,
            input_matrix: None,
            out: barrier.clone(),
        },
        manifest,
    )?;
    if outcome != Outcome::Success {
        return Ok(outcome);
    }

    let mut worst = bound_outcome;
    for (plant, name) in [(PlantKind::True, "traj-true"), (PlantKind::Mean, "traj-mean")] {
        let o = simulate::run(
            &SimulateArgs {
                barrier: barrier.clone(),
                model: model.clone(),
                bound: bound_path.clone(),
                problem: problem.clone(),
                plant,
                x0_grid: Some(args.x0_grid),
                x0: Vec::new(),
                horizon: args.horizon,
                step: args.step,
                robustness: Robustness::WorstCaseVertices,
                d: Vec::new(),
                monotonicity_tolerance: 1e-3,
                allow_uncertified: false,
                input_matrix: None,
                out_dir: dir.join(name),
            },
            manifest,
        )?;
        worst = first_failure(worst, o);
    }

    let plots = dir.join("plots");
    plot::field(
        &FieldArgs {
            model: model.clone(),
            problem: problem.clone(),
            grid: 25,
            out_dir: plots.clone(),
        },
        manifest,
    )?;
    plot::trajectories(
        &TrajectoriesArgs {
            barrier: barrier.clone(),
            problem: problem.clone(),
            traj_dir: Some(dir.join("traj-true")),
            contour_grid: 400,
            out_dir: plots.clone(),
        },
        manifest,
    )?;
    if args.sweep {
        plot::sweep(
            &SweepArgs {
                problem: problem.clone(),
                counts: vec![5, 10, 20, 35, 50, 100],
                seed: args.seed,
                noise: benchmark::NOISE_STD,
                kernels: SweepKernels::Fitted,
                half_width: benchmark::HALF_WIDTH,
                trials: 100_000,
                confidence: benchmark::MONTE_CARLO_CONFIDENCE,
                std_grid: 100,
                out_dir: plots,
            },
            manifest,
        )?;
    }
    Ok(worst)
}

fn first_failure(a: Outcome, b: Outcome) -> Outcome {
    if a == Outcome::Success {
        b
    } else {
        a
    }
}

pub fn manifest_path(args: &ReproduceArgs) -> PathBuf {
    Path::new(&args.out_dir).join("manifest.json")
}
