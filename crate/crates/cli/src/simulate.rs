//! `gpcbf simulate`: closed-loop runs of the safe controller.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gpcbf::control::{
    barrier_monotonicity_check, check_trajectory_safety, simulate_batch, MonotonicityReport, Plant,
    SafetyReport, Termination,
};
use gpcbf::io::{read_json, read_problem, write_json, write_trajectory_csv};
use gpcbf::{BarrierCandidate, Error, RobustnessMode, SafeController};
use serde::{Deserialize, Serialize};

use crate::bound::read_bound;
use crate::common::{input_map, load_model, true_system, Outcome, Point};
use crate::manifest::{RunManifest, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    /// The true jet-engine dynamics.
    True,
    /// The learned posterior mean.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Robustness {
    /// Every vertex of the error box.
    WorstCaseVertices,
    /// The single error given by --d.
    FixedD,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub barrier: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bound: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, value_enum, default_value_t = PlantKind::True)]
    pub plant: PlantKind,
    /// Initial states on a per-axis grid of each initial box.
    #[arg(long, conflicts_with = "x0", required_unless_present = "x0")]
    pub x0_grid: Option<usize>,
    /// One initial state, e.g. `0.5,0`; repeatable.
    #[arg(long)]
    pub x0: Vec<Point>,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = Robustness::WorstCaseVertices)]
    pub robustness: Robustness,
    /// Model error for `--robustness fixed-d`.
    #[arg(long, value_delimiter = ',', required_if_eq("robustness", "fixed-d"))]
    pub d: Vec<f64>,
    /// Allowed per-step increase of `B` before a monotonicity violation.
    #[arg(long, default_value_t = 1e-3)]
    pub monotonicity_tolerance: f64,
    /// Run even if the barrier has no certificate.
    #[arg(long)]
    pub allow_uncertified: bool,
    #[arg(long, value_delimiter = ',')]
    pub input_matrix: Option<Vec<f64>>,
    /// Directory for `traj_NNNN.csv` files and `summary.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub index: usize,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<SafetyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotonicity: Option<MonotonicityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_barrier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub trajectories: usize,
    pub safe: usize,
    pub unsafe_trajectories: usize,
    pub no_safe_input: usize,
    pub other_errors: usize,
    pub left_state_box: usize,
    pub monotonicity_violations: usize,
    pub max_step_increase: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub plant: PlantKind,
    pub horizon: f64,
    pub step: f64,
    pub robustness: String,
    pub certified_barrier: bool,
    pub totals: Totals,
    pub trajectories: Vec<TrajectorySummary>,
}

fn initial_states(args: &SimulateArgs, spec: &gpcbf::ProblemSpec) -> Result<Vec<Vec<f64>>> {
    let states: Vec<Vec<f64>> = match args.x0_grid {
        Some(g) => spec.initial_boxes.iter().flat_map(|b| b.grid(g)).collect(),
        None => args.x0.iter().map(|p| p.0.clone()).collect(),
    };
    if let Some(x) = states.iter().find(|x| x.len() != spec.n) {
        bail!("initial state {x:?} does not have {} coordinates", spec.n);
    }
    Ok(states)
}

pub fn run(args: &SimulateArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut stage = Stage::start("simulate", args)?;
    for p in [&args.problem, &args.model, &args.bound, &args.barrier] {
        stage.input(p);
    }
    let spec = read_problem(&args.problem)?;
    let gp = load_model(&args.model, &spec)?;
    let bound = read_bound(&args.bound)?;
    let barrier: BarrierCandidate = read_json(&args.barrier)?;
    barrier.validate()?;
    let certified = barrier.certificate.is_some();
    if !certified && !args.allow_uncertified {
        bail!(
            "{} carries no certificate; pass --allow-uncertified to simulate it anyway",
            args.barrier.display()
        );
    }
    let mode = match args.robustness {
        Robustness::WorstCaseVertices => RobustnessMode::WorstCaseVertices,
        Robustness::FixedD => RobustnessMode::FixedD { d: args.d.clone() },
    };
    manifest.interpretation.robustness_mode = Some(mode.name().to_string());
    let g = input_map(&spec, args.input_matrix.as_deref())?;
    let ctrl = SafeController::new(barrier.clone(), &gp, g, spec.inputs.clone(), bound.confidence_box, mode.clone())?;
    let truth;
    let plant = match args.plant {
        PlantKind::True => {
            truth = true_system(&spec)?;
            Plant::True(&truth)
        }
        PlantKind::Mean => Plant::Mean,
    };
    let x0s = initial_states(args, &spec)?;
    let runs = simulate_batch(&ctrl, plant, &spec, &x0s, args.horizon, args.step);

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    remove_old_trajectories(&args.out_dir)?;
    let mut totals = Totals {
        trajectories: x0s.len(),
        ..Totals::default()
    };
    let mut summaries = Vec::with_capacity(x0s.len());
    for (index, (x0, run)) in x0s.iter().zip(runs).enumerate() {
        let mut s = TrajectorySummary {
            index,
            x0: x0.clone(),
            file: None,
            termination: None,
            safety: None,
            monotonicity: None,
            max_barrier: None,
            error: None,
        };
        match run {
            Ok(traj) => {
                let name = format!("traj_{index:04}.csv");
                let path = args.out_dir.join(&name);
                write_trajectory_csv(&path, &traj)?;
                stage.output(&path);
                let safety = check_trajectory_safety(&traj, &spec);
                let mono = barrier_monotonicity_check(&traj, &barrier, args.monotonicity_tolerance);
                if safety.is_safe() {
                    totals.safe += 1;
                } else {
                    totals.unsafe_trajectories += 1;
                }
                totals.left_state_box += usize::from(safety.left_state_box);
                totals.monotonicity_violations += mono.violations;
                totals.max_step_increase = totals.max_step_increase.max(mono.max_increase);
                s.max_barrier = traj.barrier_values.iter().copied().reduce(f64::max);
                s.file = Some(name);
                s.termination = Some(traj.termination);
                s.safety = Some(safety);
                s.monotonicity = Some(mono);
            }
            Err(e) => {
                if matches!(e, Error::NoSafeInput { .. }) {
                    totals.no_safe_input += 1;
                } else {
                    totals.other_errors += 1;
                }
                s.error = Some(e.to_string());
            }
        }
        summaries.push(s);
    }
    let summary = SimulationSummary {
        plant: args.plant,
        horizon: args.horizon,
        step: args.step,
        robustness: mode.name().to_string(),
        certified_barrier: certified,
        totals: totals.clone(),
        trajectories: summaries,
    };
    let summary_path = args.out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    stage.output(&summary_path);
    log::info!(
        "{} of {} trajectories safe, max step increase of B {:e}",
        totals.safe,
        totals.trajectories,
        totals.max_step_increase
    );

    let outcome = if totals.unsafe_trajectories > 0 || totals.no_safe_input > 0 || totals.other_errors > 0 {
        Outcome::ValidationFailed(format!(
            "{} unsafe trajectories, {} without a safe input, {} other errors",
            totals.unsafe_trajectories, totals.no_safe_input, totals.other_errors
        ))
    } else {
        Outcome::Success
    };
    stage.finish(manifest, &outcome.label())?;
    Ok(outcome)
}

fn remove_old_trajectories(dir: &Path) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.starts_with("traj_") && name.ends_with(".csv") {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}
