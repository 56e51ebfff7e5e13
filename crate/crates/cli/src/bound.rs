//! `gpcbf bound`: the model-error box `D`, analytic or Monte-Carlo validated.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{ArgGroup, Args};
use gpcbf::confidence::{
    beta_bound, build_confidence_box, information_gain_greedy, monte_carlo_containment, Provenance,
};
use gpcbf::gp::{max_std_bound, BoundMode, StdBound};
use gpcbf::io::{read_json, read_problem, write_json};
use gpcbf::{ConfidenceBox, ErrorBoundParams, GpPosterior, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::common::{ensure_parent, load_model, parse_probability, true_system, Outcome};
use crate::learn::{report_path, LearnReport};
use crate::manifest::{RunManifest, Stage};

#[derive(Args, Clone, Debug, Serialize)]
#[command(group(ArgGroup::new("mode").required(true).args(["epsilon", "target_halfwidth", "half_widths"])))]
pub struct BoundArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    /// Analytic path: failure probability per output dimension.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Analytic path: bounds on the RKHS norm of each drift component.
    #[arg(long, value_delimiter = ',', requires = "epsilon")]
    pub rkhs_norm_bounds: Vec<f64>,
    /// Analytic path: information gains to use instead of the greedy estimate.
    #[arg(long, value_delimiter = ',', requires = "epsilon")]
    pub info_gains: Vec<f64>,
    /// Greedy information gain budget; defaults to the sample count.
    #[arg(long)]
    pub info_gain_budget: Option<usize>,
    /// Candidate points per axis for the greedy information gain.
    #[arg(long, default_value_t = 30)]
    pub info_gain_grid: usize,
    /// Monte-Carlo path: the same half-width on every axis.
    #[arg(long)]
    pub target_halfwidth: Option<f64>,
    /// Monte-Carlo path: one half-width per axis.
    #[arg(long, value_delimiter = ',')]
    pub half_widths: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    /// Confidence of the binomial interval; `1-1e-10` style is accepted.
    #[arg(long, default_value = "1-1e-10", value_parser = parse_probability)]
    pub confidence: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Exit with a validation failure if the lower bound falls below this.
    #[arg(long)]
    pub require_probability: Option<f64>,
    /// Cells per axis for the standard deviation bound when the model report
    /// has none at this resolution.
    #[arg(long, default_value_t = 200)]
    pub std_grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub params: ErrorBoundParams,
    pub betas: Vec<f64>,
    pub std_bound: StdBound,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundFile {
    pub confidence_box: ConfidenceBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticReport>,
}

pub fn read_bound(path: &Path) -> Result<BoundFile> {
    let b: BoundFile = read_json(path)?;
    if b.confidence_box.half_widths.iter().any(|w| !(*w >= 0.0)) {
        bail!("{}: half-widths must be non-negative", path.display());
    }
    Ok(b)
}

fn std_bound(model: &Path, gp: &GpPosterior, spec: &ProblemSpec, grid: usize, stage: &mut Stage) -> Result<StdBound> {
    let report = report_path(model);
    if report.exists() {
        let r: LearnReport = read_json(&report)?;
        if r.std_bound.grid_per_dim == grid && r.std_bound.per_dim.len() == spec.n {
            stage.input(&report);
            return Ok(r.std_bound);
        }
    }
    Ok(max_std_bound(gp, spec, grid, BoundMode::LipschitzGrid)?)
}

fn analytic(args: &BoundArgs, epsilon: f64, gp: &GpPosterior, spec: &ProblemSpec, stage: &mut Stage) -> Result<BoundFile> {
    let n = spec.n;
    if args.rkhs_norm_bounds.len() != n {
        bail!("--rkhs-norm-bounds needs {n} values, got {}", args.rkhs_norm_bounds.len());
    }
    let info_gains = if args.info_gains.is_empty() {
        let candidates = spec.state_box.grid(args.info_gain_grid);
        let budget = args.info_gain_budget.unwrap_or(gp.sample_count());
        (0..n)
            .map(|j| information_gain_greedy(gp.kernel(j), &candidates, budget, gp.noise_std()))
            .collect::<gpcbf::Result<Vec<_>>>()?
    } else if args.info_gains.len() == n {
        args.info_gains.clone()
    } else {
        bail!("--info-gains needs {n} values, got {}", args.info_gains.len());
    };
    let params = ErrorBoundParams {
        epsilon,
        rkhs_norm_bounds: args.rkhs_norm_bounds.clone(),
        info_gains,
        sample_count: gp.sample_count(),
    };
    let betas = (0..n).map(|j| beta_bound(&params, j)).collect::<gpcbf::Result<Vec<_>>>()?;
    let std_bound = std_bound(&args.model, gp, spec, args.std_grid, stage)?;
    let confidence_box = build_confidence_box(&betas, &std_bound, epsilon)?;
    Ok(BoundFile {
        confidence_box,
        analytic: Some(AnalyticReport { params, betas, std_bound }),
    })
}

pub fn run(args: &BoundArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut stage = Stage::start("bound", args)?;
    stage.input(&args.problem);
    stage.input(&args.model);
    let spec = read_problem(&args.problem)?;
    let gp = load_model(&args.model, &spec)?;

    let mut outcome = Outcome::Success;
    let file = if let Some(epsilon) = args.epsilon {
        analytic(args, epsilon, &gp, &spec, &mut stage)?
    } else {
        let widths = match (&args.half_widths, args.target_halfwidth) {
            (Some(w), _) => w.clone(),
            (None, Some(w)) => vec![w; spec.n],
            (None, None) => bail!("no half-widths given"),
        };
        if widths.len() != spec.n {
            bail!("--half-widths needs {} values, got {}", spec.n, widths.len());
        }
        let truth = true_system(&spec)?;
        manifest.seed("monte-carlo", args.seed);
        let mut dbox = ConfidenceBox::with_half_widths(widths)?;
        let estimate = monte_carlo_containment(&gp, &truth.drift, &spec, &dbox, args.trials, args.confidence, args.seed)?;
        log::info!(
            "containment {}/{} with interval [{:.6}, {:.6}]",
            estimate.successes,
            estimate.trials,
            estimate.lower_bound,
            estimate.upper_bound
        );
        if let Some(p) = args.require_probability {
            if estimate.lower_bound < p {
                outcome = Outcome::ValidationFailed(format!(
                    "containment lower bound {} is below {p}",
                    estimate.lower_bound
                ));
            }
        }
        dbox.provenance = Provenance::MonteCarloValidated { estimate };
        BoundFile {
            confidence_box: dbox,
            analytic: None,
        }
    };

    ensure_parent(&args.out)?;
    write_json(&args.out, &file)?;
    stage.output(&args.out);
    stage.finish(manifest, &outcome.label())?;
    Ok(outcome)
}
