//! `gpcbf learn`: fit the GP model and bound its standard deviation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use gpcbf::dynamics::{generate_training_data, Measurement};
use gpcbf::gp::{
    default_initial_kernels, fit_hyperparameters, max_std_bound, BoundMode, HyperOptions, StdBound,
};
use gpcbf::io::{read_json, read_problem, read_training_set, write_json, write_model, write_training_set, ModelFile};
use gpcbf::{GpPosterior, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::common::{ensure_parent, true_system, Outcome};
use crate::manifest::{sibling, RunManifest, Stage};

#[derive(Args, Clone, Debug, Serialize)]
pub struct LearnArgs {
    /// Problem JSON.
    #[arg(long)]
    pub problem: PathBuf,
    /// Training CSV with columns x1..xn,y1..yn and a `.meta.json` sidecar.
    #[arg(long, conflicts_with = "generate", required_unless_present = "generate")]
    pub data: Option<PathBuf>,
    /// Draw this many noisy samples of the true drift instead of reading data.
    #[arg(long)]
    pub generate: Option<usize>,
    /// Measurement noise standard deviation for --generate.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Seed for data generation and hyperparameter restarts.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// JSON array of kernels that pins the hyperparameters.
    #[arg(long)]
    pub hyperparams: Option<PathBuf>,
    /// Cells per axis for the standard deviation bound.
    #[arg(long, default_value_t = 200)]
    pub std_grid: usize,
    /// Output model JSON; the data copy and report are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything `learn` found out besides the model itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnReport {
    pub kernel_source: String,
    pub kernels: Vec<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihoods: Option<Vec<f64>>,
    pub noise_std: f64,
    pub sample_count: usize,
    pub std_bound: StdBound,
}

pub fn report_path(model: &Path) -> PathBuf {
    sibling(model, "report.json")
}

pub fn data_path(model: &Path) -> PathBuf {
    sibling(model, "data.csv")
}

pub fn run(args: &LearnArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut stage = Stage::start("learn", args)?;
    stage.input(&args.problem);
    let spec = read_problem(&args.problem).with_context(|| format!("reading {}", args.problem.display()))?;
    let data = match (&args.data, args.generate) {
        (Some(path), _) => {
            stage.input(path);
            read_training_set(path).with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(count)) => {
            manifest.seed("data", args.seed);
            generate_training_data(
                &true_system(&spec)?,
                &spec,
                count,
                args.noise,
                args.seed,
                Measurement::DirectDrift,
            )?
        }
        (None, None) => bail!("either --data or --generate is required"),
    };
    if data.state_dim() != spec.n {
        bail!("training data has {} states but the problem has {}", data.state_dim(), spec.n);
    }

    let (kernels, kernel_source, log_likelihoods) = match &args.hyperparams {
        Some(path) => {
            stage.input(path);
            let kernels: Vec<KernelSpec> = read_json(path)?;
            if kernels.len() != spec.n {
                bail!("{} lists {} kernels, expected {}", path.display(), kernels.len(), spec.n);
            }
            (kernels, "pinned", None)
        }
        None => {
            manifest.seed("hyperparameters", args.seed);
            let fit = fit_hyperparameters(&data, &default_initial_kernels(&data), &HyperOptions::with_seed(args.seed))?;
            (fit.kernels, "fitted", Some(fit.log_likelihoods))
        }
    };
    let gp = GpPosterior::fit(&data, &kernels)?.with_domain(spec.state_box.clone());
    let std_bound = max_std_bound(&gp, &spec, args.std_grid, BoundMode::LipschitzGrid)?;

    ensure_parent(&args.out)?;
    let csv = data_path(&args.out);
    write_training_set(&csv, &data)?;
    let csv_name = csv.file_name().expect("file name").to_string_lossy().into_owned();
    write_model(&args.out, &ModelFile::from_posterior(&gp, csv_name))?;
    let report = LearnReport {
        kernel_source: kernel_source.to_string(),
        kernels,
        log_likelihoods,
        noise_std: data.noise_std,
        sample_count: data.len(),
        std_bound,
    };
    write_json(&report_path(&args.out), &report)?;
    log::info!(
        "learned {} kernels from {} samples; std bound {:?}",
        report.kernel_source,
        report.sample_count,
        report.std_bound.per_dim
    );

    for p in [csv.clone(), gpcbf::io::sidecar_path(&csv), args.out.clone(), report_path(&args.out)] {
        stage.output(&p);
    }
    stage.finish(manifest, "success")?;
    Ok(Outcome::Success)
}
