//! The Moore-Greitzer jet engine case with its published constants.

use crate::confidence::ConfidenceBox;
use crate::dynamics::{
    generate_training_data, jet_engine_problem, jet_engine_system, Measurement, TrainingSet,
};
use crate::error::Result;
use crate::gp::{default_initial_kernels, fit_hyperparameters, GpPosterior, HyperOptions, KernelSpec};
use crate::synthesis::{BarrierCandidate, BarrierTemplate, CegisConfig};

pub const SEED: u64 = 7;
pub const SAMPLE_COUNT: usize = 35;
pub const NOISE_STD: f64 = 0.01;
/// Half-width of `D` on both axes.
pub const HALF_WIDTH: f64 = 0.05;
pub const MONTE_CARLO_TRIALS: u64 = 1_000_000;
pub const MONTE_CARLO_CONFIDENCE: f64 = 1.0 - 1e-10;
pub const STD_GRID_PER_DIM: usize = 200;
pub const SAMPLE_SWEEP: [usize; 3] = [10, 35, 100];
pub const A_MAX: f64 = 1e6;

/// Published squared-exponential hyperparameters, one kernel per output.
pub fn published_kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::squared_exponential(224.4168, vec![6.6030, 327.5503])
            .expect("published kernel is valid"),
        KernelSpec::squared_exponential(24.5311, vec![42.1995, 6.4648e6])
            .expect("published kernel is valid"),
    ]
}

/// Published coefficients over `{1, x₁, x₂, x₁², x₂², x₁x₂}`.
pub const PUBLISHED_BARRIER: [f64; 6] = [
    -4292.8910, 1129.2414, 1010.3266, 1274.3322, 1564.8195, -1368.6064,
];

/// The published barrier in the graded-lexicographic basis
/// `{1, x₁, x₂, x₁², x₁x₂, x₂²}`.
pub fn published_barrier() -> BarrierCandidate {
    let t = barrier_template();
    let mut a = vec![0.0; t.len()];
    let published_exponents = [[0, 0], [1, 0], [0, 1], [2, 0], [0, 2], [1, 1]];
    for (c, e) in PUBLISHED_BARRIER.iter().zip(published_exponents) {
        let i = t.index_of(&e).expect("degree-2 monomial");
        a[i] = *c;
    }
    t.candidate(a, 1.0).expect("published coefficients lie within A_MAX")
}

pub fn barrier_template() -> BarrierTemplate {
    BarrierTemplate::polynomial(2, 2, A_MAX).expect("valid template")
}

pub fn confidence_box() -> ConfidenceBox {
    ConfidenceBox::with_half_widths(vec![HALF_WIDTH, HALF_WIDTH]).expect("positive widths")
}

pub fn cegis_config() -> CegisConfig {
    CegisConfig::default()
}

/// `count` i.i.d. uniform samples of the true drift with noise [`NOISE_STD`].
pub fn training_data(count: usize, seed: u64) -> Result<TrainingSet> {
    generate_training_data(
        &jet_engine_system(),
        &jet_engine_problem(),
        count,
        NOISE_STD,
        seed,
        Measurement::DirectDrift,
    )
}

/// Hyperparameters fit by likelihood maximization on `data`.
pub fn fitted_kernels(data: &TrainingSet, seed: u64) -> Result<Vec<KernelSpec>> {
    let fit = fit_hyperparameters(data, &default_initial_kernels(data), &HyperOptions::with_seed(seed))?;
    Ok(fit.kernels)
}

/// The learned model used by the benchmark: [`SAMPLE_COUNT`] samples and
/// fitted hyperparameters.
pub fn learned_model(seed: u64) -> Result<GpPosterior> {
    let data = training_data(SAMPLE_COUNT, seed)?;
    let kernels = fitted_kernels(&data, seed)?;
    Ok(GpPosterior::fit(&data, &kernels)?.with_domain(jet_engine_problem().state_box))
}
