//! Type-II maximum likelihood for the kernel hyperparameters.
//!
//! Each output dimension is fitted independently over
//! `θ = (ln σ², ln l_1, …, ln l_n)` with the measurement noise held at the
//! known `ρ_f`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrainingSet;
use crate::error::{Error, Result};
use crate::gp::kernel::KernelSpec;
use crate::gp::posterior::{factor, gram};
use crate::optim::{self, BfgsOptions};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Bounds on `ln σ²`.
    pub log_signal_variance_bounds: (f64, f64),
    /// Bounds on every `ln l`.
    pub log_length_scale_bounds: (f64, f64),
}

impl HyperOptions {
    pub fn with_seed(seed: u64) -> Self {
        HyperOptions {
            restarts: 8,
            seed,
            max_iters: 200,
            log_signal_variance_bounds: (1e-6f64.ln(), 1e8f64.ln()),
            log_length_scale_bounds: (1e-3f64.ln(), 1e8f64.ln()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartRecord {
    pub start: KernelSpec,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperFit {
    pub kernels: Vec<KernelSpec>,
    pub log_likelihoods: Vec<f64>,
    /// Per output dimension, one record per restart.
    pub restarts: Vec<Vec<RestartRecord>>,
}

fn column(data: &TrainingSet, j: usize) -> DVector<f64> {
    DVector::from_iterator(data.len(), data.targets.iter().map(|t| t[j]))
}

fn kernel_from_theta(theta: &[f64]) -> KernelSpec {
    KernelSpec::squared_exponential(
        theta[0].exp(),
        theta[1..].iter().map(|t| t.exp()).collect(),
    )
    .expect("exponentiated parameters are positive")
}

fn theta_from_kernel(k: &KernelSpec) -> Vec<f64> {
    std::iter::once(k.signal_variance.ln())
        .chain(k.length_scales.iter().map(|l| l.ln()))
        .collect()
}

/// `ln p(y | X, θ)` and its gradient with respect to `θ`.
fn lml_with_gradient(
    inputs: &[Vec<f64>],
    y: &DVector<f64>,
    theta: &[f64],
    noise_var: f64,
) -> Option<(f64, Vec<f64>)> {
    let kernel = kernel_from_theta(theta);
    let k = gram(&kernel, inputs);
    let (l, _) = factor(&k, noise_var, 0.0, 0).ok()?;
    let count = inputs.len();
    let z = l.solve_lower_triangular(y)?;
    let alpha = l.transpose().solve_upper_triangular(&z)?;
    let log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    let value = -0.5 * y.dot(&alpha)
        - log_det
        - 0.5 * count as f64 * (2.0 * std::f64::consts::PI).ln();

    let linv = l.solve_lower_triangular(&DMatrix::identity(count, count))?;
    let ainv = linv.transpose() * &linv;
    let w = &alpha * alpha.transpose() - ainv;

    let mut grad = Vec::with_capacity(theta.len());
    // ∂K/∂ln σ² = K
    grad.push(0.5 * w.component_mul(&k).sum());
    for dim in 0..kernel.dim() {
        let inv_l2 = 1.0 / (kernel.length_scales[dim] * kernel.length_scales[dim]);
        let mut acc = 0.0;
        for i in 0..count {
            for m in 0..count {
                let d = inputs[i][dim] - inputs[m][dim];
                acc += w[(i, m)] * k[(i, m)] * d * d * inv_l2;
            }
        }
        grad.push(0.5 * acc);
    }
    value.is_finite().then_some((value, grad))
}

/// Log marginal likelihood of output `j` under `kernel`.
pub fn log_marginal_likelihood(data: &TrainingSet, j: usize, kernel: &KernelSpec) -> Result<f64> {
    let y = column(data, j);
    lml_with_gradient(&data.states, &y, &theta_from_kernel(kernel), data.noise_std.powi(2))
        .map(|(v, _)| v)
        .ok_or_else(|| Error::invalid("log marginal likelihood undefined at these parameters"))
}

/// Starting kernels scaled to the data: target variance and half the input
/// range per axis.
pub fn default_initial_kernels(data: &TrainingSet) -> Vec<KernelSpec> {
    let n = data.state_dim();
    let ranges: Vec<f64> = (0..n)
        .map(|l| {
            let (lo, hi) = data
                .states
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[l]), hi.max(x[l])));
            ((hi - lo) * 0.5).max(1e-2)
        })
        .collect();
    (0..n)
        .map(|j| {
            let y = column(data, j);
            let mean = y.mean();
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len().max(1) as f64;
            KernelSpec::squared_exponential(var.max(1e-3), ranges.clone())
                .expect("positive defaults")
        })
        .collect()
}

/// Maximizes the log marginal likelihood per output dimension with
/// `restarts` starts: the given kernel plus seeded log-space perturbations.
pub fn fit_hyperparameters(
    data: &TrainingSet,
    init: &[KernelSpec],
    opts: &HyperOptions,
) -> Result<HyperFit> {
    data.validate()?;
    if data.len() < 2 {
        return Err(Error::invalid("hyperparameter fitting needs at least two samples"));
    }
    let n = data.state_dim();
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial kernels",
            expected: n,
            got: init.len(),
        });
    }
    let noise_var = data.noise_std.powi(2);
    let (sv_lo, sv_hi) = opts.log_signal_variance_bounds;
    let (l_lo, l_hi) = opts.log_length_scale_bounds;
    let lower: Vec<f64> = std::iter::once(sv_lo).chain(std::iter::repeat_n(l_lo, n)).collect();
    let upper: Vec<f64> = std::iter::once(sv_hi).chain(std::iter::repeat_n(l_hi, n)).collect();
    let bfgs = BfgsOptions {
        max_iters: opts.max_iters,
        ..Default::default()
    };

    let mut kernels = Vec::with_capacity(n);
    let mut lls = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for j in 0..n {
        init[j].validate()?;
        let y = column(data, j);
        let base = theta_from_kernel(&init[j]);
        let starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
            .map(|r| {
                if r == 0 {
                    return base.clone();
                }
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream((j * 10_000 + r) as u64);
                base.iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let spread = if i == 0 { 3.0 } else { 2.0 };
                        (t + rng.random_range(-spread..spread)).clamp(lower[i], upper[i])
                    })
                    .collect()
            })
            .collect();

        let objective = |theta: &[f64]| {
            lml_with_gradient(&data.states, &y, theta, noise_var)
                .map(|(v, g)| (-v, g.into_iter().map(|d| -d).collect()))
        };
        let outcomes: Vec<(RestartRecord, Option<Vec<f64>>)> = starts
            .par_iter()
            .map(|start| {
                let initial = objective(start).map_or(f64::NEG_INFINITY, |(v, _)| -v);
                let result = optim::minimize(objective, start, &lower, &upper, &bfgs);
                let (final_ll, theta, iterations) = match result {
                    Some(r) if r.value.is_finite() => (-r.value, Some(r.x), r.iterations),
                    _ => (f64::NEG_INFINITY, None, 0),
                };
                let record = RestartRecord {
                    start: kernel_from_theta(start),
                    initial_log_likelihood: initial,
                    final_log_likelihood: final_ll,
                    iterations,
                };
                (record, theta)
            })
            .collect();

        let best = outcomes
            .iter()
            .filter(|(_, t)| t.is_some())
            .max_by(|a, b| a.0.final_log_likelihood.total_cmp(&b.0.final_log_likelihood));
        let Some((rec, Some(theta))) = best else {
            let best_ll = outcomes
                .iter()
                .map(|(r, _)| r.initial_log_likelihood)
                .fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::HyperparameterSearchFailed {
                output: j,
                best_log_likelihood: best_ll,
            });
        };
        kernels.push(kernel_from_theta(theta));
        lls.push(rec.final_log_likelihood);
        records.push(outcomes.into_iter().map(|(r, _)| r).collect());
    }
    Ok(HyperFit {
        kernels,
        log_likelihoods: lls,
        restarts: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let states: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![(i as f64 * 0.7).sin() * 2.0, (i as f64 * 1.3).cos()])
            .collect();
        let y = DVector::from_iterator(15, states.iter().map(|x| x[0].sin() + 0.3 * x[1]));
        let theta = [0.4, 0.2, -0.1];
        let (_, g) = lml_with_gradient(&states, &y, &theta, 0.01).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut tp = theta;
            let mut tm = theta;
            tp[i] += h;
            tm[i] -= h;
            let fd = (lml_with_gradient(&states, &y, &tp, 0.01).unwrap().0
                - lml_with_gradient(&states, &y, &tm, 0.01).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn needs_two_samples() {
        let d = TrainingSet {
            states: vec![vec![0.0]],
            targets: vec![vec![1.0]],
            noise_std: 0.1,
            seed: 0,
        };
        let init = default_initial_kernels(&d);
        assert!(fit_hyperparameters(&d, &init, &HyperOptions::with_seed(1)).is_err());
    }
}
