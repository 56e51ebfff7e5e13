use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{StateBox, TrainingSet, VectorField};
use crate::error::{Error, Result};
use crate::gp::KernelSpec;
use crate::interval::Interval;

/// Largest accepted condition estimate of a factorized Gram system.
pub const CONDITION_LIMIT: f64 = 1e13;

/// Jitter schedule tried when `K + ρ_f² I` is numerically indefinite.
pub const JITTER_SCHEDULE: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Negative variances down to this value are roundoff and clamp to zero.
pub const VARIANCE_ROUNDOFF: f64 = 1e-10;

#[derive(Debug)]
struct OutputModel {
    kernel: KernelSpec,
    /// Lower Cholesky factor of `K + (ρ_f² + jitter) I`.
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    /// `sqrt(αᵀ K α)`, the RKHS norm of the posterior mean.
    mean_norm: f64,
}

/// Independent zero-mean GP posteriors, one per state dimension, sharing the
/// training inputs.
#[derive(Debug)]
pub struct GpPosterior {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    noise_std: f64,
    outputs: Vec<OutputModel>,
    domain: Option<StateBox>,
    extrapolations: AtomicU64,
}

pub(crate) fn gram(kernel: &KernelSpec, inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.eval(&inputs[i], &inputs[i]);
        for j in 0..i {
            let v = kernel.eval(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `K + (noise_var + jitter) I` walking [`JITTER_SCHEDULE`],
/// starting at `min_jitter`. Returns the factor and the jitter used.
pub(crate) fn factor(
    k: &DMatrix<f64>,
    noise_var: f64,
    min_jitter: f64,
    output: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let mut last = 0.0;
    for &jitter in JITTER_SCHEDULE.iter().filter(|&&j| j >= min_jitter) {
        last = jitter;
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += noise_var + jitter;
        }
        if let Some(ch) = a.cholesky() {
            let l = ch.unpack();
            let diag = l.diagonal();
            if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                continue;
            }
            let (lo, hi) = diag
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
            let condition = (hi / lo).powi(2);
            if condition > CONDITION_LIMIT {
                return Err(Error::IllConditioned {
                    output,
                    condition,
                    limit: CONDITION_LIMIT,
                });
            }
            return Ok((l, jitter));
        }
    }
    Err(Error::NotPositiveDefinite {
        output,
        jitter: last,
    })
}

fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("triangular factor has positive diagonal");
    l.transpose()
        .solve_upper_triangular(&z)
        .expect("triangular factor has positive diagonal")
}

impl GpPosterior {
    /// Conditions one GP per output dimension on `data`, factorizing each
    /// `K_j + ρ_f² I` once.
    pub fn fit(data: &TrainingSet, kernels: &[KernelSpec]) -> Result<Self> {
        Self::assemble(data, kernels, None, None)
    }

    /// Rebuilds a posterior from persisted weights and jitters; the factor is
    /// recomputed from the data so variances match the original fit.
    pub fn from_parts(
        data: &TrainingSet,
        kernels: &[KernelSpec],
        alpha: Vec<Vec<f64>>,
        jitter: Vec<f64>,
    ) -> Result<Self> {
        Self::assemble(data, kernels, Some(alpha), Some(jitter))
    }

    fn assemble(
        data: &TrainingSet,
        kernels: &[KernelSpec],
        alpha: Option<Vec<Vec<f64>>>,
        jitter: Option<Vec<f64>>,
    ) -> Result<Self> {
        data.validate()?;
        let n = kernels.len();
        if n == 0 {
            return Err(Error::invalid("need one kernel per output dimension"));
        }
        if !data.is_empty() && data.state_dim() != n {
            return Err(Error::DimensionMismatch {
                what: "kernels per state dimension",
                expected: data.state_dim(),
                got: n,
            });
        }
        for k in kernels {
            k.validate()?;
            if k.dim() != n {
                return Err(Error::DimensionMismatch {
                    what: "kernel length scales",
                    expected: n,
                    got: k.dim(),
                });
            }
        }
        let noise_var = data.noise_std * data.noise_std;
        let count = data.len();
        let mut outputs = Vec::with_capacity(n);
        for (j, kernel) in kernels.iter().enumerate() {
            let k = gram(kernel, &data.states);
            let y = DVector::from_iterator(count, data.targets.iter().map(|t| t[j]));
            let min_jitter = jitter.as_ref().map_or(0.0, |v| v[j]);
            let (chol, used) = factor(&k, noise_var, min_jitter, j)?;
            if let Some(recorded) = jitter.as_ref().map(|v| v[j]) {
                if used != recorded {
                    return Err(Error::invalid(format!(
                        "output {j}: recorded jitter {recorded:e} no longer factorizes"
                    )));
                }
            }
            let alpha = match alpha.as_ref() {
                Some(a) => {
                    if a[j].len() != count {
                        return Err(Error::DimensionMismatch {
                            what: "alpha length",
                            expected: count,
                            got: a[j].len(),
                        });
                    }
                    DVector::from_column_slice(&a[j])
                }
                None => cholesky_solve(&chol, &y),
            };
            let mean_norm = alpha.dot(&(&k * &alpha)).max(0.0).sqrt();
            outputs.push(OutputModel {
                kernel: kernel.clone(),
                chol,
                alpha,
                jitter: used,
                mean_norm,
            });
        }
        Ok(GpPosterior {
            inputs: data.states.clone(),
            targets: data.targets.clone(),
            noise_std: data.noise_std,
            outputs,
            domain: None,
            extrapolations: AtomicU64::new(0),
        })
    }

    /// Queries outside `domain` are counted as extrapolations.
    pub fn with_domain(mut self, domain: StateBox) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn sample_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn kernels(&self) -> Vec<KernelSpec> {
        self.outputs.iter().map(|o| o.kernel.clone()).collect()
    }

    pub fn kernel(&self, j: usize) -> &KernelSpec {
        &self.outputs[j].kernel
    }

    pub fn alpha(&self) -> Vec<Vec<f64>> {
        self.outputs.iter().map(|o| o.alpha.as_slice().to_vec()).collect()
    }

    pub fn jitter(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.jitter).collect()
    }

    pub fn training_set(&self, seed: u64) -> TrainingSet {
        TrainingSet {
            states: self.inputs.clone(),
            targets: self.targets.clone(),
            noise_std: self.noise_std,
            seed,
        }
    }

    /// RKHS norm of each posterior mean component.
    pub fn mean_norms(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.mean_norm).collect()
    }

    /// Number of queries made outside the declared domain so far.
    pub fn extrapolated_queries(&self) -> u64 {
        self.extrapolations.load(Ordering::Relaxed)
    }

    fn note_query(&self, x: &[f64]) {
        if let Some(d) = &self.domain {
            if !d.contains(x) {
                self.extrapolations.fetch_add(1, Ordering::Relaxed);
                log::debug!("GP query {x:?} outside the training domain");
            }
        }
    }

    fn kbar(&self, j: usize, x: &[f64]) -> DVector<f64> {
        let k = &self.outputs[j].kernel;
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| k.eval(xi, x)))
    }

    /// Posterior variance of `f_j(x)` and of each `∂_l f_j(x)`, without
    /// clamping.
    pub(crate) fn value_and_gradient_variance(&self, j: usize, x: &[f64]) -> (f64, Vec<f64>) {
        let o = &self.outputs[j];
        let kern = &o.kernel;
        let n = kern.dim();
        let kbar = self.kbar(j, x);
        let prior_grad: Vec<f64> = (0..n).map(|l| kern.derivative_prior_std(l).powi(2)).collect();
        if self.inputs.is_empty() {
            return (kern.prior_variance(), prior_grad);
        }
        let v = o
            .chol
            .solve_lower_triangular(&kbar)
            .expect("triangular factor has positive diagonal");
        let value = kern.prior_variance() - v.norm_squared();
        let grads = (0..n)
            .map(|l| {
                let inv_l2 = 1.0 / (kern.length_scales[l] * kern.length_scales[l]);
                let c = DVector::from_iterator(
                    self.inputs.len(),
                    self.inputs
                        .iter()
                        .zip(kbar.iter())
                        .map(|(xi, k)| -(x[l] - xi[l]) * inv_l2 * k),
                );
                let w = o
                    .chol
                    .solve_lower_triangular(&c)
                    .expect("triangular factor has positive diagonal");
                prior_grad[l] - w.norm_squared()
            })
            .collect();
        (value, grads)
    }

    fn mean_j(&self, j: usize, x: &[f64]) -> f64 {
        let o = &self.outputs[j];
        self.inputs
            .iter()
            .zip(o.alpha.iter())
            .map(|(xi, a)| a * o.kernel.eval(xi, x))
            .sum()
    }

    fn variance_j(&self, j: usize, x: &[f64]) -> Result<f64> {
        let o = &self.outputs[j];
        let prior = o.kernel.eval(x, x);
        if self.inputs.is_empty() {
            return Ok(prior);
        }
        let v = o
            .chol
            .solve_lower_triangular(&self.kbar(j, x))
            .expect("triangular factor has positive diagonal");
        let var = prior - v.norm_squared();
        if var >= 0.0 {
            Ok(var)
        } else if var >= -VARIANCE_ROUNDOFF {
            Ok(0.0)
        } else {
            Err(Error::NegativeVariance { output: j, value: var })
        }
    }

    /// `μ(x) = [k̄_jᵀ α_j]_j`.
    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        self.note_query(x);
        (0..self.dim()).map(|j| self.mean_j(j, x)).collect()
    }

    /// `ρ²(x) = [k_j(x,x) - k̄_jᵀ (K_j + ρ_f² I)⁻¹ k̄_j]_j`.
    pub fn variance(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.note_query(x);
        (0..self.dim()).map(|j| self.variance_j(j, x)).collect()
    }

    pub fn std_dev(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.variance(x)?.into_iter().map(f64::sqrt).collect())
    }

    /// Lipschitz constants of `μ_j` per axis, `‖μ_j‖_H · sqrt(σ_j²) / l_jl`.
    pub fn mean_lipschitz(&self) -> Vec<Vec<f64>> {
        self.outputs
            .iter()
            .map(|o| {
                (0..o.kernel.dim())
                    .map(|l| o.mean_norm * o.kernel.derivative_prior_std(l))
                    .collect()
            })
            .collect()
    }
}

pub fn posterior_mean(gp: &GpPosterior, x: &[f64]) -> Vec<f64> {
    gp.mean(x)
}

pub fn posterior_variance(gp: &GpPosterior, x: &[f64]) -> Result<Vec<f64>> {
    gp.variance(x)
}

impl VectorField for GpPosterior {
    fn dim(&self) -> usize {
        self.outputs.len()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.mean(x)
    }

    fn enclose(&self, cell: &StateBox) -> Vec<Interval> {
        let c = cell.center();
        let half: Vec<f64> = cell.widths().iter().map(|w| 0.5 * w).collect();
        let lips = self.mean_lipschitz();
        (0..self.dim())
            .map(|j| {
                let o = &self.outputs[j];
                let mid = self.mean_j(j, &c);
                let spread: f64 = lips[j].iter().zip(&half).map(|(l, r)| l * r).sum();
                let centred = Interval::symmetric(spread) + mid;
                let natural: Interval = self
                    .inputs
                    .iter()
                    .zip(o.alpha.iter())
                    .map(|(xi, a)| o.kernel.enclose(cell, xi).scale(*a))
                    .sum();
                let centred = centred.inflate(1e-12, 1e-14);
                let natural = natural.inflate(1e-12, 1e-14);
                centred.intersect(&natural).unwrap_or(centred)
            })
            .collect()
    }

    fn jacobian_enclosure(&self, cell: &StateBox) -> Vec<Vec<Interval>> {
        let lips = self.mean_lipschitz();
        (0..self.dim())
            .map(|j| {
                let o = &self.outputs[j];
                let kvals: Vec<Interval> =
                    self.inputs.iter().map(|xi| o.kernel.enclose(cell, xi)).collect();
                (0..self.dim())
                    .map(|l| {
                        let inv_l2 = 1.0 / (o.kernel.length_scales[l] * o.kernel.length_scales[l]);
                        let natural: Interval = self
                            .inputs
                            .iter()
                            .zip(o.alpha.iter())
                            .zip(&kvals)
                            .map(|((xi, a), kv)| {
                                let d = Interval::new(cell.lower[l] - xi[l], cell.upper[l] - xi[l]);
                                (*kv * d).scale(-a * inv_l2)
                            })
                            .sum();
                        let global = Interval::symmetric(lips[j][l]).inflate(1e-12, 1e-14);
                        let natural = natural.inflate(1e-12, 1e-14);
                        global.intersect(&natural).unwrap_or(global)
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn data(states: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, noise_std: f64) -> TrainingSet {
        TrainingSet {
            states,
            targets,
            noise_std,
            seed: 0,
        }
    }

    fn se(sv: f64, l: f64, n: usize) -> KernelSpec {
        KernelSpec::squared_exponential(sv, vec![l; n]).unwrap()
    }

    #[test]
    fn noiseless_single_datum_interpolates() {
        let d = data(vec![vec![0.3]], vec![vec![1.7]], 0.0);
        let gp = GpPosterior::fit(&d, &[se(2.0, 1.0, 1)]).unwrap();
        assert_relative_eq!(gp.mean(&[0.3])[0], 1.7, epsilon = 1e-14);
        assert!(gp.variance(&[0.3]).unwrap()[0] < 1e-14);
    }

    #[test]
    fn single_noisy_datum_shrinks_halfway() {
        let d = data(vec![vec![0.0]], vec![vec![1.0]], 1.0);
        let gp = GpPosterior::fit(&d, &[se(1.0, 1.0, 1)]).unwrap();
        assert_relative_eq!(gp.mean(&[0.0])[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(gp.variance(&[0.0]).unwrap()[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn empty_conditioning_is_the_prior() {
        let d = data(vec![], vec![], 0.1);
        let gp = GpPosterior::fit(&d, &[se(3.0, 1.0, 2), se(0.5, 1.0, 2)]).unwrap();
        assert_eq!(gp.mean(&[0.4, -1.0]), vec![0.0, 0.0]);
        assert_eq!(gp.variance(&[0.4, -1.0]).unwrap(), vec![3.0, 0.5]);
    }

    #[test]
    fn duplicated_noiseless_points_need_jitter() {
        let d = data(vec![vec![0.0], vec![0.0]], vec![vec![1.0], vec![1.0]], 0.0);
        let gp = GpPosterior::fit(&d, &[se(1.0, 1.0, 1)]).unwrap();
        assert!(gp.jitter()[0] > 0.0);
        assert!(gp.jitter()[0] <= 1e-6);
    }

    #[test]
    fn ill_conditioned_system_is_reported() {
        let states: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 1e-3]).collect();
        let targets = states.iter().map(|x| vec![x[0]]).collect();
        let d = data(states, targets, 1e-7);
        let err = GpPosterior::fit(&d, &[se(1.0, 10.0, 1)]).unwrap_err();
        assert!(matches!(
            err,
            Error::IllConditioned { .. } | Error::NotPositiveDefinite { .. }
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = data(vec![vec![0.0, 1.0]], vec![vec![1.0, 2.0]], 0.1);
        assert!(GpPosterior::fit(&d, &[se(1.0, 1.0, 2)]).is_err());
        assert!(GpPosterior::fit(&d, &[se(1.0, 1.0, 1), se(1.0, 1.0, 1)]).is_err());
    }

    #[test]
    fn extrapolation_is_counted() {
        let d = data(vec![vec![0.0]], vec![vec![1.0]], 0.1);
        let gp = GpPosterior::fit(&d, &[se(1.0, 1.0, 1)])
            .unwrap()
            .with_domain(StateBox::new(vec![-1.0], vec![1.0]).unwrap());
        gp.mean(&[0.5]);
        assert_eq!(gp.extrapolated_queries(), 0);
        gp.mean(&[2.0]);
        let _ = gp.variance(&[-3.0]);
        assert_eq!(gp.extrapolated_queries(), 2);
    }

    #[test]
    fn mean_enclosures_contain_samples() {
        let states: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64 * 0.37).sin() * 2.0, (i as f64 * 0.91).cos() * 3.0])
            .collect();
        let targets = states
            .iter()
            .map(|x| vec![x[0] * x[1], (x[0] - x[1]).sin()])
            .collect();
        let d = data(states, targets, 0.05);
        let gp = GpPosterior::fit(&d, &[se(2.0, 1.3, 2), se(1.0, 0.8, 2)]).unwrap();
        let cell = StateBox::new(vec![0.2, -0.5], vec![0.6, 0.3]).unwrap();
        let enc = gp.enclose(&cell);
        let jac = gp.jacobian_enclosure(&cell);
        let h = 1e-6;
        for x in cell.grid(6) {
            let m = gp.mean(&x);
            for j in 0..2 {
                assert!(enc[j].contains(m[j]), "value {j}");
                for l in 0..2 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[l] += h;
                    xm[l] -= h;
                    let g = (gp.mean(&xp)[j] - gp.mean(&xm)[j]) / (2.0 * h);
                    assert!(jac[j][l].inflate(0.0, 1e-6).contains(g), "jacobian {j},{l}");
                }
            }
        }
    }
}
