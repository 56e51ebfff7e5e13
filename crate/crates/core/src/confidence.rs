//! Uncertainty sets for the model error `f(x) - μ(x)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::clopper_pearson;
use crate::dynamics::{ProblemSpec, VectorField};
use crate::error::{Error, Result};
use crate::gp::{KernelSpec, StdBound};

/// Inputs of the analytic error multiplier `β_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundParams {
    pub epsilon: f64,
    /// Upper bounds on `‖f_j‖` in the RKHS of `k_j`.
    pub rkhs_norm_bounds: Vec<f64>,
    pub info_gains: Vec<f64>,
    pub sample_count: usize,
}

impl ErrorBoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.rkhs_norm_bounds.len() != self.info_gains.len() {
            return Err(Error::DimensionMismatch {
                what: "information gains",
                expected: self.rkhs_norm_bounds.len(),
                got: self.info_gains.len(),
            });
        }
        if self
            .rkhs_norm_bounds
            .iter()
            .chain(&self.info_gains)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::invalid("norm bounds and information gains must be non-negative"));
        }
        Ok(())
    }
}

/// `β_j = sqrt(2‖f_j‖² + 300 γ_j ln³((N+1)/ε))`.
pub fn beta_bound(params: &ErrorBoundParams, j: usize) -> Result<f64> {
    params.validate()?;
    if j >= params.rkhs_norm_bounds.len() {
        return Err(Error::invalid(format!("no output dimension {j}")));
    }
    let norm = params.rkhs_norm_bounds[j];
    let log_term = ((params.sample_count as f64 + 1.0) / params.epsilon).ln();
    Ok((2.0 * norm * norm + 300.0 * params.info_gains[j] * log_term.powi(3)).sqrt())
}

/// Greedy approximation of the maximal mutual information
/// `½ ln det(I + ρ_f⁻² K_A)` over subsets `A` of at most `budget` candidates.
///
/// Each step picks the candidate with the largest current posterior variance
/// (lowest index on ties) and conditions on a noisy observation there.
pub fn information_gain_greedy(
    kernel: &KernelSpec,
    candidates: &[Vec<f64>],
    budget: usize,
    noise_std: f64,
) -> Result<f64> {
    kernel.validate()?;
    if candidates.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    if !(noise_std > 0.0) {
        return Err(Error::invalid("information gain needs positive noise"));
    }
    let noise_var = noise_std * noise_std;
    let m = candidates.len();
    let mut var: Vec<f64> = candidates.iter().map(|x| kernel.eval(x, x)).collect();
    let mut factors: Vec<Vec<f64>> = Vec::new();
    let mut chosen = vec![false; m];
    let mut gain = 0.0;
    for _ in 0..budget.min(m) {
        let mut pick = usize::MAX;
        for i in (0..m).filter(|&i| !chosen[i]) {
            if pick == usize::MAX || var[i] > var[pick] {
                pick = i;
            }
        }
        chosen[pick] = true;
        let v = var[pick].max(0.0);
        gain += 0.5 * (v / noise_var).ln_1p();
        let scale = (v + noise_var).sqrt();
        let column: Vec<f64> = (0..m)
            .map(|i| {
                let prior = kernel.eval(&candidates[i], &candidates[pick]);
                let explained: f64 = factors.iter().map(|c| c[i] * c[pick]).sum();
                (prior - explained) / scale
            })
            .collect();
        for i in 0..m {
            var[i] -= column[i] * column[i];
        }
        factors.push(column);
    }
    Ok(gain)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Provenance {
    /// Half-widths `β_j ρ̄_j`; containment holds with probability at least
    /// `probability = (1 - ε)ⁿ` under the norm-bound assumptions.
    Analytic { epsilon: f64, probability: f64 },
    /// Half-widths chosen directly and not yet validated.
    Configured,
    MonteCarloValidated { estimate: ContainmentEstimate },
}

/// The box `D = Π_j [-w_j, w_j]` of admissible model errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBox {
    pub half_widths: Vec<f64>,
    pub provenance: Provenance,
}

impl ConfidenceBox {
    pub fn with_half_widths(half_widths: Vec<f64>) -> Result<Self> {
        if half_widths.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("half-widths must be non-negative"));
        }
        Ok(ConfidenceBox {
            half_widths,
            provenance: Provenance::Configured,
        })
    }

    pub fn dim(&self) -> usize {
        self.half_widths.len()
    }

    /// Distinct vertices of `D`; a zero half-width contributes one coordinate
    /// value, so a box with all widths positive has `2ⁿ` vertices.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for &w in &self.half_widths {
            let values: &[f64] = if w > 0.0 { &[-w, w] } else { &[0.0] };
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn contains(&self, d: &[f64]) -> bool {
        d.len() == self.dim() && d.iter().zip(&self.half_widths).all(|(v, w)| v.abs() <= *w)
    }
}

/// `D` with half-widths `β_j ρ̄_j`.
pub fn build_confidence_box(beta: &[f64], std_bound: &StdBound, epsilon: f64) -> Result<ConfidenceBox> {
    if beta.len() != std_bound.per_dim.len() {
        return Err(Error::DimensionMismatch {
            what: "beta per output dimension",
            expected: std_bound.per_dim.len(),
            got: beta.len(),
        });
    }
    if beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::invalid("beta must be non-negative"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(ConfidenceBox {
        half_widths: beta.iter().zip(&std_bound.per_dim).map(|(b, r)| b * r).collect(),
        provenance: Provenance::Analytic {
            epsilon,
            probability: (1.0 - epsilon).powi(beta.len() as i32),
        },
    })
}

/// How a Monte-Carlo trial is drawn.
pub const TRIAL_SEMANTICS: &str = "one uniform state sample per trial";

/// Clopper-Pearson summary of a containment experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentEstimate {
    pub trials: u64,
    pub successes: u64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub confidence: f64,
    pub seed: u64,
    pub trial_semantics: String,
}

impl ContainmentEstimate {
    pub fn from_counts(successes: u64, trials: u64, confidence: f64, seed: u64) -> Result<Self> {
        let (lower_bound, upper_bound) = clopper_pearson(successes, trials, confidence)?;
        Ok(ContainmentEstimate {
            trials,
            successes,
            lower_bound,
            upper_bound,
            confidence,
            seed,
            trial_semantics: TRIAL_SEMANTICS.to_string(),
        })
    }

    pub fn fraction(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Number of independent random streams trials are split over. Fixed so the
/// result does not depend on the thread count.
pub const MONTE_CARLO_SHARDS: u64 = 64;

/// Estimates `P(f(x) - μ(x) ∈ D)` for `x` uniform over the state box.
pub fn monte_carlo_containment<M, F>(
    mean: &M,
    truth: &F,
    spec: &ProblemSpec,
    dbox: &ConfidenceBox,
    trials: u64,
    confidence: f64,
    seed: u64,
) -> Result<ContainmentEstimate>
where
    M: VectorField + ?Sized,
    F: VectorField + ?Sized,
{
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let n = spec.n;
    if mean.dim() != n || truth.dim() != n || dbox.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "containment check dimension",
            expected: n,
            got: dbox.dim(),
        });
    }
    let per_shard = trials / MONTE_CARLO_SHARDS;
    let extra = trials % MONTE_CARLO_SHARDS;
    let successes: u64 = (0..MONTE_CARLO_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let count = per_shard + u64::from(shard < extra);
            let mut hits = 0u64;
            for _ in 0..count {
                let x = spec.state_box.sample_uniform(&mut rng);
                let mu = mean.eval(&x);
                let f = truth.eval(&x);
                let inside = (0..n).all(|j| (f[j] - mu[j]).abs() <= dbox.half_widths[j]);
                hits += u64::from(inside);
            }
            hits
        })
        .sum();
    ContainmentEstimate::from_counts(successes, trials, confidence, seed)
}
