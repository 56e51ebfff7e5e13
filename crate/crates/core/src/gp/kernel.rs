use serde::{Deserialize, Serialize};

use crate::dynamics::StateBox;
use crate::error::{Error, Result};
use crate::interval::Interval;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    SquaredExponential,
}

/// Stationary covariance function with one length scale per input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
}

impl KernelSpec {
    pub fn squared_exponential(signal_variance: f64, length_scales: Vec<f64>) -> Result<Self> {
        let k = KernelSpec {
            kind: KernelKind::SquaredExponential,
            signal_variance,
            length_scales,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if self.length_scales.is_empty() {
            return Err(Error::invalid("kernel needs at least one length scale"));
        }
        if let Some(l) = self.length_scales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!("length scale must be positive, got {l}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::SquaredExponential => {
                let r2: f64 = x
                    .iter()
                    .zip(y)
                    .zip(&self.length_scales)
                    .map(|((a, b), l)| {
                        let d = (a - b) / l;
                        d * d
                    })
                    .sum();
                self.signal_variance * (-0.5 * r2).exp()
            }
        }
    }

    /// `k(x, x)`.
    pub fn prior_variance(&self) -> f64 {
        self.signal_variance
    }

    /// Prior standard deviation of `∂f/∂x_l`, i.e. `sqrt(∂_l ∂'_l k(x, x'))`
    /// at `x = x'`.
    pub fn derivative_prior_std(&self, l: usize) -> f64 {
        self.signal_variance.sqrt() / self.length_scales[l]
    }

    /// Enclosure of `x ↦ k(x, anchor)` over `cell`.
    pub fn enclose(&self, cell: &StateBox, anchor: &[f64]) -> Interval {
        match self.kind {
            KernelKind::SquaredExponential => {
                let r2: Interval = (0..self.dim())
                    .map(|l| {
                        let d = Interval::new(cell.lower[l] - anchor[l], cell.upper[l] - anchor[l]);
                        d.sqr().scale(1.0 / (self.length_scales[l] * self.length_scales[l]))
                    })
                    .sum();
                (r2 * -0.5).exp().scale(self.signal_variance)
            }
        }
    }
}

/// `k(x, x')` for the given kernel.
pub fn kernel_eval(k: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    k.eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_similarity_is_signal_variance() {
        let k = KernelSpec::squared_exponential(2.5, vec![0.3, 4.0]).unwrap();
        assert_eq!(kernel_eval(&k, &[1.0, -2.0], &[1.0, -2.0]), 2.5);
    }

    #[test]
    fn unit_distance_value() {
        let k = KernelSpec::squared_exponential(1.0, vec![1.0, 1.0]).unwrap();
        let v = kernel_eval(&k, &[0.0, 0.0], &[1.0, 0.0]);
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_bounded_on_random_pairs() {
        let k = KernelSpec::squared_exponential(3.0, vec![0.7, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
            assert!(k.eval(&x, &x) >= k.eval(&x, &y));
        }
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(KernelSpec::squared_exponential(0.0, vec![1.0]).is_err());
        assert!(KernelSpec::squared_exponential(1.0, vec![0.0]).is_err());
        assert!(KernelSpec::squared_exponential(1.0, vec![]).is_err());
    }

    #[test]
    fn enclosure_contains_pointwise_values() {
        let k = KernelSpec::squared_exponential(4.0, vec![0.5, 1.5]).unwrap();
        let cell = StateBox::new(vec![-0.3, 0.1], vec![0.2, 0.9]).unwrap();
        let anchor = [0.0, 1.0];
        let enc = k.enclose(&cell, &anchor).inflate(1e-12, 0.0);
        for x in cell.grid(9) {
            assert!(enc.contains(k.eval(&x, &anchor)));
        }
    }
}
