use serde::{Deserialize, Serialize};

use crate::dynamics::StateBox;
use crate::error::{Error, Result};
use crate::interval::Interval;

/// Name of the monomial ordering written to barrier files.
pub const BASIS_ORDERING: &str = "graded-lexicographic";

/// Exponent vectors of all monomials of total degree `≤ degree` in `n`
/// variables: by total degree, then lexicographically descending so that
/// `x1` precedes `x2`.
pub fn monomial_exponents(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(rest: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(rest);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=rest).rev() {
            prefix.push(e);
            fill(rest - e, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        if n == 0 {
            break;
        }
        fill(total, n, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Sparse polynomial `Σ c_i x^{e_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * monomial(e, x))
            .sum()
    }

    pub fn derivative(&self, k: usize) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .filter(|(c, e)| e[k] > 0 && *c != 0.0)
                .map(|(c, e)| {
                    let mut d = e.clone();
                    d[k] -= 1;
                    (c * e[k] as f64, d)
                })
                .collect(),
        }
    }

    /// Natural interval extension over `cell`.
    pub fn enclose(&self, cell: &StateBox) -> Interval {
        let iv = cell.intervals();
        self.terms
            .iter()
            .map(|(c, e)| {
                e.iter()
                    .zip(&iv)
                    .fold(Interval::point(1.0), |acc, (p, x)| acc * x.powi(*p))
                    .scale(*c)
            })
            .sum()
    }
}

fn monomial(e: &[u32], x: &[f64]) -> f64 {
    e.iter().zip(x).map(|(p, v)| v.powi(*p as i32)).product()
}

/// Linear span of a monomial basis with a bound on coefficient magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierTemplate {
    pub n: usize,
    pub degree: u32,
    pub exponents: Vec<Vec<u32>>,
    pub a_max: f64,
}

impl BarrierTemplate {
    pub fn polynomial(n: usize, degree: u32, a_max: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("template needs at least one state"));
        }
        if !(a_max > 0.0) {
            return Err(Error::invalid("coefficient bound must be positive"));
        }
        Ok(BarrierTemplate {
            n,
            degree,
            exponents: monomial_exponents(n, degree),
            a_max,
        })
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Position of the monomial with exponent `e`.
    pub fn index_of(&self, e: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|x| x == e)
    }

    /// `b_i(x)`.
    pub fn basis_eval(&self, x: &[f64]) -> Vec<f64> {
        self.exponents.iter().map(|e| monomial(e, x)).collect()
    }

    /// `∂b_i/∂x_l(x)` indexed `[i][l]`.
    pub fn basis_gradient(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.exponents
            .iter()
            .map(|e| {
                (0..self.n)
                    .map(|l| {
                        if e[l] == 0 {
                            return 0.0;
                        }
                        let mut d = e.clone();
                        d[l] -= 1;
                        e[l] as f64 * monomial(&d, x)
                    })
                    .collect()
            })
            .collect()
    }

    /// Candidate with the given coefficients, checked against `a_max`.
    pub fn candidate(&self, coefficients: Vec<f64>, margin: f64) -> Result<BarrierCandidate> {
        if coefficients.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "barrier coefficients",
                expected: self.len(),
                got: coefficients.len(),
            });
        }
        if let Some(a) = coefficients.iter().find(|a| !(a.abs() <= self.a_max)) {
            return Err(Error::invalid(format!(
                "coefficient {a} exceeds the bound {}",
                self.a_max
            )));
        }
        Ok(BarrierCandidate {
            degree: self.degree,
            basis_ordering: BASIS_ORDERING.to_string(),
            exponents: self.exponents.clone(),
            coefficients,
            margin,
            a_max: self.a_max,
            certificate: None,
        })
    }
}

/// Record of a successful verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Initial cells per axis and region.
    pub resolution: usize,
    pub cells_checked: u64,
    pub smallest_cell_width: f64,
    /// Largest mean-value margin used per condition: init, unsafe, flow.
    pub lipschitz_margins: [f64; 3],
    pub verifier_mode: String,
}

/// `B(a, x) = Σ a_i b_i(x)` over a monomial basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierCandidate {
    pub degree: u32,
    pub basis_ordering: String,
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub margin: f64,
    pub a_max: f64,
    #[serde(default)]
    pub certificate: Option<Certificate>,
}

impl BarrierCandidate {
    pub fn dim(&self) -> usize {
        self.exponents.first().map_or(0, |e| e.len())
    }

    pub fn template(&self) -> BarrierTemplate {
        BarrierTemplate {
            n: self.dim(),
            degree: self.degree,
            exponents: self.exponents.clone(),
            a_max: self.a_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exponents.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                what: "barrier coefficients",
                expected: self.exponents.len(),
                got: self.coefficients.len(),
            });
        }
        let n = self.dim();
        if self.exponents.iter().any(|e| e.len() != n) {
            return Err(Error::invalid("exponent vectors differ in length"));
        }
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("barrier coefficients must be finite"));
        }
        Ok(())
    }

    pub fn polynomial(&self) -> Polynomial {
        Polynomial {
            terms: self
                .coefficients
                .iter()
                .copied()
                .zip(self.exponents.iter().cloned())
                .collect(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.exponents)
            .map(|(a, e)| a * monomial(e, x))
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut g = vec![0.0; n];
        for (a, e) in self.coefficients.iter().zip(&self.exponents) {
            for l in 0..n {
                if e[l] > 0 {
                    let mut d = e.clone();
                    d[l] -= 1;
                    g[l] += a * e[l] as f64 * monomial(&d, x);
                }
            }
        }
        g
    }

    pub fn scaled(&self, lambda: f64) -> BarrierCandidate {
        BarrierCandidate {
            coefficients: self.coefficients.iter().map(|a| a * lambda).collect(),
            margin: self.margin * lambda,
            certificate: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_basis_in_two_variables() {
        let t = BarrierTemplate::polynomial(2, 2, 1e6).unwrap();
        assert_eq!(t.len(), 6);
        let expected: Vec<Vec<u32>> =
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(t.exponents, expected);
    }

    #[test]
    fn basis_sizes_are_binomial() {
        assert_eq!(monomial_exponents(3, 3).len(), 20);
        assert_eq!(monomial_exponents(1, 4).len(), 5);
        assert_eq!(monomial_exponents(2, 0).len(), 1);
    }

    #[test]
    fn product_gradient() {
        let t = BarrierTemplate::polynomial(2, 2, 1e6).unwrap();
        let i = t.index_of(&[1, 1]).unwrap();
        assert_eq!(t.basis_gradient(&[2.0, 3.0])[i], vec![3.0, 2.0]);
    }

    #[test]
    fn candidate_respects_bound() {
        let t = BarrierTemplate::polynomial(1, 1, 10.0).unwrap();
        assert!(t.candidate(vec![1.0, 11.0], 1.0).is_err());
        assert!(t.candidate(vec![1.0], 1.0).is_err());
        assert!(t.candidate(vec![-10.0, 10.0], 1.0).is_ok());
    }

    #[test]
    fn polynomial_enclosure_contains_values() {
        let t = BarrierTemplate::polynomial(2, 3, 1e6).unwrap();
        let coeffs: Vec<f64> = (0..t.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = t.candidate(coeffs, 1.0).unwrap();
        let p = c.polynomial();
        let cell = StateBox::new(vec![-0.4, 1.0], vec![0.3, 1.6]).unwrap();
        let enc = p.enclose(&cell).inflate(1e-12, 1e-12);
        let d0 = p.derivative(0).enclose(&cell).inflate(1e-12, 1e-12);
        for x in cell.grid(9) {
            assert!(enc.contains(c.value(&x)));
            assert!(d0.contains(c.gradient(&x)[0]));
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            x0 in -3.0f64..3.0, x1 in -3.0f64..3.0,
        ) {
            let t = BarrierTemplate::polynomial(2, 3, 1e6).unwrap();
            let x = [x0, x1];
            let g = t.basis_gradient(&x);
            let h = 1e-5;
            for l in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[l] += h;
                xm[l] -= h;
                let bp = t.basis_eval(&xp);
                let bm = t.basis_eval(&xm);
                for i in 0..t.len() {
                    let fd = (bp[i] - bm[i]) / (2.0 * h);
                    prop_assert!((fd - g[i][l]).abs() <= 1e-6 * (1.0 + g[i][l].abs()));
                }
            }
        }
    }
}
