//! Counterexample search over the continuum by adaptive cell refinement.
//!
//! Each region starts as a `resolution^n` partition. A cell is discharged
//! when a rigorous enclosure proves the condition on it, reported when the
//! condition fails at its center, and bisected otherwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceBox;
use crate::dynamics::{InputMap, ProblemSpec, StateBox, VectorField};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::synthesis::encode::Condition;
use crate::synthesis::template::{BarrierCandidate, Certificate, Polynomial};

pub const VERIFIER_MODE: &str = "cell-branch-and-bound";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    pub resolution: usize,
    pub max_cells: u64,
    /// Cells narrower than this fraction of their region on every axis are
    /// not split further.
    pub min_width_fraction: f64,
    /// Counterexamples returned per failed verification.
    pub counterexamples: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            resolution: 32,
            max_cells: 4_000_000,
            min_width_fraction: 1e-7,
            counterexamples: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub state: Vec<f64>,
    pub condition: Condition,
    /// Amount by which the condition fails at `state`; positive.
    pub violation_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum Verification {
    Certified { certificate: Certificate },
    Counterexamples { counterexamples: Vec<Counterexample> },
    Inconclusive { cells_checked: u64, reason: String },
}

/// Polynomial pieces of `B` needed for the flow enclosure.
struct BarrierParts {
    value: Polynomial,
    grad: Vec<Polynomial>,
    hess: Vec<Vec<Polynomial>>,
}

impl BarrierParts {
    fn new(c: &BarrierCandidate) -> Self {
        let value = c.polynomial();
        let n = c.dim();
        let grad: Vec<Polynomial> = (0..n).map(|k| value.derivative(k)).collect();
        let hess = grad
            .iter()
            .map(|gk| (0..n).map(|l| gk.derivative(l)).collect())
            .collect();
        BarrierParts { value, grad, hess }
    }

    /// Upper and lower bounds of `B` on `cell`, and the mean-value margin.
    fn value_bounds(&self, cell: &StateBox) -> (f64, f64, f64) {
        let c = cell.center();
        let bc = self.value.eval(&c);
        let spread: f64 = self
            .grad
            .iter()
            .zip(cell.widths())
            .map(|(g, w)| g.enclose(cell).mag() * 0.5 * w)
            .sum();
        let natural = self.value.enclose(cell);
        let lo = natural.lo.max(bc - spread);
        let hi = natural.hi.min(bc + spread);
        let pad = 1e-12 * (1.0 + bc.abs() + spread);
        (lo - pad, hi + pad, spread)
    }
}

/// `min_u max_d ∂B/∂x(x)·(μ(x) + d + g(x)u)`.
pub fn flow_value<M, G>(
    c: &BarrierCandidate,
    mean: &M,
    g: &G,
    inputs: &[Vec<f64>],
    vertices: &[Vec<f64>],
    x: &[f64],
) -> f64
where
    M: VectorField + ?Sized,
    G: InputMap + ?Sized,
{
    let grad = c.gradient(x);
    let mu = mean.eval(x);
    let gm = g.eval(x);
    inputs
        .iter()
        .map(|u| {
            let base: f64 = (0..grad.len())
                .map(|k| grad[k] * (mu[k] + (0..u.len()).map(|q| gm[(k, q)] * u[q]).sum::<f64>()))
                .sum();
            vertices
                .iter()
                .map(|d| base + grad.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

enum CellResult {
    Proved(f64),
    Violated(Counterexample),
    Undecided,
}

struct Context<'a, M: ?Sized, G: ?Sized> {
    candidate: &'a BarrierCandidate,
    parts: BarrierParts,
    mean: &'a M,
    g: &'a G,
    inputs: &'a [Vec<f64>],
    vertices: Vec<Vec<f64>>,
    margin: f64,
}

impl<M: VectorField + ?Sized, G: InputMap + ?Sized> Context<'_, M, G> {
    fn check(&self, cond: Condition, cell: &StateBox) -> CellResult {
        match cond {
            Condition::Init => {
                let (_, hi, spread) = self.parts.value_bounds(cell);
                if hi <= 0.0 {
                    return CellResult::Proved(spread);
                }
                let c = cell.center();
                let v = self.candidate.value(&c);
                if v > 0.0 {
                    return CellResult::Violated(Counterexample {
                        state: c,
                        condition: cond,
                        violation_margin: v,
                    });
                }
                CellResult::Undecided
            }
            Condition::Unsafe => {
                let half = 0.5 * self.margin;
                let (lo, _, spread) = self.parts.value_bounds(cell);
                if lo > half {
                    return CellResult::Proved(spread);
                }
                let c = cell.center();
                let v = self.candidate.value(&c);
                if v <= half {
                    return CellResult::Violated(Counterexample {
                        state: c,
                        condition: cond,
                        violation_margin: half - v,
                    });
                }
                CellResult::Undecided
            }
            Condition::Flow => self.check_flow(cell),
        }
    }

    fn check_flow(&self, cell: &StateBox) -> CellResult {
        let n = cell.dim();
        let c = cell.center();
        let half: Vec<f64> = cell.widths().iter().map(|w| 0.5 * w).collect();
        let grad_c = self.candidate.gradient(&c);
        let mu_c = self.mean.eval(&c);
        let g_c = self.g.eval(&c);

        let grad_iv: Vec<Interval> = self.parts.grad.iter().map(|p| p.enclose(cell)).collect();
        let hess_iv: Vec<Vec<Interval>> = self
            .parts
            .hess
            .iter()
            .map(|row| row.iter().map(|p| p.enclose(cell)).collect())
            .collect();
        let mu_iv = self.mean.enclose(cell);
        let jac_iv = self.mean.jacobian_enclosure(cell);
        let g_iv = self.g.enclose(cell);
        let dg_iv = self.g.derivative_enclosure(cell);

        let mut best_spread = f64::INFINITY;
        for u in self.inputs {
            let gu_c: Vec<f64> = (0..n)
                .map(|k| (0..u.len()).map(|q| g_c[(k, q)] * u[q]).sum())
                .collect();
            let gu_iv: Vec<Interval> = (0..n)
                .map(|k| (0..u.len()).map(|q| g_iv[k][q].scale(u[q])).sum())
                .collect();
            // ∂_l F_k over the cell, independent of d.
            let dfk: Vec<Vec<Interval>> = (0..n)
                .map(|k| {
                    (0..n)
                        .map(|l| {
                            jac_iv[k][l]
                                + (0..u.len())
                                    .map(|q| dg_iv[l][k][q].scale(u[q]))
                                    .sum::<Interval>()
                        })
                        .collect()
                })
                .collect();
            let mut worst = f64::NEG_INFINITY;
            let mut spread_used = 0.0f64;
            for d in &self.vertices {
                let f_iv: Vec<Interval> = (0..n).map(|k| mu_iv[k] + gu_iv[k] + d[k]).collect();
                let h_c: f64 = (0..n).map(|k| grad_c[k] * (mu_c[k] + gu_c[k] + d[k])).sum();
                let spread: f64 = (0..n)
                    .map(|l| {
                        let dh: Interval = (0..n)
                            .map(|k| hess_iv[k][l] * f_iv[k] + grad_iv[k] * dfk[k][l])
                            .sum();
                        dh.mag() * half[l]
                    })
                    .sum();
                let natural: Interval = (0..n).map(|k| grad_iv[k] * f_iv[k]).sum();
                let upper = (h_c + spread).min(natural.hi);
                let pad = 1e-12 * (1.0 + h_c.abs() + spread);
                worst = worst.max(upper + pad);
                spread_used = spread_used.max(spread);
                if worst > 0.0 {
                    break;
                }
            }
            if worst <= 0.0 {
                best_spread = best_spread.min(spread_used);
                return CellResult::Proved(best_spread);
            }
        }
        let v = flow_value(self.candidate, self.mean, self.g, self.inputs, &self.vertices, &c);
        if v > 0.0 {
            return CellResult::Violated(Counterexample {
                state: c,
                condition: Condition::Flow,
                violation_margin: v,
            });
        }
        CellResult::Undecided
    }
}

/// Searches `X0` for `B > 0`, `X1` for `B ≤ η/2`, and `X` for states where
/// no input satisfies the decrease condition for every vertex of `D`.
pub fn verify_candidate<M, G>(
    candidate: &BarrierCandidate,
    mean: &M,
    g: &G,
    spec: &ProblemSpec,
    dbox: &ConfidenceBox,
    config: &VerifierConfig,
) -> Result<Verification>
where
    M: VectorField + ?Sized,
    G: InputMap + ?Sized,
{
    candidate.validate()?;
    if candidate.dim() != spec.n || mean.dim() != spec.n || dbox.dim() != spec.n {
        return Err(Error::DimensionMismatch {
            what: "verifier state dimension",
            expected: spec.n,
            got: candidate.dim(),
        });
    }
    if config.resolution == 0 {
        return Err(Error::invalid("verifier resolution must be positive"));
    }
    let ctx = Context {
        candidate,
        parts: BarrierParts::new(candidate),
        mean,
        g,
        inputs: &spec.inputs,
        vertices: dbox.vertices(),
        margin: candidate.margin,
    };

    // (condition, minimum widths of its region, cell)
    let mut regions: Vec<(Condition, &StateBox)> = Vec::new();
    regions.extend(spec.initial_boxes.iter().map(|b| (Condition::Init, b)));
    regions.extend(spec.unsafe_boxes.iter().map(|b| (Condition::Unsafe, b)));
    regions.push((Condition::Flow, &spec.state_box));
    let mut work: Vec<(Condition, Vec<f64>, StateBox)> = Vec::new();
    for (cond, b) in regions {
        let min_w: Vec<f64> = b.widths().iter().map(|w| w * config.min_width_fraction).collect();
        for cell in b.cells(config.resolution) {
            work.push((cond, min_w.clone(), cell));
        }
    }

    let mut checked = 0u64;
    let mut margins = [0.0f64; 3];
    let mut smallest = f64::INFINITY;
    let mut stuck = 0u64;
    let mut found: Vec<Counterexample> = Vec::new();
    while !work.is_empty() {
        checked += work.len() as u64;
        if checked > config.max_cells {
            return Ok(Verification::Inconclusive {
                cells_checked: checked,
                reason: format!("cell budget {} exhausted", config.max_cells),
            });
        }
        let results: Vec<CellResult> = work
            .par_iter()
            .map(|(cond, _, cell)| ctx.check(*cond, cell))
            .collect();
        let mut next = Vec::new();
        for ((cond, min_w, cell), r) in work.into_iter().zip(results) {
            smallest = smallest.min(cell.widths().iter().copied().fold(f64::INFINITY, f64::min));
            match r {
                CellResult::Proved(m) => {
                    let idx = match cond {
                        Condition::Init => 0,
                        Condition::Unsafe => 1,
                        Condition::Flow => 2,
                    };
                    margins[idx] = margins[idx].max(m);
                }
                CellResult::Violated(cex) => found.push(cex),
                CellResult::Undecided => {
                    let widths = cell.widths();
                    let axis = (0..widths.len())
                        .filter(|&l| widths[l] > min_w[l])
                        .max_by(|&a, &b| (widths[a] / min_w[a]).total_cmp(&(widths[b] / min_w[b])));
                    match axis {
                        Some(l) => {
                            let (left, right) = cell.bisect(l);
                            next.push((cond, min_w.clone(), left));
                            next.push((cond, min_w, right));
                        }
                        None => stuck += 1,
                    }
                }
            }
        }
        if !found.is_empty() {
            found.sort_by(|a, b| {
                b.violation_margin
                    .total_cmp(&a.violation_margin)
                    .then_with(|| lex_cmp(&a.state, &b.state))
            });
            found.truncate(config.counterexamples.max(1));
            return Ok(Verification::Counterexamples {
                counterexamples: found,
            });
        }
        work = next;
    }
    if stuck > 0 {
        return Ok(Verification::Inconclusive {
            cells_checked: checked,
            reason: format!("{stuck} cells at minimum width remain undecided"),
        });
    }
    Ok(Verification::Certified {
        certificate: Certificate {
            resolution: config.resolution,
            cells_checked: checked,
            smallest_cell_width: smallest,
            lipschitz_margins: margins,
            verifier_mode: VERIFIER_MODE.to_string(),
        },
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ConstantInputMap, ZeroField};
    use crate::synthesis::template::BarrierTemplate;
    use nalgebra::DMatrix;

    fn toy() -> ProblemSpec {
        ProblemSpec {
            n: 1,
            m: 1,
            state_box: StateBox::new(vec![-1.0], vec![1.0]).unwrap(),
            initial_boxes: vec![StateBox::new(vec![-0.2], vec![0.2]).unwrap()],
            unsafe_boxes: vec![StateBox::new(vec![0.8], vec![1.0]).unwrap()],
            inputs: vec![vec![-1.0], vec![0.0], vec![1.0]],
        }
    }

    fn unit_map() -> ConstantInputMap {
        ConstantInputMap(DMatrix::from_element(1, 1, 1.0))
    }

    #[test]
    fn negative_constant_fails_unsafe_condition() {
        let t = BarrierTemplate::polynomial(1, 1, 1e6).unwrap();
        let c = t.candidate(vec![-1.0, 0.0], 1.0).unwrap();
        let d = ConfidenceBox::with_half_widths(vec![0.0]).unwrap();
        let v = verify_candidate(&c, &ZeroField(1), &unit_map(), &toy(), &d, &VerifierConfig::default())
            .unwrap();
        match v {
            Verification::Counterexamples { counterexamples } => {
                assert_eq!(counterexamples[0].condition, Condition::Unsafe);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_barrier_certifies_on_toy() {
        // B = 2x - 0.6: ≤ -0.2 on X0, ≥ 1 on X1, and u = -1 makes B' u ≤ 0.
        let t = BarrierTemplate::polynomial(1, 1, 1e6).unwrap();
        let c = t.candidate(vec![-0.6, 2.0], 1.0).unwrap();
        let d = ConfidenceBox::with_half_widths(vec![0.0]).unwrap();
        let v = verify_candidate(&c, &ZeroField(1), &unit_map(), &toy(), &d, &VerifierConfig::default())
            .unwrap();
        assert!(matches!(v, Verification::Certified { .. }), "{v:?}");
    }

    #[test]
    fn counterexamples_are_genuine() {
        let t = BarrierTemplate::polynomial(1, 2, 1e6).unwrap();
        let c = t.candidate(vec![-0.5, 1.0, 1.0], 1.0).unwrap();
        let d = ConfidenceBox::with_half_widths(vec![1.5]).unwrap();
        let cfg = VerifierConfig {
            counterexamples: 5,
            ..Default::default()
        };
        let spec = toy();
        let v = verify_candidate(&c, &ZeroField(1), &unit_map(), &spec, &d, &cfg).unwrap();
        let Verification::Counterexamples { counterexamples } = v else {
            panic!("expected counterexamples");
        };
        for cex in counterexamples {
            let x = &cex.state;
            let again = match cex.condition {
                Condition::Init => c.value(x),
                Condition::Unsafe => 0.5 - c.value(x),
                Condition::Flow => {
                    flow_value(&c, &ZeroField(1), &unit_map(), &spec.inputs, &d.vertices(), x)
                }
            };
            assert!(again >= cex.violation_margin - 1e-9);
        }
    }
}
