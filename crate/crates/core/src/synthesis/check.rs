use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlAffine, ProblemSpec};
use crate::synthesis::template::BarrierCandidate;

/// Pointwise evaluation of the barrier conditions against known dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub grid_per_dim: usize,
    pub init_points: usize,
    /// Points of `X0` with `B > 0`.
    pub init_violations: usize,
    pub unsafe_points: usize,
    /// Points of `X1` with `B ≤ 0`.
    pub unsafe_violations: usize,
    pub flow_points: usize,
    /// Points of `X` where `min_u ∂B/∂x·(f + g u) > 0`.
    pub flow_violations: usize,
    pub max_init_value: f64,
    pub min_unsafe_value: f64,
    pub max_flow_value: f64,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.init_violations == 0 && self.unsafe_violations == 0 && self.flow_violations == 0
    }
}

/// `min_u ∂B/∂x(x)·(f(x) + g(x)u)` for the true dynamics.
pub fn known_flow_value<S: ControlAffine + ?Sized>(
    candidate: &BarrierCandidate,
    sys: &S,
    inputs: &[Vec<f64>],
    x: &[f64],
) -> f64 {
    let grad = candidate.gradient(x);
    inputs
        .iter()
        .map(|u| {
            let v = sys.velocity(x, u);
            grad.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Evaluates the three conditions with the true drift on grids with
/// `grid_per_dim` points per axis over every initial box, every unsafe box
/// and the state box.
pub fn check_conditions_known_dynamics<S: ControlAffine + ?Sized>(
    candidate: &BarrierCandidate,
    sys: &S,
    spec: &ProblemSpec,
    grid_per_dim: usize,
) -> ConditionReport {
    let mut r = ConditionReport {
        grid_per_dim,
        init_points: 0,
        init_violations: 0,
        unsafe_points: 0,
        unsafe_violations: 0,
        flow_points: 0,
        flow_violations: 0,
        max_init_value: f64::NEG_INFINITY,
        min_unsafe_value: f64::INFINITY,
        max_flow_value: f64::NEG_INFINITY,
    };
    for b in &spec.initial_boxes {
        for x in b.grid(grid_per_dim) {
            let v = candidate.value(&x);
            r.init_points += 1;
            r.init_violations += usize::from(v > 0.0);
            r.max_init_value = r.max_init_value.max(v);
        }
    }
    for b in &spec.unsafe_boxes {
        for x in b.grid(grid_per_dim) {
            let v = candidate.value(&x);
            r.unsafe_points += 1;
            r.unsafe_violations += usize::from(v <= 0.0);
            r.min_unsafe_value = r.min_unsafe_value.min(v);
        }
    }
    for x in spec.state_box.grid(grid_per_dim) {
        let v = known_flow_value(candidate, sys, &spec.inputs, &x);
        r.flow_points += 1;
        r.flow_violations += usize::from(v > 0.0);
        r.max_flow_value = r.max_flow_value.max(v);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{jet_engine_problem, jet_engine_system};
    use crate::synthesis::template::BarrierTemplate;

    #[test]
    fn zero_barrier_fails_only_the_unsafe_condition() {
        let t = BarrierTemplate::polynomial(2, 2, 1e6).unwrap();
        let c = t.candidate(vec![0.0; 6], 1.0).unwrap();
        let r = check_conditions_known_dynamics(&c, &jet_engine_system(), &jet_engine_problem(), 11);
        assert_eq!(r.init_violations, 0);
        assert_eq!(r.flow_violations, 0);
        assert_eq!(r.unsafe_violations, r.unsafe_points);
    }
}
