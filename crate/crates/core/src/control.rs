//! Minimum-input safe controller and closed-loop simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceBox;
use crate::dynamics::{ControlAffine, InputMap, ProblemSpec, VectorField};
use crate::error::{Error, Result};
use crate::ode::rk4_step;
use crate::synthesis::BarrierCandidate;

/// Which model errors the decrease condition must tolerate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum RobustnessMode {
    /// Every vertex of `D`.
    WorstCaseVertices,
    /// A single error value `d`.
    FixedD { d: Vec<f64> },
}

impl RobustnessMode {
    pub fn name(&self) -> &'static str {
        match self {
            RobustnessMode::WorstCaseVertices => "worst-case-vertices",
            RobustnessMode::FixedD { .. } => "fixed-d",
        }
    }
}

/// `u(x) = min{u ∈ U | ∂B/∂x(x)·(μ(x) + d + g(x)u) ≤ 0}`, with the minimum
/// taken in the declared order of `U`.
#[derive(Clone, Debug)]
pub struct SafeController<M, G> {
    pub barrier: BarrierCandidate,
    pub mean: M,
    pub input_map: G,
    pub inputs: Vec<Vec<f64>>,
    pub dbox: ConfidenceBox,
    pub mode: RobustnessMode,
    /// Relative slack on the decrease condition for floating-point roundoff.
    pub tolerance: f64,
}

impl<M: VectorField, G: InputMap> SafeController<M, G> {
    pub fn new(
        barrier: BarrierCandidate,
        mean: M,
        input_map: G,
        inputs: Vec<Vec<f64>>,
        dbox: ConfidenceBox,
        mode: RobustnessMode,
    ) -> Result<Self> {
        barrier.validate()?;
        let n = barrier.dim();
        if mean.dim() != n || input_map.state_dim() != n || dbox.dim() != n {
            return Err(Error::DimensionMismatch {
                what: "controller state dimension",
                expected: n,
                got: mean.dim(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::invalid("input set is empty"));
        }
        if let Some(u) = inputs.iter().find(|u| u.len() != input_map.input_dim()) {
            return Err(Error::DimensionMismatch {
                what: "input vector",
                expected: input_map.input_dim(),
                got: u.len(),
            });
        }
        if let RobustnessMode::FixedD { d } = &mode {
            if d.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "fixed model error",
                    expected: n,
                    got: d.len(),
                });
            }
        }
        Ok(SafeController {
            barrier,
            mean,
            input_map,
            inputs,
            dbox,
            mode,
            tolerance: 1e-12,
        })
    }

    fn errors(&self) -> Vec<Vec<f64>> {
        match &self.mode {
            RobustnessMode::WorstCaseVertices => self.dbox.vertices(),
            RobustnessMode::FixedD { d } => vec![d.clone()],
        }
    }

    /// Per input in declared order: the largest decrease-condition value over
    /// the model errors of the mode, and its roundoff scale.
    fn condition_values(&self, x: &[f64]) -> Vec<(f64, f64)> {
        let grad = self.barrier.gradient(x);
        let mu = self.mean.eval(x);
        let gm = self.input_map.eval(x);
        let errors = self.errors();
        self.inputs
            .iter()
            .map(|u| {
                let drive: Vec<f64> = (0..grad.len())
                    .map(|k| mu[k] + (0..u.len()).map(|q| gm[(k, q)] * u[q]).sum::<f64>())
                    .collect();
                let mut worst = f64::NEG_INFINITY;
                let mut scale: f64 = 0.0;
                for d in &errors {
                    let v: f64 = (0..grad.len()).map(|k| grad[k] * (drive[k] + d[k])).sum();
                    let s: f64 = (0..grad.len()).map(|k| (grad[k] * (drive[k] + d[k])).abs()).sum();
                    worst = worst.max(v);
                    scale = scale.max(s);
                }
                (worst, scale)
            })
            .collect()
    }

    /// Decrease-condition value per input, worst case over the mode's errors.
    pub fn input_values(&self, x: &[f64]) -> Vec<f64> {
        self.condition_values(x).into_iter().map(|(v, _)| v).collect()
    }

    /// Index into `U` of the selected input.
    pub fn select_index(&self, x: &[f64]) -> Result<usize> {
        let values = self.condition_values(x);
        values
            .iter()
            .position(|(v, s)| *v <= self.tolerance * s)
            .ok_or_else(|| Error::NoSafeInput {
                state: x.to_vec(),
                values: values.iter().map(|(v, _)| *v).collect(),
            })
    }

    pub fn select_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inputs[self.select_index(x)?].clone())
    }
}

/// The dynamics a closed loop is simulated against.
#[derive(Clone, Copy)]
pub enum Plant<'a> {
    True(&'a dyn ControlAffine),
    /// `ẋ = μ(x) + g(x)u` with the controller's own model.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Horizon,
    /// The state left `X` after the last recorded step.
    LeftStateBox,
}

/// A sampled closed-loop run: `inputs[k]` is held on `[times[k], times[k+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub barrier_values: Vec<f64>,
    /// Whether each state lies outside `X1`.
    pub safe: Vec<bool>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }
}

/// Sample-and-hold RK4 simulation of the closed loop over `[0, horizon]`.
pub fn simulate_closed_loop<M, G>(
    ctrl: &SafeController<M, G>,
    plant: Plant<'_>,
    spec: &ProblemSpec,
    x0: &[f64],
    horizon: f64,
    step: f64,
) -> Result<Trajectory>
where
    M: VectorField,
    G: InputMap,
{
    if !(step > 0.0) || !(horizon >= step) {
        return Err(Error::invalid(format!(
            "need 0 < step <= horizon, got step {step} and horizon {horizon}"
        )));
    }
    if x0.len() != spec.n || !spec.state_box.contains(x0) {
        return Err(Error::invalid(format!("initial state {x0:?} is not in the state box")));
    }
    if let Plant::True(sys) = plant {
        if sys.state_dim() != spec.n || sys.input_dim() != spec.m {
            return Err(Error::DimensionMismatch {
                what: "plant dimensions",
                expected: spec.n,
                got: sys.state_dim(),
            });
        }
    }
    let steps = (horizon / step).round() as usize;
    let velocity = |x: &[f64], u: &[f64]| -> Vec<f64> {
        match plant {
            Plant::True(sys) => sys.velocity(x, u),
            Plant::Mean => {
                let mut v = ctrl.mean.eval(x);
                let g = ctrl.input_map.eval(x);
                for (j, vj) in v.iter_mut().enumerate() {
                    *vj += (0..u.len()).map(|q| g[(j, q)] * u[q]).sum::<f64>();
                }
                v
            }
        }
    };
    let record = |traj: &mut Trajectory, t: f64, x: Vec<f64>| {
        traj.times.push(t);
        traj.barrier_values.push(ctrl.barrier.value(&x));
        traj.safe.push(!spec.in_unsafe(&x));
        traj.states.push(x);
    };
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps),
        barrier_values: Vec::with_capacity(steps + 1),
        safe: Vec::with_capacity(steps + 1),
        termination: Termination::Horizon,
    };
    let mut x = x0.to_vec();
    record(&mut traj, 0.0, x.clone());
    for k in 0..steps {
        let u = ctrl.select_input(&x)?;
        x = rk4_step(|y| velocity(y, &u), &x, step);
        traj.inputs.push(u);
        record(&mut traj, (k + 1) as f64 * step, x.clone());
        if !spec.state_box.contains(&x) {
            traj.termination = Termination::LeftStateBox;
            break;
        }
    }
    Ok(traj)
}

/// Independent closed-loop runs from each initial state, in parallel.
pub fn simulate_batch<M, G>(
    ctrl: &SafeController<M, G>,
    plant: Plant<'_>,
    spec: &ProblemSpec,
    initial_states: &[Vec<f64>],
    horizon: f64,
    step: f64,
) -> Vec<Result<Trajectory>>
where
    M: VectorField,
    G: InputMap,
{
    initial_states
        .par_iter()
        .map(|x0| simulate_closed_loop(ctrl, plant, spec, x0, horizon, step))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub steps: usize,
    pub unsafe_steps: usize,
    pub first_violation_step: Option<usize>,
    pub first_violation_time: Option<f64>,
    pub left_state_box: bool,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.unsafe_steps == 0
    }
}

/// Checks every recorded state against `X1`.
pub fn check_trajectory_safety(traj: &Trajectory, spec: &ProblemSpec) -> SafetyReport {
    let bad: Vec<usize> = traj
        .states
        .iter()
        .enumerate()
        .filter(|(_, x)| spec.in_unsafe(x))
        .map(|(k, _)| k)
        .collect();
    SafetyReport {
        steps: traj.states.len(),
        unsafe_steps: bad.len(),
        first_violation_step: bad.first().copied(),
        first_violation_time: bad.first().map(|&k| traj.times[k]),
        left_state_box: traj.termination == Termination::LeftStateBox,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Largest `B(x_{k+1}) - B(x_k)`; zero for a single-state trajectory.
    pub max_increase: f64,
    pub violations: usize,
    pub tolerance: f64,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `B(x_{k+1}) ≤ B(x_k) + tolerance` along the trajectory, with `B`
/// re-evaluated from the recorded states.
pub fn barrier_monotonicity_check(
    traj: &Trajectory,
    barrier: &BarrierCandidate,
    tolerance: f64,
) -> MonotonicityReport {
    let values: Vec<f64> = traj.states.iter().map(|x| barrier.value(x)).collect();
    let increases: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    MonotonicityReport {
        max_increase: increases.iter().copied().fold(0.0, f64::max),
        violations: increases.iter().filter(|d| **d > tolerance).count(),
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        jet_engine_input_map, jet_engine_problem, jet_engine_system, ConstantInputMap, JetEngine,
        StateBox, ZeroField,
    };
    use crate::synthesis::BarrierTemplate;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn barrier_1d(coefficients: Vec<f64>) -> BarrierCandidate {
        BarrierTemplate::polynomial(1, 2, 1e6)
            .unwrap()
            .candidate(coefficients, 1.0)
            .unwrap()
    }

    fn toy_spec(inputs: Vec<f64>) -> ProblemSpec {
        let b = |lo: f64, hi: f64| StateBox::new(vec![lo], vec![hi]).unwrap();
        ProblemSpec {
            n: 1,
            m: 1,
            state_box: b(-3.0, 3.0),
            initial_boxes: vec![b(-0.2, 0.2)],
            unsafe_boxes: vec![b(2.5, 3.0)],
            inputs: inputs.into_iter().map(|u| vec![u]).collect(),
        }
    }

    fn toy_controller(b: BarrierCandidate, inputs: &[f64]) -> SafeController<ZeroField, ConstantInputMap> {
        SafeController::new(
            b,
            ZeroField(1),
            ConstantInputMap(DMatrix::from_element(1, 1, 1.0)),
            inputs.iter().map(|u| vec![*u]).collect(),
            ConfidenceBox::with_half_widths(vec![0.0]).unwrap(),
            RobustnessMode::WorstCaseVertices,
        )
        .unwrap()
    }

    #[test]
    fn flat_barrier_admits_the_first_input() {
        let c = toy_controller(barrier_1d(vec![-1.0, 0.0, 0.0]), &[-1.0, 0.0, 1.0]);
        assert_eq!(c.select_input(&[0.7]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn quadratic_barrier_picks_the_inward_input() {
        // B = x², ∂B/∂x · u = 2x u ≤ 0 at x = 2 only for u = -1.
        let c = toy_controller(barrier_1d(vec![0.0, 0.0, 1.0]), &[1.0, -1.0]);
        assert_eq!(c.select_input(&[2.0]).unwrap(), vec![-1.0]);
        assert_eq!(c.select_index(&[-2.0]).unwrap(), 0);
    }

    #[test]
    fn no_admissible_input_is_an_error() {
        let c = toy_controller(barrier_1d(vec![0.0, 0.0, 1.0]), &[1.0]);
        match c.select_input(&[2.0]) {
            Err(Error::NoSafeInput { state, values }) => {
                assert_eq!(state, vec![2.0]);
                assert_eq!(values, vec![4.0]);
            }
            other => panic!("expected no-safe-input, got {other:?}"),
        }
    }

    #[test]
    fn equilibrium_gives_a_constant_trajectory() {
        let c = toy_controller(barrier_1d(vec![0.0, 0.0, 1.0]), &[0.0, 1.0]);
        let spec = toy_spec(vec![0.0, 1.0]);
        let traj = simulate_closed_loop(&c, Plant::Mean, &spec, &[0.0], 1.0, 0.1).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.inputs.len(), 10);
        assert!(traj.states.iter().all(|x| x[0] == 0.0));
        let mono = barrier_monotonicity_check(&traj, &c.barrier, 0.0);
        assert_eq!(mono.max_increase, 0.0);
        assert!(check_trajectory_safety(&traj, &spec).is_safe());
    }

    #[test]
    fn leaving_the_state_box_ends_the_run() {
        // B = -x admits only u ≥ 0; the first admissible input is 1.
        let c = toy_controller(barrier_1d(vec![0.0, -1.0, 0.0]), &[-1.0, 1.0]);
        let spec = toy_spec(vec![-1.0, 1.0]);
        let traj = simulate_closed_loop(&c, Plant::Mean, &spec, &[0.0], 10.0, 0.01).unwrap();
        assert_eq!(traj.termination, Termination::LeftStateBox);
        assert!(traj.times.last().unwrap() < &10.0);
        let report = check_trajectory_safety(&traj, &spec);
        assert!(!report.is_safe());
        let k = report.first_violation_step.unwrap();
        assert!(traj.states[k][0] >= 2.5 && traj.states[k - 1][0] < 2.5);
    }

    #[test]
    fn teleported_state_is_reported_at_its_step() {
        let spec = jet_engine_problem();
        let mut traj = Trajectory {
            times: (0..6).map(|k| k as f64 * 0.1).collect(),
            states: vec![vec![0.5, 0.0]; 6],
            inputs: vec![vec![0.0]; 5],
            barrier_values: vec![0.0; 6],
            safe: vec![true; 6],
            termination: Termination::Horizon,
        };
        assert!(check_trajectory_safety(&traj, &spec).is_safe());
        traj.states[3] = vec![0.0, 3.0];
        let report = check_trajectory_safety(&traj, &spec);
        assert_eq!(report.first_violation_step, Some(3));
        assert_eq!(report.unsafe_steps, 1);
    }

    #[test]
    fn bad_step_arguments_are_rejected() {
        let c = toy_controller(barrier_1d(vec![0.0, 0.0, 1.0]), &[0.0]);
        let spec = toy_spec(vec![0.0]);
        assert!(simulate_closed_loop(&c, Plant::Mean, &spec, &[0.0], 1.0, 0.0).is_err());
        assert!(simulate_closed_loop(&c, Plant::Mean, &spec, &[0.0], 0.01, 0.1).is_err());
        assert!(simulate_closed_loop(&c, Plant::Mean, &spec, &[5.0], 1.0, 0.1).is_err());
    }

    fn jet_controller(mode: RobustnessMode) -> SafeController<JetEngine, ConstantInputMap> {
        let t = BarrierTemplate::polynomial(2, 2, 1e6).unwrap();
        let b = t
            .candidate(vec![-1.2, 0.24, -0.1, 0.05, -0.09, 0.63], 1.0)
            .unwrap();
        SafeController::new(
            b,
            JetEngine,
            jet_engine_input_map(),
            jet_engine_problem().inputs,
            ConfidenceBox::with_half_widths(vec![0.05, 0.05]).unwrap(),
            mode,
        )
        .unwrap()
    }

    #[test]
    fn true_plant_matches_mean_plant_when_the_model_is_exact() {
        let c = jet_controller(RobustnessMode::WorstCaseVertices);
        let spec = jet_engine_problem();
        let sys = jet_engine_system();
        let a = simulate_closed_loop(&c, Plant::True(&sys), &spec, &[0.5, 0.2], 1.0, 1e-2).unwrap();
        let b = simulate_closed_loop(&c, Plant::Mean, &spec, &[0.5, 0.2], 1.0, 1e-2).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn selected_input_satisfies_every_vertex(x1 in -1.0f64..3.0, x2 in -4.0f64..4.0) {
            let c = jet_controller(RobustnessMode::WorstCaseVertices);
            let x = [x1, x2];
            if let Ok(k) = c.select_index(&x) {
                let grad = c.barrier.gradient(&x);
                let f = JetEngine.eval(&x);
                let u = c.inputs[k][0];
                for d in c.dbox.vertices() {
                    let v = grad[0] * (f[0] + d[0]) + grad[1] * (f[1] + d[1] - u);
                    prop_assert!(v <= 1e-9);
                }
                for j in 0..k {
                    prop_assert!(c.input_values(&x)[j] > 0.0);
                }
            }
        }

        #[test]
        fn fixed_d_is_no_stricter_than_worst_case(x1 in -1.0f64..3.0, x2 in -4.0f64..4.0) {
            let worst = jet_controller(RobustnessMode::WorstCaseVertices);
            let fixed = jet_controller(RobustnessMode::FixedD { d: vec![0.02, -0.03] });
            let x = [x1, x2];
            if let Ok(k) = worst.select_index(&x) {
                prop_assert!(fixed.select_index(&x).unwrap() <= k);
            }
        }
    }
}
