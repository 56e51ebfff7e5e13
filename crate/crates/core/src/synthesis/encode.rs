use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceBox;
use crate::dynamics::{InputMap, ProblemSpec, StateBox, VectorField};
use crate::error::{Error, Result};
use crate::synthesis::solver::extreme_inputs;
use crate::synthesis::template::BarrierTemplate;

/// Which barrier condition a sample or counterexample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Init,
    Unsafe,
    Flow,
}

/// Finite sample points by role.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub init: Vec<Vec<f64>>,
    pub unsafe_states: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
}

fn grid_over(boxes: &[StateBox], per_dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for b in boxes {
        for x in b.grid(per_dim) {
            if !out.contains(&x) {
                out.push(x);
            }
        }
    }
    out
}

impl SampleSet {
    /// `per_dim^n` evenly spaced points over every initial box, every unsafe
    /// box and the state box.
    pub fn grid(spec: &ProblemSpec, per_dim: usize) -> Self {
        SampleSet {
            init: grid_over(&spec.initial_boxes, per_dim),
            unsafe_states: grid_over(&spec.unsafe_boxes, per_dim),
            flow: grid_over(std::slice::from_ref(&spec.state_box), per_dim),
        }
    }

    pub fn len(&self) -> usize {
        self.init.len() + self.unsafe_states.len() + self.flow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn role(&self, c: Condition) -> &Vec<Vec<f64>> {
        match c {
            Condition::Init => &self.init,
            Condition::Unsafe => &self.unsafe_states,
            Condition::Flow => &self.flow,
        }
    }

    fn role_mut(&mut self, c: Condition) -> &mut Vec<Vec<f64>> {
        match c {
            Condition::Init => &mut self.init,
            Condition::Unsafe => &mut self.unsafe_states,
            Condition::Flow => &mut self.flow,
        }
    }

    pub fn contains(&self, c: Condition, x: &[f64]) -> bool {
        self.role(c).iter().any(|s| s == x)
    }

    /// Adds `x` to role `c`; returns `false` if it is already present.
    pub fn insert(&mut self, c: Condition, x: Vec<f64>) -> bool {
        if self.contains(c, &x) {
            return false;
        }
        self.role_mut(c).push(x);
        true
    }

    /// Checks that every point lies in its declared region.
    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if let Some(x) = self.init.iter().find(|x| !spec.in_initial(x)) {
            return Err(Error::invalid(format!("init sample {x:?} outside the initial set")));
        }
        if let Some(x) = self.unsafe_states.iter().find(|x| !spec.in_unsafe(x)) {
            return Err(Error::invalid(format!("unsafe sample {x:?} outside the unsafe set")));
        }
        if let Some(x) = self.flow.iter().find(|x| !spec.state_box.contains(x)) {
            return Err(Error::invalid(format!("flow sample {x:?} outside the state box")));
        }
        Ok(())
    }
}

/// Rows of the decrease condition at one state: `options[u][v]` is the
/// coefficient vector of `∂B/∂x(x)·(μ(x) + d_v + g(x)u)` in `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRows {
    pub state: Vec<f64>,
    pub options: Vec<Vec<Vec<f64>>>,
}

/// Constraints on the coefficients `a` imposed by a sample set:
/// `init·a ≤ 0`, `unsafe·a ≥ η`, and per flow sample `∃u ∀v: row·a ≤ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSystem {
    pub num_coefficients: usize,
    pub margin: f64,
    pub init_rows: Vec<Vec<f64>>,
    pub unsafe_rows: Vec<Vec<f64>>,
    pub flow: Vec<FlowRows>,
    /// Inputs that are extreme points of the convex hull of `U`. The flow
    /// rows are affine in `u`, so a disjunction over these is equivalent.
    pub extreme_inputs: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FlowRows {
    /// `max_v row·a` for input `u`.
    pub fn option_value(&self, u: usize, a: &[f64]) -> f64 {
        self.options[u]
            .iter()
            .map(|r| dot(r, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_u max_v row·a`.
    pub fn value(&self, a: &[f64]) -> f64 {
        (0..self.options.len())
            .map(|u| self.option_value(u, a))
            .fold(f64::INFINITY, f64::min)
    }
}

impl ConstraintSystem {
    /// Largest violation over all rows; `≤ 0` means `a` satisfies the system.
    pub fn max_violation(&self, a: &[f64], margin: f64) -> f64 {
        let init = self.init_rows.iter().map(|r| dot(r, a));
        let unsafe_rows = self.unsafe_rows.iter().map(|r| margin - dot(r, a));
        let flow = self.flow.iter().map(|f| f.value(a));
        init.chain(unsafe_rows)
            .chain(flow)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether `a` satisfies every row with unsafe margin `margin`, up to a
    /// tolerance relative to the size of `a`.
    pub fn is_satisfied(&self, a: &[f64], margin: f64, rel_tol: f64) -> bool {
        let scale = 1.0 + a.iter().map(|v| v.abs()).fold(0.0, f64::max);
        self.max_violation(a, margin) <= rel_tol * scale
    }
}

/// Encodes the barrier conditions at every sample as constraints on `a`.
#[allow(clippy::too_many_arguments)]
pub fn encode_feasibility<M, G>(
    template: &BarrierTemplate,
    mean: &M,
    g: &G,
    spec: &ProblemSpec,
    dbox: &ConfidenceBox,
    samples: &SampleSet,
    margin: f64,
) -> Result<ConstraintSystem>
where
    M: VectorField + ?Sized,
    G: InputMap + ?Sized,
{
    let n = template.n;
    if spec.n != n || mean.dim() != n || g.state_dim() != n || dbox.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "state dimension of synthesis inputs",
            expected: n,
            got: spec.n,
        });
    }
    if g.input_dim() != spec.m {
        return Err(Error::DimensionMismatch {
            what: "input dimension",
            expected: spec.m,
            got: g.input_dim(),
        });
    }
    if !(margin > 0.0) {
        return Err(Error::invalid("unsafe margin must be positive"));
    }
    let vertices = dbox.vertices();
    let flow = samples
        .flow
        .iter()
        .map(|x| {
            let grad = template.basis_gradient(x);
            let mu = mean.eval(x);
            let gm = g.eval(x);
            let options = spec
                .inputs
                .iter()
                .map(|u| {
                    let drive: Vec<f64> = (0..n)
                        .map(|l| mu[l] + (0..spec.m).map(|q| gm[(l, q)] * u[q]).sum::<f64>())
                        .collect();
                    vertices
                        .iter()
                        .map(|d| {
                            grad.iter()
                                .map(|gi| (0..n).map(|l| gi[l] * (drive[l] + d[l])).sum())
                                .collect()
                        })
                        .collect()
                })
                .collect();
            FlowRows {
                state: x.clone(),
                options,
            }
        })
        .collect();
    Ok(ConstraintSystem {
        num_coefficients: template.len(),
        margin,
        init_rows: samples.init.iter().map(|x| template.basis_eval(x)).collect(),
        unsafe_rows: samples
            .unsafe_states
            .iter()
            .map(|x| template.basis_eval(x))
            .collect(),
        flow,
        extreme_inputs: extreme_inputs(&spec.inputs)?,
    })
}
