//! System class, safety problems and training-data generation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::ode;

/// Axis-aligned box `[lower, upper]` in state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = StateBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub(crate) fn from_intervals(iv: &[Interval]) -> Self {
        StateBox {
            lower: iv.iter().map(|i| i.lo).collect(),
            upper: iv.iter().map(|i| i.hi).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box bounds",
                expected: self.lower.len(),
                got: self.upper.len(),
            });
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidProblem(format!(
                    "box dimension {j} has bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn contains_box(&self, other: &StateBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|j| self.lower[j] <= other.lower[j] && other.upper[j] <= self.upper[j])
    }

    pub fn intersects(&self, other: &StateBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|j| self.lower[j] <= other.upper[j] && other.lower[j] <= self.upper[j])
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| Interval::new(lo, hi))
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    }

    /// Tensor grid with `per_dim` evenly spaced nodes per axis, endpoints
    /// included. Row-major with the last coordinate varying fastest.
    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|j| linspace(self.lower[j], self.upper[j], per_dim))
            .collect();
        tensor(&axes)
    }

    /// Splits the box into `per_dim^n` equal cells, in the same order as
    /// [`StateBox::grid`].
    pub fn cells(&self, per_dim: usize) -> Vec<StateBox> {
        let per_dim = per_dim.max(1);
        let axes: Vec<Vec<Interval>> = (0..self.dim())
            .map(|j| {
                let w = (self.upper[j] - self.lower[j]) / per_dim as f64;
                (0..per_dim)
                    .map(|k| {
                        let lo = self.lower[j] + k as f64 * w;
                        let hi = if k + 1 == per_dim {
                            self.upper[j]
                        } else {
                            self.lower[j] + (k + 1) as f64 * w
                        };
                        Interval::new(lo, hi)
                    })
                    .collect()
            })
            .collect();
        tensor(&axes)
            .into_iter()
            .map(|iv| StateBox::from_intervals(&iv))
            .collect()
    }

    /// Halves the box along dimension `j`.
    pub fn bisect(&self, j: usize) -> (StateBox, StateBox) {
        let mid = 0.5 * (self.lower[j] + self.upper[j]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[j] = mid;
        right.lower[j] = mid;
        (left, right)
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

fn tensor<T: Clone>(axes: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut p = prefix.clone();
                p.push(v.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// A safety problem: state box `X`, initial region `X0`, unsafe region `X1`
/// and a finite input alphabet `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub state_box: StateBox,
    pub initial_boxes: Vec<StateBox>,
    pub unsafe_boxes: Vec<StateBox>,
    pub inputs: Vec<Vec<f64>>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let dim_err = |what, got| Error::DimensionMismatch {
            what,
            expected: self.n,
            got,
        };
        self.state_box.validate()?;
        if self.state_box.dim() != self.n {
            return Err(dim_err("state box", self.state_box.dim()));
        }
        for (label, boxes) in [("initial", &self.initial_boxes), ("unsafe", &self.unsafe_boxes)] {
            if boxes.is_empty() {
                return Err(Error::InvalidProblem(format!("no {label} boxes")));
            }
            for b in boxes {
                b.validate()?;
                if b.dim() != self.n {
                    return Err(dim_err("region box", b.dim()));
                }
                if !self.state_box.contains_box(b) {
                    return Err(Error::InvalidProblem(format!(
                        "{label} box {b:?} is not inside the state box"
                    )));
                }
            }
        }
        for a in &self.initial_boxes {
            for b in &self.unsafe_boxes {
                if a.intersects(b) {
                    return Err(Error::InvalidProblem(format!(
                        "initial box {a:?} intersects unsafe box {b:?}"
                    )));
                }
            }
        }
        if self.inputs.is_empty() {
            return Err(Error::InvalidProblem("input set is empty".into()));
        }
        for (k, u) in self.inputs.iter().enumerate() {
            if u.len() != self.m {
                return Err(Error::DimensionMismatch {
                    what: "input",
                    expected: self.m,
                    got: u.len(),
                });
            }
            if self.inputs[..k].contains(u) {
                return Err(Error::InvalidProblem(format!("duplicate input {u:?}")));
            }
        }
        Ok(())
    }

    pub fn in_initial(&self, x: &[f64]) -> bool {
        self.initial_boxes.iter().any(|b| b.contains(x))
    }

    pub fn in_unsafe(&self, x: &[f64]) -> bool {
        self.unsafe_boxes.iter().any(|b| b.contains(x))
    }
}

/// A state-dependent vector field together with cell-wise enclosures of its
/// values and Jacobian, used by the verifiers.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Vec<f64>;

    /// Enclosure of every component over `cell`.
    fn enclose(&self, cell: &StateBox) -> Vec<Interval>;

    /// Enclosure of `∂F_j/∂x_l` over `cell`, indexed `[j][l]`.
    fn jacobian_enclosure(&self, cell: &StateBox) -> Vec<Vec<Interval>>;
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (**self).eval(x)
    }
    fn enclose(&self, cell: &StateBox) -> Vec<Interval> {
        (**self).enclose(cell)
    }
    fn jacobian_enclosure(&self, cell: &StateBox) -> Vec<Vec<Interval>> {
        (**self).jacobian_enclosure(cell)
    }
}

/// The known input matrix `g(x)`.
pub trait InputMap: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> DMatrix<f64>;
    /// Enclosure of `g(x)` over `cell`, indexed `[j][k]`.
    fn enclose(&self, cell: &StateBox) -> Vec<Vec<Interval>>;
    /// Enclosure of `∂g_jk/∂x_l` over `cell`, indexed `[l][j][k]`.
    fn derivative_enclosure(&self, cell: &StateBox) -> Vec<Vec<Vec<Interval>>>;
}

impl<T: InputMap + ?Sized> InputMap for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).eval(x)
    }
    fn enclose(&self, cell: &StateBox) -> Vec<Vec<Interval>> {
        (**self).enclose(cell)
    }
    fn derivative_enclosure(&self, cell: &StateBox) -> Vec<Vec<Vec<Interval>>> {
        (**self).derivative_enclosure(cell)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantInputMap(pub DMatrix<f64>);

impl InputMap for ConstantInputMap {
    fn state_dim(&self) -> usize {
        self.0.nrows()
    }
    fn input_dim(&self) -> usize {
        self.0.ncols()
    }
    fn eval(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
    fn enclose(&self, _cell: &StateBox) -> Vec<Vec<Interval>> {
        (0..self.0.nrows())
            .map(|j| (0..self.0.ncols()).map(|k| Interval::point(self.0[(j, k)])).collect())
            .collect()
    }
    fn derivative_enclosure(&self, _cell: &StateBox) -> Vec<Vec<Vec<Interval>>> {
        let zero = vec![vec![Interval::ZERO; self.0.ncols()]; self.0.nrows()];
        vec![zero; self.0.nrows()]
    }
}

/// `F ≡ 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroField(pub usize);

impl VectorField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.0]
    }
    fn enclose(&self, _cell: &StateBox) -> Vec<Interval> {
        vec![Interval::ZERO; self.0]
    }
    fn jacobian_enclosure(&self, _cell: &StateBox) -> Vec<Vec<Interval>> {
        vec![vec![Interval::ZERO; self.0]; self.0]
    }
}

/// `ẋ = f(x) + g(x)u`.
pub trait ControlAffine: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn drift(&self, x: &[f64]) -> Vec<f64>;
    fn input_matrix(&self, x: &[f64]) -> DMatrix<f64>;

    fn velocity(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut v = self.drift(x);
        let g = self.input_matrix(x);
        for (j, vj) in v.iter_mut().enumerate() {
            *vj += (0..u.len()).map(|k| g[(j, k)] * u[k]).sum::<f64>();
        }
        v
    }
}

/// A control-affine system assembled from a drift field and an input map.
#[derive(Clone, Debug)]
pub struct AffineSystem<F, G> {
    pub drift: F,
    pub input_map: G,
}

impl<F: VectorField, G: InputMap> ControlAffine for AffineSystem<F, G> {
    fn state_dim(&self) -> usize {
        self.drift.dim()
    }
    fn input_dim(&self) -> usize {
        self.input_map.input_dim()
    }
    fn drift(&self, x: &[f64]) -> Vec<f64> {
        self.drift.eval(x)
    }
    fn input_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        self.input_map.eval(x)
    }
}

/// Moore-Greitzer jet engine drift in no-stall mode:
/// `f₁ = -x₂ - 1.5x₁² - 0.5x₁³`, `f₂ = x₁`.
#[derive(Clone, Copy, Debug, Default)]
pub struct JetEngine;

impl VectorField for JetEngine {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (x1, x2) = (x[0], x[1]);
        vec![-x2 - 1.5 * x1 * x1 - 0.5 * x1 * x1 * x1, x1]
    }

    fn enclose(&self, cell: &StateBox) -> Vec<Interval> {
        let iv = cell.intervals();
        let (x1, x2) = (iv[0], iv[1]);
        // -1.5x² - 0.5x³ = -x²(1.5 + 0.5x)
        let f1 = -x2 - x1.sqr() * (x1 * 0.5 + 1.5);
        vec![f1, x1]
    }

    fn jacobian_enclosure(&self, cell: &StateBox) -> Vec<Vec<Interval>> {
        let x1 = Interval::new(cell.lower[0], cell.upper[0]);
        let d11 = -(x1 * 3.0) - x1.sqr() * 1.5;
        vec![
            vec![d11, Interval::point(-1.0)],
            vec![Interval::point(1.0), Interval::ZERO],
        ]
    }
}

pub type JetEngineSystem = AffineSystem<JetEngine, ConstantInputMap>;

/// The jet engine with `g(x) = (0, -1)ᵀ`.
pub fn jet_engine_system() -> JetEngineSystem {
    AffineSystem {
        drift: JetEngine,
        input_map: jet_engine_input_map(),
    }
}

pub fn jet_engine_input_map() -> ConstantInputMap {
    ConstantInputMap(DMatrix::from_column_slice(2, 1, &[0.0, -1.0]))
}

pub fn jet_engine_problem() -> ProblemSpec {
    let b = |lo: [f64; 2], hi: [f64; 2]| StateBox {
        lower: lo.to_vec(),
        upper: hi.to_vec(),
    };
    ProblemSpec {
        n: 2,
        m: 1,
        state_box: b([-1.0, -4.0], [3.0, 4.0]),
        initial_boxes: vec![b([0.0, -1.0], [1.0, 1.0])],
        unsafe_boxes: vec![b([-1.0, -4.0], [0.0, -2.5]), b([-1.0, 2.0], [3.0, 4.0])],
        inputs: (0..9).map(|k| vec![-2.0 + 0.5 * k as f64]).collect(),
    }
}

/// Noisy drift measurements `y = f(x) + w`, `w ~ N(0, noise_std² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub states: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub noise_std: f64,
    pub seed: u64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// The first `count` samples.
    pub fn prefix(&self, count: usize) -> TrainingSet {
        TrainingSet {
            states: self.states[..count].to_vec(),
            targets: self.targets[..count].to_vec(),
            noise_std: self.noise_std,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.targets.len() {
            return Err(Error::invalid("states and targets differ in length"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        let n = self.state_dim();
        for (x, y) in self.states.iter().zip(&self.targets) {
            if x.len() != n || y.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "training sample",
                    expected: n,
                    got: x.len().max(y.len()),
                });
            }
        }
        Ok(())
    }
}

/// How training targets are measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Measurement {
    /// `f(x)` from the drift oracle.
    #[default]
    DirectDrift,
    /// Forward difference of the zero-input flow over `step`.
    FiniteDifference { step: f64 },
}

pub fn generate_training_data<S: ControlAffine + ?Sized>(
    sys: &S,
    spec: &ProblemSpec,
    count: usize,
    noise_std: f64,
    seed: u64,
    measurement: Measurement,
) -> Result<TrainingSet> {
    if count == 0 {
        return Err(Error::invalid("training set needs at least one sample"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::invalid("noise_std must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut states = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let x = spec.state_box.sample_uniform(&mut rng);
        let clean = match measurement {
            Measurement::DirectDrift => sys.drift(&x),
            Measurement::FiniteDifference { step } => finite_difference_measurement(sys, &x, step)?,
        };
        let y = clean
            .into_iter()
            .map(|v| if noise_std > 0.0 { v + noise.sample(&mut rng) } else { v })
            .collect();
        states.push(x);
        targets.push(y);
    }
    Ok(TrainingSet {
        states,
        targets,
        noise_std,
        seed,
    })
}

/// `(φ(x, 0, h) - x) / h`, the zero-input flow over one step.
pub fn finite_difference_measurement<S: ControlAffine + ?Sized>(
    sys: &S,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let zero = vec![0.0; sys.input_dim()];
    let end = ode::rk4_step(|s| sys.velocity(s, &zero), x, step);
    Ok(end.iter().zip(x).map(|(e, s)| (e - s) / step).collect())
}
