//! Safe controller synthesis for control-affine systems with unknown drift.
//!
//! The pipeline has four stages:
//!
//! 1. [`gp`]: learn the drift `f` of `ẋ = f(x) + g(x)u` from noisy samples
//!    with one Gaussian process per state dimension, and bound the posterior
//!    standard deviation over the whole state box.
//! 2. [`confidence`]: turn that bound into a box `D` of model errors that
//!    contains `f(x) - μ(x)` with quantified probability.
//! 3. [`synthesis`]: search a polynomial control barrier function that is
//!    robust to every error in `D`, using counterexample-guided inductive
//!    synthesis with a linear branch-and-bound candidate solver and a
//!    cell-based verifier.
//! 4. [`control`]: extract the minimum-input safe controller from the barrier
//!    and validate it by closed-loop simulation.
//!
//! [`benchmark`] bundles the Moore-Greitzer jet engine case used throughout
//! the tests.

pub mod benchmark;
pub mod binomial;
pub mod confidence;
pub mod contour;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod gp;
pub mod interval;
pub mod io;
pub mod ode;
mod optim;
pub mod synthesis;

pub use confidence::{ConfidenceBox, ContainmentEstimate, ErrorBoundParams};
pub use control::{RobustnessMode, SafeController, Trajectory};
pub use dynamics::{
    ConstantInputMap, ControlAffine, InputMap, JetEngine, ProblemSpec, StateBox, TrainingSet,
    VectorField,
};
pub use error::{Error, Result};
pub use gp::{GpPosterior, KernelSpec, StdBound};
pub use interval::Interval;
pub use nalgebra::DMatrix;
pub use synthesis::{BarrierCandidate, BarrierTemplate, SynthesisOutcome, SynthesisResult};
