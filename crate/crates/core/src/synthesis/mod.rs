//! Counterexample-guided synthesis of robust control barrier functions.
//!
//! A candidate `B(a, x) = Σ a_i b_i(x)` must satisfy
//!
//! * `B ≤ 0` on the initial set,
//! * `B > 0` on the unsafe set (encoded as `B ≥ η` on samples),
//! * for every state some input `u` with
//!   `∂B/∂x(x)·(μ(x) + d + g(x)u) ≤ 0` for all `d` in the error box `D`.

mod cegis;
mod check;
mod encode;
mod solver;
mod template;
mod verify;

pub use cegis::{cegis, cegis_from, CegisConfig, SynthesisOutcome, SynthesisResult};
pub use check::{check_conditions_known_dynamics, known_flow_value, ConditionReport};
pub use encode::{encode_feasibility, Condition, ConstraintSystem, FlowRows, SampleSet};
pub use solver::{extreme_inputs, solve_candidate, CandidateSolution, SolverConfig};
pub use template::{
    monomial_exponents, BarrierCandidate, BarrierTemplate, Certificate, Polynomial, BASIS_ORDERING,
};
pub use verify::{flow_value, verify_candidate, Counterexample, Verification, VerifierConfig, VERIFIER_MODE};
