use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceBox;
use crate::dynamics::{InputMap, ProblemSpec, VectorField};
use crate::error::{Error, Result};
use crate::synthesis::encode::{encode_feasibility, SampleSet};
use crate::synthesis::solver::{solve_candidate, CandidateSolution, SolverConfig};
use crate::synthesis::template::{BarrierCandidate, BarrierTemplate};
use crate::synthesis::verify::{verify_candidate, Counterexample, Verification, VerifierConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CegisConfig {
    /// `η` in `B ≥ η` on unsafe samples.
    pub margin: f64,
    pub max_iterations: usize,
    /// Points per axis of the initial sample grid on each region.
    pub initial_grid: usize,
    pub solver: SolverConfig,
    pub verifier: VerifierConfig,
}

impl Default for CegisConfig {
    fn default() -> Self {
        CegisConfig {
            margin: 1.0,
            max_iterations: 50,
            initial_grid: 5,
            solver: SolverConfig::default(),
            verifier: VerifierConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum SynthesisOutcome {
    Certified { candidate: BarrierCandidate },
    /// No coefficient vector within the template satisfies the samples.
    InfeasibleTemplate,
    BudgetExhausted { last_candidate: Option<BarrierCandidate> },
    /// The verifier could neither certify nor refute the last candidate.
    VerifierInconclusive { candidate: BarrierCandidate, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub outcome: SynthesisOutcome,
    pub iterations: usize,
    /// Total sample count at the start of each iteration.
    pub sample_trace: Vec<usize>,
    pub counterexamples: Vec<Counterexample>,
    pub samples: SampleSet,
}

impl SynthesisResult {
    pub fn candidate(&self) -> Option<&BarrierCandidate> {
        match &self.outcome {
            SynthesisOutcome::Certified { candidate } => Some(candidate),
            SynthesisOutcome::VerifierInconclusive { candidate, .. } => Some(candidate),
            SynthesisOutcome::BudgetExhausted { last_candidate } => last_candidate.as_ref(),
            SynthesisOutcome::InfeasibleTemplate => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self.outcome, SynthesisOutcome::Certified { .. })
    }
}

/// Alternates candidate solving on the samples with verification over the
/// regions, adding each counterexample to the samples of its condition.
#[allow(clippy::too_many_arguments)]
pub fn cegis<M, G>(
    template: &BarrierTemplate,
    mean: &M,
    g: &G,
    spec: &ProblemSpec,
    dbox: &ConfidenceBox,
    config: &CegisConfig,
) -> Result<SynthesisResult>
where
    M: VectorField + ?Sized,
    G: InputMap + ?Sized,
{
    let samples = SampleSet::grid(spec, config.initial_grid.max(1));
    cegis_from(template, mean, g, spec, dbox, config, samples)
}

/// [`cegis`] starting from the given samples.
#[allow(clippy::too_many_arguments)]
pub fn cegis_from<M, G>(
    template: &BarrierTemplate,
    mean: &M,
    g: &G,
    spec: &ProblemSpec,
    dbox: &ConfidenceBox,
    config: &CegisConfig,
    mut samples: SampleSet,
) -> Result<SynthesisResult>
where
    M: VectorField + ?Sized,
    G: InputMap + ?Sized,
{
    if samples.is_empty() {
        return Err(Error::invalid("initial sample set is empty"));
    }
    let mut trace = Vec::new();
    let mut cexs: Vec<Counterexample> = Vec::new();
    let mut last = None;
    for it in 1..=config.max_iterations {
        trace.push(samples.len());
        let sys = encode_feasibility(template, mean, g, spec, dbox, &samples, config.margin)?;
        let coefficients = match solve_candidate(&sys, template.a_max, &config.solver)? {
            CandidateSolution::Infeasible { .. } => {
                return Ok(SynthesisResult {
                    outcome: SynthesisOutcome::InfeasibleTemplate,
                    iterations: it,
                    sample_trace: trace,
                    counterexamples: cexs,
                    samples,
                })
            }
            CandidateSolution::Feasible { coefficients, .. } => coefficients,
        };
        let mut candidate = template.candidate(
            coefficients
                .into_iter()
                .map(|a| a.clamp(-template.a_max, template.a_max))
                .collect(),
            config.margin,
        )?;
        log::info!("iteration {it}: candidate {:?}", candidate.coefficients);
        match verify_candidate(&candidate, mean, g, spec, dbox, &config.verifier)? {
            Verification::Certified { certificate } => {
                candidate.certificate = Some(certificate);
                return Ok(SynthesisResult {
                    outcome: SynthesisOutcome::Certified { candidate },
                    iterations: it,
                    sample_trace: trace,
                    counterexamples: cexs,
                    samples,
                });
            }
            Verification::Inconclusive { reason, .. } => {
                return Ok(SynthesisResult {
                    outcome: SynthesisOutcome::VerifierInconclusive { candidate, reason },
                    iterations: it,
                    sample_trace: trace,
                    counterexamples: cexs,
                    samples,
                });
            }
            Verification::Counterexamples { counterexamples } => {
                for cex in counterexamples {
                    log::info!("  counterexample {:?} {:?} {:e}", cex.condition, cex.state, cex.violation_margin);
                    if !samples.insert(cex.condition, cex.state.clone()) {
                        return Err(Error::DuplicateCounterexample { state: cex.state });
                    }
                    cexs.push(cex);
                }
                last = Some(candidate);
            }
        }
    }
    Ok(SynthesisResult {
        outcome: SynthesisOutcome::BudgetExhausted {
            last_candidate: last,
        },
        iterations: config.max_iterations,
        sample_trace: trace,
        counterexamples: cexs,
        samples,
    })
}
