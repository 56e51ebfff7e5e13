//! Candidate search: depth-first branch-and-bound over the input chosen at
//! each flow sample, with a linear program at every node.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::encode::ConstraintSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub node_budget: usize,
    /// Upper limit of the uniform slack maximized by each node LP, as a
    /// fraction of the unsafe margin.
    pub slack_fraction: f64,
    /// Weight of `Σ|a_i|` subtracted from the slack objective.
    pub norm_weight: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            node_budget: 20_000,
            slack_fraction: 0.1,
            norm_weight: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CandidateSolution {
    Feasible {
        coefficients: Vec<f64>,
        slack: f64,
        nodes: usize,
    },
    Infeasible {
        nodes: usize,
    },
}

/// Indices of the inputs that are extreme points of `conv(U)`, in order.
pub fn extreme_inputs(inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
    if inputs.is_empty() {
        return Err(Error::invalid("input set is empty"));
    }
    let m = inputs[0].len();
    if m == 1 {
        let (mut lo, mut hi) = (0, 0);
        for (i, u) in inputs.iter().enumerate() {
            if u[0] < inputs[lo][0] {
                lo = i;
            }
            if u[0] > inputs[hi][0] {
                hi = i;
            }
        }
        let mut out = vec![lo.min(hi), lo.max(hi)];
        out.dedup();
        return Ok(out);
    }
    let mut out = Vec::new();
    for (i, ui) in inputs.iter().enumerate() {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let others: Vec<_> = (0..inputs.len())
            .filter(|&k| k != i)
            .map(|k| (k, lp.add_var(0.0, (0.0, 1.0))))
            .collect();
        if others.is_empty() {
            out.push(i);
            continue;
        }
        let ones: Vec<_> = others.iter().map(|(_, v)| (*v, 1.0)).collect();
        lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
        for q in 0..m {
            let row: Vec<_> = others.iter().map(|(k, v)| (*v, inputs[*k][q])).collect();
            lp.add_constraint(row.as_slice(), ComparisonOp::Eq, ui[q]);
        }
        match lp.solve() {
            Err(microlp::Error::Infeasible) => out.push(i),
            Ok(_) => {}
            Err(e) => return Err(Error::LinearProgram(e.to_string())),
        }
    }
    Ok(out)
}

/// LP at one node: the fixed rows plus the chosen option at every assigned
/// flow sample. Returns `None` when infeasible.
fn node_lp(
    sys: &ConstraintSystem,
    a_max: f64,
    cfg: &SolverConfig,
    assigned: &[Option<usize>],
) -> Result<Option<(Vec<f64>, f64)>> {
    let p = sys.num_coefficients;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let a: Vec<_> = (0..p).map(|_| lp.add_var(0.0, (-a_max, a_max))).collect();
    let t: Vec<_> = (0..p).map(|_| lp.add_var(-cfg.norm_weight, (0.0, a_max))).collect();
    let s = lp.add_var(1.0, (0.0, cfg.slack_fraction * sys.margin));
    for i in 0..p {
        lp.add_constraint([(a[i], 1.0), (t[i], -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(a[i], 1.0), (t[i], 1.0)], ComparisonOp::Ge, 0.0);
    }
    let row_expr = |row: &[f64], slack: f64| -> Vec<(microlp::Variable, f64)> {
        let mut e: Vec<_> = row
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (a[i], *c))
            .collect();
        e.push((s, slack));
        e
    };
    for r in &sys.init_rows {
        lp.add_constraint(row_expr(r, 1.0).as_slice(), ComparisonOp::Le, 0.0);
    }
    for r in &sys.unsafe_rows {
        lp.add_constraint(row_expr(r, -1.0).as_slice(), ComparisonOp::Ge, sys.margin);
    }
    for (f, choice) in sys.flow.iter().zip(assigned) {
        if let Some(u) = choice {
            for r in &f.options[*u] {
                lp.add_constraint(row_expr(r, 1.0).as_slice(), ComparisonOp::Le, 0.0);
            }
        }
    }
    match lp.solve() {
        Ok(outcome) => {
            let sol = outcome
                .solution()
                .ok_or_else(|| Error::LinearProgram("LP interrupted".into()))?;
            let coeffs = a.iter().map(|v| sol.var_value(*v)).collect();
            Ok(Some((coeffs, sol.var_value(s))))
        }
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(Error::LinearProgram(e.to_string())),
    }
}

/// Finds coefficients with `|a_i| ≤ a_max` satisfying `sys`, or proves that
/// none exist by exhausting the input-choice tree.
pub fn solve_candidate(sys: &ConstraintSystem, a_max: f64, cfg: &SolverConfig) -> Result<CandidateSolution> {
    let k = sys.flow.len();
    let mut stack: Vec<Vec<Option<usize>>> = vec![vec![None; k]];
    let mut nodes = 0usize;
    while let Some(assigned) = stack.pop() {
        if nodes >= cfg.node_budget {
            return Err(Error::NodeBudgetExhausted {
                budget: cfg.node_budget,
            });
        }
        nodes += 1;
        let Some((coeffs, slack)) = node_lp(sys, a_max, cfg, &assigned)? else {
            continue;
        };
        // Most violated flow sample among those without an assigned input.
        let worst = (0..k)
            .filter(|&i| assigned[i].is_none())
            .map(|i| (i, sys.flow[i].value(&coeffs)))
            .filter(|(_, v)| *v > 0.0)
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
        let Some((i, _)) = worst else {
            return Ok(CandidateSolution::Feasible {
                coefficients: coeffs,
                slack,
                nodes,
            });
        };
        let mut options: Vec<(usize, f64)> = sys
            .extreme_inputs
            .iter()
            .map(|&u| (u, sys.flow[i].option_value(u, &coeffs)))
            .collect();
        options.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        for (u, _) in options.into_iter().rev() {
            let mut child = assigned.clone();
            child[i] = Some(u);
            stack.push(child);
        }
    }
    Ok(CandidateSolution::Infeasible { nodes })
}
