//! Helpers shared by the subcommands.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use gpcbf::dynamics::{jet_engine_input_map, jet_engine_system, JetEngineSystem};
use gpcbf::io::read_model;
use gpcbf::{ConstantInputMap, DMatrix, GpPosterior, ProblemSpec};
use serde::{Deserialize, Serialize};

/// Result of a command that ran to completion.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Success,
    InfeasibleTemplate,
    BudgetExhausted,
    ValidationFailed(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::InfeasibleTemplate => 2,
            Outcome::BudgetExhausted => 3,
            Outcome::ValidationFailed(_) => 4,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Outcome::Success => "success".into(),
            Outcome::InfeasibleTemplate => "infeasible-template".into(),
            Outcome::BudgetExhausted => "budget-exhausted".into(),
            Outcome::ValidationFailed(why) => format!("validation-failed: {why}"),
        }
    }
}

/// A probability, written either plainly or as `1-<complement>`.
pub fn parse_probability(s: &str) -> Result<f64, String> {
    let value = match s.trim().strip_prefix("1-") {
        Some(rest) => 1.0 - rest.parse::<f64>().map_err(|e| e.to_string())?,
        None => s.trim().parse::<f64>().map_err(|e| e.to_string())?,
    };
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(format!("{s} is not a probability in (0, 1)"))
    }
}

/// Comma-separated coordinates, e.g. `0.5,-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Point)
    }
}

/// The constant input matrix, given row-major, or the jet engine's
/// `(0, -1)ᵀ` when none is given.
pub fn input_map(spec: &ProblemSpec, row_major: Option<&[f64]>) -> Result<ConstantInputMap> {
    let map = match row_major {
        Some(v) => {
            if v.len() != spec.n * spec.m {
                bail!("input matrix needs {}x{} entries, got {}", spec.n, spec.m, v.len());
            }
            ConstantInputMap(DMatrix::from_row_slice(spec.n, spec.m, v))
        }
        None => jet_engine_input_map(),
    };
    if map.0.nrows() != spec.n || map.0.ncols() != spec.m {
        bail!(
            "the default input matrix is 2x1 but the problem is {}x{}; pass --input-matrix",
            spec.n,
            spec.m
        );
    }
    Ok(map)
}

/// The true dynamics, available for planar single-input problems only.
pub fn true_system(spec: &ProblemSpec) -> Result<JetEngineSystem> {
    if spec.n != 2 || spec.m != 1 {
        bail!("true dynamics are only available for the builtin jet engine (n = 2, m = 1)");
    }
    Ok(jet_engine_system())
}

/// Loads a model and restricts its extrapolation warnings to the state box.
pub fn load_model(path: &Path, spec: &ProblemSpec) -> Result<GpPosterior> {
    let (_, _, gp) = read_model(path).with_context(|| format!("loading model {}", path.display()))?;
    if gp.dim() != spec.n {
        bail!("model has state dimension {} but the problem has {}", gp.dim(), spec.n);
    }
    Ok(gp.with_domain(spec.state_box.clone()))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_accept_complements() {
        assert_eq!(parse_probability("0.95").unwrap(), 0.95);
        assert_eq!(parse_probability("1-1e-10").unwrap(), 1.0 - 1e-10);
        assert!(parse_probability("1").is_err());
        assert!(parse_probability("abc").is_err());
    }

    #[test]
    fn points_parse_from_commas() {
        assert_eq!("0.5, -1".parse::<Point>().unwrap(), Point(vec![0.5, -1.0]));
        assert!("0.5,x".parse::<Point>().is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes: Vec<u8> = [
            Outcome::Success,
            Outcome::InfeasibleTemplate,
            Outcome::BudgetExhausted,
            Outcome::ValidationFailed(String::new()),
        ]
        .iter()
        .map(Outcome::exit_code)
        .collect();
        assert_eq!(codes, vec![0, 2, 3, 4]);
    }
}
