//! Upper bounds on the posterior standard deviation over the state box.
//!
//! `ρ_j` is Lipschitz along axis `l` with constant equal to the largest
//! posterior standard deviation of `∂_l f_j` nearby:
//! `∂_l ρ_j = Cov(f_j(x), ∂_l f_j(x)) / ρ_j(x)`. That derivative standard
//! deviation is in turn Lipschitz with the prior standard deviation of the
//! second derivatives, so on a cell with center `c` and half-widths `r`
//!
//! `ρ_j(x) ≤ ρ_j(c) + Σ_l r_l · min(s_l, s_l(c) + Σ_m S_lm r_m)`
//!
//! where `s_l = σ_j / l_jl` and `S_lm` is the prior standard deviation of
//! `∂_l ∂_m f_j`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ProblemSpec, StateBox};
use crate::error::{Error, Result};
use crate::gp::GpPosterior;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BoundMode {
    /// Cell bound on a fixed `grid_per_dim^n` partition.
    LipschitzGrid,
    /// Cells are bisected until the gap between the best sampled value and
    /// the largest cell bound is below `tolerance`, or `max_cells` splits.
    LipschitzBranchAndBound { tolerance: f64, max_cells: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdBound {
    /// `ρ̄_j` per output dimension.
    pub per_dim: Vec<f64>,
    pub grid_per_dim: usize,
    pub mode: BoundMode,
    /// Amount added on top of `grid_max` per output dimension.
    pub margins: Vec<f64>,
    /// Largest `ρ_j` seen at a cell center.
    pub grid_max: Vec<f64>,
}

impl StdBound {
    pub fn max(&self) -> f64 {
        self.per_dim.iter().copied().fold(0.0, f64::max)
    }
}

struct CellModel<'a> {
    gp: &'a GpPosterior,
    j: usize,
    first: Vec<f64>,
    second: Vec<Vec<f64>>,
    prior: f64,
    roundoff: f64,
}

impl<'a> CellModel<'a> {
    fn new(gp: &'a GpPosterior, j: usize) -> Self {
        let k = gp.kernel(j);
        let n = k.dim();
        let sd = k.prior_variance().sqrt();
        let ls = &k.length_scales;
        let second = (0..n)
            .map(|l| {
                (0..n)
                    .map(|m| {
                        if l == m {
                            3f64.sqrt() * sd / (ls[l] * ls[l])
                        } else {
                            sd / (ls[l] * ls[m])
                        }
                    })
                    .collect()
            })
            .collect();
        CellModel {
            gp,
            j,
            first: (0..n).map(|l| k.derivative_prior_std(l)).collect(),
            second,
            prior: sd,
            // Cancellation in `σ² - k̄ᵀA⁻¹k̄` is at most a few ulps of σ² per term.
            roundoff: 4.0 * (gp.sample_count() as f64 + 1.0) * f64::EPSILON,
        }
    }

    /// Returns the cell bound and the standard deviation at the center.
    fn bound(&self, cell: &StateBox) -> (f64, f64) {
        let c = cell.center();
        let half: Vec<f64> = cell.widths().iter().map(|w| 0.5 * w).collect();
        let (var, dvar) = self.gp.value_and_gradient_variance(self.j, &c);
        let sd_center = var.max(0.0).sqrt();
        let slack = |v: f64, scale: f64| (v.max(0.0) + self.roundoff * scale).sqrt();
        let mut upper = slack(var, self.prior * self.prior);
        for l in 0..half.len() {
            let near: f64 = self.second[l].iter().zip(&half).map(|(s, r)| s * r).sum();
            let slope = slack(dvar[l], self.first[l] * self.first[l]) + near;
            upper += half[l] * slope.min(self.first[l]);
        }
        (upper.min(self.prior), sd_center)
    }
}

struct Cell {
    upper: f64,
    cell: StateBox,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.upper.total_cmp(&other.upper) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper.total_cmp(&other.upper)
    }
}

/// Sound upper bound on `max_{x ∈ X} ρ_j(x)` for every output `j`.
pub fn max_std_bound(
    gp: &GpPosterior,
    spec: &ProblemSpec,
    grid_per_dim: usize,
    mode: BoundMode,
) -> Result<StdBound> {
    if grid_per_dim < 2 {
        return Err(Error::invalid("grid_per_dim must be at least 2"));
    }
    let domain = &spec.state_box;
    if domain.dim() != gp.dim() {
        return Err(Error::DimensionMismatch {
            what: "state box dimension",
            expected: gp.dim(),
            got: domain.dim(),
        });
    }
    let n = gp.dim();
    let mut per_dim = Vec::with_capacity(n);
    let mut margins = Vec::with_capacity(n);
    let mut grid_max = Vec::with_capacity(n);
    for j in 0..n {
        let model = CellModel::new(gp, j);
        let scored: Vec<(Cell, f64)> = domain
            .cells(grid_per_dim)
            .into_par_iter()
            .map(|cell| {
                let (upper, sd) = model.bound(&cell);
                (Cell { upper, cell }, sd)
            })
            .collect();
        let (bound, sampled) = match &mode {
            BoundMode::LipschitzGrid => scored.iter().fold((0.0f64, 0.0f64), |(b, s), (c, v)| {
                (b.max(c.upper), s.max(*v))
            }),
            BoundMode::LipschitzBranchAndBound { tolerance, max_cells } => {
                branch_and_bound(&model, scored, *tolerance, *max_cells)
            }
        };
        per_dim.push(bound);
        margins.push(bound - sampled);
        grid_max.push(sampled);
    }
    Ok(StdBound {
        per_dim,
        grid_per_dim,
        mode,
        margins,
        grid_max,
    })
}

fn branch_and_bound(
    model: &CellModel,
    initial: Vec<(Cell, f64)>,
    tolerance: f64,
    max_cells: usize,
) -> (f64, f64) {
    let mut best = 0.0f64;
    let mut heap = BinaryHeap::with_capacity(initial.len());
    for (c, v) in initial {
        best = best.max(v);
        heap.push(c);
    }
    let mut processed = 0usize;
    while let Some(top) = heap.peek() {
        if top.upper <= best + tolerance || processed >= max_cells {
            break;
        }
        let top = heap.pop().expect("peeked");
        let axis = (0..model.first.len())
            .max_by(|&a, &b| {
                let wa = (top.cell.upper[a] - top.cell.lower[a]) * model.first[a];
                let wb = (top.cell.upper[b] - top.cell.lower[b]) * model.first[b];
                wa.total_cmp(&wb)
            })
            .expect("non-empty state");
        let (left, right) = top.cell.bisect(axis);
        for cell in [left, right] {
            let (upper, v) = model.bound(&cell);
            best = best.max(v);
            heap.push(Cell { upper, cell });
        }
        processed += 1;
    }
    let upper = heap.peek().map_or(best, |c| c.upper.max(best));
    (upper, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TrainingSet;
    use crate::gp::KernelSpec;

    fn problem() -> ProblemSpec {
        crate::dynamics::jet_engine_problem()
    }

    fn kernels() -> Vec<KernelSpec> {
        vec![
            KernelSpec::squared_exponential(2.0, vec![1.0, 1.5]).unwrap(),
            KernelSpec::squared_exponential(0.5, vec![0.7, 2.0]).unwrap(),
        ]
    }

    #[test]
    fn empty_data_gives_prior_std() {
        let d = TrainingSet {
            states: vec![],
            targets: vec![],
            noise_std: 0.1,
            seed: 0,
        };
        let gp = GpPosterior::fit(&d, &kernels()).unwrap();
        for mode in [
            BoundMode::LipschitzGrid,
            BoundMode::LipschitzBranchAndBound {
                tolerance: 1e-4,
                max_cells: 1000,
            },
        ] {
            let b = max_std_bound(&gp, &problem(), 5, mode).unwrap();
            assert_eq!(b.per_dim, vec![2.0f64.sqrt(), 0.5f64.sqrt()]);
        }
    }

    #[test]
    fn bound_dominates_dense_sampling() {
        let spec = problem();
        let states: Vec<Vec<f64>> = spec.state_box.grid(4);
        let targets = states.iter().map(|x| vec![x[0], x[1]]).collect();
        let d = TrainingSet {
            states,
            targets,
            noise_std: 0.05,
            seed: 0,
        };
        let gp = GpPosterior::fit(&d, &kernels()).unwrap();
        let grid = max_std_bound(&gp, &spec, 21, BoundMode::LipschitzGrid).unwrap();
        let bb = max_std_bound(
            &gp,
            &spec,
            8,
            BoundMode::LipschitzBranchAndBound {
                tolerance: 1e-3,
                max_cells: 20_000,
            },
        )
        .unwrap();
        for x in spec.state_box.grid(201) {
            let s = gp.std_dev(&x).unwrap();
            for j in 0..2 {
                assert!(s[j] <= grid.per_dim[j] + 1e-12);
                assert!(s[j] <= bb.per_dim[j] + 1e-12);
            }
        }
        assert!(bb.max() <= grid.max() + 1e-12);
    }

    #[test]
    fn rejects_single_node_grid() {
        let d = TrainingSet {
            states: vec![],
            targets: vec![],
            noise_std: 0.1,
            seed: 0,
        };
        let gp = GpPosterior::fit(&d, &kernels()).unwrap();
        assert!(max_std_bound(&gp, &problem(), 1, BoundMode::LipschitzGrid).is_err());
    }
}
