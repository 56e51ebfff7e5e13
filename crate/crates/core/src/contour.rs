//! Level curves of planar scalar fields by marching squares.

use rayon::prelude::*;

use crate::dynamics::StateBox;
use crate::error::{Error, Result};

pub type Segment = [[f64; 2]; 2];

/// Samples of a scalar field on a regular planar grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[i][j]` at `(xs[i], ys[j])`.
    pub values: Vec<Vec<f64>>,
}

impl ScalarGrid {
    /// `per_dim × per_dim` samples of `f` spanning `region`, including its
    /// edges.
    pub fn sample<F>(f: F, region: &StateBox, per_dim: usize) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if region.dim() != 2 {
            return Err(Error::invalid("contours need a planar region"));
        }
        if per_dim < 2 {
            return Err(Error::invalid("contour grid needs at least 2 points per axis"));
        }
        let axis = |k: usize| -> Vec<f64> {
            let (lo, hi) = (region.lower[k], region.upper[k]);
            (0..per_dim)
                .map(|i| lo + (hi - lo) * i as f64 / (per_dim - 1) as f64)
                .collect()
        };
        let (xs, ys) = (axis(0), axis(1));
        let values = xs
            .par_iter()
            .map(|x| ys.iter().map(|y| f(&[*x, *y])).collect())
            .collect();
        Ok(ScalarGrid { xs, ys, values })
    }

    /// Segments of the curve `value = level`, linearly interpolated along
    /// cell edges. Saddle cells are resolved by the mean of their corners.
    pub fn level_segments(&self, level: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        for i in 0..self.xs.len().saturating_sub(1) {
            for j in 0..self.ys.len().saturating_sub(1) {
                self.cell_segments(i, j, level, &mut out);
            }
        }
        out
    }

    fn cell_segments(&self, i: usize, j: usize, level: f64, out: &mut Vec<Segment>) {
        // Corners counter-clockwise from (i, j).
        let p = [
            [self.xs[i], self.ys[j]],
            [self.xs[i + 1], self.ys[j]],
            [self.xs[i + 1], self.ys[j + 1]],
            [self.xs[i], self.ys[j + 1]],
        ];
        let v = [
            self.values[i][j] - level,
            self.values[i + 1][j] - level,
            self.values[i + 1][j + 1] - level,
            self.values[i][j + 1] - level,
        ];
        let above = v.map(|x| x >= 0.0);
        let crossing = |e: usize| -> Option<[f64; 2]> {
            let (a, b) = (e, (e + 1) % 4);
            if above[a] == above[b] {
                return None;
            }
            let t = v[a] / (v[a] - v[b]);
            Some([
                p[a][0] + t * (p[b][0] - p[a][0]),
                p[a][1] + t * (p[b][1] - p[a][1]),
            ])
        };
        let points: Vec<(usize, [f64; 2])> = (0..4).filter_map(|e| crossing(e).map(|q| (e, q))).collect();
        match points.len() {
            2 => out.push([points[0].1, points[1].1]),
            4 => {
                let center_above = v.iter().sum::<f64>() >= 0.0;
                // Edge e joins corner e to corner e + 1; cut off the two
                // corners on the other side from the center.
                if above[0] == center_above {
                    out.push([points[0].1, points[1].1]);
                    out.push([points[2].1, points[3].1]);
                } else {
                    out.push([points[3].1, points[0].1]);
                    out.push([points[1].1, points[2].1]);
                }
            }
            _ => {}
        }
    }
}

/// Zero-level segments of `f` over `region` on a `per_dim × per_dim` grid.
pub fn zero_level_segments<F>(f: F, region: &StateBox, per_dim: usize) -> Result<Vec<Segment>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Ok(ScalarGrid::sample(f, region, per_dim)?.level_segments(0.0))
}
