//! Box-projected BFGS for the small smooth problems in hyperparameter fitting.

use nalgebra::{DMatrix, DVector};

pub(crate) struct BfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 200,
            grad_tol: 1e-6,
            f_tol: 1e-12,
        }
    }
}

pub(crate) struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `f` over the box `[lower, upper]`. `f` returns the value and
/// gradient, or `None` where it is undefined; such points are treated as
/// `+∞` by the line search.
pub(crate) fn minimize<F>(
    f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &BfgsOptions,
) -> Option<BfgsResult>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let dim = x0.len();
    let project = |x: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(dim, (0..dim).map(|i| x[i].clamp(lower[i], upper[i])))
    };
    let mut x = project(&DVector::from_column_slice(x0));
    let (mut fx, g) = f(x.as_slice())?;
    if !fx.is_finite() {
        return None;
    }
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut iterations = 0;

    for it in 0..opts.max_iters {
        iterations = it + 1;
        // Gradient components pushing against an active bound do not count.
        let free_grad_norm = (0..dim)
            .map(|i| {
                let at_lo = x[i] <= lower[i] && g[i] > 0.0;
                let at_hi = x[i] >= upper[i] && g[i] < 0.0;
                if at_lo || at_hi {
                    0.0
                } else {
                    g[i] * g[i]
                }
            })
            .sum::<f64>()
            .sqrt();
        if free_grad_norm < opts.grad_tol {
            break;
        }
        let mut dir = -(&h * &g);
        if dir.dot(&g) >= 0.0 {
            h = DMatrix::identity(dim, dim);
            dir = -g.clone();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial = project(&(&x + &dir * step));
            let s = &trial - &x;
            if s.norm() < 1e-14 {
                break;
            }
            if let Some((ft, gt)) = f(trial.as_slice()) {
                if ft.is_finite() && ft <= fx + 1e-4 * g.dot(&s) {
                    accepted = Some((trial, ft, DVector::from_vec(gt)));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };

        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(dim, dim);
            let a = &i - &s * y.transpose() * rho;
            let b = &i - &y * s.transpose() * rho;
            h = &a * &h * &b + &s * s.transpose() * rho;
        }
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        if improvement.abs() <= opts.f_tol * (1.0 + fx.abs()) {
            break;
        }
    }
    Some(BfgsResult {
        x: x.as_slice().to_vec(),
        value: fx,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((v, g))
        };
        let opts = BfgsOptions {
            max_iters: 500,
            ..Default::default()
        };
        let r = minimize(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]));
        let r = minimize(f, &[0.0], &[-1.0], &[1.0], &BfgsOptions::default()).unwrap();
        assert_eq!(r.x, vec![1.0]);
    }
}
