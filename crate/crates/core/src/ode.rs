//! Classical fixed-step Runge-Kutta integration.

/// One RK4 step of `ẋ = f(x)` from `x` with step `h`.
pub fn rk4_step<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let shifted = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, k)| b + s * k).collect()
    };
    let k1 = f(x);
    let k2 = f(&shifted(x, &k1, 0.5 * h));
    let k3 = f(&shifted(x, &k2, 0.5 * h));
    let k4 = f(&shifted(x, &k3, h));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates `ẋ = f(x)` over `[0, horizon]` with `steps` equal RK4 steps and
/// returns the final state.
pub fn integrate<F>(f: F, x0: &[f64], horizon: f64, steps: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let h = horizon / steps as f64;
    let mut x = x0.to_vec();
    for _ in 0..steps {
        x = rk4_step(&f, &x, h);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{jet_engine_system, ControlAffine};

    #[test]
    fn exponential_decay_is_accurate() {
        let x = integrate(|x| vec![-x[0]], &[1.0], 1.0, 100);
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn fourth_order_richardson_ratio_on_jet_engine() {
        let sys = jet_engine_system();
        let f = |x: &[f64]| sys.velocity(x, &[0.5]);
        let x0 = [0.5, 0.2];
        let finals: Vec<Vec<f64>> = [1e-2f64, 5e-3, 2.5e-3]
            .iter()
            .map(|h| integrate(f, &x0, 1.0, (1.0 / *h).round() as usize))
            .collect();
        let diff = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        let ratio = diff(&finals[0], &finals[1]) / diff(&finals[1], &finals[2]);
        assert!((8.0..32.0).contains(&ratio), "ratio {ratio}");
    }
}
