//! Exact binomial tails and Clopper-Pearson intervals.
//!
//! Tails are summed in log space from the term nearest the cut, moving away
//! from the mode, so they stay accurate for millions of trials and for
//! probabilities far below `f64::EPSILON`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

fn ln_pmf(n: u64, k: u64, p: f64) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
    let a = if k == 0 { 0.0 } else { kf * p.ln() };
    let b = if k == n { 0.0 } else { (nf - kf) * (-p).ln_1p() };
    ln_choose + a + b
}

/// `ln Σ t_i` over terms that decrease geometrically (or faster) away from
/// `start`, stepping with `ratio(i)` = `t_next / t_i` until the remainder is
/// negligible or `stop` is reached.
fn ln_sum_away_from_mode(
    ln_start: f64,
    start: u64,
    stop: u64,
    up: bool,
    ratio: impl Fn(u64) -> f64,
) -> f64 {
    let mut total = 1.0f64;
    let mut term = 1.0f64;
    let mut i = start;
    while i != stop {
        let r = ratio(i);
        term *= r;
        i = if up { i + 1 } else { i - 1 };
        total += term;
        // Ratios only shrink further out, so the rest is at most a geometric tail.
        if r < 1.0 && term * r / (1.0 - r) <= 1e-17 * total {
            break;
        }
        if term == 0.0 {
            break;
        }
    }
    ln_start + total.ln()
}

/// `ln P(X ≥ k)` for `X ~ Binomial(n, p)`.
pub fn ln_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 || p >= 1.0 {
        return 0.0;
    }
    if k > n || p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let q = 1.0 - p;
    let odds = p / q;
    let mode = ((n + 1) as f64 * p).floor() as u64;
    if k > mode {
        ln_sum_away_from_mode(ln_pmf(n, k, p), k, n, true, |i| {
            (n - i) as f64 / (i + 1) as f64 * odds
        })
    } else {
        let below = ln_sum_away_from_mode(ln_pmf(n, k - 1, p), k - 1, 0, false, |i| {
            i as f64 / (n - i + 1) as f64 / odds
        });
        (-below.exp()).ln_1p()
    }
}

/// `ln P(X ≤ k)` for `X ~ Binomial(n, p)`.
pub fn ln_lower_tail(n: u64, k: u64, p: f64) -> f64 {
    if k >= n {
        return 0.0;
    }
    ln_upper_tail(n, n - k, 1.0 - p)
}

/// Solves `g(p) = target` for monotone `g` on `[lo, hi]` by bisection.
fn bisect(mut lo: f64, mut hi: f64, increasing: bool, g: impl Fn(f64) -> f64, target: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let above = g(mid) > target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided Clopper-Pearson interval with total miss probability `alpha`.
pub fn clopper_pearson_alpha(successes: u64, trials: u64, alpha: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if successes > trials {
        return Err(Error::invalid("more successes than trials"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let target = (0.5 * alpha).ln();
    let p_hat = successes as f64 / trials as f64;
    let lower = if successes == 0 {
        0.0
    } else {
        bisect(0.0, p_hat, true, |p| ln_upper_tail(trials, successes, p), target)
    };
    let upper = if successes == trials {
        1.0
    } else {
        bisect(p_hat, 1.0, false, |p| ln_lower_tail(trials, successes, p), target)
    };
    Ok((lower.min(p_hat), upper.max(p_hat)))
}

/// Two-sided Clopper-Pearson interval at the given confidence level.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    clopper_pearson_alpha(successes, trials, 1.0 - confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

    #[test]
    fn tails_match_direct_sums() {
        for &(n, p) in &[(20u64, 0.3), (50, 0.9), (7, 0.05)] {
            let d = Binomial::new(p, n).unwrap();
            for k in 0..=n {
                let up = ln_upper_tail(n, k, p).exp();
                let direct = if k == 0 { 1.0 } else { d.sf(k - 1) };
                assert!((up - direct).abs() < 1e-12, "n={n} k={k}: {up} vs {direct}");
                let low = ln_lower_tail(n, k, p).exp();
                assert!((low - d.cdf(k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_beta_quantiles_at_moderate_n() {
        let alpha = 0.01;
        for &(k, n) in &[(3u64, 40u64), (97, 100), (500, 1000), (1, 10)] {
            let (lo, hi) = clopper_pearson_alpha(k, n, alpha).unwrap();
            let lo_ref = Beta::new(k as f64, (n - k + 1) as f64)
                .unwrap()
                .inverse_cdf(alpha / 2.0);
            let hi_ref = Beta::new((k + 1) as f64, (n - k) as f64)
                .unwrap()
                .inverse_cdf(1.0 - alpha / 2.0);
            assert!((lo - lo_ref).abs() < 1e-9, "{k}/{n}: {lo} vs {lo_ref}");
            assert!((hi - hi_ref).abs() < 1e-9, "{k}/{n}: {hi} vs {hi_ref}");
        }
    }

    #[test]
    fn all_successes_give_one_sided_bound() {
        let n = 1000;
        let (lo, hi) = clopper_pearson_alpha(n, n, 0.02).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 0.01f64.powf(1.0 / n as f64)).abs() < 1e-12);
    }

    #[test]
    fn million_trials_at_extreme_confidence() {
        let (lo, hi) = clopper_pearson_alpha(987_000, 1_000_000, 1e-10).unwrap();
        assert!(lo < 0.987 && hi > 0.987);
        assert!(lo > 0.986 && hi < 0.988);
        let at_lo = ln_upper_tail(1_000_000, 987_000, lo).exp();
        assert!((at_lo / 5e-11 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(clopper_pearson(1, 0, 0.9).is_err());
        assert!(clopper_pearson(3, 2, 0.9).is_err());
        assert!(clopper_pearson(1, 2, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn interval_brackets_estimate(n in 1u64..5000, frac in 0.0f64..=1.0, conf in 0.5f64..0.999999) {
            let k = ((n as f64) * frac).round() as u64;
            let (lo, hi) = clopper_pearson(k, n, conf).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        }

        #[test]
        fn interval_narrows_with_more_trials(n in 10u64..2000, frac in 0.05f64..0.95) {
            let k = ((n as f64) * frac).round() as u64;
            let (lo1, hi1) = clopper_pearson(k, n, 0.99).unwrap();
            let (lo4, hi4) = clopper_pearson(4 * k, 4 * n, 0.99).unwrap();
            prop_assert!(hi4 - lo4 < hi1 - lo1);
        }
    }
}
