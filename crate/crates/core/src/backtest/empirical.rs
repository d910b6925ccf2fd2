use super::{backtest_points, count_breaches, Horizon, MIN_PRE_WINDOW_POINTS};
use crate::error::{Error, Result};

/// Largest scalar the non-parametric fit may return.
pub const MAX_EMPIRICAL_SCALAR: f64 = 100.0;
/// Clamp for kurtosis-implied Student-t degrees of freedom.
pub const NU_RANGE: (f64, f64) = (4.5, 100.0);

/// Smallest `c >= 0` whose in-sample rolling exception rate is at most
/// `alpha`.
///
/// The rate is a step function of `c`. For rows with a positive reserve a
/// breach occurs exactly when `c <= -X/rho`, so achieving intervals open just
/// above one of those ratios; the result is the first representable value
/// there.
pub fn fit_empirical_scalar(returns: &[f64], alpha: f64, horizon: Horizon, window: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ProbabilityDomain(alpha));
    }
    let (reserves, realized) = backtest_points(returns, window, horizon)?;
    let points = reserves.len();
    if points < MIN_PRE_WINDOW_POINTS {
        return Err(Error::InsufficientSample {
            needed: window + horizon.periods() - 1 + MIN_PRE_WINDOW_POINTS,
            got: returns.len(),
        });
    }
    let allowed = (alpha * points as f64 + 1e-9).floor() as usize;

    let mut fixed = 0;
    let mut rising = Vec::new(); // breach iff c <= tau
    let mut falling = Vec::new(); // breach iff c >= tau
    for (&rho, &x) in reserves.iter().zip(&realized) {
        if rho > 0.0 {
            rising.push(-x / rho);
        } else if rho < 0.0 {
            falling.push(-x / rho);
        } else if x <= 0.0 {
            fixed += 1;
        }
    }
    rising.sort_unstable_by(f64::total_cmp);
    falling.sort_unstable_by(f64::total_cmp);
    let breaches = |c: f64| {
        let up = rising.len() - rising.partition_point(|&t| t < c);
        let down = falling.partition_point(|&t| t <= c);
        fixed + up + down
    };

    let candidates = std::iter::once(0.0).chain(rising.iter().filter(|&&t| t >= 0.0).map(|&t| (t + 0.0).next_up()));
    for c in candidates {
        if c > MAX_EMPIRICAL_SCALAR {
            break;
        }
        if breaches(c) <= allowed {
            return Ok(polish(c, allowed, &reserves, &realized));
        }
    }
    Err(Error::UnreachableTarget {
        target: alpha,
        rate: breaches(MAX_EMPIRICAL_SCALAR) as f64 / points as f64,
        limit: MAX_EMPIRICAL_SCALAR,
    })
}

/// Moves `c` by a few ulps so it is minimal under the direct breach test
/// `X + c * rho <= 0`, which can round differently from the ratio.
fn polish(mut c: f64, allowed: usize, reserves: &[f64], realized: &[f64]) -> f64 {
    for _ in 0..64 {
        if count_breaches(reserves, realized, c) <= allowed {
            break;
        }
        c = c.next_up();
    }
    for _ in 0..64 {
        let down = c.next_down();
        if down < 0.0 || count_breaches(reserves, realized, down) > allowed {
            break;
        }
        c = down;
    }
    c
}

/// Excess kurtosis from biased central moments.
pub fn excess_kurtosis(x: &[f64]) -> Result<f64> {
    if x.len() < 4 {
        return Err(Error::InsufficientSample { needed: 4, got: x.len() });
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(a, b), v| {
        let d = (v - mean) * (v - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 <= 0.0 {
        return Err(Error::InvalidParameter("kurtosis of a constant series".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Student-t degrees of freedom matching an excess kurtosis, `4 + 6/k`,
/// clamped to [`NU_RANGE`]. Non-positive excess kurtosis maps to the upper
/// end.
pub fn nu_from_kurtosis(k: f64) -> f64 {
    if k <= 0.0 {
        return NU_RANGE.1;
    }
    (4.0 + 6.0 / k).clamp(NU_RANGE.0, NU_RANGE.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::rng::RngStream;

    fn sample(seed: u64, len: usize) -> Vec<f64> {
        DistributionSpec::student_t(6.0).unwrap().sample(&RngStream::new(seed, 0), len).unwrap()
    }

    #[test]
    fn fitted_scalar_is_minimal() {
        for seed in 0..5 {
            let r = sample(seed, 2000);
            for horizon in [Horizon::OnePeriod, Horizon::TwoPeriodOverlap] {
                let c = fit_empirical_scalar(&r, 0.01, horizon, 50).unwrap();
                let (rho, x) = backtest_points(&r, 50, horizon).unwrap();
                let allowed = (0.01 * rho.len() as f64 + 1e-9).floor() as usize;
                assert!(count_breaches(&rho, &x, c) <= allowed);
                assert!(count_breaches(&rho, &x, c.next_down()) > allowed || c == 0.0);
            }
        }
    }

    #[test]
    fn doubling_returns_keeps_scalar() {
        let r = sample(9, 1500);
        let doubled: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let a = fit_empirical_scalar(&r, 0.01, Horizon::OnePeriod, 50).unwrap();
        let b = fit_empirical_scalar(&doubled, 0.01, Horizon::OnePeriod, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn acceptable_history_gives_zero() {
        let r: Vec<f64> = (0..200).map(|i| 0.01 + 0.001 * ((i * 7) % 11) as f64).collect();
        assert_eq!(fit_empirical_scalar(&r, 0.01, Horizon::OnePeriod, 50).unwrap(), 0.0);
    }

    #[test]
    fn unreachable_target() {
        // Zero reserve and zero P&L breach for every c.
        let r = vec![0.0; 200];
        let err = fit_empirical_scalar(&r, 0.01, Horizon::OnePeriod, 50).unwrap_err();
        assert!(matches!(err, Error::UnreachableTarget { .. }), "{err}");
    }

    #[test]
    fn kurtosis_to_nu() {
        assert!((nu_from_kurtosis(3.0) - 6.0).abs() < 1e-12);
        assert_eq!(nu_from_kurtosis(-0.1), 100.0);
        assert_eq!(nu_from_kurtosis(100.0), 4.5);
        let k = excess_kurtosis(&sample(1, 400_000)).unwrap();
        assert!((k - 3.0).abs() < 0.6, "{k}");
    }
}
