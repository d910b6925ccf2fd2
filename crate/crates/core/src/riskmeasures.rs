//! Theoretical and empirical VaR/ES, the exception rate and the classical
//! scaling benchmarks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::distributions::DistributionSpec;
use crate::error::{check_probability, invalid, Error, Result};
use crate::estimators::floor_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    #[serde(alias = "VaR")]
    Var,
    #[serde(alias = "ES")]
    Es,
}

/// A risk measure `VaR_alpha` or `ES_alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRisk")]
pub struct RiskMeasureSpec {
    pub kind: RiskKind,
    pub alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRisk {
    kind: RiskKind,
    alpha: f64,
}

impl TryFrom<RawRisk> for RiskMeasureSpec {
    type Error = Error;

    fn try_from(raw: RawRisk) -> Result<Self> {
        Self::new(raw.kind, raw.alpha)
    }
}

impl RiskMeasureSpec {
    pub fn new(kind: RiskKind, alpha: f64) -> Result<Self> {
        check_probability(alpha)?;
        Ok(Self { kind, alpha })
    }

    pub fn var(alpha: f64) -> Result<Self> {
        Self::new(RiskKind::Var, alpha)
    }

    pub fn es(alpha: f64) -> Result<Self> {
        Self::new(RiskKind::Es, alpha)
    }

    /// Risk of the law itself.
    pub fn of_law(&self, law: &DistributionSpec) -> Result<f64> {
        match self.kind {
            RiskKind::Var => law.true_var(self.alpha),
            RiskKind::Es => law.true_es(self.alpha),
        }
    }

    /// Empirical risk of a sample; see [`empirical_var`] and [`empirical_es`].
    pub fn of_sample(&self, sample: &[f64]) -> Result<f64> {
        let mut buf = sample.to_vec();
        self.of_sample_in_place(&mut buf)
    }

    /// As [`Self::of_sample`] but reorders `sample` instead of copying it.
    pub fn of_sample_in_place(&self, sample: &mut [f64]) -> Result<f64> {
        let k = tail_rank(sample.len(), self.alpha)?;
        sample.select_nth_unstable_by(k - 1, f64::total_cmp);
        Ok(match self.kind {
            RiskKind::Var => -sample[k - 1],
            RiskKind::Es => -sample[..k].iter().sum::<f64>() / k as f64,
        })
    }
}

impl std::fmt::Display for RiskMeasureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            RiskKind::Var => write!(f, "VaR_{}", self.alpha),
            RiskKind::Es => write!(f, "ES_{}", self.alpha),
        }
    }
}

/// `floor(M * alpha)`, which must be at least 1.
pub fn tail_rank(m: usize, alpha: f64) -> Result<usize> {
    check_probability(alpha)?;
    let k = floor_rank(m as f64 * alpha);
    if k == 0 {
        return Err(Error::InsufficientSample {
            needed: (1.0 / alpha).ceil() as usize,
            got: m,
        });
    }
    Ok(k)
}

/// Negated order statistic of rank `floor(M * alpha)`.
pub fn empirical_var(sample: &[f64], alpha: f64) -> Result<f64> {
    RiskMeasureSpec::var(alpha)?.of_sample(sample)
}

/// Negated mean of the `floor(M * alpha)` lowest values.
pub fn empirical_es(sample: &[f64], alpha: f64) -> Result<f64> {
    RiskMeasureSpec::es(alpha)?.of_sample(sample)
}

/// Fraction of strictly negative secured positions.
pub fn exception_rate(secured: &[f64]) -> Result<f64> {
    if secured.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    Ok(secured.iter().filter(|s| **s < 0.0).count() as f64 / secured.len() as f64)
}

/// `sqrt(m)`; values of `m` below one scale down.
pub fn sqrt_time_scalar(m: f64) -> Result<f64> {
    if !(m.is_finite() && m > 0.0) {
        return Err(invalid(format!("horizon ratio must be positive, got {m}")));
    }
    Ok(m.sqrt())
}

/// `-m * mu + sqrt(m) * (rho_1d + mu)`.
pub fn mean_adjusted_time_scale(rho_1d: f64, mu_hat: f64, m: u32) -> f64 {
    let m = f64::from(m);
    -m * mu_hat + m.sqrt() * (rho_1d + mu_hat)
}

/// `rho_alpha(Z) / rho_beta(Z)` for a standard normal `Z`.
pub fn normal_risk_ratio(kind: RiskKind, alpha: f64, beta: f64) -> Result<f64> {
    for p in [alpha, beta] {
        if !(p > 0.0 && p < 0.5) {
            return Err(invalid(format!("confidence levels must lie in (0, 0.5), got {p}")));
        }
    }
    let z = DistributionSpec::standard_normal();
    let rho = |p: f64| match kind {
        RiskKind::Var => z.true_var(p),
        RiskKind::Es => z.true_es(p),
    };
    Ok(rho(alpha)? / rho(beta)?)
}

/// `sqrt(m) * Phi^{-1}(alpha) / q_nu(alpha)` where `q_nu` is the quantile of
/// the unit-variance Student-t law, so both tails are compared at equal
/// variance. `nu = inf` gives `sqrt(m)`.
pub fn clt_adjusted_sqrt_scalar(nu: f64, alpha: f64, m: u32) -> Result<f64> {
    check_probability(alpha)?;
    if !(nu > 2.0) {
        return Err(invalid(format!("degrees of freedom must exceed 2, got {nu}")));
    }
    let root = f64::from(m).sqrt();
    if nu.is_infinite() {
        return Ok(root);
    }
    let t = StudentsT::new(0.0, 1.0, nu).map_err(|e| invalid(e.to_string()))?;
    let z = DistributionSpec::standard_normal().quantile(alpha)?;
    Ok(root * z / (t.inverse_cdf(alpha) * ((nu - 2.0) / nu).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Green,
    Yellow,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub zone: Zone,
    /// `P(Bin(window, p) >= first yellow count)`.
    pub tail_probability: f64,
    pub expected_exceptions: f64,
}

/// First yellow and first red exception counts: the counts at which the
/// cumulative `Bin(window, 1%)` probability reaches 95% and 99.99%.
pub fn zone_thresholds(window: u64) -> (u64, u64) {
    let bin = Binomial::new(0.01, window).expect("valid binomial");
    let first = |level: f64| (0..=window).find(|&k| bin.cdf(k) >= level).unwrap_or(window);
    (first(0.95), first(0.9999))
}

/// Three-zone classification of `exceptions` in a `window` plus the
/// probability of reaching the yellow zone when the true exception
/// probability is `p`.
pub fn traffic_light(exceptions: u64, window: u64, p: f64) -> Result<TrafficLight> {
    if window == 0 || exceptions > window {
        return Err(invalid(format!(
            "need 0 <= exceptions <= window and window >= 1, got {exceptions} of {window}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityDomain(p));
    }
    let (yellow, red) = zone_thresholds(window);
    let zone = if exceptions >= red {
        Zone::Red
    } else if exceptions >= yellow {
        Zone::Yellow
    } else {
        Zone::Green
    };
    let tail_probability = if yellow == 0 {
        1.0
    } else {
        let bin = Binomial::new(p, window).map_err(|e| invalid(e.to_string()))?;
        bin.sf(yellow - 1)
    };
    Ok(TrafficLight {
        zone,
        tail_probability,
        expected_exceptions: window as f64 * p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn empirical_var_rank_read() {
        let mut x = vec![-5.0, -1.0];
        x.extend((0..=97).map(f64::from));
        assert_eq!(x.len(), 100);
        assert_eq!(empirical_var(&x, 0.02).unwrap(), 1.0);
    }

    #[test]
    fn empirical_es_three_lowest() {
        let mut x: Vec<f64> = (0..97).map(f64::from).collect();
        x.extend([-3.0, -2.0, -1.0]);
        assert_eq!(empirical_es(&x, 0.03).unwrap(), 2.0);
        assert!(empirical_es(&x, 0.03).unwrap() >= empirical_var(&x, 0.03).unwrap());
    }

    #[test]
    fn rank_zero_is_an_error() {
        assert!(matches!(
            empirical_var(&[1.0; 50], 0.01),
            Err(Error::InsufficientSample { .. })
        ));
        assert!(empirical_es(&[1.0; 99], 0.01).is_err());
    }

    #[test]
    fn normal_convergence() {
        let z = DistributionSpec::standard_normal().sample(&RngStream::new(1, 9), 1_000_000).unwrap();
        assert!((empirical_var(&z, 0.01).unwrap() - 2.3263478740408408).abs() < 0.01);
        // phi(Phi^{-1}(0.025)) / 0.025
        assert!((empirical_es(&z, 0.025).unwrap() - 2.337802792201413).abs() < 0.01);
    }

    #[test]
    fn exception_rate_examples() {
        assert_eq!(exception_rate(&[1.0, -1.0, 2.0, -3.0]).unwrap(), 0.5);
        assert_eq!(exception_rate(&[1.0, 0.0, 2.0]).unwrap(), 0.0);
        assert!(exception_rate(&[]).is_err());
    }

    #[test]
    fn sqrt_and_mean_adjusted_rules() {
        assert!((sqrt_time_scalar(10.0).unwrap() - 3.1623).abs() < 1e-4);
        assert_eq!(sqrt_time_scalar(4.0).unwrap(), 2.0);
        assert!((sqrt_time_scalar(0.1).unwrap() - 0.3162).abs() < 1e-4);
        assert!(sqrt_time_scalar(0.0).is_err());
        assert_eq!(mean_adjusted_time_scale(2.0, 0.0, 4), 4.0);
        assert!((mean_adjusted_time_scale(2.326, 0.7, 1) - 2.326).abs() < 1e-12);
        let v = mean_adjusted_time_scale(2.326, 0.1, 10);
        assert!((v - (-1.0 + 10f64.sqrt() * 2.426)).abs() < 1e-12);
        assert!((v - 6.672).abs() < 1e-3);
    }

    #[test]
    fn normal_ratio_values() {
        let d1 = normal_risk_ratio(RiskKind::Var, 0.01, 0.02).unwrap();
        // scipy: norm.ppf(0.01) / norm.ppf(0.02)
        assert!((d1 - 2.3263478740408408 / 2.053748910631823).abs() < 1e-12);
        assert!((d1 - 1.1330).abs() < 1e-3);
        assert_eq!(normal_risk_ratio(RiskKind::Es, 0.03, 0.03).unwrap(), 1.0);
        let z = DistributionSpec::standard_normal();
        let es = normal_risk_ratio(RiskKind::Es, 0.01, 0.025).unwrap();
        let direct = z.true_es(0.01).unwrap() / z.true_es(0.025).unwrap();
        assert!(((es - direct) / direct).abs() < 1e-9);
        assert!(normal_risk_ratio(RiskKind::Var, 0.6, 0.01).is_err());
    }

    #[test]
    fn clt_adjusted_values() {
        let v = clt_adjusted_sqrt_scalar(5.0, 0.01, 10).unwrap();
        // scipy: sqrt(10) * norm.ppf(0.01) / (t.ppf(0.01, 5) * sqrt(3/5))
        assert!((v - 10f64.sqrt() * 2.3263478740408408 / (3.3649299989072756 * 0.6f64.sqrt())).abs() < 1e-9);
        assert!((v - 2.82).abs() < 0.01);
        let v3 = clt_adjusted_sqrt_scalar(3.0, 0.01, 10).unwrap();
        let raw = 10f64.sqrt() * 2.3263478740408408 / 4.540702858471386;
        assert!((v3 - raw * 3f64.sqrt()).abs() < 1e-9);
        assert!(clt_adjusted_sqrt_scalar(2.0, 0.01, 10).is_err());
        assert_eq!(clt_adjusted_sqrt_scalar(f64::INFINITY, 0.01, 10).unwrap(), 10f64.sqrt());
    }

    #[test]
    fn traffic_light_values() {
        assert_eq!(zone_thresholds(250), (5, 10));
        let t = traffic_light(0, 250, 0.018).unwrap();
        assert_eq!(t.zone, Zone::Green);
        // scipy: binom.sf(4, 250, 0.018)
        assert!((t.tail_probability - 0.4687572653692988).abs() < 1e-10, "{}", t.tail_probability);
        assert_eq!(traffic_light(7, 250, 0.018).unwrap().tail_probability, t.tail_probability);
        assert_eq!(traffic_light(4, 250, 0.01).unwrap().zone, Zone::Green);
        assert_eq!(traffic_light(5, 250, 0.01).unwrap().zone, Zone::Yellow);
        assert_eq!(traffic_light(9, 250, 0.01).unwrap().zone, Zone::Yellow);
        assert_eq!(traffic_light(10, 250, 0.01).unwrap().zone, Zone::Red);
        assert_eq!(traffic_light(0, 250, 0.01).unwrap().expected_exceptions, 2.5);
        assert!(traffic_light(251, 250, 0.01).is_err());
    }

    #[test]
    fn risk_spec_config() {
        let r: RiskMeasureSpec = toml::from_str("kind = \"es\"\nalpha = 0.025").unwrap();
        assert_eq!(r, RiskMeasureSpec::es(0.025).unwrap());
        assert!(toml::from_str::<RiskMeasureSpec>("kind = \"var\"\nalpha = 0").is_err());
        assert!(toml::from_str::<RiskMeasureSpec>("kind = \"var\"").is_err());
    }
}
