use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::empirical::{excess_kurtosis, fit_empirical_scalar, nu_from_kurtosis};
use super::{BacktestConfig, MIN_PRE_WINDOW_POINTS};
use crate::calibration::{calibrate, CalibrationProblem, SampleConstruction, SolveOptions};
use crate::distributions::DistributionSpec;
use crate::error::{invalid, Error, Result};
use crate::estimators::EstimatorSpec;
use crate::riskmeasures::{normal_risk_ratio, sqrt_time_scalar, RiskKind, RiskMeasureSpec};

/// Degrees of freedom at which the Student-t scalar is calibrated for the
/// parametric data-driven method; values in between are interpolated in
/// `1/nu`.
pub const NU_GRID: [f64; 13] = [4.5, 5.0, 5.5, 6.0, 7.0, 8.0, 10.0, 12.0, 15.0, 20.0, 30.0, 50.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSource {
    /// The same scalar for every horizon.
    Fixed { c: f64 },
    /// `sqrt(h)` for an `h`-period horizon.
    SqrtTime,
    /// `d1(target, 1/n) * sqrt(h)`.
    NormalRatioTimesSqrt,
    /// Monte Carlo `c*` of the worst-case estimator under a normal law.
    GaussianUnbiasedCalibrated,
    StudentTUnbiasedCalibrated { nu: f64 },
    /// Student-t `c*` at the degrees of freedom implied by pre-window
    /// kurtosis.
    EmpiricalParametric,
    /// Scalar matching the pre-window exception rate to the target.
    EmpiricalNonParametric,
}

impl ScalarSource {
    pub fn is_data_driven(&self) -> bool {
        matches!(self, Self::EmpiricalParametric | Self::EmpiricalNonParametric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMethod", into = "RawMethod")]
pub struct MethodSpec {
    pub id: u32,
    pub label: String,
    pub source: ScalarSource,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawMethod {
    Standard(u32),
    Custom {
        id: u32,
        #[serde(default)]
        label: Option<String>,
        source: ScalarSource,
    },
}

impl TryFrom<RawMethod> for MethodSpec {
    type Error = Error;

    fn try_from(raw: RawMethod) -> Result<Self> {
        match raw {
            RawMethod::Standard(id) => Self::standard(id),
            RawMethod::Custom { id, label, source } => {
                Self::new(id, label.unwrap_or_else(|| format!("method {id}")), source)
            }
        }
    }
}

impl From<MethodSpec> for RawMethod {
    fn from(m: MethodSpec) -> Self {
        Self::Custom {
            id: m.id,
            label: Some(m.label),
            source: m.source,
        }
    }
}

impl MethodSpec {
    pub fn new(id: u32, label: impl Into<String>, source: ScalarSource) -> Result<Self> {
        match source {
            ScalarSource::Fixed { c } if !(c.is_finite() && c >= 0.0) => {
                return Err(invalid(format!("fixed scalar must be finite and non-negative, got {c}")))
            }
            ScalarSource::StudentTUnbiasedCalibrated { nu } if !(nu > 2.0 && nu.is_finite()) => {
                return Err(invalid(format!("Student-t method needs nu > 2, got {nu}")))
            }
            _ => {}
        }
        Ok(Self {
            id,
            label: label.into(),
            source,
        })
    }

    /// The six reference methods, numbered 1 to 6.
    pub fn standard(id: u32) -> Result<Self> {
        let (label, source) = match id {
            1 => ("Non-scaled + sqrt rule", ScalarSource::SqrtTime),
            2 => ("Normal ratio + sqrt rule", ScalarSource::NormalRatioTimesSqrt),
            3 => ("Normal unbiased", ScalarSource::GaussianUnbiasedCalibrated),
            4 => ("Student-t unbiased (nu=6)", ScalarSource::StudentTUnbiasedCalibrated { nu: 6.0 }),
            5 => ("Empirical unbiased (Student-t)", ScalarSource::EmpiricalParametric),
            6 => ("Empirical unbiased (non-parametric)", ScalarSource::EmpiricalNonParametric),
            other => return Err(invalid(format!("standard methods are numbered 1 to 6, got {other}"))),
        };
        Self::new(id, label, source)
    }

    pub fn standard_set() -> Vec<Self> {
        (1..=6).map(|id| Self::standard(id).expect("valid id")).collect()
    }

    pub fn fixed(id: u32, c: f64) -> Result<Self> {
        Self::new(id, format!("Fixed c={c}"), ScalarSource::Fixed { c })
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}", self.id, self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPoint {
    pub law: String,
    pub c_star: f64,
    pub mc_std_error: f64,
}

/// Inputs and outputs of the Monte Carlo calibrations behind a method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub mc_draws: usize,
    pub seed: u64,
    pub tol: f64,
    pub window: usize,
    pub horizon_periods: usize,
    pub target_rate: f64,
    pub estimator: EstimatorSpec,
    pub points: Vec<CalibratedPoint>,
}

/// Resolves method scalars, caching Monte Carlo calibrations.
///
/// Every calibration uses the same seed, so the Student-t grid shares common
/// random numbers across `nu`.
#[derive(Debug)]
pub struct ScalarCalibrator {
    pub mc_draws: usize,
    pub seed: u64,
    pub opts: SolveOptions,
    cache: Mutex<HashMap<String, CalibratedPoint>>,
}

impl Default for ScalarCalibrator {
    fn default() -> Self {
        Self::new(200_000, 2024, SolveOptions::default())
    }
}

impl ScalarCalibrator {
    pub fn new(mc_draws: usize, seed: u64, opts: SolveOptions) -> Self {
        Self {
            mc_draws,
            seed,
            opts,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn problem(law: &DistributionSpec, config: &BacktestConfig) -> Result<CalibrationProblem> {
        let h = config.horizon.periods() as u32;
        let target = if h == 1 { law.clone() } else { law.clone().convolved(h)? };
        Ok(CalibrationProblem {
            label: None,
            estimation_law: law.clone(),
            n: config.window,
            construction: SampleConstruction::Iid,
            target_law: target,
            risk: RiskMeasureSpec::var(config.target_rate)?,
            estimator: EstimatorSpec::WorstCase,
            mean_adjusted: false,
        })
    }

    fn key(law: &DistributionSpec, config: &BacktestConfig) -> String {
        format!("{law}|{}|{}|{}", config.window, config.horizon.periods(), config.target_rate)
    }

    fn ensure(&self, law: &DistributionSpec, config: &BacktestConfig) -> Result<CalibratedPoint> {
        let key = Self::key(law, config);
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let r = calibrate(&Self::problem(law, config)?, self.mc_draws, self.seed, self.opts)?;
        let point = CalibratedPoint {
            law: law.to_string(),
            c_star: r.c_star,
            mc_std_error: r.mc_std_error,
        };
        self.cache.lock().expect("cache lock").insert(key, point.clone());
        Ok(point)
    }

    fn cached(&self, law: &DistributionSpec, config: &BacktestConfig) -> Result<f64> {
        self.cache
            .lock()
            .expect("cache lock")
            .get(&Self::key(law, config))
            .map(|p| p.c_star)
            .ok_or_else(|| invalid(format!("no calibration prepared for {law}")))
    }

    fn laws(source: &ScalarSource) -> Result<Vec<DistributionSpec>> {
        Ok(match source {
            ScalarSource::GaussianUnbiasedCalibrated => vec![DistributionSpec::standard_normal()],
            ScalarSource::StudentTUnbiasedCalibrated { nu } => vec![DistributionSpec::student_t(*nu)?],
            ScalarSource::EmpiricalParametric => {
                NU_GRID.iter().map(|&nu| DistributionSpec::student_t(nu)).collect::<Result<_>>()?
            }
            _ => Vec::new(),
        })
    }

    /// Runs the calibrations a method needs. Must precede [`Self::scalar`].
    pub fn prepare(&self, method: &MethodSpec, config: &BacktestConfig) -> Result<Option<CalibrationRecord>> {
        let laws = Self::laws(&method.source)?;
        if laws.is_empty() {
            return Ok(None);
        }
        let points = laws.iter().map(|law| self.ensure(law, config)).collect::<Result<Vec<_>>>()?;
        Ok(Some(CalibrationRecord {
            mc_draws: self.mc_draws,
            seed: self.seed,
            tol: self.opts.tol,
            window: config.window,
            horizon_periods: config.horizon.periods(),
            target_rate: config.target_rate,
            estimator: EstimatorSpec::WorstCase,
            points,
        }))
    }

    /// Student-t scalar at `nu`, interpolated linearly in `1/nu` on
    /// [`NU_GRID`].
    pub fn student_t_scalar(&self, nu: f64, config: &BacktestConfig) -> Result<f64> {
        let nu = nu.clamp(NU_GRID[0], NU_GRID[NU_GRID.len() - 1]);
        let hi = NU_GRID.iter().position(|&g| g >= nu).expect("clamped");
        let c_hi = self.cached(&DistributionSpec::student_t(NU_GRID[hi])?, config)?;
        if hi == 0 || NU_GRID[hi] == nu {
            return Ok(c_hi);
        }
        let c_lo = self.cached(&DistributionSpec::student_t(NU_GRID[hi - 1])?, config)?;
        let (x, x_lo, x_hi) = (1.0 / nu, 1.0 / NU_GRID[hi - 1], 1.0 / NU_GRID[hi]);
        Ok(c_hi + (c_lo - c_hi) * (x - x_hi) / (x_lo - x_hi))
    }

    /// The scalar for one portfolio given its history before the backtest
    /// point, plus the fitted degrees of freedom where relevant.
    pub fn scalar(&self, method: &MethodSpec, history: &[f64], config: &BacktestConfig) -> Result<(f64, Option<f64>)> {
        let h = config.horizon.periods() as f64;
        match method.source {
            ScalarSource::Fixed { c } => Ok((c, None)),
            ScalarSource::SqrtTime => Ok((sqrt_time_scalar(h)?, None)),
            ScalarSource::NormalRatioTimesSqrt => {
                let d1 = normal_risk_ratio(RiskKind::Var, config.target_rate, 1.0 / config.window as f64)?;
                Ok((d1 * sqrt_time_scalar(h)?, None))
            }
            ScalarSource::GaussianUnbiasedCalibrated => {
                Ok((self.cached(&DistributionSpec::standard_normal(), config)?, None))
            }
            ScalarSource::StudentTUnbiasedCalibrated { nu } => {
                Ok((self.cached(&DistributionSpec::student_t(nu)?, config)?, None))
            }
            ScalarSource::EmpiricalParametric => {
                let needed = config.window + config.horizon.periods() - 1 + MIN_PRE_WINDOW_POINTS;
                if history.len() < needed {
                    return Err(Error::InsufficientSample {
                        needed,
                        got: history.len(),
                    });
                }
                let nu = nu_from_kurtosis(excess_kurtosis(history)?);
                Ok((self.student_t_scalar(nu, config)?, Some(nu)))
            }
            ScalarSource::EmpiricalNonParametric => Ok((
                fit_empirical_scalar(history, config.target_rate, config.horizon, config.window)?,
                None,
            )),
        }
    }
}
