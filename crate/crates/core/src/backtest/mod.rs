//! Rolling-window backtests of scaled first-order-statistic VaR reserves.
//!
//! Each backtest point uses the reserve `rho_t = -min(R_t, ..., R_{t+n-1})`
//! and the realized return of the following period (or the sum of the next
//! two). A breach is `X_t + c * rho_t <= 0`.

mod empirical;
mod ingest;
mod methods;
mod report;
mod synthetic;

pub use empirical::{excess_kurtosis, fit_empirical_scalar, nu_from_kurtosis, MAX_EMPIRICAL_SCALAR, NU_RANGE};
pub use ingest::{ingest_reader, ingest_returns, DropKind, DroppedRow, IngestOptions, IngestReport, Layout};
pub use methods::{CalibratedPoint, CalibrationRecord, MethodSpec, ScalarCalibrator, ScalarSource, NU_GRID};
pub use report::{
    aggregate_methods, density_report, write_density_csv, write_portfolio_csv, write_summary_csv, DensityKind,
    DensityRow, MethodSummary, DENSITY_BIN,
};
pub use synthetic::{synthetic_panel, SyntheticLaw, SYNTHETIC_PORTFOLIOS, SYNTHETIC_PRE_WINDOW};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_BACKTEST_LENGTH: usize = 625;
pub const TARGET_RATE: f64 = 0.01;
/// Backtest points a pre-window must supply for the data-driven methods.
pub const MIN_PRE_WINDOW_POINTS: usize = 50;

/// Equal-length return series for a set of portfolios.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    ids: Vec<String>,
    /// Empty for generated panels.
    dates: Vec<NaiveDate>,
    series: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn new(ids: Vec<String>, dates: Vec<NaiveDate>, series: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != series.len() || ids.is_empty() {
            return Err(invalid(format!("{} ids for {} series", ids.len(), series.len())));
        }
        let len = series[0].len();
        if series.iter().any(|s| s.len() != len) {
            return Err(invalid("return series must share one length"));
        }
        if !dates.is_empty() && dates.len() != len {
            return Err(invalid(format!("{} dates for series of length {len}", dates.len())));
        }
        if series.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("returns must be finite"));
        }
        Ok(Self { ids, dates, series })
    }

    pub fn without_dates(ids: Vec<String>, series: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(ids, Vec::new(), series)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.series[i]
    }

    pub fn portfolios(&self) -> usize {
        self.ids.len()
    }

    /// Observations per portfolio.
    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every series multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            ids: self.ids.clone(),
            dates: self.dates.clone(),
            series: self.series.iter().map(|s| s.iter().map(|v| v * k).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    #[default]
    OnePeriod,
    /// Overlapping sums of the next two periods.
    TwoPeriodOverlap,
}

impl Horizon {
    pub fn periods(self) -> usize {
        match self {
            Horizon::OnePeriod => 1,
            Horizon::TwoPeriodOverlap => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// Estimation window `n`.
    pub window: usize,
    pub horizon: Horizon,
    pub target_rate: f64,
    /// Length of the backtest segment at the end of each series. Anything
    /// before it is the pre-window used by the data-driven methods. `None`
    /// backtests the whole series.
    pub backtest_length: Option<usize>,
    /// Refit data-driven scalars every this many backtest points, on data
    /// available at that point. Off by default.
    pub recalibrate_every: Option<usize>,
    /// Keep per-point records in the result.
    pub keep_records: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            horizon: Horizon::OnePeriod,
            target_rate: TARGET_RATE,
            backtest_length: Some(DEFAULT_BACKTEST_LENGTH),
            recalibrate_every: None,
            keep_records: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub reserve: f64,
    pub realized: f64,
    pub scalar: f64,
    pub breach: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioOutcome {
    pub id: String,
    /// Scalar in force at the first backtest point.
    pub scalar: f64,
    /// Fitted degrees of freedom for the parametric data-driven method.
    pub nu: Option<f64>,
    pub breaches: usize,
    pub points: usize,
    pub exception_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<WindowRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPortfolio {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub method: MethodSpec,
    pub config: BacktestConfig,
    pub portfolios: Vec<PortfolioOutcome>,
    pub skipped: Vec<SkippedPortfolio>,
    pub calibration: Option<CalibrationRecord>,
}

impl BacktestResult {
    pub fn rates(&self) -> Vec<f64> {
        self.portfolios.iter().map(|p| p.exception_rate).collect()
    }

    pub fn mean_rate(&self) -> f64 {
        mean(&self.rates())
    }

    /// Sample standard deviation of portfolio exception rates.
    pub fn sd_rate(&self) -> f64 {
        sample_sd(&self.rates())
    }

    pub fn mean_scalar(&self) -> f64 {
        mean(&self.portfolios.iter().map(|p| p.scalar).collect::<Vec<_>>())
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Reserves and realized values of a rolling backtest over `returns`.
pub fn backtest_points(returns: &[f64], window: usize, horizon: Horizon) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = horizon.periods();
    if window == 0 {
        return Err(invalid("window must be at least 1"));
    }
    if returns.len() < window + h {
        return Err(Error::InsufficientSample {
            needed: window + h,
            got: returns.len(),
        });
    }
    let count = returns.len() - window - (h - 1);
    let mut reserves = Vec::with_capacity(count);
    let mut realized = Vec::with_capacity(count);
    for t in 0..count {
        let min = returns[t..t + window].iter().copied().fold(f64::INFINITY, f64::min);
        reserves.push(-min);
        realized.push(returns[t + window..t + window + h].iter().sum());
    }
    Ok((reserves, realized))
}

/// Breach count with the weak convention `X + c * rho <= 0`.
pub fn count_breaches(reserves: &[f64], realized: &[f64], c: f64) -> usize {
    reserves.iter().zip(realized).filter(|(r, x)| *x + c * *r <= 0.0).count()
}

/// Runs one method over every portfolio. Portfolios whose scalar cannot be
/// obtained are skipped and reported.
pub fn rolling_backtest(
    panel: &ReturnPanel,
    method: &MethodSpec,
    config: &BacktestConfig,
    calibrator: &ScalarCalibrator,
) -> Result<BacktestResult> {
    let total = panel.len();
    let length = config.backtest_length.unwrap_or(total);
    let h = config.horizon.periods();
    if length > total {
        return Err(invalid(format!("backtest length {length} exceeds series length {total}")));
    }
    if length < config.window + h {
        return Err(invalid(format!(
            "backtest length {length} leaves no points for window {}",
            config.window
        )));
    }
    if !(config.target_rate > 0.0 && config.target_rate < 1.0) {
        return Err(Error::ProbabilityDomain(config.target_rate));
    }
    if config.recalibrate_every == Some(0) {
        return Err(invalid("recalibrate_every must be positive"));
    }
    let calibration = calibrator.prepare(method, config)?;
    let pre = total - length;

    let outcomes: Vec<std::result::Result<PortfolioOutcome, SkippedPortfolio>> = (0..panel.portfolios())
        .into_par_iter()
        .map(|i| {
            let id = panel.ids()[i].clone();
            run_portfolio(panel.series(i), pre, method, config, calibrator)
                .map(|mut o| {
                    o.id.clone_from(&id);
                    o
                })
                .map_err(|e| SkippedPortfolio {
                    id,
                    reason: e.to_string(),
                })
        })
        .collect();
    let mut portfolios = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(p) => portfolios.push(p),
            Err(s) => skipped.push(s),
        }
    }
    Ok(BacktestResult {
        method: method.clone(),
        config: config.clone(),
        portfolios,
        skipped,
        calibration,
    })
}

fn run_portfolio(
    series: &[f64],
    pre: usize,
    method: &MethodSpec,
    config: &BacktestConfig,
    calibrator: &ScalarCalibrator,
) -> Result<PortfolioOutcome> {
    let (reserves, realized) = backtest_points(&series[pre..], config.window, config.horizon)?;
    let points = reserves.len();
    let history_end = |t: usize| match config.recalibrate_every {
        Some(k) if method.source.is_data_driven() => pre + (t / k) * k,
        _ => pre,
    };
    let mut current = (usize::MAX, 0.0, None);
    let mut breaches = 0;
    let mut records = Vec::new();
    let mut first = None;
    for t in 0..points {
        let end = history_end(t);
        if end != current.0 {
            let (c, nu) = calibrator.scalar(method, &series[..end], config)?;
            current = (end, c, nu);
        }
        let c = current.1;
        first.get_or_insert((c, current.2));
        let breach = realized[t] + c * reserves[t] <= 0.0;
        breaches += usize::from(breach);
        if config.keep_records {
            records.push(WindowRecord {
                reserve: reserves[t],
                realized: realized[t],
                scalar: c,
                breach,
            });
        }
    }
    let (scalar, nu) = first.expect("at least one point");
    Ok(PortfolioOutcome {
        id: String::new(),
        scalar,
        nu,
        breaches,
        points,
        exception_rate: breaches as f64 / points as f64,
        records,
    })
}
