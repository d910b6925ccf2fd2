use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestConfig, Horizon, IngestOptions, MethodSpec, SyntheticLaw};
use crate::backtest::{DEFAULT_BACKTEST_LENGTH, DEFAULT_WINDOW, SYNTHETIC_PORTFOLIOS, SYNTHETIC_PRE_WINDOW, TARGET_RATE};
use crate::calibration::{CalibrationProblem, FamilySweep, DEFAULT_TOL};
use crate::error::{Error, Result};

pub const DEFAULT_MC: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_OUT: &str = "riskscale-out";

/// Everything a run needs. A config file has this shape, and the manifest
/// stores the resolved version with exactly one command section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mc: usize,
    pub seed: u64,
    pub tol: f64,
    /// Worker threads; results do not depend on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust: Option<SweepSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decompose: Option<SweepSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper_tables: Option<PaperTablesSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backtest: Option<BacktestSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mc: DEFAULT_MC,
            seed: DEFAULT_SEED,
            tol: DEFAULT_TOL,
            threads: None,
            out: PathBuf::from(DEFAULT_OUT),
            calibrate: None,
            robust: None,
            decompose: None,
            paper_tables: None,
            backtest: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// A copy holding only the named command's section.
    pub fn only(&self, command: &str) -> Self {
        let mut c = self.clone();
        if command != "calibrate" {
            c.calibrate = None;
        }
        if command != "robust" {
            c.robust = None;
        }
        if command != "decompose" {
            c.decompose = None;
        }
        if command != "paper-tables" {
            c.paper_tables = None;
        }
        if command != "backtest" && command != "synthetic-backtest" {
            c.backtest = None;
        }
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<CalibrationProblem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<HeatmapSpec>,
}

/// Grid of Gaussian mean-adjusted scalars over `n` and `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSpec {
    pub n: GridRange,
    pub alpha: GridRange,
    /// Add Monte Carlo scalars next to the closed form.
    #[serde(default = "yes")]
    pub monte_carlo: bool,
}

fn yes() -> bool {
    true
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        Self {
            n: GridRange::new(100.0, 250.0, 10.0),
            alpha: GridRange::new(0.005, 0.025, 0.0025),
            monte_carlo: true,
        }
    }
}

/// Inclusive `start..end` with a step; written `"100..250"` or
/// `"100..250:10"` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl GridRange {
    pub fn new(start: f64, end: f64, step: f64) -> Self {
        Self { start, end, step }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.end >= self.start) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::Config(format!(
                "bad range {}..{}:{}",
                self.start, self.end, self.step
            )));
        }
        let count = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        if count > 10_000 {
            return Err(Error::Config(format!("range has {count} points (limit 10000)")));
        }
        Ok((0..count)
            .map(|k| ((self.start + k as f64 * self.step) * 1e10).round() / 1e10)
            .collect())
    }

    /// Parses `a..b` or `a..b:step`, using `default_step` when absent.
    pub fn parse(s: &str, default_step: f64) -> Result<Self> {
        let bad = || Error::Config(format!("expected `start..end` or `start..end:step`, got `{s}`"));
        let (range, step) = match s.split_once(':') {
            Some((r, st)) => (r, f64::from_str(st.trim()).map_err(|_| bad())?),
            None => (s, default_step),
        };
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let start = f64::from_str(a.trim()).map_err(|_| bad())?;
        let end = f64::from_str(b.trim()).map_err(|_| bad())?;
        let r = Self::new(start, end, step);
        r.values()?;
        Ok(r)
    }
}

/// A family sweep, a preset name or a single problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<FamilySweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<CalibrationProblem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaperTablesSection {
    pub tables: Vec<u8>,
}

impl Default for PaperTablesSection {
    fn default() -> Self {
        Self { tables: vec![1, 2, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub law: SyntheticLaw,
    #[serde(default = "default_portfolios")]
    pub portfolios: usize,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_pre_window")]
    pub pre_window: usize,
}

fn default_portfolios() -> usize {
    SYNTHETIC_PORTFOLIOS
}

fn default_length() -> usize {
    DEFAULT_BACKTEST_LENGTH
}

fn default_pre_window() -> usize {
    SYNTHETIC_PRE_WINDOW
}

impl SyntheticSpec {
    pub fn new(law: SyntheticLaw) -> Self {
        Self {
            law,
            portfolios: SYNTHETIC_PORTFOLIOS,
            length: DEFAULT_BACKTEST_LENGTH,
            pre_window: SYNTHETIC_PRE_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub ingest: IngestOptions,
    /// Replaces ingestion with a generated panel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    pub methods: Vec<MethodSpec>,
    pub horizons: Vec<Horizon>,
    pub window: usize,
    pub target_rate: f64,
    /// Observations at the end of each series that are backtested; `0`
    /// means the whole series.
    pub backtest_length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recalibrate_every: Option<usize>,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            input: None,
            ingest: IngestOptions::default(),
            synthetic: None,
            methods: MethodSpec::standard_set(),
            horizons: vec![Horizon::OnePeriod, Horizon::TwoPeriodOverlap],
            window: DEFAULT_WINDOW,
            target_rate: TARGET_RATE,
            backtest_length: DEFAULT_BACKTEST_LENGTH,
            recalibrate_every: None,
        }
    }
}

impl BacktestSection {
    pub fn run_config(&self, horizon: Horizon) -> BacktestConfig {
        BacktestConfig {
            window: self.window,
            horizon,
            target_rate: self.target_rate,
            backtest_length: (self.backtest_length > 0).then_some(self.backtest_length),
            recalibrate_every: self.recalibrate_every,
            keep_records: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let r = GridRange::parse("100..250", 10.0).unwrap();
        assert_eq!(r.values().unwrap().len(), 16);
        let a = GridRange::parse("0.005..0.025:0.005", 1.0).unwrap();
        assert_eq!(a.values().unwrap().len(), 5);
        assert!(GridRange::parse("5..1", 1.0).is_err());
        assert!(GridRange::parse("abc", 1.0).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = RunConfig::from_toml("mc = 1000\nsede = 3\n", "cfg.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("sede"), "{msg}");
    }

    #[test]
    fn missing_key_is_named() {
        let text = "[calibrate.problem]\nestimation_law = { family = \"normal\" }\ntarget_law = { family = \"normal\" }\nrisk = { kind = \"var\", alpha = 0.01 }\nestimator = { kind = \"worst_case\" }\n";
        let err = RunConfig::from_toml(text, "cfg.toml").unwrap_err();
        assert!(err.to_string().contains("`n`"), "{err}");
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
mc = 200000
seed = 7

[calibrate]
preset = "overlapping-10d-var"

[robust.sweep]
members = ["t(5)", "normal"]
n = 50
risk = { kind = "es", alpha = 0.025 }
estimator = { kind = "empirical_es", params = { alpha = 0.06, k_lowest = 3 } }

[backtest]
methods = [1, 3, 6]
horizons = ["one_period"]
synthetic = { law = "t6", portfolios = 20 }
"#;
        let c = RunConfig::from_toml(text, "cfg").unwrap();
        assert_eq!(c.mc, 200_000);
        assert_eq!(c.backtest.as_ref().unwrap().methods.len(), 3);
        assert_eq!(c.backtest.unwrap().synthetic.unwrap().length, 625);
        assert_eq!(c.robust.unwrap().sweep.unwrap().members.len(), 2);
    }
}
