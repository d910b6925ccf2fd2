use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CalibrationProblem, SampleConstruction};
use crate::error::{invalid, Error, Result};
use crate::estimators::sample_mean;
use crate::riskmeasures::RiskMeasureSpec;
use crate::rng::RngStream;

/// Smallest accepted Monte Carlo size.
pub const MIN_PANEL: usize = 10_000;
/// Below this size a warning is recorded in the panel provenance.
pub const RECOMMENDED_PANEL: usize = 100_000;
/// Largest tolerated share of estimator failures before the panel is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.001;

const ROW_CHUNK: usize = 512;
const MAX_ATTEMPTS_PER_ROW: usize = 1000;

/// Where a panel's draws came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelProvenance {
    pub seed: u64,
    pub estimation_stream: u64,
    pub target_stream: u64,
    pub draws: usize,
    /// Estimation samples on which the estimator failed and was redrawn.
    pub redrawn: usize,
    pub warnings: Vec<String>,
}

/// `M` pairs of target draws and reserve values, reused for every `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecuredPanel {
    pub reserves: Vec<f64>,
    pub targets: Vec<f64>,
    /// Estimation-sample means, present for mean-adjusted problems.
    pub means: Option<Vec<f64>>,
    pub provenance: PanelProvenance,
}

impl SecuredPanel {
    /// Builds a panel directly from arrays, e.g. for oracle tests.
    pub fn from_parts(reserves: Vec<f64>, targets: Vec<f64>, means: Option<Vec<f64>>) -> Result<Self> {
        if reserves.len() != targets.len() || means.as_ref().is_some_and(|m| m.len() != reserves.len()) {
            return Err(invalid("panel columns must have equal length"));
        }
        if reserves.is_empty() {
            return Err(Error::InsufficientSample { needed: 1, got: 0 });
        }
        let draws = reserves.len();
        Ok(Self {
            reserves,
            targets,
            means,
            provenance: PanelProvenance {
                seed: 0,
                estimation_stream: 0,
                target_stream: 0,
                draws,
                redrawn: 0,
                warnings: Vec::new(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.reserves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reserves.is_empty()
    }

    /// Secured position of row `m` at scalar `c`.
    #[inline]
    pub fn secured(&self, m: usize, c: f64) -> f64 {
        match &self.means {
            None => self.targets[m] + c * self.reserves[m],
            Some(mu) => self.targets[m] - mu[m] + c * (self.reserves[m] + mu[m]),
        }
    }

    /// The value multiplied by `c` in row `m`.
    #[inline]
    pub fn effective_reserve(&self, m: usize) -> f64 {
        match &self.means {
            None => self.reserves[m],
            Some(mu) => self.reserves[m] + mu[m],
        }
    }

    /// The same panel with the estimator pre-multiplied by `k`.
    pub fn with_scaled_estimator(&self, k: f64) -> Self {
        let reserves = match &self.means {
            None => self.reserves.iter().map(|r| k * r).collect(),
            Some(mu) => self
                .reserves
                .iter()
                .zip(mu)
                .map(|(r, m)| k * (r + m) - m)
                .collect(),
        };
        Self {
            reserves,
            ..self.clone()
        }
    }

    /// Rows `[start, end)` as a standalone panel.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            reserves: self.reserves[start..end].to_vec(),
            targets: self.targets[start..end].to_vec(),
            means: self.means.as_ref().map(|m| m[start..end].to_vec()),
            provenance: PanelProvenance {
                draws: end - start,
                ..self.provenance.clone()
            },
        }
    }

    /// `rho(S(c))` evaluated empirically on the panel.
    pub fn risk_of_secured(&self, risk: &RiskMeasureSpec, c: f64) -> Result<f64> {
        let mut buf = Vec::with_capacity(self.len());
        self.risk_with_buffer(risk, c, &mut buf)
    }

    pub(crate) fn risk_with_buffer(&self, risk: &RiskMeasureSpec, c: f64, buf: &mut Vec<f64>) -> Result<f64> {
        if !(c >= 0.0) {
            return Err(invalid(format!("scalar must be non-negative, got {c}")));
        }
        buf.clear();
        buf.extend((0..self.len()).map(|m| self.secured(m, c)));
        risk.of_sample_in_place(buf)
    }

    /// Strict exception rate of `S(c)`.
    pub fn exception_rate(&self, c: f64) -> f64 {
        let hits = (0..self.len()).filter(|&m| self.secured(m, c) < 0.0).count();
        hits as f64 / self.len() as f64
    }
}

/// Reserves, means and failure count of one block of rows.
type Chunk = (Vec<f64>, Vec<f64>, usize);

/// Draws `m` estimation samples and `m` independent target values.
///
/// Estimation samples come from `RngStream(seed, 0)` and targets from
/// `RngStream(seed, 1)`.
pub fn build_panel(problem: &CalibrationProblem, m: usize, seed: u64) -> Result<SecuredPanel> {
    build_panel_on_streams(problem, m, seed, 0)
}

/// As [`build_panel`] with estimation and target streams `base` and `base + 1`.
pub fn build_panel_on_streams(problem: &CalibrationProblem, m: usize, seed: u64, base: u64) -> Result<SecuredPanel> {
    problem.validate()?;
    if m < MIN_PANEL {
        return Err(invalid(format!("Monte Carlo size must be at least {MIN_PANEL}, got {m}")));
    }
    let mut warnings = Vec::new();
    if m < RECOMMENDED_PANEL {
        warnings.push(format!(
            "Monte Carlo size {m} is below the recommended {RECOMMENDED_PANEL}; tail estimates are noisy"
        ));
    }
    let estimation = RngStream::new(seed, base);
    let target = RngStream::new(seed, base + 1);
    let prepared = problem.estimator.prepare(problem.n)?;
    let sampler = problem.estimation_law.sampler();
    let n = problem.n;
    let raw_len = match problem.construction {
        SampleConstruction::Iid => n,
        SampleConstruction::OverlappingSum { raw_count, .. } => raw_count,
    };
    let keep_means = problem.mean_adjusted;

    let chunks = m.div_ceil(ROW_CHUNK);
    let parts: Vec<Result<Chunk>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let rows = ROW_CHUNK.min(m - c * ROW_CHUNK);
            let mut rng = estimation.substream(c as u64).rng();
            let mut raw = vec![0.0; raw_len];
            let mut sample = vec![0.0; n];
            let mut reserves = Vec::with_capacity(rows);
            let mut means = Vec::with_capacity(if keep_means { rows } else { 0 });
            let mut failures = 0;
            for _ in 0..rows {
                let mut attempts = 0;
                loop {
                    sampler.fill(&mut rng, &mut raw);
                    match problem.construction {
                        SampleConstruction::Iid => sample.copy_from_slice(&raw),
                        SampleConstruction::OverlappingSum { window, .. } => overlapping_sums(&raw, window, &mut sample),
                    }
                    let mean = if keep_means { sample_mean(&sample) } else { 0.0 };
                    match prepared.evaluate_in_place(&mut sample) {
                        Ok(r) if r.is_finite() => {
                            reserves.push(r);
                            if keep_means {
                                means.push(mean);
                            }
                            break;
                        }
                        _ => {
                            failures += 1;
                            attempts += 1;
                            if attempts >= MAX_ATTEMPTS_PER_ROW {
                                return Err(Error::PanelFailures { failures, draws: m });
                            }
                        }
                    }
                }
            }
            Ok((reserves, means, failures))
        })
        .collect();

    let mut reserves = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(if keep_means { m } else { 0 });
    let mut failures = 0;
    for part in parts {
        let (r, mu, f) = part?;
        reserves.extend(r);
        means.extend(mu);
        failures += f;
    }
    if failures as f64 > MAX_FAILURE_RATE * m as f64 {
        return Err(Error::PanelFailures { failures, draws: m });
    }
    if failures > 0 {
        warnings.push(format!("estimator failed on {failures} estimation samples; they were redrawn"));
    }
    let targets = problem.target_law.sample(&target, m)?;
    Ok(SecuredPanel {
        reserves,
        targets,
        means: keep_means.then_some(means),
        provenance: PanelProvenance {
            seed,
            estimation_stream: base,
            target_stream: base + 1,
            draws: m,
            redrawn: failures,
            warnings,
        },
    })
}

/// `out[i] = raw[i] + ... + raw[i + window - 1]`.
pub fn overlapping_sums(raw: &[f64], window: usize, out: &mut [f64]) {
    debug_assert_eq!(raw.len(), out.len() + window - 1);
    for (i, o) in out.iter_mut().enumerate() {
        *o = raw[i..i + window].iter().sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::estimators::EstimatorSpec;

    fn worst_case_problem() -> CalibrationProblem {
        CalibrationProblem {
            label: None,
            estimation_law: DistributionSpec::standard_normal(),
            n: 1,
            construction: SampleConstruction::Iid,
            target_law: DistributionSpec::standard_normal(),
            risk: RiskMeasureSpec::var(0.01).unwrap(),
            estimator: EstimatorSpec::WorstCase,
            mean_adjusted: false,
        }
    }

    #[test]
    fn overlapping_sums_window() {
        let raw = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut out = [0.0; 3];
        overlapping_sums(&raw, 3, &mut out);
        assert_eq!(out, [6.0, 9.0, 12.0]);
    }

    #[test]
    fn panel_size_limits() {
        let p = worst_case_problem();
        assert!(build_panel(&p, 9_999, 1).is_err());
        let panel = build_panel(&p, 10_000, 1).unwrap();
        assert_eq!(panel.len(), 10_000);
        assert_eq!(panel.provenance.warnings.len(), 1);
    }

    #[test]
    fn worst_case_single_draw_is_symmetric() {
        // S(1) = X - X' is symmetric, so about half the positions are negative.
        let panel = build_panel(&worst_case_problem(), 20_000, 3).unwrap();
        let rate = panel.exception_rate(1.0);
        assert!((rate - 0.5).abs() < 0.02, "{rate}");
        assert!(rate > 0.01);
    }

    #[test]
    fn convolution_of_one_matches_base_panel() {
        let p = CalibrationProblem {
            n: 20,
            estimator: EstimatorSpec::EmpiricalVar { alpha: 0.05 },
            ..worst_case_problem()
        };
        let q = CalibrationProblem {
            estimation_law: DistributionSpec::standard_normal().convolved(1).unwrap(),
            ..p.clone()
        };
        let a = build_panel(&p, 10_000, 5).unwrap();
        let b = build_panel(&q, 10_000, 5).unwrap();
        assert_eq!(a.reserves, b.reserves);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn risk_at_zero_is_target_risk() {
        let panel = build_panel(&worst_case_problem(), 10_000, 9).unwrap();
        let risk = RiskMeasureSpec::var(0.01).unwrap();
        let direct = risk.of_sample(&panel.targets).unwrap();
        assert_eq!(panel.risk_of_secured(&risk, 0.0).unwrap(), direct);
        assert!(panel.risk_of_secured(&risk, -1.0).is_err());
    }

    #[test]
    fn scaled_estimator_panel() {
        let panel = SecuredPanel::from_parts(vec![1.0, 2.0], vec![0.5, -0.5], Some(vec![0.1, -0.2])).unwrap();
        let scaled = panel.with_scaled_estimator(2.0);
        for m in 0..2 {
            assert!((scaled.secured(m, 1.5) - panel.secured(m, 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn failing_estimator_rejects_panel() {
        // Gaussian losses are negative half the time, so the PWM fit on
        // raw P&L fails almost always.
        let p = CalibrationProblem {
            n: 20,
            estimator: EstimatorSpec::GpdPlugInEs { alpha: 0.05 },
            risk: RiskMeasureSpec::es(0.05).unwrap(),
            ..worst_case_problem()
        };
        assert!(matches!(build_panel(&p, 10_000, 1), Err(Error::PanelFailures { .. })));
    }
}
