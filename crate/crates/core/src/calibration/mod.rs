//! Monte Carlo calibration of the optimal scalar `c*`.
//!
//! A [`CalibrationProblem`] fixes the estimation-sample law, the target P&L
//! law, the risk measure and the estimator. [`build_panel`] simulates it once
//! and [`solve_scalar`] finds the smallest `c` for which the secured position
//! `X + c * rho_hat` has non-positive risk.

mod panel;
mod solver;
mod sweep;

pub use panel::{
    build_panel, build_panel_on_streams, overlapping_sums, PanelProvenance, SecuredPanel, MAX_FAILURE_RATE,
    MIN_PANEL, RECOMMENDED_PANEL,
};
pub use solver::{
    batch_std_error, solve_scalar, solve_with_error, ScalarResult, SolveDiagnostics, SolveOptions, SolveStrategy,
    DEFAULT_TOL, ERROR_BATCHES, MAX_SCALAR, MONOTONE_SHARE,
};
pub use sweep::{FamilySweep, SweepMember};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::distributions::DistributionSpec;
use crate::error::{invalid, Error, Result};
use crate::estimators::{unbiased_gaussian_factor, EstimatorSpec};
use crate::riskmeasures::{RiskKind, RiskMeasureSpec};

/// How one estimation sample is assembled from draws of `estimation_law`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleConstruction {
    #[default]
    Iid,
    /// `raw_count = n + window - 1` draws turned into `n` rolling sums.
    OverlappingSum { window: usize, raw_count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProblem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Law of one raw estimation draw.
    pub estimation_law: DistributionSpec,
    pub n: usize,
    #[serde(default)]
    pub construction: SampleConstruction,
    pub target_law: DistributionSpec,
    pub risk: RiskMeasureSpec,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub mean_adjusted: bool,
}

impl CalibrationProblem {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("sample size n must be at least 1"));
        }
        if let SampleConstruction::OverlappingSum { window, raw_count } = self.construction {
            if window == 0 || raw_count != self.n + window - 1 {
                return Err(invalid(format!(
                    "overlapping construction needs raw_count = n + window - 1 = {}, got {raw_count}",
                    self.n + window.max(1) - 1
                )));
            }
        }
        self.estimator.prepare(self.n)?;
        if self.risk.kind == RiskKind::Es {
            self.target_law.mean()?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.target_law.to_string())
    }

    /// Law of one estimation-sample observation.
    pub fn observation_law(&self) -> Result<DistributionSpec> {
        match self.construction {
            SampleConstruction::Iid => Ok(self.estimation_law.clone()),
            SampleConstruction::OverlappingSum { window, .. } => {
                self.estimation_law.clone().convolved(window as u32)
            }
        }
    }

    /// Same problem with the target replaced by one estimation observation.
    pub fn confidence_problem(&self) -> Result<Self> {
        Ok(Self {
            target_law: self.observation_law()?,
            ..self.clone()
        })
    }
}

/// `build_panel` followed by `solve_scalar`, with a batch standard error.
pub fn calibrate(problem: &CalibrationProblem, m: usize, seed: u64, opts: SolveOptions) -> Result<ScalarResult> {
    let panel = build_panel(problem, m, seed)?;
    solve_with_error(&panel, &problem.risk, opts)
}

/// `sqrt((n+1)/n) * t_{n-1}^{-1}(alpha) / Phi^{-1}(alpha)`.
pub fn closed_form_gaussian_scalar(n: usize, alpha: f64) -> Result<f64> {
    let factor = unbiased_gaussian_factor(n, alpha)?;
    let z = statrs::distribution::Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(alpha);
    Ok(factor / z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberOutcome {
    pub label: String,
    /// `None` when the member's scalar is unbounded.
    pub result: Option<ScalarResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustResult {
    /// Supremum over members; infinite if any member is unbounded.
    pub c_star_sup: f64,
    pub argmax: String,
    pub members: Vec<MemberOutcome>,
}

/// Calibrates every member with the same seed and takes the supremum.
pub fn robust_calibrate(problems: &[CalibrationProblem], m: usize, seed: u64, opts: SolveOptions) -> Result<RobustResult> {
    let first = problems.first().ok_or_else(|| invalid("robust calibration needs at least one member"))?;
    for p in problems {
        if p.estimator != first.estimator || p.risk != first.risk {
            return Err(invalid("all members of a robust calibration must share the estimator and risk measure"));
        }
    }
    let outcomes: Vec<Result<MemberOutcome>> = problems
        .par_iter()
        .map(|p| match calibrate(p, m, seed, opts) {
            Ok(r) => Ok(MemberOutcome {
                label: p.label(),
                result: Some(r),
            }),
            Err(Error::UnboundedScalar { .. }) => Ok(MemberOutcome {
                label: p.label(),
                result: None,
            }),
            Err(e) => Err(e),
        })
        .collect();
    let members = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = String::new();
    for member in &members {
        let c = member.result.as_ref().map_or(f64::INFINITY, |r| r.c_star);
        if c > sup {
            sup = c;
            argmax = member.label.clone();
        }
    }
    Ok(RobustResult {
        c_star_sup: sup,
        argmax,
        members,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub label: String,
    pub combined: ScalarResult,
    pub confidence: ScalarResult,
    pub time: ScalarResult,
}

impl Decomposition {
    pub fn product(&self) -> f64 {
        self.confidence.c_star * self.time.c_star
    }

    /// Standard error of `confidence * time - combined`, treating the three
    /// independently simulated scalars as uncorrelated.
    pub fn product_gap_std_error(&self) -> f64 {
        let (c, t) = (self.confidence.c_star, self.time.c_star);
        (self.combined.mc_std_error.powi(2)
            + (t * self.confidence.mc_std_error).powi(2)
            + (c * self.time.mc_std_error).powi(2))
        .sqrt()
    }
}

/// Confidence, time and combined scalars.
///
/// The combined scalar is [`calibrate`] on streams 0/1. The confidence scalar
/// targets one estimation observation (streams 2/3). The time scalar solves
/// the original problem with the estimator pre-multiplied by the confidence
/// scalar on a third, independent panel (streams 4/5), so the product
/// `confidence * time` is an independent estimate of `combined`.
pub fn decompose(problem: &CalibrationProblem, m: usize, seed: u64, opts: SolveOptions) -> Result<Decomposition> {
    let combined = calibrate(problem, m, seed, opts)?;
    let conf_panel = build_panel_on_streams(&problem.confidence_problem()?, m, seed, 2)?;
    let confidence = solve_with_error(&conf_panel, &problem.risk, opts)?;
    if confidence.c_star <= 0.0 {
        return Err(invalid("confidence scalar is zero; the time scalar is undefined"));
    }
    let time_panel = build_panel_on_streams(problem, m, seed, 4)?.with_scaled_estimator(confidence.c_star);
    let time = solve_with_error(&time_panel, &problem.risk, opts)?;
    Ok(Decomposition {
        label: problem.label(),
        combined,
        confidence,
        time,
    })
}

/// [`decompose`] for every member, in parallel.
pub fn decompose_all(problems: &[CalibrationProblem], m: usize, seed: u64, opts: SolveOptions) -> Result<Vec<Decomposition>> {
    problems.par_iter().map(|p| decompose(p, m, seed, opts)).collect()
}
