use serde::{Deserialize, Serialize};

use super::panel::SecuredPanel;
use crate::error::{invalid, Error, Result};
use crate::riskmeasures::RiskMeasureSpec;

pub const DEFAULT_TOL: f64 = 1e-4;
/// No sign change below this scalar means the scalar is unbounded.
pub const MAX_SCALAR: f64 = 1e6;
/// Share of positive reserves required for the monotone bisection path.
pub const MONOTONE_SHARE: f64 = 0.99;
/// Batches behind the Monte Carlo standard error.
pub const ERROR_BATCHES: usize = 20;

const INITIAL_HIGH: f64 = 4.0;
const MAX_GRID_POINTS: f64 = 4096.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStrategy {
    /// Bisection when the panel is monotone in `c`, grid scan otherwise.
    #[default]
    Auto,
    Bisection,
    GridScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub strategy: SolveStrategy,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            strategy: SolveStrategy::Auto,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Share of rows whose effective reserve is not positive.
    pub negative_reserve_fraction: f64,
    pub monotonicity_violation: bool,
    /// The unscaled position was already acceptable, so `c* = 0`.
    pub zero_risk_at_origin: bool,
    pub strategy: SolveStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarResult {
    pub c_star: f64,
    pub mc_std_error: f64,
    pub solver_iterations: usize,
    pub bracket: (f64, f64),
    pub diagnostics: SolveDiagnostics,
}

/// Smallest `c >= 0` with `rho(S(c)) <= 0`, to within `tol`.
///
/// The returned `c_star` is the upper end of the final bracket, so the panel
/// is acceptable at `c_star`. The standard error is left at zero; see
/// [`solve_with_error`].
pub fn solve_scalar(panel: &SecuredPanel, risk: &RiskMeasureSpec, opts: SolveOptions) -> Result<ScalarResult> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut buf = Vec::with_capacity(panel.len());
    let mut iterations = 0;
    let mut risk_at = |c: f64| -> Result<f64> {
        iterations += 1;
        panel.risk_with_buffer(risk, c, &mut buf)
    };

    let non_positive = (0..panel.len()).filter(|&m| !(panel.effective_reserve(m) > 0.0)).count();
    let negative_reserve_fraction = non_positive as f64 / panel.len() as f64;
    let monotonicity_violation = 1.0 - negative_reserve_fraction < MONOTONE_SHARE;
    let strategy = match opts.strategy {
        SolveStrategy::Auto if monotonicity_violation => SolveStrategy::GridScan,
        SolveStrategy::Auto => SolveStrategy::Bisection,
        s => s,
    };
    let mut diagnostics = SolveDiagnostics {
        negative_reserve_fraction,
        monotonicity_violation,
        zero_risk_at_origin: false,
        strategy,
    };

    if risk_at(0.0)? <= 0.0 {
        diagnostics.zero_risk_at_origin = true;
        return Ok(ScalarResult {
            c_star: 0.0,
            mc_std_error: 0.0,
            solver_iterations: iterations,
            bracket: (0.0, 0.0),
            diagnostics,
        });
    }

    let (mut lo, mut hi) = (0.0, INITIAL_HIGH);
    while risk_at(hi)? > 0.0 {
        if hi >= MAX_SCALAR {
            return Err(Error::UnboundedScalar { limit: MAX_SCALAR });
        }
        lo = hi;
        hi = (hi * 2.0).min(MAX_SCALAR);
    }

    if strategy == SolveStrategy::GridScan {
        // First acceptable grid point from the left; the crossing lies in the
        // preceding step.
        let step = (10.0 * opts.tol).max(hi / MAX_GRID_POINTS);
        let mut prev = 0.0;
        let mut g = step;
        loop {
            let point = g.min(hi);
            if risk_at(point)? <= 0.0 {
                lo = prev;
                hi = point;
                break;
            }
            if point >= hi {
                break;
            }
            prev = point;
            g += step;
        }
    }

    while hi - lo >= opts.tol {
        let mid = 0.5 * (lo + hi);
        if risk_at(mid)? <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ScalarResult {
        c_star: hi,
        mc_std_error: 0.0,
        solver_iterations: iterations,
        bracket: (lo, hi),
        diagnostics,
    })
}

/// [`solve_scalar`] plus a standard error from [`ERROR_BATCHES`] contiguous
/// batches of the panel.
pub fn solve_with_error(panel: &SecuredPanel, risk: &RiskMeasureSpec, opts: SolveOptions) -> Result<ScalarResult> {
    let mut result = solve_scalar(panel, risk, opts)?;
    result.mc_std_error = batch_std_error(panel, risk, opts);
    Ok(result)
}

/// `sd(c*_b) / sqrt(B)` over contiguous batches. Infinite when a batch has
/// no sign change or is too short for the tail rank.
pub fn batch_std_error(panel: &SecuredPanel, risk: &RiskMeasureSpec, opts: SolveOptions) -> f64 {
    let size = panel.len() / ERROR_BATCHES;
    let mut values = Vec::with_capacity(ERROR_BATCHES);
    for b in 0..ERROR_BATCHES {
        let batch = panel.slice(b * size, (b + 1) * size);
        match solve_scalar(&batch, risk, opts) {
            Ok(r) => values.push(r.c_star),
            Err(_) => return f64::INFINITY,
        }
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}
