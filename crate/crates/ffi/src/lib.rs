//! C interface to the riskscale engine.
//!
//! Every function returns an [`RsStatus`]. On failure the message is
//! available from [`rs_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use riskscale::backtest::{
    fit_empirical_scalar, ingest_returns, rolling_backtest, synthetic_panel, BacktestConfig, Horizon,
    IngestOptions, MethodSpec, ReturnPanel, ScalarCalibrator, SyntheticLaw,
};
use riskscale::calibration::{
    calibrate, closed_form_gaussian_scalar, decompose, CalibrationProblem, ScalarResult, SolveOptions,
};
use riskscale::{presets, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientSample = 3,
    Unbounded = 4,
    EstimatorFailure = 5,
    Unreachable = 6,
    Io = 7,
    Config = 8,
    Panic = 9,
}

impl From<&Error> for RsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::ProbabilityDomain(_)
            | Error::InfiniteMean(_)
            | Error::InfiniteVariance(_) => Self::InvalidArgument,
            Error::InsufficientSample { .. } => Self::InsufficientSample,
            Error::UnboundedScalar { .. } => Self::Unbounded,
            Error::DegenerateFit(_) | Error::UnusableFit(_) | Error::PanelFailures { .. } => Self::EstimatorFailure,
            Error::UnreachableTarget { .. } => Self::Unreachable,
            Error::Ingest(_) | Error::Io(_) | Error::Csv(_) => Self::Io,
            Error::Config(_) | Error::Json(_) => Self::Config,
        }
    }
}

/// A calibration problem.
pub struct RsProblem(CalibrationProblem);

/// A panel of return series.
pub struct RsPanel(ReturnPanel);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RsScalarResult {
    pub c_star: f64,
    pub mc_std_error: f64,
    pub solver_iterations: usize,
}

impl From<&ScalarResult> for RsScalarResult {
    fn from(r: &ScalarResult) -> Self {
        Self {
            c_star: r.c_star,
            mc_std_error: r.mc_std_error,
            solver_iterations: r.solver_iterations,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RsDecomposition {
    pub combined: RsScalarResult,
    pub confidence: RsScalarResult,
    pub time: RsScalarResult,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RsBacktestSummary {
    pub mean_rate: f64,
    pub sd_rate: f64,
    pub mean_scalar: f64,
    pub portfolios: usize,
    pub skipped: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: RsStatus, msg: &str) -> RsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), RsStatus>) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RsStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(RsStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: riskscale::Result<T>) -> Result<T, RsStatus> {
    r.map_err(|e| fail(RsStatus::from(&e), &e.to_string()))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, RsStatus> {
    if s.is_null() {
        return Err(fail(RsStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(RsStatus::InvalidArgument, &format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, RsStatus> {
    p.as_mut().ok_or_else(|| fail(RsStatus::NullPointer, &format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, RsStatus> {
    p.as_ref().ok_or_else(|| fail(RsStatus::NullPointer, &format!("{what} is null")))
}

fn options(tol: f64) -> SolveOptions {
    if tol > 0.0 {
        SolveOptions::with_tol(tol)
    } else {
        SolveOptions::default()
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a problem from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_problem_from_json(json: *const c_char, out_problem: *mut *mut RsProblem) -> RsStatus {
    guard(|| {
        let slot = out(out_problem, "out_problem")?;
        let json = text(json, "json")?;
        let problem: CalibrationProblem =
            serde_json::from_str(json).map_err(|e| fail(RsStatus::Config, &e.to_string()))?;
        lift(problem.validate())?;
        *slot = Box::into_raw(Box::new(RsProblem(problem)));
        Ok(())
    })
}

/// Builds a named single-problem preset.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_problem_preset(name: *const c_char, out_problem: *mut *mut RsProblem) -> RsStatus {
    guard(|| {
        let slot = out(out_problem, "out_problem")?;
        let problem = lift(presets::problem(text(name, "name")?))?;
        *slot = Box::into_raw(Box::new(RsProblem(problem)));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn rs_problem_free(problem: *mut RsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Smallest scalar making the secured position acceptable, from `m` draws.
/// A non-positive `tol` selects the default.
///
/// # Safety
/// `problem` must be a live handle and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_calibrate(
    problem: *const RsProblem,
    m: usize,
    seed: u64,
    tol: f64,
    result: *mut RsScalarResult,
) -> RsStatus {
    guard(|| {
        let problem = handle(problem, "problem")?;
        let slot = out(result, "result")?;
        *slot = (&lift(calibrate(&problem.0, m, seed, options(tol)))?).into();
        Ok(())
    })
}

/// Combined, confidence and time scalars.
///
/// # Safety
/// `problem` must be a live handle and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_decompose(
    problem: *const RsProblem,
    m: usize,
    seed: u64,
    tol: f64,
    result: *mut RsDecomposition,
) -> RsStatus {
    guard(|| {
        let problem = handle(problem, "problem")?;
        let slot = out(result, "result")?;
        let d = lift(decompose(&problem.0, m, seed, options(tol)))?;
        *slot = RsDecomposition {
            combined: (&d.combined).into(),
            confidence: (&d.confidence).into(),
            time: (&d.time).into(),
        };
        Ok(())
    })
}

/// Exact scalar for the Gaussian plug-in VaR with mean adjustment.
///
/// # Safety
/// `value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_closed_form_gaussian_scalar(n: usize, alpha: f64, value: *mut f64) -> RsStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = lift(closed_form_gaussian_scalar(n, alpha))?;
        Ok(())
    })
}

/// Smallest scalar whose historical exception rate on `returns` is at most
/// `alpha`.
///
/// # Safety
/// `returns` must point to `len` doubles and `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_fit_empirical_scalar(
    returns: *const f64,
    len: usize,
    alpha: f64,
    horizon_periods: u32,
    window: usize,
    value: *mut f64,
) -> RsStatus {
    guard(|| {
        let slot = out(value, "value")?;
        if returns.is_null() {
            return Err(fail(RsStatus::NullPointer, "returns is null"));
        }
        let returns = std::slice::from_raw_parts(returns, len);
        *slot = lift(fit_empirical_scalar(returns, alpha, horizon(horizon_periods)?, window))?;
        Ok(())
    })
}

fn horizon(periods: u32) -> Result<Horizon, RsStatus> {
    match periods {
        1 => Ok(Horizon::OnePeriod),
        2 => Ok(Horizon::TwoPeriodOverlap),
        p => Err(fail(RsStatus::InvalidArgument, &format!("horizon must be 1 or 2 periods, got {p}"))),
    }
}

/// Reads a returns CSV. `options_json` may be null for the defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string, `options_json` null or one, and
/// `out_panel` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_panel_from_csv(
    path: *const c_char,
    options_json: *const c_char,
    out_panel: *mut *mut RsPanel,
) -> RsStatus {
    guard(|| {
        let slot = out(out_panel, "out_panel")?;
        let path = text(path, "path")?;
        let opts: IngestOptions = if options_json.is_null() {
            IngestOptions::default()
        } else {
            serde_json::from_str(text(options_json, "options_json")?)
                .map_err(|e| fail(RsStatus::Config, &e.to_string()))?
        };
        let (panel, _) = lift(ingest_returns(path, &opts))?;
        *slot = Box::into_raw(Box::new(RsPanel(panel)));
        Ok(())
    })
}

/// Generates `portfolios` i.i.d. series of `pre_window + length` draws from
/// `law` (`"normal"` or `"t<nu>"`).
///
/// # Safety
/// `law` must be a NUL-terminated string and `out_panel` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_panel_synthetic(
    law: *const c_char,
    portfolios: usize,
    length: usize,
    pre_window: usize,
    seed: u64,
    out_panel: *mut *mut RsPanel,
) -> RsStatus {
    guard(|| {
        let slot = out(out_panel, "out_panel")?;
        let law: SyntheticLaw = lift(text(law, "law")?.parse())?;
        let panel = lift(synthetic_panel(law, portfolios, length, pre_window, seed))?;
        *slot = Box::into_raw(Box::new(RsPanel(panel)));
        Ok(())
    })
}

/// Number of series, or 0 for null.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_panel_portfolios(panel: *const RsPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.portfolios())
}

/// Observations per series, or 0 for null.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_panel_len(panel: *const RsPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `panel` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn rs_panel_free(panel: *mut RsPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Rolling backtest of standard method `method_id` (1 to 6) over the last
/// `backtest_length` observations (0 for all). Calibrated methods use `m`
/// draws and `seed`.
///
/// # Safety
/// `panel` must be a live handle and `summary` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_backtest(
    panel: *const RsPanel,
    method_id: u32,
    horizon_periods: u32,
    window: usize,
    backtest_length: usize,
    m: usize,
    seed: u64,
    summary: *mut RsBacktestSummary,
) -> RsStatus {
    guard(|| {
        let panel = handle(panel, "panel")?;
        let slot = out(summary, "summary")?;
        let method = lift(MethodSpec::standard(method_id))?;
        let config = BacktestConfig {
            window,
            horizon: horizon(horizon_periods)?,
            backtest_length: (backtest_length > 0).then_some(backtest_length),
            ..BacktestConfig::default()
        };
        let calibrator = ScalarCalibrator::new(m, seed, SolveOptions::default());
        let r = lift(rolling_backtest(&panel.0, &method, &config, &calibrator))?;
        *slot = RsBacktestSummary {
            mean_rate: r.mean_rate(),
            sd_rate: r.sd_rate(),
            mean_scalar: r.mean_scalar(),
            portfolios: r.portfolios.len(),
            skipped: r.skipped.len(),
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use std::ptr;

    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(RsStatus::from(&Error::ProbabilityDomain(2.0)), RsStatus::InvalidArgument);
        assert_eq!(RsStatus::from(&Error::UnboundedScalar { limit: 1.0 }), RsStatus::Unbounded);
        assert_eq!(RsStatus::from(&Error::Config("x".into())), RsStatus::Config);
    }

    #[test]
    fn panics_are_contained() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, RsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(rs_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn null_handles_are_reported() {
        let mut r = RsScalarResult::default();
        let status = unsafe { rs_calibrate(ptr::null(), 10_000, 1, 0.0, &mut r) };
        assert_eq!(status, RsStatus::NullPointer);
        assert_eq!(unsafe { rs_panel_len(ptr::null()) }, 0);
    }
}
