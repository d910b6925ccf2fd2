#ifndef RISKSCALE_H
#define RISKSCALE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_ARGUMENT = 2,
  RS_STATUS_INSUFFICIENT_SAMPLE = 3,
  RS_STATUS_UNBOUNDED = 4,
  RS_STATUS_ESTIMATOR_FAILURE = 5,
  RS_STATUS_UNREACHABLE = 6,
  RS_STATUS_IO = 7,
  RS_STATUS_CONFIG = 8,
  RS_STATUS_PANIC = 9,
} RsStatus;

// A panel of return series.
typedef struct RsPanel RsPanel;

// A calibration problem.
typedef struct RsProblem RsProblem;

typedef struct RsScalarResult {
  double c_star;
  double mc_std_error;
  size_t solver_iterations;
} RsScalarResult;

typedef struct RsDecomposition {
  struct RsScalarResult combined;
  struct RsScalarResult confidence;
  struct RsScalarResult time;
} RsDecomposition;

typedef struct RsBacktestSummary {
  double mean_rate;
  double sd_rate;
  double mean_scalar;
  size_t portfolios;
  size_t skipped;
} RsBacktestSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *rs_last_error(void);

// Library version as a static string.
const char *rs_version(void);

// Builds a problem from its JSON description.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum RsStatus rs_problem_from_json(const char *json, struct RsProblem **out_problem);

// Builds a named single-problem preset.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum RsStatus rs_problem_preset(const char *name, struct RsProblem **out_problem);

// # Safety
// `problem` must come from this library and not be used afterwards. Null is
// ignored.
void rs_problem_free(struct RsProblem *problem);

// Smallest scalar making the secured position acceptable, from `m` draws.
// A non-positive `tol` selects the default.
//
// # Safety
// `problem` must be a live handle and `result` a valid pointer.
enum RsStatus rs_calibrate(const struct RsProblem *problem,
                           size_t m,
                           uint64_t seed,
                           double tol,
                           struct RsScalarResult *result);

// Combined, confidence and time scalars.
//
// # Safety
// `problem` must be a live handle and `result` a valid pointer.
enum RsStatus rs_decompose(const struct RsProblem *problem,
                           size_t m,
                           uint64_t seed,
                           double tol,
                           struct RsDecomposition *result);

// Exact scalar for the Gaussian plug-in VaR with mean adjustment.
//
// # Safety
// `value` must be a valid pointer.
enum RsStatus rs_closed_form_gaussian_scalar(size_t n, double alpha, double *value);

// Smallest scalar whose historical exception rate on `returns` is at most
// `alpha`.
//
// # Safety
// `returns` must point to `len` doubles and `value` must be valid.
enum RsStatus rs_fit_empirical_scalar(const double *returns,
                                      size_t len,
                                      double alpha,
                                      uint32_t horizon_periods,
                                      size_t window,
                                      double *value);

// Reads a returns CSV. `options_json` may be null for the defaults.
//
// # Safety
// `path` must be a NUL-terminated string, `options_json` null or one, and
// `out_panel` a valid pointer.
enum RsStatus rs_panel_from_csv(const char *path,
                                const char *options_json,
                                struct RsPanel **out_panel);

// Generates `portfolios` i.i.d. series of `pre_window + length` draws from
// `law` (`"normal"` or `"t<nu>"`).
//
// # Safety
// `law` must be a NUL-terminated string and `out_panel` a valid pointer.
enum RsStatus rs_panel_synthetic(const char *law,
                                 size_t portfolios,
                                 size_t length,
                                 size_t pre_window,
                                 uint64_t seed,
                                 struct RsPanel **out_panel);

// Number of series, or 0 for null.
//
// # Safety
// `panel` must be null or a live handle.
size_t rs_panel_portfolios(const struct RsPanel *panel);

// Observations per series, or 0 for null.
//
// # Safety
// `panel` must be null or a live handle.
size_t rs_panel_len(const struct RsPanel *panel);

// # Safety
// `panel` must come from this library and not be used afterwards. Null is
// ignored.
void rs_panel_free(struct RsPanel *panel);

// Rolling backtest of standard method `method_id` (1 to 6) over the last
// `backtest_length` observations (0 for all). Calibrated methods use `m`
// draws and `seed`.
//
// # Safety
// `panel` must be a live handle and `summary` a valid pointer.
enum RsStatus rs_backtest(const struct RsPanel *panel,
                          uint32_t method_id,
                          uint32_t horizon_periods,
                          size_t window,
                          size_t backtest_length,
                          size_t m,
                          uint64_t seed,
                          struct RsBacktestSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKSCALE_H */
