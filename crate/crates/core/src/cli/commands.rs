use std::fmt::Write as _;

use serde::Serialize;

use super::config::{HeatmapSpec, RunConfig};
use super::manifest::Manifest;
use super::{fmt_scalar, fmt_std_error, CliError, CliResult, EXIT_RUN};
use crate::backtest::{
    aggregate_methods, density_report, ingest_returns, rolling_backtest, synthetic_panel, write_density_csv,
    write_portfolio_csv, write_summary_csv, CalibrationRecord, IngestReport, ScalarCalibrator, SkippedPortfolio,
};
use crate::calibration::{
    build_panel, calibrate, closed_form_gaussian_scalar, decompose_all, robust_calibrate, solve_with_error,
    CalibrationProblem, Decomposition, PanelProvenance, ScalarResult, SolveOptions,
};
use crate::distributions::{DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::presets;
use crate::riskmeasures::RiskKind;

/// Files produced by a command, in write order, plus the console report.
pub(crate) struct Produced {
    pub files: Vec<(String, Vec<u8>)>,
    pub report: String,
}

pub(crate) fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError {
            code: EXIT_RUN,
            message: format!("cannot start worker threads: {e}"),
        })
}

pub(crate) fn run_and_record(name: &str, config: &RunConfig, quiet: bool) -> CliResult<()> {
    let produced = thread_pool(config.threads)?.install(|| produce(name, config))?;
    let manifest = Manifest::write(name, config, &produced.files)?;
    if !quiet {
        print!("{}", produced.report);
        for entry in &manifest.outputs {
            println!("wrote {}", config.out.join(&entry.file).display());
        }
    }
    Ok(())
}

pub(crate) fn produce(name: &str, config: &RunConfig) -> Result<Produced> {
    match name {
        "calibrate" => calibrate_cmd(config),
        "robust" => robust_cmd(config),
        "decompose" => decompose_cmd(config),
        "paper-tables" => paper_tables_cmd(config),
        "backtest" | "synthetic-backtest" => backtest_cmd(config),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    }
}

fn opts(config: &RunConfig) -> SolveOptions {
    SolveOptions::with_tol(config.tol)
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing [{section}] section"))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Closed-form scalar when the problem is the mean-adjusted Gaussian plug-in
/// VaR under a normal law.
fn gaussian_closed_form(p: &CalibrationProblem) -> Option<f64> {
    let normal = |d: &DistributionSpec| d.transforms().is_empty() && matches!(d.family(), Family::Normal { .. });
    match p.estimator {
        EstimatorSpec::GaussianPlugInVar { alpha }
            if p.mean_adjusted
                && p.risk.kind == RiskKind::Var
                && p.risk.alpha == alpha
                && normal(&p.estimation_law)
                && p.estimation_law == p.target_law =>
        {
            closed_form_gaussian_scalar(p.n, alpha).ok()
        }
        _ => None,
    }
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    label: String,
    problem: &'a CalibrationProblem,
    result: &'a ScalarResult,
    risk_at_unit_scalar: f64,
    exception_rate_at_unit_scalar: f64,
    closed_form: Option<f64>,
    provenance: &'a PanelProvenance,
}

fn calibrate_cmd(config: &RunConfig) -> Result<Produced> {
    let section = config.calibrate.as_ref().ok_or_else(|| missing("calibrate"))?;
    if let Some(h) = &section.heatmap {
        return heatmap_cmd(config, h);
    }
    let problem = section.problem.as_ref().ok_or_else(|| missing("calibrate.problem"))?;
    let panel = build_panel(problem, config.mc, config.seed)?;
    let result = solve_with_error(&panel, &problem.risk, opts(config))?;
    let report = CalibrationReport {
        label: problem.label(),
        problem,
        result: &result,
        risk_at_unit_scalar: panel.risk_of_secured(&problem.risk, 1.0)?,
        exception_rate_at_unit_scalar: panel.exception_rate(1.0),
        closed_form: gaussian_closed_form(problem),
        provenance: &panel.provenance,
    };
    let row = vec![
        report.label.clone(),
        fmt_scalar(result.c_star),
        fmt_std_error(result.mc_std_error),
        fmt_scalar(result.bracket.0),
        fmt_scalar(result.bracket.1),
        result.solver_iterations.to_string(),
        format!("{:?}", result.diagnostics.strategy).to_lowercase(),
        format!("{:.6}", result.diagnostics.negative_reserve_fraction),
        fmt_scalar(report.risk_at_unit_scalar),
        format!("{:.6}", report.exception_rate_at_unit_scalar),
        report.closed_form.map(fmt_scalar).unwrap_or_default(),
    ];
    let csv = csv_bytes(
        &[
            "label",
            "c_star",
            "mc_std_error",
            "bracket_lo",
            "bracket_hi",
            "iterations",
            "strategy",
            "negative_reserve_fraction",
            "risk_at_unit_scalar",
            "exception_rate_at_unit_scalar",
            "closed_form",
        ],
        &[row],
    )?;
    let mut text = String::new();
    writeln!(text, "{}: c* = {} (MC s.e. {})", report.label, fmt_scalar(result.c_star), fmt_std_error(result.mc_std_error)).ok();
    writeln!(
        text,
        "  at c = 1: {} = {}, exception rate {:.2}%",
        problem.risk,
        fmt_scalar(report.risk_at_unit_scalar),
        100.0 * report.exception_rate_at_unit_scalar
    )
    .ok();
    if let Some(cf) = report.closed_form {
        writeln!(text, "  closed form: {}", fmt_scalar(cf)).ok();
    }
    for w in &panel.provenance.warnings {
        writeln!(text, "  warning: {w}").ok();
    }
    Ok(Produced {
        files: vec![("calibrate.csv".into(), csv), ("calibrate.json".into(), json_bytes(&report)?)],
        report: text,
    })
}

fn heatmap_cmd(config: &RunConfig, spec: &HeatmapSpec) -> Result<Produced> {
    let ns = spec.n.values().map_err(|e| Error::Config(e.to_string()))?;
    let alphas = spec.alpha.values().map_err(|e| Error::Config(e.to_string()))?;
    let mut rows = Vec::new();
    let mut text = String::new();
    for &nf in &ns {
        if nf.fract() != 0.0 || nf < 2.0 {
            return Err(Error::Config(format!("heatmap sample sizes must be integers >= 2, got {nf}")));
        }
        let n = nf as usize;
        for &alpha in &alphas {
            let closed = closed_form_gaussian_scalar(n, alpha)?;
            let (mc, se) = if spec.monte_carlo {
                let r = calibrate(&presets::gaussian(n, alpha, true)?, config.mc, config.seed, opts(config))?;
                (fmt_scalar(r.c_star), fmt_std_error(r.mc_std_error))
            } else {
                (String::new(), String::new())
            };
            rows.push(vec![n.to_string(), format!("{alpha}"), fmt_scalar(closed), mc, se]);
        }
    }
    writeln!(text, "heatmap: {} sample sizes x {} levels", ns.len(), alphas.len()).ok();
    if let Ok(spot) = closed_form_gaussian_scalar(250, 0.01) {
        writeln!(text, "  closed form at (250, 1%): {}", fmt_scalar(spot)).ok();
    }
    let csv = csv_bytes(&["n", "alpha", "closed_form", "mc_c_star", "mc_std_error"], &rows)?;
    Ok(Produced {
        files: vec![("heatmap.csv".into(), csv)],
        report: text,
    })
}

fn robust_cmd(config: &RunConfig) -> Result<Produced> {
    let section = config.robust.as_ref().ok_or_else(|| missing("robust"))?;
    let sweep = section.sweep.as_ref().ok_or_else(|| missing("robust.sweep"))?;
    let r = robust_calibrate(&sweep.problems()?, config.mc, config.seed, opts(config))?;
    let rows: Vec<Vec<String>> = r
        .members
        .iter()
        .map(|m| match &m.result {
            Some(x) => vec![m.label.clone(), fmt_scalar(x.c_star), fmt_std_error(x.mc_std_error)],
            None => vec![m.label.clone(), "unbounded".into(), String::new()],
        })
        .collect();
    let mut text = String::new();
    for row in &rows {
        writeln!(text, "{:<24} {:>10} {:>8}", row[0], row[1], row[2]).ok();
    }
    writeln!(text, "robust c* = {} at {}", fmt_scalar(r.c_star_sup), r.argmax).ok();
    Ok(Produced {
        files: vec![
            ("robust.csv".into(), csv_bytes(&["member", "c_star", "mc_std_error"], &rows)?),
            ("robust.json".into(), json_bytes(&r)?),
        ],
        report: text,
    })
}

const DECOMPOSITION_HEADER: [&str; 10] = [
    "distribution",
    "c_star",
    "c_star_se",
    "confidence",
    "confidence_se",
    "time",
    "time_se",
    "product",
    "product_gap",
    "product_gap_se",
];

fn decomposition_rows(ds: &[Decomposition]) -> Vec<Vec<String>> {
    ds.iter()
        .map(|d| {
            vec![
                d.label.clone(),
                fmt_scalar(d.combined.c_star),
                fmt_std_error(d.combined.mc_std_error),
                fmt_scalar(d.confidence.c_star),
                fmt_std_error(d.confidence.mc_std_error),
                fmt_scalar(d.time.c_star),
                fmt_std_error(d.time.mc_std_error),
                fmt_scalar(d.product()),
                fmt_scalar(d.product() - d.combined.c_star),
                fmt_std_error(d.product_gap_std_error()),
            ]
        })
        .collect()
}

fn decomposition_text(title: &str, ds: &[Decomposition]) -> String {
    let mut text = format!("{title}\n{:<22} {:>9} {:>9} {:>9}\n", "distribution", "c*", "conf", "time");
    for d in ds {
        writeln!(
            text,
            "{:<22} {:>9} {:>9} {:>9}",
            d.label,
            fmt_scalar(d.combined.c_star),
            fmt_scalar(d.confidence.c_star),
            fmt_scalar(d.time.c_star)
        )
        .ok();
    }
    text
}

fn decompose_cmd(config: &RunConfig) -> Result<Produced> {
    let section = config.decompose.as_ref().ok_or_else(|| missing("decompose"))?;
    let problems = match (&section.sweep, &section.problem) {
        (Some(s), _) => s.problems()?,
        (None, Some(p)) => vec![p.clone()],
        (None, None) => return Err(missing("decompose.sweep")),
    };
    let ds = decompose_all(&problems, config.mc, config.seed, opts(config))?;
    Ok(Produced {
        files: vec![("decompose.csv".into(), csv_bytes(&DECOMPOSITION_HEADER, &decomposition_rows(&ds))?)],
        report: decomposition_text("decomposition", &ds),
    })
}

fn paper_tables_cmd(config: &RunConfig) -> Result<Produced> {
    let section = config.paper_tables.as_ref().ok_or_else(|| missing("paper_tables"))?;
    let mut files = Vec::new();
    let mut text = String::new();
    for &t in &section.tables {
        let (name, sweep) = match t {
            1 => ("ten-day VaR, empirical 1% estimator", presets::ten_day_var_table()?),
            2 => ("monthly worst case, 1% VaR", presets::monthly_worst_case_table()?),
            3 => ("economic capital, 0.1% ES", presets::economic_capital_es_table()?),
            other => return Err(Error::Config(format!("no table {other}"))),
        };
        let ds = decompose_all(&sweep.problems()?, config.mc, config.seed, opts(config))?;
        files.push((format!("table{t}.csv"), csv_bytes(&DECOMPOSITION_HEADER, &decomposition_rows(&ds))?));
        text.push_str(&decomposition_text(&format!("table {t}: {name}"), &ds));
    }
    Ok(Produced { files, report: text })
}

#[derive(Serialize)]
struct BacktestDetails {
    ingest: Option<IngestReport>,
    calibrations: Vec<MethodCalibration>,
    skipped: Vec<MethodSkips>,
}

#[derive(Serialize)]
struct MethodCalibration {
    method_id: u32,
    horizon_periods: usize,
    record: CalibrationRecord,
}

#[derive(Serialize)]
struct MethodSkips {
    method_id: u32,
    horizon_periods: usize,
    portfolios: Vec<SkippedPortfolio>,
}

fn backtest_cmd(config: &RunConfig) -> Result<Produced> {
    let mut section = config.backtest.clone().ok_or_else(|| missing("backtest"))?;
    let (panel, ingest) = match (&section.synthetic, &section.input) {
        (Some(s), _) => {
            section.backtest_length = s.length;
            (synthetic_panel(s.law, s.portfolios, s.length, s.pre_window, config.seed)?, None)
        }
        (None, Some(path)) => {
            let (panel, report) = ingest_returns(path, &section.ingest)?;
            (panel, Some(report))
        }
        (None, None) => return Err(Error::Config("backtest needs an input file or a synthetic panel".into())),
    };
    let calibrator = ScalarCalibrator::new(config.mc, config.seed, opts(config));
    let mut all = Vec::new();
    let mut summaries = Vec::new();
    let mut density = Vec::new();
    for &horizon in &section.horizons {
        let run = section.run_config(horizon);
        let results = section
            .methods
            .iter()
            .map(|m| rolling_backtest(&panel, m, &run, &calibrator))
            .collect::<Result<Vec<_>>>()?;
        summaries.extend(aggregate_methods(&results, section.target_rate)?);
        density.extend(density_report(&results));
        all.extend(results);
    }

    let details = BacktestDetails {
        ingest: ingest.clone(),
        calibrations: all
            .iter()
            .filter_map(|r| {
                r.calibration.clone().map(|record| MethodCalibration {
                    method_id: r.method.id,
                    horizon_periods: r.config.horizon.periods(),
                    record,
                })
            })
            .collect(),
        skipped: all
            .iter()
            .filter(|r| !r.skipped.is_empty())
            .map(|r| MethodSkips {
                method_id: r.method.id,
                horizon_periods: r.config.horizon.periods(),
                portfolios: r.skipped.clone(),
            })
            .collect(),
    };

    let mut portfolios = Vec::new();
    write_portfolio_csv(&mut portfolios, &all)?;
    let mut summary = Vec::new();
    write_summary_csv(&mut summary, &summaries)?;
    let mut dens = Vec::new();
    write_density_csv(&mut dens, &density)?;

    let mut text = String::new();
    if let Some(r) = &ingest {
        writeln!(text, "ingested {} portfolios x {} periods; dropped {} rows", panel.portfolios(), panel.len(), r.dropped.len()).ok();
        for d in &r.dropped {
            writeln!(text, "  line {}: {}", d.line, d.reason).ok();
        }
    } else {
        writeln!(text, "synthetic panel: {} portfolios x {} periods", panel.portfolios(), panel.len()).ok();
    }
    writeln!(text, "{:<3} {:<38} {:>2} {:>7} {:>6} {:>5} {:>8}", "#", "method", "h", "mean%", "sd%", "best", "mean c").ok();
    for s in &summaries {
        writeln!(
            text,
            "{:<3} {:<38} {:>2} {:>7.2} {:>6.2} {:>4.0}% {:>8}",
            s.method_id,
            s.method,
            s.horizon_periods,
            100.0 * s.mean_rate,
            100.0 * s.sd_rate,
            100.0 * s.best_share,
            fmt_scalar(s.mean_scalar)
        )
        .ok();
        if s.skipped > 0 {
            writeln!(text, "    {} portfolios skipped", s.skipped).ok();
        }
    }
    Ok(Produced {
        files: vec![
            ("backtest_portfolios.csv".into(), portfolios),
            ("backtest_summary.csv".into(), summary),
            ("backtest_density.csv".into(), dens),
            ("backtest_details.json".into(), json_bytes(&details)?),
        ],
        report: text,
    })
}
