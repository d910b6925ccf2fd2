use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{sample_sd, BacktestResult};
use crate::error::{invalid, Result};

/// Histogram bin width for exception-rate densities (0.1 percentage points).
pub const DENSITY_BIN: f64 = 0.001;
const KDE_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method_id: u32,
    pub method: String,
    pub horizon_periods: usize,
    pub portfolios: usize,
    pub skipped: usize,
    pub mean_rate: f64,
    pub sd_rate: f64,
    /// Share of portfolios on which this method is closest to the target.
    pub best_share: f64,
    pub mean_scalar: f64,
}

/// Mean and sd of exception rates per method, and the share of portfolios
/// each method wins. A portfolio's winner minimizes `|rate - target|`; ties
/// go to the lower method id. Only portfolios present in every result take
/// part in the vote.
pub fn aggregate_methods(results: &[BacktestResult], target: f64) -> Result<Vec<MethodSummary>> {
    if results.is_empty() {
        return Err(invalid("nothing to aggregate"));
    }
    let lookup: Vec<HashMap<&str, f64>> = results
        .iter()
        .map(|r| r.portfolios.iter().map(|p| (p.id.as_str(), p.exception_rate)).collect())
        .collect();
    let mut wins = vec![0usize; results.len()];
    let mut voters = 0usize;
    for p in &results[0].portfolios {
        let rates: Option<Vec<f64>> = lookup.iter().map(|l| l.get(p.id.as_str()).copied()).collect();
        let Some(rates) = rates else { continue };
        voters += 1;
        let mut best = 0;
        for k in 1..rates.len() {
            let (dk, db) = ((rates[k] - target).abs(), (rates[best] - target).abs());
            if dk < db || (dk == db && results[k].method.id < results[best].method.id) {
                best = k;
            }
        }
        wins[best] += 1;
    }
    Ok(results
        .iter()
        .zip(wins)
        .map(|(r, w)| MethodSummary {
            method_id: r.method.id,
            method: r.method.label.clone(),
            horizon_periods: r.config.horizon.periods(),
            portfolios: r.portfolios.len(),
            skipped: r.skipped.len(),
            mean_rate: r.mean_rate(),
            sd_rate: r.sd_rate(),
            best_share: if voters == 0 { f64::NAN } else { w as f64 / voters as f64 },
            mean_scalar: r.mean_scalar(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// Portfolio count per bin starting at `x`.
    Histogram,
    /// Gaussian kernel density at `x`.
    Kde,
    /// All rates equal `x`.
    PointMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub method_id: u32,
    pub horizon_periods: usize,
    pub kind: DensityKind,
    pub x: f64,
    pub value: f64,
}

/// Histogram with [`DENSITY_BIN`] bins and a Silverman-bandwidth kernel
/// density of each method's exception rates.
pub fn density_report(results: &[BacktestResult]) -> Vec<DensityRow> {
    let mut rows = Vec::new();
    for r in results {
        let id = r.method.id;
        let horizon_periods = r.config.horizon.periods();
        let rates = r.rates();
        if rates.is_empty() {
            continue;
        }
        let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let bins = (max / DENSITY_BIN).floor() as usize + 1;
        let mut counts = vec![0usize; bins];
        for &v in &rates {
            counts[((v / DENSITY_BIN).floor() as usize).min(bins - 1)] += 1;
        }
        rows.extend(counts.iter().enumerate().map(|(k, &c)| DensityRow {
            method_id: id,
            horizon_periods,
            kind: DensityKind::Histogram,
            x: k as f64 * DENSITY_BIN,
            value: c as f64,
        }));

        let h = silverman_bandwidth(&rates);
        if h == 0.0 {
            rows.push(DensityRow {
                method_id: id,
                horizon_periods,
                kind: DensityKind::PointMass,
                x: min,
                value: 1.0,
            });
            continue;
        }
        let lo = (min - 3.0 * h).max(0.0);
        let hi = max + 3.0 * h;
        let n = rates.len() as f64;
        let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
        for k in 0..KDE_POINTS {
            let x = lo + (hi - lo) * k as f64 / (KDE_POINTS - 1) as f64;
            let d = rates.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm;
            rows.push(DensityRow {
                method_id: id,
                horizon_periods,
                kind: DensityKind::Kde,
                x,
                value: d,
            });
        }
    }
    rows
}

/// `0.9 * min(sd, IQR/1.34) * n^(-1/5)`, falling back to the sd alone when
/// the IQR vanishes.
fn silverman_bandwidth(v: &[f64]) -> f64 {
    let sd = sample_sd(v);
    let mut s = v.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        s[i] + frac * (s[(i + 1).min(s.len() - 1)] - s[i])
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (v.len() as f64).powf(-0.2)
}

#[derive(Serialize)]
struct PortfolioRow<'a> {
    method_id: u32,
    method: &'a str,
    horizon_periods: usize,
    portfolio: &'a str,
    scalar: f64,
    nu: Option<f64>,
    breaches: usize,
    points: usize,
    exception_rate: f64,
}

pub fn write_portfolio_csv<W: Write>(out: W, results: &[BacktestResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for p in &r.portfolios {
            w.serialize(PortfolioRow {
                method_id: r.method.id,
                method: &r.method.label,
                horizon_periods: r.config.horizon.periods(),
                portfolio: &p.id,
                scalar: p.scalar,
                nu: p.nu,
                breaches: p.breaches,
                points: p.points,
                exception_rate: p.exception_rate,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    method_id: u32,
    method: &'a str,
    horizon_periods: usize,
    mean_pct: String,
    sd_pct: String,
    best_pct: String,
    mean_scalar: String,
    portfolios: usize,
    skipped: usize,
}

/// Rates in percent with two decimals, scalars with four.
pub fn write_summary_csv<W: Write>(out: W, summaries: &[MethodSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(SummaryRow {
            method_id: s.method_id,
            method: &s.method,
            horizon_periods: s.horizon_periods,
            mean_pct: format!("{:.2}", 100.0 * s.mean_rate),
            sd_pct: format!("{:.2}", 100.0 * s.sd_rate),
            best_pct: format!("{:.0}", 100.0 * s.best_share),
            mean_scalar: format!("{:.4}", s.mean_scalar),
            portfolios: s.portfolios,
            skipped: s.skipped,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density_csv<W: Write>(out: W, rows: &[DensityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
