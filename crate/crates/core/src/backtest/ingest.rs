use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ReturnPanel;
use crate::error::{Error, Result};

/// Share of unparseable data rows tolerated before ingestion fails.
pub const MAX_UNPARSEABLE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `date, p1, p2, ...`
    #[default]
    Wide,
    /// `date, portfolio, return`
    Long,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub layout: Layout,
    pub delimiter: char,
    pub decimal: char,
    /// chrono format string.
    pub date_format: String,
    /// Falls back to the first column when absent from the header.
    pub date_column: String,
    pub portfolio_column: String,
    pub return_column: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            layout: Layout::Wide,
            delimiter: ',',
            decimal: '.',
            date_format: "%Y-%m-%d".into(),
            date_column: "date".into(),
            portfolio_column: "portfolio".into(),
            return_column: "return".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropKind {
    /// A missing return; the whole period is removed.
    Gap,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    /// 1-based line in the input, header included.
    pub line: u64,
    pub kind: DropKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped: Vec<DroppedRow>,
}

impl IngestReport {
    pub fn unparseable(&self) -> usize {
        self.dropped.iter().filter(|d| d.kind == DropKind::Unparseable).count()
    }
}

pub fn ingest_returns(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<(ReturnPanel, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    ingest_reader(file, opts)
}

pub fn ingest_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<(ReturnPanel, IngestReport)> {
    if !opts.delimiter.is_ascii() {
        return Err(Error::Ingest(format!("delimiter {:?} is not ASCII", opts.delimiter)));
    }
    if opts.decimal != '.' && opts.decimal != ',' {
        return Err(Error::Ingest(format!("decimal separator must be '.' or ',', got {:?}", opts.decimal)));
    }
    if opts.decimal == opts.delimiter {
        return Err(Error::Ingest("decimal separator and delimiter coincide".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let parser = Parser { opts };
    let out = match opts.layout {
        Layout::Wide => parser.wide(&header, &mut rdr)?,
        Layout::Long => parser.long(&header, &mut rdr)?,
    };
    let (panel, report) = out;
    let bad = report.unparseable();
    if report.rows_read > 0 && bad as f64 > MAX_UNPARSEABLE_SHARE * report.rows_read as f64 {
        let first = report.dropped.iter().find(|d| d.kind == DropKind::Unparseable).expect("counted above");
        return Err(Error::Ingest(format!(
            "{bad} of {} rows are unparseable (limit 1%); first at line {}: {}",
            report.rows_read, first.line, first.reason
        )));
    }
    Ok((panel, report))
}

struct Parser<'a> {
    opts: &'a IngestOptions,
}

enum Cell {
    Value(f64),
    Missing,
}

impl Parser<'_> {
    fn date(&self, s: &str) -> std::result::Result<NaiveDate, String> {
        NaiveDate::parse_from_str(s, &self.opts.date_format)
            .map_err(|e| format!("bad date {s:?} for format {:?}: {e}", self.opts.date_format))
    }

    fn number(&self, s: &str) -> std::result::Result<Cell, String> {
        if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
            return Ok(Cell::Missing);
        }
        let text = if self.opts.decimal == ',' { s.replace(',', ".") } else { s.to_owned() };
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Cell::Value(v)),
            _ => Err(format!("bad return {s:?}")),
        }
    }

    fn date_index(&self, header: &[String]) -> usize {
        header.iter().position(|h| *h == self.opts.date_column).unwrap_or(0)
    }

    fn wide<R: Read>(&self, header: &[String], rdr: &mut csv::Reader<R>) -> Result<(ReturnPanel, IngestReport)> {
        let date_col = self.date_index(header);
        let value_cols: Vec<usize> = (0..header.len()).filter(|&i| i != date_col).collect();
        if value_cols.is_empty() {
            return Err(Error::Ingest("no portfolio columns in header".into()));
        }
        let ids = value_cols.iter().map(|&i| header[i].clone()).collect();
        let mut report = IngestReport::default();
        let mut dates = Vec::new();
        let mut series = vec![Vec::new(); value_cols.len()];
        let mut last_seen: Option<(NaiveDate, u64)> = None;
        for record in rdr.records() {
            report.rows_read += 1;
            let record = record?;
            let line = line_of(&record);
            let mut reject = |kind, reason| report.dropped.push(DroppedRow { line, kind, reason });
            if record.len() != header.len() {
                reject(
                    DropKind::Unparseable,
                    format!("expected {} fields, found {}", header.len(), record.len()),
                );
                continue;
            }
            let date = match self.date(&record[date_col]) {
                Ok(d) => d,
                Err(reason) => {
                    reject(DropKind::Unparseable, reason);
                    continue;
                }
            };
            if let Some((prev, prev_line)) = last_seen {
                if date <= prev {
                    return Err(Error::Ingest(format!(
                        "dates are not increasing: {date} at line {line} follows {prev} at line {prev_line}"
                    )));
                }
            }
            last_seen = Some((date, line));
            let mut values = Vec::with_capacity(value_cols.len());
            let mut problem = None;
            for &c in &value_cols {
                match self.number(&record[c]) {
                    Ok(Cell::Value(v)) => values.push(v),
                    Ok(Cell::Missing) => {
                        problem.get_or_insert((DropKind::Gap, format!("missing return for {}", header[c])));
                    }
                    Err(reason) => {
                        problem = Some((DropKind::Unparseable, reason));
                        break;
                    }
                }
            }
            if let Some((kind, reason)) = problem {
                reject(kind, reason);
                continue;
            }
            dates.push(date);
            for (s, v) in series.iter_mut().zip(values) {
                s.push(v);
            }
        }
        Ok((ReturnPanel::new(ids, dates, series)?, report))
    }

    fn long<R: Read>(&self, header: &[String], rdr: &mut csv::Reader<R>) -> Result<(ReturnPanel, IngestReport)> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Ingest(format!("long layout needs a `{name}` column")))
        };
        let date_col = self.date_index(header);
        let port_col = find(&self.opts.portfolio_column)?;
        let ret_col = find(&self.opts.return_column)?;

        let mut report = IngestReport::default();
        let mut ids: Vec<String> = Vec::new();
        let mut id_index: HashMap<String, usize> = HashMap::new();
        let mut last_seen: Vec<(NaiveDate, u64)> = Vec::new();
        // date -> (first line, per-portfolio value)
        let mut by_date: HashMap<NaiveDate, (u64, HashMap<usize, Option<f64>>)> = HashMap::new();
        for record in rdr.records() {
            report.rows_read += 1;
            let record = record?;
            let line = line_of(&record);
            let mut reject = |kind, reason| report.dropped.push(DroppedRow { line, kind, reason });
            if record.len() != header.len() {
                reject(
                    DropKind::Unparseable,
                    format!("expected {} fields, found {}", header.len(), record.len()),
                );
                continue;
            }
            let date = match self.date(&record[date_col]) {
                Ok(d) => d,
                Err(reason) => {
                    reject(DropKind::Unparseable, reason);
                    continue;
                }
            };
            let value = match self.number(&record[ret_col]) {
                Ok(Cell::Value(v)) => Some(v),
                Ok(Cell::Missing) => None,
                Err(reason) => {
                    reject(DropKind::Unparseable, reason);
                    continue;
                }
            };
            let id = &record[port_col];
            let p = match id_index.get(id) {
                Some(&p) => p,
                None => {
                    ids.push(id.to_owned());
                    id_index.insert(id.to_owned(), ids.len() - 1);
                    last_seen.push((NaiveDate::MIN, 0));
                    ids.len() - 1
                }
            };
            let (prev, prev_line) = last_seen[p];
            if date <= prev {
                return Err(Error::Ingest(format!(
                    "dates for portfolio {id} are not increasing: {date} at line {line} follows {prev} at line {prev_line}"
                )));
            }
            last_seen[p] = (date, line);
            by_date.entry(date).or_insert_with(|| (line, HashMap::new())).1.insert(p, value);
        }
        if ids.is_empty() {
            return Err(Error::Ingest("no data rows".into()));
        }
        let mut dates: Vec<NaiveDate> = by_date.keys().copied().collect();
        dates.sort_unstable();
        let mut kept = Vec::new();
        let mut series = vec![Vec::new(); ids.len()];
        for date in dates {
            let (line, values) = &by_date[&date];
            let missing = (0..ids.len()).find(|p| !matches!(values.get(p), Some(Some(_))));
            if let Some(p) = missing {
                report.dropped.push(DroppedRow {
                    line: *line,
                    kind: DropKind::Gap,
                    reason: format!("missing return for {} on {date}", ids[p]),
                });
                continue;
            }
            kept.push(date);
            for (p, s) in series.iter_mut().enumerate() {
                s.push(values[&p].expect("checked above"));
            }
        }
        report.dropped.sort_by_key(|d| d.line);
        Ok((ReturnPanel::new(ids, kept, series)?, report))
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WIDE: &str = "date,a,b,c\n2020-01-03,0.01,-0.02,0.003\n2020-01-10,0.02,0.01,-0.01\n2020-01-17,-0.03,0.00,0.02\n2020-01-24,0.005,0.015,0.001\n2020-01-31,0.01,-0.01,0.0\n";

    #[test]
    fn wide_three_by_five() {
        let (panel, report) = ingest_reader(WIDE.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(panel.portfolios(), 3);
        assert_eq!(panel.len(), 5);
        assert_eq!(panel.ids(), ["a", "b", "c"]);
        assert_eq!(panel.series(1)[0], -0.02);
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn blank_return_drops_row() {
        let text = WIDE.replace("2020-01-17,-0.03,0.00,0.02", "2020-01-17,-0.03,,0.02");
        let (panel, report) = ingest_reader(text.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(panel.len(), 4);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].line, 4);
        assert_eq!(report.dropped[0].kind, DropKind::Gap);
    }

    #[test]
    fn unparseable_beyond_threshold_fails() {
        let text = WIDE.replace("0.02,0.01,-0.01", "0.02,abc,-0.01");
        let err = ingest_reader(text.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn non_monotone_dates_fail() {
        let text = WIDE.replace("2020-01-24", "2020-01-10");
        let err = ingest_reader(text.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("not increasing"), "{err}");
    }

    #[test]
    fn semicolon_and_decimal_comma() {
        let text = WIDE.replace(',', ";").replace('.', ",");
        let opts = IngestOptions {
            delimiter: ';',
            decimal: ',',
            ..IngestOptions::default()
        };
        let (panel, _) = ingest_reader(text.as_bytes(), &opts).unwrap();
        let (reference, _) = ingest_reader(WIDE.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(panel, reference);
    }
}
