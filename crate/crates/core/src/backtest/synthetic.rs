use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ReturnPanel;
use crate::distributions::DistributionSpec;
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

pub const SYNTHETIC_PORTFOLIOS: usize = 1853;
/// Observations generated ahead of the backtest segment for the data-driven
/// methods.
pub const SYNTHETIC_PRE_WINDOW: usize = 2000;
const SYNTHETIC_STREAM: u64 = 7;

/// I.i.d. return law of a generated panel. Written `normal` or `t6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SyntheticLaw {
    Normal,
    StudentT { nu: f64 },
}

impl SyntheticLaw {
    pub fn law(&self) -> Result<DistributionSpec> {
        match *self {
            Self::Normal => Ok(DistributionSpec::standard_normal()),
            Self::StudentT { nu } => DistributionSpec::student_t(nu),
        }
    }
}

impl fmt::Display for SyntheticLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal => f.write_str("normal"),
            Self::StudentT { nu } => write!(f, "t{nu}"),
        }
    }
}

impl FromStr for SyntheticLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "normal" {
            return Ok(Self::Normal);
        }
        let nu = s
            .strip_prefix('t')
            .map(|rest| rest.trim_start_matches('(').trim_end_matches(')'))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| invalid(format!("unknown synthetic law `{s}`; use `normal` or `t<nu>`")))?;
        DistributionSpec::student_t(nu)?;
        Ok(Self::StudentT { nu })
    }
}

impl TryFrom<String> for SyntheticLaw {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SyntheticLaw> for String {
    fn from(l: SyntheticLaw) -> Self {
        l.to_string()
    }
}

/// `portfolios` independent series of `pre_window + length` draws. Portfolio
/// `i` always uses substream `i`, so a smaller panel is a prefix of a larger
/// one.
pub fn synthetic_panel(
    law: SyntheticLaw,
    portfolios: usize,
    length: usize,
    pre_window: usize,
    seed: u64,
) -> Result<ReturnPanel> {
    if portfolios == 0 || length == 0 {
        return Err(invalid("synthetic panels need at least one portfolio and one observation"));
    }
    let spec = law.law()?;
    let base = RngStream::new(seed, SYNTHETIC_STREAM);
    let series = (0..portfolios)
        .into_par_iter()
        .map(|i| spec.sample(&base.substream(i as u64), pre_window + length))
        .collect::<Result<Vec<_>>>()?;
    let ids = (1..=portfolios).map(|i| format!("{law}-{i:04}")).collect();
    ReturnPanel::without_dates(ids, series)
}
