use serde::{Deserialize, Serialize};

use super::{CalibrationProblem, SampleConstruction};
use crate::distributions::{DistributionSpec, Transform};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::riskmeasures::RiskMeasureSpec;

/// One base law `F` in a family, with a display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMember", into = "RawMember")]
pub struct SweepMember {
    pub label: String,
    pub law: DistributionSpec,
}

impl SweepMember {
    pub fn new(label: impl Into<String>, law: DistributionSpec) -> Self {
        Self {
            label: label.into(),
            law,
        }
    }
}

/// Members are written either as a compact law (`"t(5)"`) or as
/// `{ label = "...", law = "t(5)" }`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawMember {
    Text(String),
    Labeled { label: String, law: String },
}

impl TryFrom<RawMember> for SweepMember {
    type Error = Error;

    fn try_from(raw: RawMember) -> Result<Self> {
        match raw {
            RawMember::Text(s) => Ok(Self::new(s.clone(), s.parse()?)),
            RawMember::Labeled { label, law } => Ok(Self::new(label, law.parse()?)),
        }
    }
}

impl From<SweepMember> for RawMember {
    fn from(m: SweepMember) -> Self {
        Self::Labeled {
            label: m.label,
            law: m.law.to_string(),
        }
    }
}

/// A family of problems sharing everything except the base law `F`.
///
/// Member `F` gives estimation law `F` + `estimation_transform` and target law
/// `F` + `target_transform`, after optional unit-variance standardization of
/// `F` (skipped for infinite-variance members).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySweep {
    pub members: Vec<SweepMember>,
    #[serde(default)]
    pub estimation_transform: Vec<Transform>,
    #[serde(default)]
    pub target_transform: Vec<Transform>,
    #[serde(default)]
    pub standardize: bool,
    pub n: usize,
    #[serde(default)]
    pub construction: SampleConstruction,
    pub risk: RiskMeasureSpec,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub mean_adjusted: bool,
}

impl FamilySweep {
    pub fn problems(&self) -> Result<Vec<CalibrationProblem>> {
        self.members
            .iter()
            .map(|member| {
                let base = if self.standardize {
                    match member.law.standardize() {
                        Ok(s) => s,
                        Err(Error::InfiniteVariance(_)) => member.law.clone(),
                        Err(e) => return Err(e),
                    }
                } else {
                    member.law.clone()
                };
                let apply = |ts: &[Transform]| ts.iter().try_fold(base.clone(), |d, t| d.with(*t));
                let problem = CalibrationProblem {
                    label: Some(member.label.clone()),
                    estimation_law: apply(&self.estimation_transform)?,
                    n: self.n,
                    construction: self.construction,
                    target_law: apply(&self.target_transform)?,
                    risk: self.risk,
                    estimator: self.estimator.clone(),
                    mean_adjusted: self.mean_adjusted,
                };
                problem.validate()?;
                Ok(problem)
            })
            .collect()
    }
}
