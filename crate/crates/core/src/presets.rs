//! Ready-made calibration problems and family sweeps.

use crate::calibration::{CalibrationProblem, FamilySweep, SampleConstruction, SweepMember};
use crate::distributions::{DistributionSpec, Transform};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::riskmeasures::RiskMeasureSpec;

/// Named single-problem presets.
pub const PROBLEM_PRESETS: &[&str] = &["gaussian-var", "overlapping-10d-var"];
/// Named family-sweep presets.
pub const SWEEP_PRESETS: &[&str] = &[
    "gpd-es-sweep",
    "student-t-es-sweep",
    "ten-day-var-table",
    "monthly-worst-case-table",
    "economic-capital-es-table",
];

/// Normal estimation and target laws with the Gaussian plug-in VaR.
pub fn gaussian(n: usize, alpha: f64, mean_adjusted: bool) -> Result<CalibrationProblem> {
    Ok(CalibrationProblem {
        label: Some("Normal".into()),
        estimation_law: DistributionSpec::standard_normal(),
        n,
        construction: SampleConstruction::Iid,
        target_law: DistributionSpec::standard_normal(),
        risk: RiskMeasureSpec::var(alpha)?,
        estimator: EstimatorSpec::GaussianPlugInVar { alpha },
        mean_adjusted,
    })
}

/// 259 daily normal draws summed into 250 overlapping 10-day values, the
/// empirical 1% VaR estimator and a 10-day normal target.
pub fn overlapping_ten_day_var() -> Result<CalibrationProblem> {
    let daily = DistributionSpec::standard_normal();
    Ok(CalibrationProblem {
        label: Some("Normal".into()),
        estimation_law: daily.clone(),
        n: 250,
        construction: SampleConstruction::OverlappingSum {
            window: 10,
            raw_count: 259,
        },
        target_law: daily.convolved(10)?,
        risk: RiskMeasureSpec::var(0.01)?,
        estimator: EstimatorSpec::EmpiricalVar { alpha: 0.01 },
        mean_adjusted: false,
    })
}

pub fn problem(name: &str) -> Result<CalibrationProblem> {
    match name {
        "gaussian-var" => gaussian(250, 0.01, true),
        "overlapping-10d-var" => overlapping_ten_day_var(),
        other => Err(unknown(other)),
    }
}

pub fn sweep(name: &str) -> Result<FamilySweep> {
    match name {
        "gpd-es-sweep" => gpd_es_sweep(),
        "student-t-es-sweep" => student_t_es_sweep(),
        "ten-day-var-table" => ten_day_var_table(),
        "monthly-worst-case-table" => monthly_worst_case_table(),
        "economic-capital-es-table" => economic_capital_es_table(),
        other => Err(unknown(other)),
    }
}

fn unknown(name: &str) -> Error {
    Error::Config(format!(
        "unknown preset `{name}`; available: {}, {}, gaussian-heatmap",
        PROBLEM_PRESETS.join(", "),
        SWEEP_PRESETS.join(", ")
    ))
}

/// GPD shapes -0.5, -0.4, ..., 0.5 with the PWM plug-in ES at 5%, n = 50.
pub fn gpd_es_sweep() -> Result<FamilySweep> {
    let members = (-5..=5)
        .map(|k| {
            let xi = f64::from(k) / 10.0;
            Ok(SweepMember::new(format!("xi={xi}"), DistributionSpec::gpd(0.0, xi, 1.0)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FamilySweep {
        members,
        estimation_transform: Vec::new(),
        target_transform: Vec::new(),
        standardize: false,
        n: 50,
        construction: SampleConstruction::Iid,
        risk: RiskMeasureSpec::es(0.05)?,
        estimator: EstimatorSpec::GpdPlugInEs { alpha: 0.05 },
        mean_adjusted: false,
    })
}

/// Student-t grid plus the normal limit, mean of the three lowest of 50,
/// ES at 2.5%.
pub fn student_t_es_sweep() -> Result<FamilySweep> {
    let mut members = [5.0, 7.0, 10.0, 20.0, 30.0, 50.0, 100.0]
        .into_iter()
        .map(|nu| Ok(SweepMember::new(format!("student-t (nu={nu})"), DistributionSpec::student_t(nu)?)))
        .collect::<Result<Vec<_>>>()?;
    members.push(SweepMember::new("Normal", DistributionSpec::standard_normal()));
    Ok(FamilySweep {
        members,
        estimation_transform: Vec::new(),
        target_transform: Vec::new(),
        standardize: false,
        n: 50,
        construction: SampleConstruction::Iid,
        risk: RiskMeasureSpec::es(0.025)?,
        estimator: EstimatorSpec::mean_of_lowest(3)?,
        mean_adjusted: false,
    })
}

/// The common family: Laplace, Student-t with the given degrees of freedom,
/// Normal, GN(3) and optionally Cauchy.
pub fn family(nus: &[f64], cauchy: bool) -> Result<Vec<SweepMember>> {
    let mut members = vec![SweepMember::new("Laplace", DistributionSpec::laplace(1.0)?)];
    for &nu in nus {
        members.push(SweepMember::new(format!("student-t (nu={nu})"), DistributionSpec::student_t(nu)?));
    }
    members.push(SweepMember::new("Normal", DistributionSpec::standard_normal()));
    members.push(SweepMember::new("GN(3)", DistributionSpec::generalized_normal(3.0)?));
    if cauchy {
        members.push(SweepMember::new("Cauchy", DistributionSpec::cauchy(0.0, 1.0)?));
    }
    Ok(members)
}

/// 1-day sample of 250, empirical 1% VaR, 10-day target.
pub fn ten_day_var_table() -> Result<FamilySweep> {
    Ok(FamilySweep {
        members: family(&[3.0, 5.0, 7.0, 10.0, 20.0, 30.0], true)?,
        estimation_transform: Vec::new(),
        target_transform: vec![Transform::Convolution(10)],
        standardize: true,
        n: 250,
        construction: SampleConstruction::Iid,
        risk: RiskMeasureSpec::var(0.01)?,
        estimator: EstimatorSpec::EmpiricalVar { alpha: 0.01 },
        mean_adjusted: false,
    })
}

/// Twelve monthly (two-period) observations, worst-case estimator, one-period
/// 1% VaR target.
pub fn monthly_worst_case_table() -> Result<FamilySweep> {
    Ok(FamilySweep {
        members: family(&[3.0, 5.0, 7.0, 10.0, 20.0, 30.0, 50.0, 100.0], true)?,
        estimation_transform: vec![Transform::Convolution(2)],
        target_transform: Vec::new(),
        standardize: true,
        n: 12,
        construction: SampleConstruction::Iid,
        risk: RiskMeasureSpec::var(0.01)?,
        estimator: EstimatorSpec::WorstCase,
        mean_adjusted: false,
    })
}

/// 750 ten-day observations, mean of the six lowest, 250-day ES at 0.1%.
pub fn economic_capital_es_table() -> Result<FamilySweep> {
    Ok(FamilySweep {
        members: family(&[3.0, 5.0, 7.0, 10.0, 20.0, 30.0, 50.0, 100.0], false)?,
        estimation_transform: Vec::new(),
        target_transform: vec![Transform::Convolution(25)],
        standardize: true,
        n: 750,
        construction: SampleConstruction::Iid,
        risk: RiskMeasureSpec::es(0.001)?,
        estimator: EstimatorSpec::EmpiricalEs {
            alpha: 0.008,
            k_lowest: Some(6),
        },
        mean_adjusted: false,
    })
}
