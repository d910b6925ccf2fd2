#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskscale::backtest::{
    count_breaches, rolling_backtest, synthetic_panel, BacktestConfig, MethodSpec, ScalarCalibrator, SyntheticLaw,
};
use riskscale::calibration::{build_panel, calibrate, solve_scalar, CalibrationProblem, SolveOptions, SolveStrategy};
use riskscale::distributions::DistributionSpec;
use riskscale::estimators::EstimatorSpec;
use riskscale::riskmeasures::RiskMeasureSpec;

pub type Check = Result<String, String>;

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn estimators() -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::EmpiricalVar { alpha: 0.05 },
        EstimatorSpec::EmpiricalEs { alpha: 0.1, k_lowest: None },
        EstimatorSpec::GaussianPlugInVar { alpha: 0.01 },
        EstimatorSpec::GaussianPlugInEs { alpha: 0.025 },
        EstimatorSpec::GaussianUnbiasedVar { alpha: 0.01 },
        EstimatorSpec::GpdPlugInEs { alpha: 0.05 },
        EstimatorSpec::WorstCase,
        EstimatorSpec::average_of_second_and_third(),
    ]
}

/// Cash invariance (where claimed) and positive homogeneity on `samples`.
pub fn estimator_identities(samples: &[Vec<f64>], shifts: &[f64], factors: &[f64]) -> Check {
    let mut checked = 0;
    for est in estimators() {
        for x in samples {
            let losses: Vec<f64>;
            let x = if matches!(est, EstimatorSpec::GpdPlugInEs { .. }) {
                losses = x.iter().map(|v| -v.abs()).collect();
                &losses
            } else {
                x
            };
            let base = est.evaluate(x).map_err(|e| format!("{est:?}: {e}"))?;
            let scale = 1.0 + base.abs();
            if est.is_cash_invariant() {
                for &m in shifts {
                    let shifted: Vec<f64> = x.iter().map(|v| v + m).collect();
                    let got = est.evaluate(&shifted).map_err(|e| e.to_string())?;
                    if !close(got, base - m, 1e-9 * (scale + m.abs())) {
                        return Err(format!("{est:?} shift {m}: {got} vs {}", base - m));
                    }
                    checked += 1;
                }
            }
            for &k in factors {
                let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
                let got = est.evaluate(&scaled).map_err(|e| e.to_string())?;
                if !close(got, k * base, 1e-9 * k * scale) {
                    return Err(format!("{est:?} factor {k}: {got} vs {}", k * base));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} identities"))
}

pub fn random_samples(count: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let t = DistributionSpec::student_t(4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| t.sampler().draw(&mut rng) * rng.random_range(0.5..3.0)).collect())
        .collect()
}

fn t5_var_problem(scale: f64) -> CalibrationProblem {
    let law = DistributionSpec::student_t(5.0).unwrap().scaled(scale).unwrap();
    CalibrationProblem {
        label: None,
        estimation_law: law.clone(),
        n: 60,
        construction: Default::default(),
        target_law: law,
        risk: RiskMeasureSpec::var(0.02).unwrap(),
        estimator: EstimatorSpec::EmpiricalEs { alpha: 0.05, k_lowest: None },
        mean_adjusted: false,
    }
}

/// `c*` is unchanged when both laws are rescaled, under a common seed.
pub fn scale_invariance(m: usize, seed: u64) -> Check {
    let opts = SolveOptions::default();
    let base = calibrate(&t5_var_problem(1.0), m, seed, opts).map_err(|e| e.to_string())?.c_star;
    let mut worst: f64 = 0.0;
    for k in [0.01, 3.7, 250.0] {
        let c = calibrate(&t5_var_problem(k), m, seed, opts).map_err(|e| e.to_string())?.c_star;
        worst = worst.max((c - base).abs());
    }
    if worst <= 1e-10 {
        Ok(format!("c* = {base:.4}, max deviation {worst:.1e}"))
    } else {
        Err(format!("c* = {base:.6}, max deviation {worst:.3e}"))
    }
}

/// Bisection and grid scan agree to the tolerance on `panels` random problems.
pub fn solver_matches_grid_scan(panels: u64, m: usize) -> Check {
    let tol = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for i in 0..panels {
        let nu = rng.random_range(3.0..30.0);
        let n = rng.random_range(20..120);
        let alpha = rng.random_range(0.01..0.05);
        let law = DistributionSpec::student_t(nu).unwrap();
        let problem = CalibrationProblem {
            label: None,
            estimation_law: law.clone(),
            n,
            construction: Default::default(),
            target_law: law,
            risk: if i % 2 == 0 { RiskMeasureSpec::var(alpha) } else { RiskMeasureSpec::es(alpha) }.unwrap(),
            estimator: if i % 3 == 0 {
                EstimatorSpec::GaussianPlugInVar { alpha }
            } else {
                EstimatorSpec::EmpiricalEs { alpha: 0.1, k_lowest: None }
            },
            mean_adjusted: i % 4 == 1,
        };
        let panel = build_panel(&problem, m, 1000 + i).map_err(|e| e.to_string())?;
        let solve = |strategy| {
            solve_scalar(&panel, &problem.risk, SolveOptions { tol, strategy }).map(|r| r.c_star)
        };
        let b = solve(SolveStrategy::Bisection).map_err(|e| e.to_string())?;
        let g = solve(SolveStrategy::GridScan).map_err(|e| e.to_string())?;
        if (b - g).abs() > tol {
            return Err(format!("panel {i}: bisection {b} vs grid {g}"));
        }
        worst = worst.max((b - g).abs());
    }
    Ok(format!("{panels} panels, max gap {worst:.1e}"))
}

/// Mean-adjusted Gaussian-unbiased VaR at large `n` needs no scaling.
pub fn large_sample_scalar(m: usize) -> Check {
    let problem = CalibrationProblem {
        label: None,
        estimation_law: DistributionSpec::standard_normal(),
        n: 5000,
        construction: Default::default(),
        target_law: DistributionSpec::standard_normal(),
        risk: RiskMeasureSpec::var(0.01).unwrap(),
        estimator: EstimatorSpec::GaussianUnbiasedVar { alpha: 0.01 },
        mean_adjusted: true,
    };
    let r = calibrate(&problem, m, 5, SolveOptions::default()).map_err(|e| e.to_string())?;
    let msg = format!("c* = {:.4} (s.e. {:.4})", r.c_star, r.mc_std_error);
    if (r.c_star - 1.0).abs() < 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Breach counts never increase with `c` when reserves are non-negative.
pub fn breach_monotonicity(cases: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..cases {
        let len = rng.random_range(1..400);
        let reserves: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..3.0)).collect();
        let realized: Vec<f64> = (0..len).map(|_| rng.random_range(-6.0..4.0)).collect();
        let mut prev = usize::MAX;
        for step in 0..200 {
            let c = step as f64 * 0.05;
            let b = count_breaches(&reserves, &realized, c);
            if b > prev {
                return Err(format!("case {case}: {b} breaches at c = {c} after {prev}"));
            }
            prev = b;
        }
    }
    Ok(format!("{cases} cases"))
}

/// Calibration and a small backtest, reduced to bit patterns.
pub fn fingerprint() -> Vec<u64> {
    let problem = t5_var_problem(1.0);
    let r = calibrate(&problem, 50_000, 11, SolveOptions::default()).unwrap();
    let mut bits = vec![r.c_star.to_bits(), r.mc_std_error.to_bits()];
    let panel = synthetic_panel(SyntheticLaw::StudentT { nu: 6.0 }, 12, 300, 200, 3).unwrap();
    let calibrator = ScalarCalibrator::new(20_000, 3, SolveOptions::default());
    let config = BacktestConfig {
        backtest_length: Some(300),
        ..BacktestConfig::default()
    };
    for id in [4, 5, 6] {
        let method = MethodSpec::standard(id).unwrap();
        let result = rolling_backtest(&panel, &method, &config, &calibrator).unwrap();
        for p in &result.portfolios {
            bits.push(p.scalar.to_bits());
            bits.push(p.breaches as u64);
        }
    }
    bits
}

/// Identical results with 1, 4 and 8 worker threads.
pub fn thread_independence() -> Check {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(fingerprint)
    };
    let reference = run(1);
    for threads in [4, 8] {
        if run(threads) != reference {
            return Err(format!("{threads} threads differ from 1"));
        }
    }
    Ok(format!("{} values bit-identical", reference.len()))
}
