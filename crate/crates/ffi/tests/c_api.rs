use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use riskscale_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rs_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn preset_calibration_and_decomposition() {
    let name = CString::new("overlapping-10d-var").unwrap();
    let mut problem = ptr::null_mut();
    unsafe {
        assert_eq!(rs_problem_preset(name.as_ptr(), &mut problem), RsStatus::Ok);
        let mut r = RsScalarResult::default();
        assert_eq!(rs_calibrate(problem, 50_000, 2024, 0.0, &mut r), RsStatus::Ok);
        assert!((r.c_star - 1.14).abs() < 0.05, "{r:?}");
        assert!(r.mc_std_error > 0.0);
        let mut d = RsDecomposition::default();
        assert_eq!(rs_decompose(problem, 20_000, 2024, 0.0, &mut d), RsStatus::Ok);
        assert!(d.confidence.c_star > 0.0 && d.time.c_star > 0.0);
        rs_problem_free(problem);
    }
}

#[test]
fn json_problem_and_errors() {
    let json = CString::new(
        r#"{"estimation_law": {"family": "normal"}, "n": 50, "target_law": {"family": "normal"},
            "risk": {"kind": "var", "alpha": 0.01}, "estimator": {"kind": "gaussian_plug_in_var", "params": {"alpha": 0.01}},
            "mean_adjusted": true}"#,
    )
    .unwrap();
    let mut problem = ptr::null_mut();
    unsafe {
        assert_eq!(rs_problem_from_json(json.as_ptr(), &mut problem), RsStatus::Ok, "{}", last_error());
        let mut r = RsScalarResult::default();
        assert_eq!(rs_calibrate(problem, 100_000, 7, 1e-4, &mut r), RsStatus::Ok);
        let mut exact = 0.0;
        assert_eq!(rs_closed_form_gaussian_scalar(50, 0.01, &mut exact), RsStatus::Ok);
        assert!((r.c_star - exact).abs() < 4.0 * r.mc_std_error + 1e-3, "{r:?} vs {exact}");
        assert_eq!(last_error(), "");
        assert_eq!(rs_calibrate(problem, 10, 7, 0.0, &mut r), RsStatus::InvalidArgument);
        assert!(last_error().contains("at least"));
        rs_problem_free(problem);

        let bad = CString::new(r#"{"n": 5}"#).unwrap();
        assert_eq!(rs_problem_from_json(bad.as_ptr(), &mut problem), RsStatus::Config);
        assert!(last_error().contains("estimation_law"), "{}", last_error());
        let unknown = CString::new("nope").unwrap();
        assert_eq!(rs_problem_preset(unknown.as_ptr(), &mut problem), RsStatus::Config);
        assert_eq!(rs_closed_form_gaussian_scalar(50, 1.5, &mut exact), RsStatus::InvalidArgument);
        assert_eq!(rs_problem_preset(ptr::null(), &mut problem), RsStatus::NullPointer);
    }
}

#[test]
fn synthetic_panel_backtest() {
    let law = CString::new("t6").unwrap();
    let mut panel = ptr::null_mut();
    unsafe {
        assert_eq!(rs_panel_synthetic(law.as_ptr(), 10, 300, 500, 3, &mut panel), RsStatus::Ok);
        assert_eq!(rs_panel_portfolios(panel), 10);
        assert_eq!(rs_panel_len(panel), 800);
        let mut s = RsBacktestSummary::default();
        assert_eq!(rs_backtest(panel, 6, 1, 50, 300, 20_000, 3, &mut s), RsStatus::Ok, "{}", last_error());
        assert_eq!(s.portfolios, 10);
        assert!(s.mean_rate > 0.0 && s.mean_rate < 0.05);
        assert_eq!(rs_backtest(panel, 9, 1, 50, 300, 20_000, 3, &mut s), RsStatus::InvalidArgument);
        assert_eq!(rs_backtest(panel, 1, 3, 50, 300, 20_000, 3, &mut s), RsStatus::InvalidArgument);
        rs_panel_free(panel);
    }
}

#[test]
fn csv_panel_and_empirical_scalar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let mut text = String::from("date;a\n");
    for d in 1..=28 {
        text.push_str(&format!("2021-02-{d:02};{}\n", if d % 7 == 0 { "-0,03" } else { "0,01" }));
    }
    std::fs::write(&path, text).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let opts = CString::new(r#"{"delimiter": ";", "decimal": ","}"#).unwrap();
    let mut panel = ptr::null_mut();
    unsafe {
        assert_eq!(rs_panel_from_csv(cpath.as_ptr(), opts.as_ptr(), &mut panel), RsStatus::Ok, "{}", last_error());
        assert_eq!(rs_panel_len(panel), 28);
        rs_panel_free(panel);
        assert_eq!(rs_panel_from_csv(cpath.as_ptr(), ptr::null(), &mut panel), RsStatus::Io);

        let returns: Vec<f64> = (0..300).map(|i| if i % 10 == 0 { -0.04 } else { 0.01 }).collect();
        let mut c = 0.0;
        let status = rs_fit_empirical_scalar(returns.as_ptr(), returns.len(), 0.01, 1, 50, &mut c);
        assert_eq!(status, RsStatus::Ok, "{}", last_error());
        assert!(c > 0.0);
        assert_eq!(rs_fit_empirical_scalar(ptr::null(), 0, 0.01, 1, 50, &mut c), RsStatus::NullPointer);
    }
}

#[test]
fn c_program_links_against_header() {
    let Ok(cc) = which_cc() else { return };
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let built = Command::new(cargo)
        .args(["build", "--quiet", "--lib", "-p", "riskscale-ffi"])
        .status()
        .unwrap();
    assert!(built.success());
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().parent().unwrap().join("libriskscale_ffi.a");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "riskscale.h"
int main(void) {
    double c = 0.0;
    if (rs_closed_form_gaussian_scalar(250, 0.01, &c) != RS_STATUS_OK) return 1;
    if (rs_closed_form_gaussian_scalar(250, 2.0, &c) != RS_STATUS_INVALID_ARGUMENT) return 2;
    RsProblem *p = NULL;
    if (rs_problem_preset("gaussian-var", &p) != RS_STATUS_OK) return 3;
    rs_problem_free(p);
    printf("%s %.4f\n", rs_version(), c);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).ends_with("1.0085\n"));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
