use std::path::Path;
use std::process::{Command, Output};

fn riskscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskscale"))
        .args(args)
        .env_remove("RISKSCALE_CONFIG")
        .env_remove("RISKSCALE_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[calibrate.problem]\nestimation_law = { family = \"normal\" }\ntarget_law = { family = \"normal\" }\nrisk = { kind = \"var\", alpha = 0.01 }\nestimator = { kind = \"worst_case\" }\n",
    )
    .unwrap();
    let o = riskscale(&["--config", arg(&cfg), "calibrate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`n`"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "mc = 20000\nseeed = 4\n").unwrap();
    let o = riskscale(&["--config", arg(&cfg), "calibrate", "--preset", "gaussian-var"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn bad_csv_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let mut text = String::from("date,a,b\n");
    for d in 1..=20 {
        text.push_str(&format!("2020-01-{d:02},0.01,oops\n"));
    }
    std::fs::write(&csv, text).unwrap();
    let out = dir.path().join("out");
    let o = riskscale(&["backtest", "--input", arg(&csv), "--out", arg(&out), "-q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn usage_error_exits_2() {
    assert_eq!(riskscale(&["calibrate", "--bogus"]).status.code(), Some(2));
}

#[test]
fn heatmap_spot_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h");
    let o = riskscale(&[
        "calibrate", "--preset", "gaussian-heatmap", "--n", "100..250", "--alpha", "0.005..0.025",
        "--closed-form-only", "--out", arg(&out), "-q",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("heatmap.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16 * 9);
    let row = csv.lines().find(|l| l.starts_with("250,0.01,")).unwrap();
    let c: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((c - 1.008).abs() < 0.001, "{row}");
}

#[test]
fn real_csv_backtest_and_replay_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let mut text = String::from("date,p1,p2,p3\n");
    let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
    for t in 0..400u64 {
        let d = start + chrono::Days::new(t);
        let r = |k: u64| ((t * 7919 + k * 104729) % 1000) as f64 / 10_000.0 - 0.05;
        text.push_str(&format!("{d},{},{},{}\n", r(1), r(2), r(3)));
    }
    std::fs::write(&csv, text).unwrap();
    let out = dir.path().join("run");
    let o = riskscale(&[
        "--mc", "20000", "backtest", "--input", arg(&csv), "--backtest-length", "250", "--out", arg(&out), "-q",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("backtest_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 12);

    let again = dir.path().join("again");
    let manifest = out.join("backtest.manifest.json");
    let o = riskscale(&["replay", arg(&manifest), "--out", arg(&again), "--threads", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["backtest_portfolios.csv", "backtest_summary.csv", "backtest_density.csv", "backtest_details.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn tampered_output_hash_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = riskscale(&["--mc", "20000", "calibrate", "--preset", "gaussian-var", "--out", arg(&out), "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = out.join("calibrate.manifest.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    manifest["outputs"][0]["sha256"] = "00".into();
    std::fs::write(&path, manifest.to_string()).unwrap();
    let o = riskscale(&["replay", arg(&path), "--out", arg(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
}
