use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adaptive_dlm::report::{read_csv_file, read_json_file, LagCurveRow, MisspecRow, Table1Row};
use adaptive_dlm_cli::commands::FitSummary;
use serde_json::Value;

fn adlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adlm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = adlm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write_quick_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("quick.json");
    let text = format!(r#"{{ "chain": {{ "n_iter": 1500, "burn_in": 500 }}{extra} }}"#);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn simulate(dir: &Path) -> String {
    let sim = dir.join("sim");
    ok(&["simulate", "--scenario", "decay_curve", "--seed", "11", "--out", sim.to_str().unwrap()]);
    sim.join("data.csv").display().to_string()
}

#[test]
fn fit_writes_a_full_lag_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path());
    let cfg = write_quick_config(dir.path(), "");
    let out = dir.path().join("fit");
    ok(&["fit", "--config", &cfg, "--input", &data, "--model", "M3", "--out", out.to_str().unwrap(), "--dump-samples"]);
    let rows: Vec<LagCurveRow> = read_csv_file(&out.join("lagcurve.csv")).unwrap();
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().enumerate().all(|(j, r)| r.lag == j && r.lower95 <= r.upper95));
    let header = fs::read_to_string(out.join("lagcurve.csv")).unwrap();
    assert!(header.starts_with("lag,beta_mean,lower95,upper95\n"));
    let s: FitSummary = read_json_file(&out.join("summary.json")).unwrap();
    assert_eq!((s.p, s.k, s.sample_count), (50, 34, 1000));
    assert!(s.ed > 0.0 && s.ed <= 34.0);
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1001);
    assert!(out.join("run_config.json").exists());
}

#[test]
fn fit_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path());
    let cfg = write_quick_config(dir.path(), "");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["fit", "--config", &cfg, "--input", &data, "--seed", seed, "--out", out.to_str().unwrap()]);
        let mut summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        summary.as_object_mut().unwrap().remove("wall_time_s");
        (fs::read(out.join("lagcurve.csv")).unwrap(), summary)
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn every_model_fits_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path());
    let cfg = write_quick_config(dir.path(), "");
    for m in ["M1", "M2", "M3", "M4", "M5"] {
        let out = dir.path().join(m);
        ok(&["fit", "--config", &cfg, "--input", &data, "--model", m, "--out", out.to_str().unwrap()]);
        let s: FitSummary = read_json_file(&out.join("summary.json")).unwrap();
        assert_eq!(s.model.to_string(), m);
        assert_eq!(s.knots.is_some(), m == "M5");
    }
}

#[test]
fn short_series_is_a_data_error_naming_n_and_p() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("short.csv");
    let mut text = String::from("t,x,y\n");
    for t in 1..=30 {
        text.push_str(&format!("{t},0.{t},1\n"));
    }
    fs::write(&input, text).unwrap();
    let out = adlm(&["fit", "--input", input.to_str().unwrap(), "--p", "50", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n = 30") && err.contains("p = 50"), "{err}");
}

#[test]
fn malformed_input_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "t,x,y\n1,0.1,1\n2,oops,1\n").unwrap();
    let out = adlm(&["fit", "--input", input.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = adlm(&["study", "--reps", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let cfg = dir.path().join("typo.json");
    fs::write(&cfg, r#"{"seed": 1, "chain": {"burnin": 10}}"#).unwrap();
    let out = adlm(&["study", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("burnin"));

    let out = adlm(&["study", "--seed", "1", "--model", "M9", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_study_writes_one_row_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_quick_config(dir.path(), "");
    let out = dir.path().join("study");
    let o = out.to_str().unwrap();
    ok(&["study", "--config", &cfg, "--seed", "3", "--reps", "2", "--scenario", "sharp_peak", "--model", "M3", "--out", o, "--workers", "2"]);
    let rows: Vec<Table1Row> = read_csv_file(&out.join("table1.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].reps, rows[0].failures), (2, 0));
    let json: Vec<Table1Row> = read_json_file(&out.join("table1.json")).unwrap();
    assert_eq!(json, rows);
    let replicates = fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert_eq!(replicates.lines().count(), 3);

    let resolved = out.join("run_config.json");
    let again = dir.path().join("again");
    ok(&["study", "--config", resolved.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(out.join("table1.csv")).unwrap(), fs::read(again.join("table1.csv")).unwrap());
}

#[test]
fn misspec_writes_one_row_per_model_and_lag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_quick_config(dir.path(), "");
    let out = dir.path().join("mis");
    ok(&["misspec", "--config", &cfg, "--seed", "3", "--reps", "1", "--model", "M3,M5", "--out", out.to_str().unwrap()]);
    let rows: Vec<MisspecRow> = read_csv_file(&out.join("misspec.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    let ps: Vec<usize> = rows.iter().take(4).map(|r| r.p).collect();
    assert_eq!(ps, vec![50, 75, 100, 125]);
    let header = fs::read_to_string(out.join("misspec.csv")).unwrap();
    assert!(header.starts_with("model,p,ed,rmse_x1e3,bias2_x1e3,reps,failures\n"));
}
