use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ratekit"));
    c.env_remove("RATEKIT_THREADS");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr: {}", o.status, stderr(o));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Tables for the bundled case study in a fresh directory.
fn precomputed() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    ok(&run(&["precompute", "--config", p(&configs().join("casestudy.json")), "--out", p(&tables)]));
    (dir, tables)
}

fn sim_config(dir: &Path, strategy: &str) -> PathBuf {
    let plant = configs().join("plant_dcservo.json");
    let text = format!(
        r#"{{
  "plant": {plant:?},
  "rates_ms": [10, 20, 30, 40, 50, 60, 70, 80, 90],
  "levels": {{"thresholds": [0, 10, 50, 100], "representative_r": [5, 30, 75]}},
  "peak_power_mw": 100,
  "hyper_period_s": 10,
  "budget": {{"energy_j": 0.4}},
  "scenario": {{"segments": [{{"duration_s": 4, "r": 5}}, {{"duration_s": 3, "r": 30}}, {{"duration_s": 3, "r": 75}}], "seed": 3, "repeat": 3}},
  "strategy": {strategy},
  "sample_stride": 5
}}"#
    );
    let path = dir.join("sim.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn precompute_writes_all_tables() {
    let (_dir, tables) = precomputed();
    let ct = fs::read_to_string(tables.join("ct.csv")).unwrap();
    assert_eq!(ct.lines().count(), 18);
    let pt = fs::read_to_string(tables.join("pt.csv")).unwrap();
    assert_eq!(pt.lines().count(), 18);
    for j in 1..=3 {
        let profit = fs::read_to_string(tables.join(format!("profit_l{j}.csv"))).unwrap();
        assert_eq!(profit.lines().count(), 18);
    }
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tables.join("tables.json")).unwrap()).unwrap();
    assert_eq!(meta["provenance"]["plant_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn approach1_and_exhaustive_pick_the_same_controller() {
    let (_dir, tables) = precomputed();
    let mut outputs = Vec::new();
    for algo in ["approach1", "exhaustive"] {
        let o = run(&[
            "synthesize", "--tables", p(&tables), "--pattern", "0.7,0.1,0.2",
            "--budget-energy", "4.0", "--budget-window", "100", "--algo", algo,
        ]);
        ok(&o);
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert!(v.get("elapsed_s").is_none());
        assert_eq!(v["feasible"], true);
        outputs.push(v);
    }
    assert_eq!(outputs[0]["controller"], outputs[1]["controller"]);
    assert_eq!(outputs[0]["predicted_cost"], outputs[1]["predicted_cost"]);
    assert_eq!(outputs[1]["explored"], 17 * 17 * 17);
}

#[test]
fn timing_flag_adds_elapsed_time() {
    let (_dir, tables) = precomputed();
    let o = run(&[
        "synthesize", "--tables", p(&tables), "--pattern", "0.7,0.1,0.2",
        "--budget-energy", "4.0", "--budget-window", "100", "--algo", "approach2", "--timing",
    ]);
    ok(&o);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["elapsed_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn infeasible_budget_exit_codes() {
    let (_dir, tables) = precomputed();
    let base = [
        "synthesize", "--tables", p(&tables), "--pattern", "0.7,0.1,0.2",
        "--budget-energy", "0.5", "--budget-window", "100",
    ];
    let lenient = run(&base);
    ok(&lenient);
    let v: serde_json::Value = serde_json::from_str(&stdout(&lenient)).unwrap();
    assert_eq!(v["feasible"], false);
    assert!(stderr(&lenient).contains("warning"));

    let mut strict = base.to_vec();
    strict.push("--strict");
    let o = run(&strict);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_plant_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"plant": "nowhere/plant.json", "rates_ms": [10, 20],
            "levels": {"thresholds": [0, 10, 50, 100]}, "peak_power_mw": 100, "hyper_period_s": 100}"#,
    )
    .unwrap();
    let o = run(&["precompute", "--config", p(&cfg), "--out", p(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/plant.json"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"rates_ms": [10, 20], "levels": {"thresholds": [0, 10, 50, 100]},
            "peak_power_mw": -5, "hyper_period_s": 100}"#,
    )
    .unwrap();
    let o = run(&["precompute", "--config", p(&cfg), "--out", p(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("peak_power_mw"), "{}", stderr(&o));

    fs::write(
        &cfg,
        r#"{"rates_ms": [10, 20], "levels": {"thresholds": [0, 10, 50, 100]},
            "peak_power_mw": 100, "hyper_period_s": 100, "hyperperiod": 3}"#,
    )
    .unwrap();
    let o = run(&["precompute", "--config", p(&cfg), "--out", p(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hyperperiod"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["synthesize"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    let (_dir, tables) = precomputed();
    let bad_pattern = run(&[
        "synthesize", "--tables", p(&tables), "--pattern", "0.7,0.7,0.2",
        "--budget-energy", "4", "--budget-window", "100",
    ]);
    assert_eq!(bad_pattern.status.code(), Some(1));
}

#[test]
fn version_reports_the_build() {
    let o = run(&["--version"]);
    ok(&o);
    assert!(stdout(&o).starts_with("ratekit 0.1.0"));
    assert!(stdout(&o).contains("git:"), "{}", stdout(&o));
    let short = run(&["-V"]);
    ok(&short);
    assert!(!stdout(&short).contains("git:"));
}

#[test]
fn thread_count_must_be_positive() {
    let o = bin()
        .env("RATEKIT_THREADS", "0")
        .args(["bench", "--cases", "x", "--out", "y"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("RATEKIT_THREADS"));
}

#[test]
fn simulate_is_reproducible_and_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sim_config(dir.path(), r#"{"adaptive": {"algorithm": "approach1"}}"#);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let oa = run(&["simulate", "--config", p(&cfg), "--out", p(&a), "--emit-plotdata"]);
    ok(&oa);
    let ob = bin()
        .env("RATEKIT_THREADS", "2")
        .args(["simulate", "--config", p(&cfg), "--out", p(&b)])
        .output()
        .unwrap();
    ok(&ob);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(stdout(&oa), stdout(&ob));

    let summary: serde_json::Value = serde_json::from_str(&stdout(&oa)).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["budget_j"], 0.4);
    let trace = fs::read_to_string(&a).unwrap();
    let kinds: Vec<String> = trace
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["event"].as_str().unwrap().to_owned())
        .collect();
    assert!(kinds.iter().any(|k| k == "sample"));
    assert_eq!(kinds.iter().filter(|k| *k == "synthesis").count(), 3);
    assert_eq!(kinds.iter().filter(|k| *k == "window_boundary").count(), 3);

    let plot = fs::read_to_string(dir.path().join("a.jsonl.plot.csv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("t_s,cost_integral,avg_cost,energy_j,battery_j"));
    assert!(lines.count() >= 30);

    let oc = run(&["simulate", "--config", p(&cfg), "--seed", "4", "--out", p(&b)]);
    ok(&oc);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn fixed_simulation_runs_one_period() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sim_config(dir.path(), r#"{"fixed": {"period_ms": 50}}"#);
    let out = dir.path().join("f.jsonl");
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    ok(&o);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["samples"], 600);
    let trace = fs::read_to_string(&out).unwrap();
    assert!(!trace.contains("\"synthesis\""));
}

#[test]
fn bench_writes_csv_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases.json");
    fs::write(
        &cases,
        r#"{"cases": [{"n": 5, "k": 3, "seed": 2, "repetitions": 1}, {"name": "servo", "n": 9, "k": 3, "tables": "dc_servo", "repetitions": 1}]}"#,
    )
    .unwrap();
    let out = dir.path().join("bench.csv");
    let o = run(&["bench", "--cases", p(&cases), "--out", p(&out)]);
    ok(&o);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.lines().next().unwrap().contains("explored"));
    assert!(stdout(&o).contains("approach2"));
}

#[test]
fn battery_compares_fixed_and_multirate() {
    let (dir, tables) = precomputed();
    let out = dir.path().join("battery.csv");
    let o = run(&[
        "battery", "--tables", p(&tables), "--pattern", p(&configs().join("battery_pattern.json")),
        "--capacity", "1000mAh", "--voltage", "3.7", "--out", p(&out),
    ]);
    ok(&o);
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_s,fixed_j,multirate_j"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() >= 2);
    let first = &rows[0];
    assert!((first[1] - 13320.0).abs() < 1e-6 && (first[2] - 13320.0).abs() < 1e-6);
    for w in rows.windows(2) {
        assert!(w[1][1] <= w[0][1] && w[1][2] <= w[0][2]);
    }

    let bad = run(&["battery", "--tables", p(&tables), "--pattern", "0.7,0.1,0.2", "--capacity", "-3mAh"]);
    assert_eq!(bad.status.code(), Some(1));
}
