use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpa-forecast"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn sample_size_prints_required_n() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sample-size", "--epsilon", "0.01", "--gamma", "0.95"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "9604");
    let o = run(&["sample-size"], dir.path());
    assert_eq!(stdout(&o).trim(), "9604");
    let o = run(&["sample-size", "--epsilon", "0.05", "--gamma", "0.99"], dir.path());
    assert_eq!(stdout(&o).trim(), "664");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.json"), r#"{"epsilon": 0.5, "gamma": 0.95}"#).unwrap();
    let o = run(&["sample-size", "--config", "run.json"], dir.path());
    assert_eq!(stdout(&o).trim(), "4");
    let o = run(&["sample-size", "--config", "run.json", "--epsilon", "0.01"], dir.path());
    assert_eq!(stdout(&o).trim(), "9604");
}

#[test]
fn bad_inputs_fail_with_one_line_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"epsilon": "x"}"#).unwrap();
    fs::write(dir.path().join("unknown.json"), r#"{"epsilson": 0.1}"#).unwrap();
    for args in [
        &["sample-size", "--gamma", "1.5"][..],
        &["sample-size", "--config", "missing.json"],
        &["sample-size", "--config", "bad.json"],
        &["sample-size", "--config", "unknown.json"],
        &["fit", "--log", "missing.jsonl", "--line", "missing.json"],
        &["forecast", "--line", "missing.json"],
        &["validate"],
        &["simulate", "--plant", "missing.json"],
    ] {
        let o = run(args, dir.path());
        assert!(!o.status.success(), "{args:?} should fail");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{args:?}: {err}");
    }
}

fn simulate_and_forecast(dir: &Path) {
    let o = run(&["simulate", "--seed", "5", "-o", "day", "--deliver-at", "1.1", "--grid-points", "60"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        &[
            "forecast", "--log", "day/log.jsonl", "--line", "day/line.json", "--seed", "5", "--k-max", "3",
            "--grid-points", "80", "--plots", "-o", "fc",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn forecast_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_and_forecast(a.path());
    simulate_and_forecast(b.path());
    for f in [
        "day/log.jsonl",
        "day/line.json",
        "day/truth.json",
        "day/truth_curves.csv",
        "day/delivered.jsonl",
        "fc/models.json",
        "fc/curves.csv",
        "fc/curves.json",
        "fc/impressions.svg",
        "fc/spend.svg",
        "fc/plant_gain.svg",
        "fc/spend_ecpa.svg",
    ] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let csv = fs::read_to_string(a.path().join("fc/curves.csv")).unwrap();
    assert!(csv.starts_with("u,n_impressions,spend,plant_gain,n_conversions,ecpa\n"));
    assert_eq!(csv.lines().count(), 82);
    assert!(!csv.contains("-0,"));

    // forecasting from the saved models gives the same curves
    let o = run(
        &[
            "forecast", "--log", "day/log.jsonl", "--line", "day/line.json", "--models", "fc/models.json",
            "--seed", "5", "--grid-points", "80", "-o", "again",
        ],
        a.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(a.path().join("again/curves.csv")).unwrap(),
        fs::read(a.path().join("fc/curves.csv")).unwrap()
    );
}

#[test]
fn validate_reports_unit_bias_when_forecast_equals_actual() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("curves.csv"),
        "u,n_impressions,spend,plant_gain,n_conversions,ecpa\n0,0,0,0,0,\n1,100,50,40,2,25\n2,200,120,60,3,40\n",
    )
    .unwrap();
    let mut counts = vec![0u64; 288];
    counts[0] = 100;
    let actual = serde_json::json!({
        "counts": counts,
        "pacing": vec![1.0; 288],
        "tod": {"beta1": 0.0, "phi1": 0.0, "beta2": 0.0, "phi2": 0.0},
        "log_sampling_factor": 1.0,
        "external_win_rate": 1.0,
    });
    let manifest = serde_json::json!({
        "lines": [
            {"line_id": "a", "curves": "curves.csv", "u_realized": 1.0, "actual": actual},
            {"line_id": "b", "curves": "curves.csv", "u_realized": 1.0, "actual": actual},
        ]
    });
    fs::write(dir.path().join("manifest.json"), manifest.to_string()).unwrap();
    let o = run(&["validate", "--manifest", "manifest.json", "-o", "v", "--workers", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v/bias.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["rho"]["q50"], 1.0);
    assert_eq!(report["records"][0]["log_rho"], 0.0);
    let hist = fs::read_to_string(dir.path().join("v/bias_hist.csv")).unwrap();
    assert!(hist.starts_with("bin_left,count"));
}

#[test]
fn validate_keeps_good_lines_and_fails_on_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_forecast(dir.path());
    let manifest = serde_json::json!({
        "lines": [
            {"line_id": "good", "curves": "fc/curves.csv", "u_realized": 1.1,
             "delivered_log": "day/delivered.jsonl", "line": "day/line.json"},
            {"line_id": "far", "curves": "fc/curves.csv", "u_realized": 1e9,
             "delivered_log": "day/delivered.jsonl", "line": "day/line.json"},
        ]
    });
    fs::write(dir.path().join("manifest.json"), manifest.to_string()).unwrap();
    let o = run(&["validate", "--manifest", "manifest.json", "-o", "v"], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("line far"), "{err}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v/bias.json")).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 1);
    let rho = report["records"][0]["rho"].as_f64().unwrap();
    assert!((rho - 1.0).abs() < 0.1, "rho {rho}");
}

#[test]
fn roundtrip_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let plant = serde_json::json!({
        "true_erm": {"weights": [1.0], "means": [0.05], "stds": [0.01]},
        "bstar_dist": {"kind": "log_normal", "location": -0.5, "scale": 0.6},
        "cost_model": {"kind": "second_price_equal"},
        "true_theta": [0.8, 0.05],
        "g": 20.0, "b_max": 5.0, "u_day": 1.0, "n_records": 3000
    });
    fs::write(dir.path().join("plant.json"), plant.to_string()).unwrap();
    let o = run(&["roundtrip", "--plant", "plant.json", "--k-max", "2", "--grid-points", "40", "-o", "rt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rt/roundtrip.json")).unwrap()).unwrap();
    let theta = report["fitted_theta"].as_array().unwrap();
    assert!((theta[0].as_f64().unwrap() - 0.8).abs() < 0.01);
    assert!((theta[1].as_f64().unwrap() - 0.05).abs() < 0.01);
    assert_eq!(report["rows"].as_array().unwrap().len(), 41);
}
