use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn verk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verk")).args(args).output().expect("binary runs")
}

fn tableau(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tableaux").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("stderr is one JSON object")
}

#[test]
fn shipped_tableaux_pass_the_checker() {
    for name in ["classical-rk4.json", "three-eighths.json"] {
        let o = verk(&["check-tableau", tableau(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}");
        let out = stdout(&o);
        assert_eq!(out.lines().filter(|l| l.contains("residual +") || l.contains("residual -")).count(), 8);
        assert!(out.contains("PASS"));
    }
}

#[test]
fn first_stage_only_weights_fail_the_checker() {
    let o = verk(&["check-tableau", tableau("first-stage-only.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL"));
    assert!(out.contains("-5.000e-1"));
}

#[test]
fn malformed_tableau_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"s\": 4,\n  \"A\": [[0, 0],\n}").unwrap();
    let o = verk(&["check-tableau", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert!(err["message"].as_str().unwrap().contains("line 4"), "{err}");
}

#[test]
fn scalar_linear_run_reports_exactness() {
    let dir = tempfile::tempdir().unwrap();
    let o = verk(&[
        "run",
        "--problem",
        "scalar-linear",
        "--methods",
        "mverk41",
        "--k",
        "4..8",
        "--repetitions",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("exact"));

    let csv = std::fs::read_to_string(dir.path().join("scalar-linear.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "problem,method,k,h,steps,global_error,wall_time_total_s,wall_time_cache_s"
    );
    assert_eq!(lines.count(), 5);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scalar-linear.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["problem"], "scalar-linear");
    assert_eq!(json["config"]["k_min"], 4);
    assert_eq!(json["config"]["params"]["lambda"], 1.0);
    assert_eq!(json["environment"]["dimension"], 1);
    assert!(json["reports"][0]["rows"].as_array().unwrap().iter().all(|r| r["at_floor"] == true));
}

#[test]
fn wind_run_gives_fourth_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = verk(&[
        "run",
        "--problem",
        "wind",
        "--methods",
        "mverk41,sverk41,rk4",
        "--k",
        "4..8",
        "--t-end",
        "10",
        "--repetitions",
        "1",
        "--timing",
        "parallel",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("wind.json")).unwrap()).unwrap();
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for rep in &reports[..2] {
        let order = rep["fitted_order"].as_f64().unwrap();
        assert!((3.7..=4.3).contains(&order), "{}: {order}", rep["method"]);
    }
}

#[test]
fn custom_tableau_drives_generic_steppers() {
    let dir = tempfile::tempdir().unwrap();
    let o = verk(&[
        "run",
        "--problem",
        "scalar-quadratic",
        "--methods",
        "mverk4,sverk4",
        "--tableau",
        tableau("three-eighths.json").to_str().unwrap(),
        "--k",
        "3..5",
        "--repetitions",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scalar-quadratic.json")).unwrap()).unwrap();
    assert!(json["environment"]["tableau"]["path"].as_str().unwrap().ends_with("three-eighths.json"));
    assert_eq!(json["environment"]["tableau"]["coefficients"]["b"][0], 0.125);
}

#[test]
fn configuration_errors_exit_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "--problem", "lorenz", "--out", out],
        vec!["run", "--problem", "wind", "--methods", "euler", "--out", out],
        vec!["run", "--problem", "wind", "--k", "8..4", "--out", out],
        vec!["run", "--problem", "wind", "--param", "epsilon=2", "--out", out],
        vec!["run", "--problem", "wind", "--methods", "mverk4", "--out", out],
        vec!["run", "--problem", "wind", "--timing", "fast", "--out", out],
    ] {
        let o = verk(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&o)["exit_code"], 2);
    }
}

#[test]
fn unwritable_output_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = blocker.join("sub");
    let o = verk(&["run", "--problem", "scalar-linear", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "io");
}

#[test]
fn unreliable_reference_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = verk(&[
        "run",
        "--problem",
        "allen-cahn",
        "--methods",
        "mverk41",
        "--k",
        "4..8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "unreliable-reference");
}

#[test]
fn diverging_reference_exits_3() {
    // y' = y + y² from y₀ = 1/2 blows up at t = ln 3.
    let dir = tempfile::tempdir().unwrap();
    let o = verk(&[
        "run",
        "--problem",
        "scalar-quadratic",
        "--param",
        "lambda=-1",
        "--t-end",
        "4",
        "--k",
        "2..3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["error"], "divergence");
}
