use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FAST_PUMP: &str = r#"{"kappa": 100, "gamma": 0.005, "Omega": 10, "delta_p": 5, "delta_s": -10,
    "g": 0.25, "g_dc": 0.001, "n_th": 100, "sigma": 0}"#;

fn dompo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dompo")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scan(axis1: &str, axis2: &str, extra: &str) -> String {
    format!(
        r#"{{"base": {{"kappa": 100, "gamma": 0.005, "Omega": 10, "delta_p": 5, "delta_s": -10,
        "g": 0.1, "g_dc": 0.001, "n_th": 100, "sigma": 0}},
        "axis1": {axis1}, "axis2": {axis2}{extra}}}"#
    )
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn zero_intensity_gives_trivial_state_only() {
    let o = dompo(&["steady", "--I_s", "0"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][0], "trivial");
}

#[test]
fn injection_near_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "fast_pump.json", FAST_PUMP);
    // sqrt(q0) = sqrt(2626) = 51.244; the bistable window lies just below it
    let o = dompo(&["steady", "--config", s(&cfg), "--sigma", "51.2"]);
    assert!(o.status.success());
    let branches: Vec<String> = rows(&stdout(&o)).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(branches, ["trivial", "lower", "upper"]);
    let o = dompo(&["steady", "--config", s(&cfg), "--sigma", "51.3"]);
    let branches: Vec<String> = rows(&stdout(&o)).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(branches, ["trivial", "upper"]);
    for r in rows(&stdout(&o)) {
        let res: f64 = r[11].parse().unwrap();
        assert!(res < 1e-10);
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(&dir, "bad.json", r#"{"kappa": 1"#);
    let unknown = write(&dir, "unknown.json", &FAST_PUMP.replace("\"sigma\"", "\"sigmaa\""));
    let negative = write(&dir, "neg.json", &FAST_PUMP.replace("\"kappa\": 100", "\"kappa\": -1"));
    for cfg in [&bad, &unknown, &negative] {
        let o = dompo(&["steady", "--config", s(cfg)]);
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(dompo(&["steady", "--config", "/nonexistent/x.json"]).status.code(), Some(2));
    assert_eq!(dompo(&["effective-map"]).status.code(), Some(2));
    assert_eq!(dompo(&["steady", "--I_s", "-1"]).status.code(), Some(2));
    assert_eq!(dompo(&["frobnicate"]).status.code(), Some(2));

    let no_intensity = write(&dir, "scan.json", &scan(
        r#"{"name": "g", "min": 0, "max": 0.3, "n_points": 3}"#,
        r#"{"name": "delta_s", "min": -20, "max": 0, "n_points": 3}"#,
        "",
    ));
    assert_eq!(dompo(&["effective-map", "--config", s(&no_intensity)]).status.code(), Some(2));
    let bad_axis = write(&dir, "axis.json", &scan(
        r#"{"name": "temperature", "min": 0, "max": 1, "n_points": 3}"#,
        r#"{"name": "I_s", "min": 1, "max": 10, "n_points": 3}"#,
        "",
    ));
    assert_eq!(dompo(&["effective-map", "--config", s(&bad_axis)]).status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_with_3() {
    let o = dompo(&["simulate", "--I_s", "1", "--tau-end", "1", "--rtol", "1e-300", "--atol", "1e-300"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn hopf_command_lists_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "fast_pump.json", FAST_PUMP);
    let o = dompo(&["hopf", "--config", s(&cfg), "--i-max", "500"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    assert_eq!(r[0][2], "TP");
    assert_eq!(r[0][1].parse::<f64>().unwrap(), 224.0);
    assert_eq!(r[1][2], "HB");
    let i: f64 = r[1][1].parse().unwrap();
    assert!((i - 348.82).abs() < 0.01, "{i}");
}

#[test]
fn stability_reports_six_eigenvalues_per_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "fast_pump.json", FAST_PUMP);
    let o = dompo(&["stability", "--config", s(&cfg), "--sigma", "51.2"]);
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 18);
    // the lower branch between pitchfork and turning point is a saddle
    assert!(r.iter().filter(|c| c[0] == "lower").all(|c| c[2] == "static"));
    // I_s ~ 447 on the upper branch is past the Hopf point at ~348.8
    assert!(r.iter().filter(|c| c[0] == "upper").all(|c| c[2] == "dynamic"));
}

#[test]
fn phase_diagram_turning_points_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "boundary.json", &scan(
        r#"{"name": "g", "min": 0, "max": 0.3, "n_points": 31}"#,
        r#"{"name": "I_s", "min": 1, "max": 300, "n_points": 20}"#,
        "",
    ));
    let out = dir.path().join("pd.csv");
    let o = dompo(&["phase-diagram", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let boundary = rows(&std::fs::read_to_string(&out).unwrap());
    let g_tp = (51.0f64 / 1040.0).sqrt();
    for r in &boundary {
        let g: f64 = r[0].parse().unwrap();
        if r[2] == "TP" {
            assert!(g > g_tp, "TP at g = {g}");
        }
        assert!(g > 0.0, "boundary entry in the g = 0 row");
    }
    let tp_rows = boundary.iter().filter(|r| r[2] == "TP").count();
    assert_eq!(tp_rows, 8, "g = 0.23 .. 0.30");
    let grid = std::fs::read_to_string(dir.path().join("pd.grid.csv")).unwrap();
    assert!(grid.starts_with("param1,param2,branch,classification,margin\n"));
    assert_eq!(rows(&grid).len(), 31 * 20);

    assert_eq!(dompo(&["phase-diagram", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn effective_map_columns_and_decoupled_edge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "map.json", &scan(
        r#"{"name": "g", "min": 0, "max": 0.2, "n_points": 3}"#,
        r#"{"name": "I_s", "min": 10, "max": 100, "n_points": 4}"#,
        r#", "outputs": ["n_eff", "squeeze"]"#,
    ));
    let o = dompo(&["effective-map", "--config", s(&cfg)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "param1,param2,branch,n_eff,squeeze_factor,system");
    let r = rows(&text);
    assert_eq!(r.len(), 12);
    for c in r.iter().filter(|c| c[0].parse::<f64>().unwrap() == 0.0) {
        let n: f64 = c[3].parse().unwrap();
        assert!((n - 99.5).abs() <= 0.01 * 99.5, "{n}");
    }
}

#[test]
fn sideband_map_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "side.json", &scan(
        r#"{"name": "delta_s", "min": -20, "max": 0, "n_points": 5}"#,
        r#"{"name": "I_s", "min": 10, "max": 20, "n_points": 2}"#,
        r#", "system": "sideband""#,
    ));
    let o = dompo(&["effective-map", "--config", s(&cfg)]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 10);
    assert!(r.iter().all(|c| c.last().unwrap() == "sideband"));
}

#[test]
fn simulate_is_seeded() {
    let run = |seed: &str| stdout(&dompo(&["simulate", "--I_s", "2", "--tau-end", "1", "--sample-dt", "0.1", "--seed", seed]));
    let a = run("3");
    assert_eq!(a, run("3"));
    assert_ne!(a, run("4"));
    assert!(a.starts_with("tau,x,p,re_beta_p,im_beta_p,re_beta_s,im_beta_s\n"));
    assert_eq!(a.lines().count(), 12);
}

#[test]
fn verify_passes_and_is_reproducible() {
    let args = ["verify", "--points", "8", "--trajectories", "256", "--seed", "5"];
    let a = dompo(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert!(!stdout(&a).contains("FAIL"));
    assert_eq!(stdout(&a), stdout(&dompo(&args)));
}

#[test]
fn verify_catches_wrong_covariance_factor() {
    let o = dompo(&["verify", "--points", "8", "--trajectories", "256", "--covariance-factor", "1.0"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL vacuum")), "{}", stdout(&o));
}
