use std::fs;
use std::process::{Command, Output};

use photon_crystal::sweep::CSV_HEADER;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_photon-crystal"));
    c.env("PHOTON_CRYSTAL_WORKERS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn semiclassical_sweep_writes_csv() {
    let o = run(&["sweep", "--engine", "semiclassical", "--axis1", "omega:0:1:3", "--axis2", "delta:-1:1:2", "--set", "zv=0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 6);
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(first[1].parse::<f64>().unwrap(), -1.0);
    assert!(first[2].parse::<f64>().unwrap() < 1e-6);
    assert_eq!(first[5], "UNI");
}

#[test]
fn invalid_input_exits_with_code_2() {
    let bad_axis = run(&["sweep", "--engine", "semiclassical", "--axis1", "omega:0:1:1"]);
    assert_eq!(bad_axis.status.code(), Some(2));
    let bad_set = run(&["sweep", "--axis1", "omega:0:1:3", "--set", "kappa=-1"]);
    assert_eq!(bad_set.status.code(), Some(2));
    let out_of_scope = run(&["sweep", "--engine", "semiclassical", "--axis1", "omega:0:1:3", "--set", "u=1"]);
    assert_eq!(out_of_scope.status.code(), Some(2));
    let unknown = run(&["reproduce", "fig7"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn failed_nodes_exit_with_code_3() {
    // A strong drive overflows a two-photon cutoff that may not grow.
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"axis1": "omega:2:3:2", "fixed": {"n_max": 2}, "engine": "meanfield", "max_n_max": 2,
            "classify": {"t_max": 20, "burn_in": 10}}"#,
    )
    .unwrap();
    let o = run(&["sweep", "--spec", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("UNDECIDED"));
}

#[test]
fn circuit_map_reports_couplings_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("circuit.json");
    fs::write(
        &cfg,
        r#"{"circuit": {"L": 1e-9, "C": 4e-13, "C_J": 2e-14, "E_J": 2e-23, "drive_frequency": 4.4e10},
            "lattice": {"omega_drive": 1e6, "kappa": 1e6}}"#,
    )
    .unwrap();
    let o = run(&["circuit-map", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let json_end = text.find("\n\n").unwrap();
    let v: serde_json::Value = serde_json::from_str(&text[..json_end]).unwrap();
    let c = &v["couplings"];
    assert_eq!(c["v"].as_f64().unwrap(), 2.0 * c["u"].as_f64().unwrap());
    let m = &v["model"];
    assert_eq!(m["zv"].as_f64().unwrap(), 2.0 * m["u"].as_f64().unwrap());
    assert!(text.contains("X_J"));
}

#[test]
fn fixed_points_are_json() {
    let o = run(&["fixed-points", "--set", "delta=0.5", "--set", "omega=1", "--set", "zv=3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["method"], "closed_form");
    assert!(!v["points"].as_array().unwrap().is_empty());
}

#[test]
fn wigner_of_vacuum_peaks_at_one() {
    let o = run(&["wigner", "--state", "vacuum", "--set", "n_max=4", "--points", "5", "--half", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("x,p,w"));
    let origin = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|v| v[0] == 0.0 && v[1] == 0.0)
        .unwrap();
    assert!((origin[2] - 1.0).abs() < 1e-9);
}

#[test]
fn reproduce_writes_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "reproduce",
        "fig2c",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--points",
        "3",
        "--t-max",
        "40",
        "--burn-in",
        "20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("fig2c.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 10);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fig2c.json")).unwrap()).unwrap();
    assert!(manifest.get("recipe").is_some());
}
