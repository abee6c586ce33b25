use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use millid_core::dataset::TimeSeriesDataset;
use millid_core::discovery::DiscoveredSystem;
use millid_core::stability::LobeDiagram;

fn millid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_millid")).args(args).output().expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_then_poincare_reports_a_stable_cut() {
    let dir = tempfile::tempdir().unwrap();
    let cut = path(dir.path(), "cut.csv");
    let out = millid(&["simulate", "--case", "I", "--omega-rpm", "6000", "--depth-mm", "2", "--out", &cut]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = TimeSeriesDataset::load(Path::new(&cut)).unwrap();
    assert_eq!(ds.len(), 40_000);

    let points = path(dir.path(), "points.csv");
    let out = millid(&["poincare", "--dataset", &cut, "--discard", "0.5", "--out", &points]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("classification: stable"));
    let text = fs::read_to_string(&points).unwrap();
    assert!(text.starts_with("x,vx\n"));
    assert_eq!(text.lines().count(), 1 + 80);
}

#[test]
fn discover_then_lobes_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let system = path(dir.path(), "system.json");
    let out = millid(&["discover", "--case", "I", "--omega-rpm", "6000", "--out", &system]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("A = 6"));
    let parsed = DiscoveredSystem::from_json(&fs::read_to_string(&system).unwrap()).unwrap();
    assert_eq!(parsed.omega_rpm, 6000.0);

    let lobes = path(dir.path(), "lobes.csv");
    let out = millid(&["lobes", "--system", &system, "--rpm-min", "4000", "--rpm-max", "12000", "--lobe-max", "5", "--out", &lobes]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let points = LobeDiagram::read_csv(fs::File::open(&lobes).unwrap()).unwrap();
    assert!(!points.is_empty());
    assert!(points.iter().all(|p| (4000.0..=12000.0).contains(&p.omega_rpm) && p.lobe_index <= 5));
}

#[test]
fn discover_honours_k_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let system = path(dir.path(), "system.json");
    let out = millid(&[
        "discover", "--case", "II", "--omega-rpm", "6000", "--noise-ratio", "0.001", "--seed", "7",
        "--k-overrides", "Ft=3,Fn=3", "--lambda2", "1e-6", "--bound-m", "500", "--out", &system,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed = DiscoveredSystem::from_json(&fs::read_to_string(&system).unwrap()).unwrap();
    assert_eq!(parsed.seed, 7);
    assert_eq!(parsed.noise_ratio, 0.001);
    assert_eq!(parsed.config.lambda2, 1e-6);
    assert_eq!(parsed.config.bound_m, 500.0);
    for eq in ["Ft", "Fn"] {
        let id = millid_core::library::EquationId::from_name(eq).unwrap();
        assert_eq!(parsed.equations[&id].terms.len(), 3);
    }
}

#[test]
fn lobes_on_a_nonlinear_system_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let system = path(dir.path(), "system.json");
    assert_eq!(millid(&["discover", "--case", "II", "--omega-rpm", "6000", "--out", &system]).status.code(), Some(0));
    let out = millid(&["lobes", "--system", &system, "--out", &path(dir.path(), "lobes.csv")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let config = path(dir.path(), "config.json");
    fs::write(&config, r#"{"speeds_rpm": [6000], "noise_ratios": [0, 0.001], "revolutions": 3}"#).unwrap();
    let out_dir = dir.path().join("report");
    let out = millid(&["report", "--case", "I", "--config", &config, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["a_values.csv", "cells.csv", "a_values.md", "equations.md", "sweep.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let grid = fs::read_to_string(out_dir.join("a_values.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert!(grid.lines().nth(1).unwrap().ends_with(",6"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = path(dir.path(), "x.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["bogus"],
        vec!["simulate", "--case", "III", "--omega-rpm", "6000", "--depth-mm", "2", "--out", &out_file],
        vec!["simulate", "--case", "I", "--omega-rpm", "-1", "--depth-mm", "2", "--out", &out_file],
        vec!["discover", "--case", "I", "--omega-rpm", "6000", "--k-overrides", "Fz=2", "--out", &out_file],
        vec!["discover", "--case", "I", "--omega-rpm", "6000", "--lambda2", "-1", "--out", &out_file],
        vec!["poincare", "--dataset", "/nonexistent.csv", "--out", &out_file],
        vec!["poincare", "--dataset", "/nonexistent.csv", "--discard", "1.5", "--out", &out_file],
        vec!["lobes", "--system", "/nonexistent.json", "--out", &out_file],
        vec!["report", "--case", "I", "--config", "/nonexistent.json", "--out-dir", &out_file],
    ];
    for args in cases {
        assert_eq!(millid(&args).status.code(), Some(1), "args {args:?}");
    }
}

#[test]
fn help_exits_with_zero() {
    assert_eq!(millid(&["--help"]).status.code(), Some(0));
    assert_eq!(millid(&["simulate", "--help"]).status.code(), Some(0));
}
