use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use svnet::gains::{boundary_constants, interval_for};
use svnet::steady::solve_network_steady;
use svnet::topology::{Network, NetworkTopology};

fn star_config(friction: f64) -> Value {
    let ch = |id: usize, len: f64| json!({"id": id, "length": len, "friction": friction, "friction_exponent": 1, "cells": 16});
    json!({
        "network": {
            "channels": [ch(1, 400.0), ch(2, 250.0), ch(3, 250.0), ch(4, 250.0)],
            "root_channel": 1,
            "junctions": [{"incoming": 1, "outgoing": [2, 3, 4], "split_fractions": [0.25, 0.25, 0.5]}]
        },
        "root": {"Q": 1.5, "H0": 2.0},
        "gains": {"2": 6.0, "3": 6.0, "4": 6.0},
        "simulation": {"mode": "nonlinear", "T": 30, "snapshots": [0, 30],
            "perturbation": {"amplitude": 1e-3, "bumps": [{"channel": 1}]}}
    })
}

fn svnet(cmd: &str, cfg: &Value, dir: &Path) -> (Output, PathBuf) {
    let path = dir.join(format!("{cmd}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    let out = dir.join(format!("out_{cmd}"));
    let o = Command::new(env!("CARGO_BIN_EXE_svnet"))
        .args([cmd, "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (o, out)
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn steady_writes_profiles_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = svnet("steady", &star_config(0.002), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for id in 1..=4 {
        let mut rdr = csv::Reader::from_path(out.join(format!("steady_{id}.csv"))).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["x", "H", "V"]);
        assert_eq!(rdr.records().count(), 4 * 16 + 1);
    }
    let summary = read_json(out.join("steady_summary.json"));
    let recs = summary.as_array().unwrap();
    assert_eq!(recs.len(), 4);
    let flux = |i: usize| recs[i]["flux"].as_f64().unwrap();
    assert!((flux(1) + flux(2) + flux(3) - flux(0)).abs() <= 1e-15);
}

#[test]
fn frictionless_profiles_are_constant() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = svnet("steady", &star_config(0.0), dir.path());
    assert_eq!(code(&o), 0);
    let mut rdr = csv::Reader::from_path(out.join("steady_1.csv")).unwrap();
    let rows: Vec<Vec<f64>> = rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.iter().all(|r| r[1] == rows[0][1] && r[2] == rows[0][2]));

    let (o, out) = svnet("gains", &star_config(0.0), dir.path());
    assert_eq!(code(&o), 0);
    let gains = read_json(out.join("gains.json"));
    for t in gains["terminals"].as_array().unwrap() {
        assert_eq!(t["half_line"], json!(true));
        assert_eq!(t["admissible"], json!(true));
    }
}

#[test]
fn steady_blowup_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = star_config(0.002);
    cfg["network"]["channels"][2]["length"] = json!(5.0e4);
    let (o, _) = svnet("steady", &cfg, dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("channel 3"));
}

fn star_steady(cfg: &Value) -> svnet::steady::NetworkSteady {
    let topo: NetworkTopology = serde_json::from_value(cfg["network"].clone()).unwrap();
    solve_network_steady(&Network::new(topo).unwrap(), 1.5, 2.0).unwrap()
}

#[test]
fn missing_gain_or_pole_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = star_config(0.002);
    cfg["gains"].as_object_mut().unwrap().remove("4");
    for cmd in ["gains", "certify", "simulate"] {
        let (o, _) = svnet(cmd, &cfg, dir.path());
        assert_eq!(code(&o), 3, "{cmd}");
    }
    let mut cfg = star_config(0.002);
    let p = star_steady(&cfg).get(2).clone();
    cfg["gains"]["2"] = json!((p.gravity / p.h_end()).sqrt());
    let (o, _) = svnet("gains", &cfg, dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn forbidden_gain_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = star_config(0.002);
    cfg["gains"]["2"] = json!(-1.0);
    let (o, out) = svnet("gains", &cfg, dir.path());
    assert_eq!(code(&o), 0);
    let gains = read_json(out.join("gains.json"));
    assert_eq!(gains["all_admissible"], json!(false));
    let verdicts: Vec<(u64, bool)> = gains["terminals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| (t["channel"].as_u64().unwrap(), t["admissible"].as_bool().unwrap()))
        .collect();
    assert_eq!(verdicts, vec![(2, false), (3, true), (4, true)]);
}

#[test]
fn endpoint_gain_fails_certificate_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = star_config(0.002);
    let s = star_steady(&cfg);
    cfg["gains"]["3"] = json!(interval_for(&boundary_constants(s.get(3)).unwrap()).upper);
    let (o, out) = svnet("certify", &cfg, dir.path());
    assert_eq!(code(&o), 4);
    let cert = read_json(out.join("certificate.json"));
    assert_eq!(cert["certified"], json!(false));
    assert!(cert["failed_checks"].as_array().unwrap().contains(&json!("terminal_margin")));

    let (o, out) = svnet("certify", &star_config(0.002), dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(out.join("certificate.json"))["certified"], json!(true));
}

#[test]
fn simulate_writes_trace_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = svnet("simulate", &star_config(0.002), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(out.join("simulate.json"));
    assert_eq!(summary["weights"], json!("certificate"));
    assert_eq!(summary["zero_trace"], json!(false));
    assert!(summary["VT"].as_f64().unwrap() < summary["V0"].as_f64().unwrap());
    assert!(out.join("trace.csv").exists());
    assert!(out.join("snapshot_0000.csv").exists() && out.join("snapshot_0001.csv").exists());
}

#[test]
fn zero_perturbation_reports_zero_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = star_config(0.002);
    cfg["simulation"]["perturbation"] = json!({"amplitude": 0.0, "bumps": []});
    let (o, out) = svnet("simulate", &cfg, dir.path());
    assert_eq!(code(&o), 0);
    let summary = read_json(out.join("simulate.json"));
    assert_eq!(summary["zero_trace"], json!(true));
    assert_eq!(summary["nu_hat"], json!(0.0));
}

#[test]
fn breaking_perturbation_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = star_config(0.002);
    cfg["simulation"]["perturbation"]["amplitude"] = json!(-1.5);
    let (o, _) = svnet("simulate", &cfg, dir.path());
    assert_eq!(code(&o), 5);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("t = ") && err.contains("subcritical"), "{err}");
}

#[test]
fn unreadable_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_svnet"))
        .args(["steady", "--config", "/nonexistent/config.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}
