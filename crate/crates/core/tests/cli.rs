use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use taxmech::scenario::{load_scenario, ScenarioBody};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxmech"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name]
        .iter()
        .collect();
    p.display().to_string()
}

#[test]
fn reproduce_pd_prints_both_tables() {
    let text = stdout(&["--format", "csv", "reproduce", "pd"]);
    assert!(text.contains("nash equilibria: (D,D)"));
    assert!(text.contains("nash equilibria: (C,C)"));
    assert!(text.contains("(1.5,1.5)"));

    let json: serde_json::Value = serde_json::from_str(&stdout(&["reproduce", "pd"])).unwrap();
    assert_eq!(json["rate"], 0.5);
}

#[test]
fn reproduce_examples_report_welfare() {
    let text = stdout(&["reproduce", "mcwa-example"]);
    assert!(text.contains("welfare 0.5617"));
    assert!(text.contains("welfare 1.0414"));
    let text = stdout(&["reproduce", "mcs-example"]);
    assert!(text.contains("welfare 0.3000"));
    assert!(text.contains("welfare 5.2000"));
}

#[test]
fn missing_file_is_reported_as_json_error() {
    let out = run(&["solve", "does_not_exist.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]
        .as_str()
        .unwrap()
        .contains("does_not_exist.json"));
}

#[test]
fn usage_errors_exit_nonzero() {
    assert!(!run(&["frobnicate"]).status.success());
    assert!(!run(&["solve"]).status.success());
    assert!(!run(&["solve", "x.json", "--taxed", "--optimum"])
        .status
        .success());
}

#[test]
fn solve_fixtures() {
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&["solve", &fixture("prisoners_dilemma.json")])).unwrap();
    assert_eq!(json["nash"]["profiles"], serde_json::json!([[1, 1]]));
    let json: serde_json::Value = serde_json::from_str(&stdout(&[
        "solve",
        &fixture("prisoners_dilemma.json"),
        "--taxed",
    ]))
    .unwrap();
    assert_eq!(json["nash"]["profiles"], serde_json::json!([[0, 0]]));

    let json: serde_json::Value = serde_json::from_str(&stdout(&[
        "solve",
        &fixture("mcs_single_task.json"),
        "--taxed",
    ]))
    .unwrap();
    assert!((json["welfare"].as_f64().unwrap() - 5.2).abs() < 1e-9);

    let csv = stdout(&[
        "--format",
        "csv",
        "solve",
        &fixture("mcwa_two_users.json"),
        "--optimum",
    ]);
    assert_eq!(csv.lines().next(), Some("user,channel,power,capacity"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn tax_one_profile() {
    let csv = stdout(&[
        "--format",
        "csv",
        "tax",
        &fixture("prisoners_dilemma.json"),
        "--profile",
        "1,0",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "0,3,1.5,0,1.5");
    assert_eq!(lines[2], "1,0,0,1.5,1.5");

    let json: serde_json::Value = serde_json::from_str(&stdout(&[
        "tax",
        &fixture("mcwa_two_users.json"),
        "--profile",
        "2;0",
        "--rate",
        "0",
    ]))
    .unwrap();
    assert_eq!(json["taxes"], serde_json::json!([0.0, 0.0]));
    assert!(!run(&[
        "tax",
        &fixture("prisoners_dilemma.json"),
        "--profile",
        "0,5"
    ])
    .status
    .success());
}

#[test]
fn generated_scenarios_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["mcs", "mcwa"] {
        let path = dir.path().join(format!("{kind}.json"));
        let p = path.to_str().unwrap();
        stdout(&[
            "generate", kind, "--seed", "5", "--users", "3", "--size", "4", "--out", p,
        ]);
        let file = load_scenario(&path).unwrap();
        assert_eq!(file.meta.seed, 5);
        match file.body {
            ScenarioBody::Mcs(s) => assert_eq!((s.n_users(), s.tasks().len()), (3, 4)),
            ScenarioBody::Mcwa(s) => assert_eq!((s.n_users(), s.n_channels()), (3, 4)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            stdout(&["generate", kind, "--seed", "5", "--users", "3", "--size", "4"]),
            fs::read_to_string(&path).unwrap()
        );
        stdout(&["solve", p]);
    }
}

#[test]
fn fig7_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        stdout(&[
            "reproduce",
            "fig7",
            "--trials",
            "2",
            "--seed",
            "9",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    for name in ["trials.csv", "cells.csv"] {
        let x = fs::read_to_string(a.path().join(name)).unwrap();
        assert_eq!(x, fs::read_to_string(b.path().join(name)).unwrap());
        assert!(x.lines().count() > 1);
    }
    let trials = fs::read_to_string(a.path().join("trials.csv")).unwrap();
    // Five reward levels, ten population sizes, two trials each.
    assert_eq!(trials.lines().count(), 1 + 5 * 10 * 2);
}
