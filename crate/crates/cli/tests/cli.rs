use std::process::{Command, Output};

use serde_json::Value;

fn cpreduce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpreduce"))
        .args(args)
        .env_remove("CPREDUCE_SEED")
        .output()
        .expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("every line is JSON"))
        .collect()
}

fn validator() -> jsonschema::Validator {
    let text = include_str!("../../../docs/report.schema.json");
    jsonschema::draft202012::new(&serde_json::from_str(text).unwrap()).expect("schema compiles")
}

fn check_shape(report: &[Value], trials: usize) {
    let schema = validator();
    for line in report {
        if let Err(e) = schema.validate(line) {
            panic!("line does not match schema: {e}\n{line}");
        }
    }
    assert_eq!(report.len(), trials + 2);
    let header = &report[0];
    assert_eq!(header["kind"], "header");
    assert_eq!(header["schema_version"], 1);
    for key in ["command", "config"] {
        assert!(header.get(key).is_some(), "header lacks {key}");
    }
    for t in &report[1..=trials] {
        assert_eq!(t["kind"], "trial");
        for key in ["trial", "seed", "pass", "worst_residual", "record"] {
            assert!(t.get(key).is_some(), "trial lacks {key}: {t}");
        }
    }
    let summary = &report[trials + 1];
    assert_eq!(summary["kind"], "summary");
    for key in ["pass", "pass_count", "trials", "worst_residual"] {
        assert!(summary["summary"].get(key).is_some(), "summary lacks {key}");
    }
}

#[test]
fn every_subcommand_emits_the_report_layout() {
    let runs: [&[&str]; 7] = [
        &["verify-family", "--family", "markov-blocks", "--trials", "3"],
        &["verify-family", "--family", "steered", "--trials", "3"],
        &["consistency", "--family", "factorized", "--trials", "3"],
        &["theorem1", "--family", "direct-sum", "--trials", "3"],
        &["dpi", "--trials", "3"],
        &["demo", "2", "--trials", "3"],
        &["witness", "--trials", "3"],
    ];
    for args in runs {
        let out = cpreduce(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let report = lines(&out);
        check_shape(&report, 3);
        assert!(report[4].get("wall_time_s").is_none());
    }
}

#[test]
fn fixed_seed_gives_identical_bytes() {
    let args = ["demo", "1", "--trials", "4", "--seed", "17"];
    let a = cpreduce(&args);
    let b = cpreduce(&args);
    assert_eq!(a.stdout, b.stdout);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo.jsonl");
    let path_str = path.to_str().unwrap();
    let c = cpreduce(&[&args[..], &["--out", path_str]].concat());
    assert_eq!(c.status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), a.stdout);

    let from_env = Command::new(env!("CARGO_BIN_EXE_cpreduce"))
        .args(["demo", "1", "--trials", "4"])
        .env("CPREDUCE_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(from_env.stdout, a.stdout);
}

#[test]
fn timing_is_opt_in() {
    let out = cpreduce(&["dpi", "--trials", "1", "--timing"]);
    let report = lines(&out);
    check_shape(&report, 1);
    assert!(report.last().unwrap()["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn failing_run_exits_with_one() {
    // Kernel shifts are not preserved by generic joint unitaries.
    let out = cpreduce(&["verify-family", "--family", "kernel-extended", "--g", "all", "--trials", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let report = lines(&out);
    check_shape(&report, 2);
    assert_eq!(report.last().unwrap()["summary"]["pass"], false);
}

#[test]
fn usage_errors_exit_with_two() {
    let bad: [&[&str]; 5] = [
        &["verify-family", "--family", "no-such-family"],
        &["verify-family", "--family", "factorized", "--ds", "8", "--de", "9"],
        &["demo", "3"],
        &["demo", "1", "--ds", "2", "--de", "3"],
        &["verify-family", "--family", "markov-blocks", "--blocks", "1x2,2x1", "--ds", "3"],
    ];
    for args in bad {
        let out = cpreduce(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn explicit_unitary_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    // Identity on C^2 ⊗ C^2 as nested [re, im] rows.
    let id: Vec<Vec<[f64; 2]>> =
        (0..4).map(|i| (0..4).map(|j| [if i == j { 1.0 } else { 0.0 }, 0.0]).collect()).collect();
    std::fs::write(&path, serde_json::to_string(&vec![id]).unwrap()).unwrap();
    let out = cpreduce(&[
        "theorem1",
        "--family",
        "factorized",
        "--ds",
        "2",
        "--g",
        "file",
        "--g-file",
        path.to_str().unwrap(),
        "--trials",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    check_shape(&lines(&out), 2);
}
