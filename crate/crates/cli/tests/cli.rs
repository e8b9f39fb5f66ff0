mod common;

use std::collections::BTreeSet;

use serde_json::Value as Json;

use chaincheck::RunReport;
use chaincheck_core::{fixtures, parse_model};
use common::*;

#[test]
fn check_reports_attack_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = smart_home(dir.path());
    let o = run(&["check", model.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 2);
    let text = stdout(&o);
    assert!(text.ends_with("}\n") && !text.ends_with("\n\n"));
    let report: Json = serde_json::from_str(&text).unwrap();
    assert_valid(&schema(), &report);
    assert_eq!(report["verdict"], "attack");
    assert_eq!(report["trace"].as_array().unwrap().len(), 4);
    assert_eq!(report["stats"]["attributes_after"], 4);
}

#[test]
fn oracle_without_reductions_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let model = smart_home(dir.path());
    let o =
        run(&["check", model.to_str().unwrap(), "--engine", "oracle", "--no-group", "--no-prune", "--format", "json"]);
    assert_eq!(code(&o), 2);
    let report: Json = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(&schema(), &report);
    assert_eq!(report["engine"], "oracle");
    assert_eq!(report["trace"].as_array().unwrap().len(), 4);
    assert!(report["dropped_attributes"].as_array().unwrap().is_empty());
}

#[test]
fn text_report_lists_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check", smart_home(dir.path()).to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let text = stdout(&o);
    assert!(text.starts_with("verdict: attack\n"));
    assert!(text.contains("injected [location=0]"));
    assert!(text.contains("lock=UNLOCKED"));
}

#[test]
fn secure_and_unknown_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let closed = closed_home(dir.path());
    assert_eq!(code(&run(&["check", closed.to_str().unwrap()])), 0);
    let o = run(&["check", smart_home(dir.path()).to_str().unwrap(), "--max-states", "1", "--format", "json"]);
    assert_eq!(code(&o), 3);
    let report: Json = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(&schema(), &report);
    assert_eq!(report["reason"], "budget-exhausted");
}

#[test]
fn errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"attributes\": [").unwrap();
    let o = run(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("syntax error"));
    assert_eq!(code(&run(&["check", "/nonexistent/model.json"])), 1);
    assert_eq!(code(&run(&["check"])), 1);
    assert_eq!(code(&run(&["check", "x.json", "--engine", "quantum"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    // privacy on a model without labels is a configuration error
    let home = smart_home(dir.path());
    let mut m = fixtures::smart_home();
    for a in &mut m.attributes {
        a.label = chaincheck_core::model::Label::Other;
    }
    let unlabeled = write_model(dir.path(), "unlabeled.json", &m);
    assert_eq!(code(&run(&["privacy", unlabeled.to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["check", home.to_str().unwrap(), "--timeout", "-1"])), 1);
}

#[test]
fn privacy_subcommand_matches_mode_flag() {
    let dir = tempfile::tempdir().unwrap();
    let home = smart_home(dir.path());
    let a = run(&["privacy", home.to_str().unwrap(), "--format", "json"]);
    let b = run(&["check", home.to_str().unwrap(), "--mode", "privacy", "--format", "json"]);
    assert_eq!(code(&a), 2);
    assert_eq!(code(&b), 2);
    let ra: Json = serde_json::from_str(&stdout(&a)).unwrap();
    let rb: Json = serde_json::from_str(&stdout(&b)).unwrap();
    assert_valid(&schema(), &ra);
    assert_eq!(ra["trace"], rb["trace"]);
    assert_eq!(ra["mode"], "privacy");
    let first = &ra["trace"][0];
    assert_ne!(first["left"]["occupancy"], first["right"]["occupancy"]);
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check", smart_home(dir.path()).to_str().unwrap(), "--format", "json"]);
    let report: RunReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report.to_json_pretty(), stdout(&o));
    let back: RunReport = serde_json::from_str(&report.to_json_line()).unwrap();
    assert_eq!(back, report);
    assert!(report.render_text().starts_with("verdict: attack"));
}

#[test]
fn mitigate_then_recheck() {
    let dir = tempfile::tempdir().unwrap();
    let home = smart_home(dir.path());
    let o = run(&["mitigate", home.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let report: Json = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["status"], "secure");
    let watch: BTreeSet<String> =
        report["watchlist"].as_array().unwrap().iter().map(|w| w["rule"].as_str().unwrap().to_string()).collect();
    assert!(!watch.is_empty());
    for w in report["watchlist"].as_array().unwrap() {
        for i in w["blocks"].as_array().unwrap() {
            let attack = &report["attacks"][i.as_u64().unwrap() as usize];
            assert!(attack["rules"].as_array().unwrap().iter().any(|r| r == &w["rule"]));
        }
    }
    let gated = fixtures::smart_home().without_rules(&watch);
    let gated = write_model(dir.path(), "gated.json", &gated);
    assert_eq!(code(&run(&["check", gated.to_str().unwrap()])), 0);

    let text = stdout(&run(&["mitigate", home.to_str().unwrap()]));
    assert!(text.starts_with("status: secure\nwatchlist:\n"));
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = run(&["gen", "--seed", "7", "--length", "4", "--distractors", "10", "-o", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let m = parse_model(std::str::from_utf8(&ta).unwrap()).unwrap();
    assert_eq!(m.rules.len(), 14);
    assert_eq!(code(&run(&["check", a.to_str().unwrap()])), 2);

    let neg = dir.path().join("neg.json");
    run(&["gen", "--seed", "7", "--negative", "-o", neg.to_str().unwrap()]);
    assert_eq!(code(&run(&["check", neg.to_str().unwrap()])), 0);

    let p = dir.path().join("p.json");
    run(&["gen", "--seed", "3", "--mode", "privacy", "-o", p.to_str().unwrap()]);
    assert_eq!(code(&run(&["privacy", p.to_str().unwrap()])), 2);

    assert_eq!(code(&run(&["gen", "--length", "9"])), 1);
    // stdout when no file is given
    let o = run(&["gen", "--seed", "7", "--length", "4", "--distractors", "10"]);
    assert_eq!(o.stdout, ta);
}

#[test]
fn bench_writes_csv() {
    let o = run(&["bench", "--sizes", "10,50", "--trials", "2", "--timeout", "0.5"]);
    assert_eq!(code(&o), 0);
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("size,trial,engine,phase,millis,verdict"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() >= 8);
    assert_eq!(rows.len(), 2 * 2 * 2 * 5);
    for r in &rows {
        assert_eq!(r.len(), 6);
        assert!(r[5] == "secure" || r[5] == "unknown", "{r:?}");
        assert!(r[4].parse::<f64>().unwrap() >= 0.0);
    }
    let o = run(&["bench", "--sizes", "2", "--trials", "1", "--engines", "baseline", "--format", "json"]);
    let j: Json = serde_json::from_str(&stdout(&o)).unwrap();
    let total = j["rows"].as_array().unwrap().iter().find(|r| r["phase"] == "total").unwrap();
    assert!(total["millis"].as_f64().unwrap() > 0.0);
    assert_eq!(total["verdict"], "secure");
}

#[test]
fn log_env_var_enables_tracing() {
    let dir = tempfile::tempdir().unwrap();
    let home = smart_home(dir.path());
    let quiet = run(&["check", home.to_str().unwrap()]);
    assert!(quiet.stderr.is_empty());
    let loud = bin().args(["check", home.to_str().unwrap()]).env("CHAINCHECK_LOG", "debug").output().unwrap();
    assert!(String::from_utf8_lossy(&loud.stderr).contains("DEBUG"));
}
