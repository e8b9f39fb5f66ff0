#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value as Json;

use chaincheck_core::{fixtures, ModelSpec};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chaincheck"));
    c.env_remove("CHAINCHECK_LOG");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_with_input(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

pub fn write_model(dir: &Path, name: &str, m: &ModelSpec) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, m.to_json_string()).unwrap();
    p
}

pub fn smart_home(dir: &Path) -> PathBuf {
    write_model(dir, "home.json", &fixtures::smart_home())
}

pub fn closed_home(dir: &Path) -> PathBuf {
    write_model(dir, "closed.json", &fixtures::smart_home_closed())
}

pub fn schema() -> jsonschema::JSONSchema {
    let text = include_str!("../../schema/report.schema.json");
    let schema: Json = serde_json::from_str(text).unwrap();
    jsonschema::JSONSchema::compile(&schema).expect("schema compiles")
}

pub fn assert_valid(schema: &jsonschema::JSONSchema, report: &Json) {
    if let Err(errors) = schema.validate(report) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("report does not match schema: {msgs:?}");
    }
}
