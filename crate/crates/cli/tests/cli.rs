use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CALL_PAIR: &str = r#"{"f1":{"type":"call","K":100},"f2":{"type":"call","K":100,"delta":10},"L":2}"#;

fn fim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fim")).args(args).env_remove("FIM_SEED").output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn envelope_csv_has_the_call_row() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.json", &format!(r#"{{"pair":{CALL_PAIR},"s0":80,"points":[80,120]}}"#));
    let out_path = dir.path().join("g.csv");
    let out = fim(&["envelope", "--in", &input, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,g,dplus,f1,f2,contact"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first[0], 80.0);
    assert!((first[1] - 8.0).abs() < 1e-12);
    let second: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((second[1] - 30.0).abs() < 1e-12);
    assert_eq!(second[5], 1.0);
}

#[test]
fn envelope_grid_method_agrees_with_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.json", &format!(r#"{{"pair":{CALL_PAIR},"s0":80,"method":"grid","points":[80]}}"#));
    let v = json(&fim(&["envelope", "--in", &input]));
    assert_eq!(v["method"], "grid");
    assert!((v["g_s0"].as_f64().unwrap() - 8.0).abs() < 0.02);
}

#[test]
fn hedge_reports_the_cash_leg() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.json", &format!(r#"{{"pair":{CALL_PAIR},"s0":80}}"#));
    let v = json(&fim(&["hedge", "--in", &input]));
    assert!((v["g_s0"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    assert!(v["assumption"].is_object());
}

#[test]
fn verify_finds_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"market":{{"s0":80,"T":1,"model":"heston","kappa":2,"theta":0.04,"xi":0.3,"v0":0.04}},"pair":{CALL_PAIR},"n_paths":400,"n_steps":64}}"#
    );
    let input = write(dir.path(), "in.json", &body);
    let v = json(&fim(&["verify", "--in", &input]));
    assert_eq!(v["report"]["n_violations"], 0);
}

#[test]
fn counterexample_breaks_the_hedge() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.json", r#"{"n_paths":1000,"n_steps":128}"#);
    let v = json(&fim(&["counterexample", "--in", &input]));
    assert!(v["report"]["violation_fraction"].as_f64().unwrap() >= 0.99);
}

#[test]
fn semistatic_prices_the_one_step_put() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"tree":{"s0":100,"children":[{"price":90},{"price":110}]},"claim":{"kind":"terminal","payoff":{"type":"put","K":100}}}"#;
    let input = write(dir.path(), "in.json", body);
    let v = json(&fim(&["semistatic", "--in", &input]));
    assert!((v["report"]["primal_value"].as_f64().unwrap() - 5.0).abs() < 1e-8);
}

#[test]
fn malformed_input_exits_with_two_and_locates_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.json", "{\n  \"pair\": {\"f1\": 3},\n  \"s0\": 80\n}");
    let out = fim(&["envelope", "--in", &input]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("pair.f1"), "{err}");
}

#[test]
fn precondition_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_l = CALL_PAIR.replace("\"L\":2", "\"L\":1");
    let input = write(dir.path(), "in.json", &format!(r#"{{"pair":{bad_l},"s0":80}}"#));
    assert_eq!(fim(&["envelope", "--in", &input]).status.code(), Some(2));
    assert_eq!(fim(&["envelope"]).status.code(), Some(2));
    assert_eq!(fim(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_a_schema() {
    for cmd in ["envelope", "hedge", "simulate", "verify", "counterexample", "stopvalue", "semistatic", "lawdensity", "steer"] {
        let v = json(&fim(&[cmd, "--schema"]));
        assert_eq!(v["title"], cmd);
        assert_eq!(v["type"], "object");
    }
}

#[test]
fn seed_environment_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"market":{"s0":100,"T":1,"model":"hull_white","kappa":0.1,"theta":0.5,"u0":0.09},"n_paths":3,"n_steps":8}"#;
    let input = write(dir.path(), "in.json", body);
    let run = |seed: &str, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fim"));
        cmd.args(["simulate", "--in", &input, "--seed", seed]).env_remove("FIM_SEED");
        if let Some(e) = env {
            cmd.env("FIM_SEED", e);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1", None), run("1", None));
    assert_ne!(run("1", None), run("2", None));
    assert_eq!(run("1", Some("2")), run("2", None));
    assert_eq!(run("2", Some("1")), run("1", Some("1")));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.json", r#"{"n_paths":300,"n_steps":32}"#);
    let one = fim(&["counterexample", "--in", &input, "--threads", "1"]);
    let three = fim(&["counterexample", "--in", &input, "--threads", "3"]);
    assert_eq!(json(&one), json(&three));
}

#[test]
fn lawdensity_matches_a_two_point_law() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"task":"law_match","n_samples":5000,"law":{"n":1,"s0":100,"steps":[{"conditionals":[{"given":100,"support":[70,115],"prob":[0.3333333333333333,0.6666666666666667]}]}]}}"#;
    let input = write(dir.path(), "in.json", body);
    let v = json(&fim(&["lawdensity", "--in", &input]));
    assert_eq!(v["law_match"]["pass"], true);
}
