use std::process::{Command, Output};

use serde_json::Value;

fn fewparam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fewparam")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn build_lp_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    let out = fewparam(&["build", "--theorem", "lp", "--target", "linear", "--d", "1", "--n", "2", "--p", "2", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["intrinsic_params"], 4);
    assert_eq!(v["status"], "pass");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["format"], "fewparam-approximant");
    assert_eq!(doc["codes"], serde_json::json!([2, 2, 3, 3]));
}

#[test]
fn build_constant_example() {
    let out = fewparam(&["build", "--target", "constant"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("zero error")));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    assert!(fewparam(&["build", "--target", "constant", "--out", path.to_str().unwrap()]).status.success());
    let out = fewparam(&["certify", "--input", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["rows"][0]["measured_sup"], 0.0);
    assert_eq!(v["rows"][0]["measured_lp"], "0");
}

#[test]
fn build_three_param_example() {
    let out = fewparam(&["build", "--theorem", "three-param", "--d", "1", "--eps", "3"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["n"], 2);
    assert_eq!(v["intrinsic_params"], 3);
}

#[test]
fn certify_canonical_example_quickly() {
    let start = std::time::Instant::now();
    let out = fewparam(&["certify", "--theorem", "lp", "--target", "linear", "--d", "1", "--n", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(stdout_json(&out)["status"], "pass");
}

#[test]
fn certify_sweep_writes_halving_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = fewparam(&["certify", "--sweep", "n=1..4", "--csv", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = fewparam::summary::read_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert_eq!(w[0].bound, 2.0 * w[1].bound);
        assert_eq!(w[1].n, w[0].n + 1);
    }
    assert!(rows.iter().all(|r| r.pass && r.measured_sup <= r.bound));
}

#[test]
fn certify_both_modes_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let out = fewparam(&["certify", "--theorem", "linf", "--target", "norm", "--d", "2", "--n", "1", "--eval-mode", "both", "--report", rep.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    let modes: Vec<&str> = v["rows"].as_array().unwrap().iter().map(|r| r["eval_mode"].as_str().unwrap()).collect();
    assert_eq!(modes, ["exact", "float"]);
    let docs: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(docs.as_array().unwrap().len(), 2);
    assert_eq!(docs[0]["format"], "fewparam-report");
}

#[test]
fn gadget_examples() {
    let out = fewparam(&["gadget", "bit-extractor", "--J", "6"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!((v["report"]["cases"].as_u64(), v["report"]["passed"].as_u64()), (Some(64), Some(64)));

    let out = fewparam(&["gadget", "pack", "--m", "2", "--n", "2"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!((v["report"]["cases"].as_u64(), v["report"]["passed"].as_u64()), (Some(16), Some(16)));

    let out = fewparam(&["gadget", "mid"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["status"], "pass");

    let out = fewparam(&["gadget", "pack", "--m", "7", "--n", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn size_guard_fails_fast() {
    let start = std::time::Instant::now();
    let out = fewparam(&["build", "--theorem", "lp", "--d", "3", "--n", "6"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(start.elapsed().as_secs_f64() < 2.0);
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["status"], "fail");
    assert_eq!(v["kind"], "size-guard");
    assert_eq!(v["details"]["dn"], 18);
    assert!(v["details"]["estimated_params"].as_u64().unwrap() > 1 << 18);
}

#[test]
fn errors_are_machine_readable() {
    let out = fewparam(&["build", "--target", "sine"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["command"], "build");
    assert!(v["message"].as_str().unwrap().contains("sine"));
}

#[test]
fn failing_verdict_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    assert!(fewparam(&["build", "--n", "2", "--out", path.to_str().unwrap()]).status.success());
    // Shift the intrinsic output bias by 4.
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let bias = doc["network"]["layers"].as_array_mut().unwrap().last_mut().unwrap()["biases"][0].take();
    assert_eq!(bias["origin"], "intrinsic");
    let exp = bias["exp"].as_u64().unwrap();
    let num: i128 = bias["num"].as_str().unwrap().parse().unwrap();
    let shifted = serde_json::json!({"num": (num + (4i128 << exp)).to_string(), "exp": exp, "origin": "intrinsic"});
    doc["network"]["layers"].as_array_mut().unwrap().last_mut().unwrap()["biases"][0] = shifted;
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = fewparam(&["certify", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "fail");
    assert!(!v["failures"][0]["checks"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"theorem": "lp", "target": "norm", "d": 2, "n": 2, "p": 1}"#).unwrap();
    let out = fewparam(&["--config", cfg.to_str().unwrap(), "build", "--n", "1"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!((v["target"].as_str(), v["d"].as_u64(), v["n"].as_u64()), (Some("norm"), Some(2), Some(1)));
}

#[test]
fn same_inputs_same_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, threads: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let rep = dir.path().join(format!("{tag}.json"));
        let out = fewparam(&[
            "--threads", threads, "--seed", "11", "certify", "--target", "random-cpwl", "--d", "2", "--n", "2", "--mc-samples", "200", "--csv",
            csv.to_str().unwrap(), "--report", rep.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        (out.stdout, std::fs::read(csv).unwrap(), std::fs::read(rep).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "4"));
    assert_eq!(a, run("c", "4"));
}

#[test]
fn timing_is_opt_in() {
    let out = fewparam(&["--timing", "certify", "--n", "1"]);
    let v = stdout_json(&out);
    assert!(v["rows"][0]["runtime_ms"].as_str().unwrap().parse::<u64>().is_ok());
    let out = fewparam(&["certify", "--n", "1"]);
    assert_eq!(stdout_json(&out)["rows"][0]["runtime_ms"], "");
}

#[test]
fn lists_targets() {
    let out = fewparam(&["targets", "--d", "2"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["targets"].as_array().unwrap().len(), fewparam_core::targets::BUILTIN_IDS.len());
}
