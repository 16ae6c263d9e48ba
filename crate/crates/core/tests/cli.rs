use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use softlabel::experiment::load_generated;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_softlabel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{"victim": {"dims": [24, 16, 10]}, "instances": 12}"#;

/// report.json with wall-clock fields and the output path removed.
fn stable_report(out: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    v["config"]["out"] = Value::Null;
    v["config"]["jobs"] = Value::Null;
    for r in v["records"].as_array_mut().unwrap() {
        r["elapsed_ms"] = Value::Null;
    }
    v
}

/// Every file under `root` as (relative path, bytes), sorted.
fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn stable_csv(out: &Path) -> Vec<String> {
    fs::read_to_string(out.join("per_instance.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn runs_are_identical_for_any_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let outs: Vec<_> = ["1", "4"]
        .iter()
        .map(|jobs| {
            let out = dir.path().join(format!("run{jobs}"));
            let o = out.to_str().unwrap();
            for cmd in ["gen", "attack"] {
                let r = run(&[cmd, "--config", &cfg, "--seed", "11", "--out", o, "--jobs", jobs]);
                assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
            }
            out
        })
        .collect();
    assert_eq!(stable_report(&outs[0]), stable_report(&outs[1]));
    assert_eq!(stable_csv(&outs[0]), stable_csv(&outs[1]));
    assert_eq!(
        stable_csv(&outs[0])[0],
        "index,kind,status,lambda,lambda_oracle,L_r,L_s,correct,loss"
    );
    let (a, b) = (tree(&outs[0].join("instances")), tree(&outs[1].join("instances")));
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 12 * 3);
    assert_eq!(a, b);
    assert_eq!(tree(&outs[0].join("model")), tree(&outs[1].join("model")));
    // aggregates can be recomputed from the rows
    let rep = stable_report(&outs[0]);
    let recs = rep["records"].as_array().unwrap();
    let correct = recs.iter().filter(|r| r["correct"].as_bool().unwrap()).count();
    assert_eq!(rep["aggregates"]["correct"].as_u64().unwrap() as usize, correct);
    let indices: Vec<u64> = recs.iter().map(|r| r["index"].as_u64().unwrap()).collect();
    assert_eq!(indices, (0..12).collect::<Vec<u64>>());
}

#[test]
fn generated_captures_keep_their_row_sums() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("g");
    assert!(run(&["gen", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let g = load_generated(&out).unwrap();
    assert_eq!(g.instances.len(), 12);
    for inst in &g.instances {
        let g_last = inst.capture.last_weight_grad();
        for k in 0..g_last.cols() {
            let s: f64 = (0..g_last.rows()).map(|i| g_last.at(i, k)).sum();
            assert!(s.abs() < 1e-12);
        }
    }
}

#[test]
fn zero_instances_is_an_empty_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"victim": {"dims": [8, 4]}, "instances": 0}"#);
    let out = dir.path().join("empty");
    let r = run(&["gen", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["instances"].as_array().unwrap().len(), 0);
    let r = run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        fs::read_to_string(out.join("sweep.csv")).unwrap(),
        "family,scale,accuracy,mean_Ls,mean_Lr\n"
    );
}

#[test]
fn empty_noise_grid_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"victim": {"dims": [8, 4]}, "instances": 3, "noise": {"scales": []}}"#,
    );
    let out = dir.path().join("s");
    let o = out.to_str().unwrap();
    assert!(run(&["gen", "--config", &cfg, "--out", o]).status.success());
    assert!(run(&["sweep", "--config", &cfg, "--out", o]).status.success());
    assert_eq!(
        fs::read_to_string(out.join("sweep.csv")).unwrap(),
        "family,scale,accuracy,mean_Ls,mean_Lr\n"
    );
}

#[test]
fn trace_minimum_sits_at_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"victim": {"dims": [16, 10]}, "instances": 2}"#);
    let out = dir.path().join("t");
    let o = out.to_str().unwrap();
    assert!(run(&["gen", "--config", &cfg, "--out", o]).status.success());
    let r = run(&["trace", "--config", &cfg, "--out", o, "--instance", "1", "--lo", "-40", "--hi", "40", "--steps", "8001"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,scaled_loss"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    // the grid hits λ = 0, where the label is undefined; that point is dropped
    assert_eq!(rows.len(), 8000);
    assert!(rows.iter().all(|r| r.0 != 0.0));
    let best = rows
        .iter()
        .filter(|r| r.1.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let oracle = load_generated(&out).unwrap().instances[1].oracle_lambda();
    let nearest = rows
        .iter()
        .min_by(|a, b| (a.0 - oracle).abs().total_cmp(&(b.0 - oracle).abs()))
        .unwrap();
    assert!((best.0 - nearest.0).abs() <= 0.01 + 1e-9, "min at {} vs λ* {oracle}", best.0);

    let r = run(&["trace", "--config", &cfg, "--out", o, "--steps", "1"]);
    assert!(r.status.success());
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 2);
}

#[test]
fn exit_codes_separate_config_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    // unknown field
    let bad = write_config(dir.path(), r#"{"victim": {"dims": [8, 4]}, "bogus": 1}"#);
    assert_eq!(run(&["gen", "--config", &bad]).status.code(), Some(2));
    // invalid value
    let bad = write_config(dir.path(), r#"{"victim": {"dims": [8]}}"#);
    assert_eq!(run(&["gen", "--config", &bad]).status.code(), Some(2));
    // unknown flag
    assert_eq!(run(&["attack", "--frobnicate"]).status.code(), Some(2));
    // attack on a directory with nothing generated
    let missing = dir.path().join("nothing");
    assert_eq!(
        run(&["attack", "--out", missing.to_str().unwrap()]).status.code(),
        Some(3)
    );
    // config file that does not exist
    let nofile = dir.path().join("missing.json");
    assert_eq!(run(&["gen", "--config", nofile.to_str().unwrap()]).status.code(), Some(3));
}
