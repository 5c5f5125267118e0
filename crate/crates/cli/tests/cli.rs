use std::path::Path;
use std::process::{Command, Output};

fn cadesh(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadesh")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cadesh(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const FAST: [&str; 4] = ["--epochs-max", "8", "--silhouette-sample-size", "2000"];

fn prepare(dir: &Path) {
    ok(dir, &["synth", "--out", "flows.csv", "--seed", "5"]);
    ok(dir, &["ingest", "--input", "flows.csv", "--out-dir", "data", "--split", "4,1,2"]);
}

fn run_chain(dir: &Path, tag: &str) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let model = format!("{tag}-model.json");
    let report = format!("{tag}-report.json");
    let verdicts = format!("{tag}-verdicts.csv");
    let mut train = vec!["train", "--data", "data", "--out", &model];
    train.extend(FAST);
    ok(dir, &train);
    ok(dir, &["calibrate", "--model", &model, "--data", "data"]);
    ok(dir, &["detect", "--model", &model, "--input", "data/test.csv", "--out", &verdicts]);
    ok(dir, &["eval", "--model", &model, "--data", "data", "--out", &report, "--pr-curve", "pr.csv"]);
    let read = |p: &str| std::fs::read(dir.join(p)).unwrap();
    (read(&model), read(&report), read(&verdicts))
}

#[test]
fn end_to_end_chain_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    for f in ["training.csv", "validation.csv", "test.csv", "cleansing_report.json"] {
        assert!(dir.join("data").join(f).exists(), "{f}");
    }
    let a = run_chain(dir, "a");
    let b = run_chain(dir, "b");
    assert!(a == b, "reruns differ");

    let report: serde_json::Value = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert!(report["macro"]["recall"].as_f64().unwrap() >= 0.9);

    let verdicts = String::from_utf8(a.2).unwrap();
    let mut lines = verdicts.lines();
    assert_eq!(lines.next().unwrap(), "flow_id,mse,cluster,distance,tanh,final_label,actual_label");
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 7);
        if f[2].is_empty() {
            assert!(f[3].is_empty() && f[4].is_empty());
            assert_eq!(f[5], "benign");
        }
    }
    let pr = std::fs::read_to_string(dir.join("pr.csv")).unwrap();
    assert!(pr.starts_with("scenario,threshold,precision,recall"));
}

#[test]
fn confusion_counts_reproduce_published_f1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["eval", "--from-confusion", "tp=3032", "fn=48", "fp=315", "tn=22157"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let f1 = v["scenarios"][0]["f1"].as_f64().unwrap();
    assert!((f1 - 0.944).abs() < 5e-4, "{f1}");
    let two = ok(
        tmp.path(),
        &["eval", "--from-confusion", "tp=1", "fn=1", "fp=0", "tn=2", "--from-confusion", "tp=0", "fn=0", "fp=0", "tn=4"],
    );
    let v: serde_json::Value = serde_json::from_slice(&two.stdout).unwrap();
    assert_eq!(v["scenarios"].as_array().unwrap().len(), 2);
    assert!(v["macro"]["recall"].is_null());
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(cadesh(dir, &["--help"]).status.code(), Some(0));
    assert_eq!(cadesh(dir, &["--version"]).status.code(), Some(0));

    let usage = cadesh(dir, &["train", "--bogus"]);
    assert_eq!(usage.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&usage.stderr).trim().lines().count(), 1);

    let missing = cadesh(dir, &["train", "--data", "absent", "--out", "m.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&missing.stderr).trim().lines().count(), 1);

    std::fs::write(dir.join("bad.csv"), "not,a,flow,file\n1,2,3,4\n").unwrap();
    let bad = cadesh(dir, &["ingest", "--input", "bad.csv", "--out-dir", "d"]);
    assert_eq!(bad.status.code(), Some(2));

    std::fs::write(dir.join("model.json"), "{\"schema_version\": 99}").unwrap();
    let schema = cadesh(dir, &["detect", "--model", "model.json", "--input", "bad.csv", "--out", "v.csv"]);
    assert_eq!(schema.status.code(), Some(2));
    assert!(!dir.join("v.csv").exists());

    let cfg = cadesh(dir, &["train", "--data", "absent", "--out", "m.json", "--pctl-frequent", "150"]);
    assert_eq!(cfg.status.code(), Some(1));
}

#[test]
fn degenerate_training_exits_numeric() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    // Identical flows leave Filter 2 fewer than two distinct rows.
    let training = std::fs::read_to_string(dir.join("data/training.csv")).unwrap();
    let mut lines = training.lines();
    let header = lines.next().unwrap();
    let row = lines.next().unwrap();
    let same = format!("{header}\n{}", format!("{row}\n").repeat(200));
    std::fs::create_dir(dir.join("flat")).unwrap();
    for f in ["training.csv", "validation.csv", "test.csv"] {
        std::fs::write(dir.join("flat").join(f), &same).unwrap();
    }
    let out = cadesh(dir, &["train", "--data", "flat", "--out", "m.json", "--epochs-max", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.join("m.json").exists());
}

#[test]
fn config_file_and_flags_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    std::fs::write(dir.join("cfg.txt"), "epochs_max=3\nk_max=4\nseed=9\n").unwrap();
    ok(dir, &["train", "--data", "data", "--out", "m.json", "--config", "cfg.txt", "--k-max", "3"]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("m.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["epochs_max"], 3);
    assert_eq!(m["config"]["k_max"], 3);
    assert_eq!(m["config"]["rng_seed"], 9);
}
