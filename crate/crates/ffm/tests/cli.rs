use std::path::Path;
use std::process::{Command, Output};

use ffm::output::check_manifest;
use serde_json::Value;

fn ffm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffm"))
        .args(args)
        .current_dir(dir)
        .env_remove("FFM_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const TINY: &str = "\
[run]
seed = 7
[data]
source = mogp
n = 64
resolution = 32
[operator]
modes = 4
width = 8
layers = 1
[train]
epochs = 2
batch_size = 16
[sample]
count = 6
[solver]
atol = 1e-4
rtol = 1e-4
";

#[test]
fn train_sample_and_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tiny.cfg"), TINY).unwrap();

    ok(&ffm(&["gen-data", "--dataset", "mogp", "--n", "40", "--res", "32", "--out", "gd"], d));
    ok(&ffm(&["train", "--config", "tiny.cfg", "--out", "tr"], d));
    let log = std::fs::read_to_string(d.join("tr/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 8);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["step", "epoch", "lr", "loss", "wall_time"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }

    ok(&ffm(
        &["sample", "--checkpoint", "tr/model.ckpt", "--config", "tiny.cfg", "--real", "gd/data.csv", "--out", "sa"],
        d,
    ));
    let rep = json(&d.join("sa/report.json"));
    assert_eq!(rep["count"], 6);
    assert_eq!(rep["resolution"], 32);
    assert!(rep["mean_nfe"].as_f64().unwrap() > 0.0);
    assert!(d.join("sa/metrics.json").exists());

    ok(&ffm(&["superres", "--checkpoint", "tr/model.ckpt", "--factor", "2", "--count", "3", "--out", "sr"], d));
    assert_eq!(json(&d.join("sr/report.json"))["resolution"], 64);

    ok(&ffm(
        &["cond-sample", "--checkpoint", "tr/model.ckpt", "--obs", "0.25=1", "--obs", "0.5=-0.5", "--count", "3", "--out", "cs"],
        d,
    ));
    let rep = json(&d.join("cs/report.json"));
    assert!(rep["max_abs_deviation_at_observations"].as_f64().unwrap() < 1e-3);

    for run in ["gd", "tr", "sa", "sr", "cs"] {
        assert!(check_manifest(&d.join(run)).unwrap().is_empty(), "{run}");
        assert!(d.join(run).join("config.cfg").exists(), "{run}");
    }
}

#[test]
fn same_seed_same_samples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tiny.cfg"), TINY).unwrap();
    ok(&ffm(&["train", "--config", "tiny.cfg", "--out", "tr"], d));
    for out in ["a", "b"] {
        ok(&ffm(&["sample", "--checkpoint", "tr/model.ckpt", "--count", "4", "--seed", "3", "--out", out], d));
    }
    let a = std::fs::read(d.join("a/samples.csv")).unwrap();
    let b = std::fs::read(d.join("b/samples.csv")).unwrap();
    assert_eq!(a, b);
    ok(&ffm(&["sample", "--checkpoint", "tr/model.ckpt", "--count", "4", "--seed", "4", "--out", "c"], d));
    assert_ne!(a, std::fs::read(d.join("c/samples.csv")).unwrap());
}

#[test]
fn seed_environment_variable_sits_between_config_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.cfg"), "[run]\nseed = 5\n").unwrap();
    let run = |args: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ffm"));
        c.args(args).current_dir(d).env_remove("FFM_SEED");
        if let Some(v) = env {
            c.env("FFM_SEED", v);
        }
        ok(&c.output().unwrap());
    };
    let seed_of = |out: &str| json(&d.join(out).join("data.json"))["seed"].as_u64().unwrap();
    run(&["gen-data", "--config", "s.cfg", "--n", "2", "--res", "8", "--out", "a"], None);
    run(&["gen-data", "--config", "s.cfg", "--n", "2", "--res", "8", "--out", "b"], Some("9"));
    run(&["gen-data", "--config", "s.cfg", "--n", "2", "--res", "8", "--seed", "11", "--out", "c"], Some("9"));
    assert_eq!((seed_of("a"), seed_of("b"), seed_of("c")), (5, 9, 11));
}

#[test]
fn evaluating_a_set_against_itself_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&ffm(&["gen-data", "--n", "30", "--res", "16", "--out", "gd"], d));
    ok(&ffm(&["eval", "--real", "gd/data.csv", "--gen", "gd/data.csv", "--out", "ev"], d));
    let m = json(&d.join("ev/metrics.json"));
    for (k, v) in m["mse"].as_object().unwrap() {
        assert_eq!(v.as_f64().unwrap(), 0.0, "{k}");
    }
    let csv = std::fs::read_to_string(d.join("ev/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |o: Output| o.status.code().unwrap();

    std::fs::write(d.join("bad.cfg"), "[train]\nepoch = 3\n").unwrap();
    assert_eq!(code(ffm(&["train", "--config", "bad.cfg", "--out", "x"], d)), 2);
    assert_eq!(code(ffm(&["gen-data", "--dataset", "nope", "--out", "x"], d)), 2);

    std::fs::write(d.join("ragged.csv"), "1,2,3\n4,5\n").unwrap();
    assert_eq!(code(ffm(&["eval", "--real", "ragged.csv", "--gen", "ragged.csv", "--out", "x"], d)), 3);
    assert_eq!(code(ffm(&["eval", "--real", "missing.csv", "--gen", "missing.csv", "--out", "x"], d)), 3);

    std::fs::write(d.join("junk.ckpt"), "not a checkpoint").unwrap();
    assert_eq!(code(ffm(&["sample", "--checkpoint", "junk.ckpt", "--out", "x"], d)), 5);

    let o = ffm(&["train", "--config", "bad.cfg", "--out", "x"], d);
    assert!(String::from_utf8_lossy(&o.stderr).contains("epoch"));
}

#[test]
fn quick_verify_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = ffm(&["verify", "--quick", "--out", "v"], d);
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains("[PASS]")).count(), 6, "{stdout}");
    let v = json(&d.join("v/verify.json"));
    assert_eq!(v["passed"], true);
    assert_eq!(v["checks"].as_array().unwrap().len(), 6);
}
