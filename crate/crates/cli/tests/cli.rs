use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn mvlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mvlab"));
    cmd.args(args).env_remove("MVLAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn mvlab")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn ou_config() -> Value {
    json!({
        "experiment": "euler_convergence",
        "model": "mean_field_ou",
        "params": { "a": -1.0, "b_coef": 0.5, "sigma": 0.3 },
        "T": 1.0,
        "n_steps": [4, 8, 16],
        "particles": 500,
        "seed": 11
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn list_models_prints_catalog() {
    let out = mvlab(&["list-models"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["mean_field_ou", "mckean_kernel:attraction", "osgood_drift"] {
        assert!(text.contains(id), "{text}");
    }
}

#[test]
fn validate_accepts_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "ok.json", &ou_config());
    let out = mvlab(&["validate", &path], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config();
    cfg["n_stepz"] = json!(8);
    let path = write_config(dir.path(), "bad.json", &cfg);
    for sub in ["validate", "run"] {
        let out = mvlab(&[sub, &path], &[]);
        assert_eq!(out.status.code(), Some(2), "{sub}");
        assert!(stderr(&out).contains("n_stepz"), "{}", stderr(&out));
    }
}

#[test]
fn syntax_error_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"experiment\": \"picard\",\n  \"model\" \"mean_field_ou\"\n}").unwrap();
    let out = mvlab(&["run", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_file_exits_2() {
    let out = mvlab(&["validate", "/nonexistent/config.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn blow_up_exits_3_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config();
    cfg["experiment"] = json!("picard");
    cfg["params"]["a"] = json!(1e200);
    cfg["n_steps"] = json!(4);
    let path = write_config(dir.path(), "boom.json", &cfg);
    let out = mvlab(&["run", &path, "--output-dir", dir.path().join("out").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let msg = stderr(&out);
    assert!(msg.contains("particle") && msg.contains("step"), "{msg}");
}

#[test]
fn run_writes_artifacts_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "ou.json", &ou_config());
    let out_dir = dir.path().join("out");
    let out = mvlab(&["run", &path, "--output-dir", out_dir.to_str().unwrap(), "--seed", "99"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("euler_convergence.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n_steps,mesh,sup_sq_error,stderr");
    assert_eq!(csv.lines().count(), 4);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], json!(99));
    assert!(manifest["summary"]["slope"].is_number());
    assert!(manifest["versions"]["mvlab"].is_string());
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config();
    cfg["experiment"] = json!("picard");
    cfg["n_steps"] = json!(32);
    cfg["options"] = json!({ "iterations": 5 });
    let path = write_config(dir.path(), "picard.json", &cfg);
    let mut outputs = Vec::new();
    for (flag, env) in [(Some("1"), None), (Some("3"), None), (None, Some("2"))] {
        let out_dir = dir.path().join(format!("out-{flag:?}-{env:?}"));
        let mut args = vec!["run", &path, "--output-dir", out_dir.to_str().unwrap()];
        if let Some(k) = flag {
            args.extend(["--threads", k]);
        }
        let envs: Vec<(&str, &str)> = env.map(|k| vec![("MVLAB_THREADS", k)]).unwrap_or_default();
        let out = mvlab(&args, &envs);
        assert!(out.status.success(), "{}", stderr(&out));
        let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
        let expected = flag.or(env).unwrap().parse::<u64>().unwrap();
        assert_eq!(manifest["threads"], json!(expected));
        outputs.push(fs::read(out_dir.join("picard.csv")).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn zero_threads_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "ou.json", &ou_config());
    let out = mvlab(&["run", &path, "--threads", "0"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
