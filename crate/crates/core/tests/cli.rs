use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "gen": {"pretrain_groups": 40, "train": 128, "val": 32, "test": 64},
  "model": {"num_prototypes": 24},
  "pretrain": {"max_epochs": 1},
  "finetune": {"max_epochs": 1},
  "probe": {"train_size": 64},
  "eval": {"sizes": [128, 64]}
}"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protossl")).args(args).output().unwrap()
}

fn stage(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bin(&args)
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.json", TINY);
    for run in ["a", "b"] {
        let o = stage("gen", &cfg, &tmp.path().join(run), &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = files_under(&tmp.path().join("a"));
    assert!(a.iter().any(|(p, _)| p.ends_with("data/target/meta.json") || p.starts_with("data/target")));
    assert_eq!(a, files_under(&tmp.path().join("b")));
}

#[test]
fn stages_chain_and_record_config_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.json", TINY);
    let out = tmp.path().join("run");
    for (cmd, extra) in [
        ("gen", vec![]),
        ("pretrain", vec![]),
        ("assign", vec![]),
        ("finetune", vec![]),
        ("project", vec!["--tuned"]),
        ("probe", vec![]),
    ] {
        let o = stage(cmd, &cfg, &out, &extra);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for d in ["data", "pretrain", "assign", "finetune", "project", "probe"] {
        let effective = fs::read_to_string(out.join(d).join("config.json")).unwrap();
        assert!(effective.contains("\"num_prototypes\": 24"), "{d}");
        // defaults are echoed, not only the overrides
        assert!(effective.contains("\"temperature\""), "{d}");
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(d).join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["seed"], 3);
        assert!(meta["git_describe"].is_string());
    }
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("probe/metrics.json")).unwrap()).unwrap();
    let auc = metrics["macro_auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(fs::read_to_string(out.join("project/provenance.csv")).unwrap().lines().count() > 1);
}

#[test]
fn capacity_violation_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.json", r#"{"model":{"num_prototypes":8},"assign":{"per_label":2}}"#);
    let o = stage("assign", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("12") && err.contains('8'), "{err}");
}

#[test]
fn unknown_key_exits_2_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.json", r#"{"pretrain":{"temprature":0.2}}"#);
    let o = stage("gen", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pretrain"));
}

#[test]
fn invalid_value_exits_2_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.json", r#"{"pretrain":{"temperature":-1.0}}"#);
    let o = stage("gen", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pretrain.temperature"));
}

#[test]
fn missing_input_exits_3_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.json", TINY);
    let out = tmp.path().join("empty");
    let o = stage("pretrain", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pretrain"));
    let o = bin(&["gen", "--config", "/nonexistent/cfg.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.json"));
}

#[test]
fn report_needs_eval_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.json", TINY);
    let o = stage("report", &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("matrix.csv"));
}
