use std::path::Path;
use std::process::{Command, Output};

use reduced_rnnt::archive::{Dtype, ModelArchive};
use reduced_rnnt::decoder::{DecoderConfig, DecoderModel, ModelWeights};
use reduced_rnnt::training::ToyEncoder;
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reduced-rnnt")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn params_reports_tied_savings() {
    let o = bin(&["params"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("tied savings: d_h*|V| = 320*4096 = 1,310,720"), "{text}");
    let o = bin(&["params", "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let small = v["decoders"].as_array().unwrap().iter().find(|d| d["name"] == "ReducedSmall").unwrap();
    assert_eq!(small["tied_savings"], 1_310_720);
    let sum: u64 = small["tensors"].as_array().unwrap().iter().map(|t| t["params"].as_u64().unwrap()).sum();
    assert_eq!(small["total"].as_u64().unwrap(), sum);
}

#[test]
fn params_includes_config_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"decoder": {"history": 3}}"#);
    let o = bin(&["params", "--json", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["decoders"].as_array().unwrap().last().unwrap()["name"], "config");
}

#[test]
fn train_embr_decode_lookup_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"task": {"train_size": 40, "dev_size": 10}, "train": {"epochs": 2}, "embr": {"steps": 3}}"#,
    );
    let model = dir.path().join("m.rrnt");
    let m = model.to_str().unwrap();
    let o = bin(&["train", "--config", &cfg, "--out", m]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.path().join("m.rrnt.metrics.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for key in ["epoch", "loss", "dev_token_error_rate", "wall_s"] {
        assert!(lines[1].get(key).is_some(), "missing {key}");
    }
    let archive = ModelArchive::load(&model).unwrap();
    assert!(archive.encoder.is_some());
    assert_eq!(archive.seed, Some(1));

    let tuned = dir.path().join("e.rrnt");
    let o = bin(&["embr", "--json", "--config", &cfg, "--model", m, "--out", tuned.to_str().unwrap(), "--beam", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["steps"], 3);

    let input = write(dir.path(), "in.json", &format!(r#"{{"features": {:?}}}"#, vec![vec![0.5f64; 8]; 6]));
    let o = bin(&["decode", "--json", "--model", tuned.to_str().unwrap(), "--input", &input]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["labels"].is_array());
    let o = bin(&["decode", "--json", "--beam", "3", "--model", m, "--input", &input]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v["nbest"].as_array().unwrap().is_empty());

    let lookup = dir.path().join("l.rrnt");
    let o = bin(&["convert-lookup", "--model", m, "--out", lookup.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin(&["convert-lookup", "--model", m, "--out", lookup.to_str().unwrap(), "--budget", "10"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[capacity]"));
}

#[test]
fn all_blank_model_prints_empty_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DecoderConfig::toy();
    let mut weights = ModelWeights::zeros(&cfg);
    weights.out_bias.set(0, cfg.vocab_size, 50.0);
    let model = DecoderModel::new(cfg.clone(), weights).unwrap();
    let mut archive = ModelArchive::new(model.config.clone(), model.weights.clone()).unwrap();
    archive.encoder = Some(ToyEncoder::zeros(8, cfg.encoder_dim));
    let path = dir.path().join("blank.rrnt");
    archive.save(&path, Dtype::F64).unwrap();
    let input = write(dir.path(), "in.json", &format!(r#"{{"features": {:?}}}"#, vec![vec![1.0f64; 8]; 5]));
    let o = bin(&["decode", "--model", path.to_str().unwrap(), "--input", &input]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("labels: \n"), "{}", stdout(&o));
}

#[test]
fn decode_with_encoder_frames() {
    let dir = tempfile::tempdir().unwrap();
    let model = DecoderModel::init(DecoderConfig::toy(), 4).unwrap();
    let path = dir.path().join("m.rrnt");
    ModelArchive::new(model.config.clone(), model.weights).unwrap().save(&path, Dtype::F64).unwrap();
    let d = model.config.encoder_dim;
    let input = write(dir.path(), "in.json", &format!(r#"{{"frames": {:?}}}"#, vec![vec![0.1f64; d]; 3]));
    let o = bin(&["decode", "--model", path.to_str().unwrap(), "--input", &input]);
    assert!(o.status.success(), "{}", stderr(&o));
    // features need a stored encoder
    let input = write(dir.path(), "f.json", r#"{"features": [[1, 2]]}"#);
    let o = bin(&["decode", "--model", path.to_str().unwrap(), "--input", &input]);
    assert_eq!(o.status.code(), Some(6));
    // frames of the wrong width
    let input = write(dir.path(), "w.json", r#"{"frames": [[1, 2]]}"#);
    let o = bin(&["decode", "--model", path.to_str().unwrap(), "--input", &input]);
    assert_eq!(o.status.code(), Some(7), "{}", stderr(&o));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"train": {"learning_rte": 0.1}}"#);
    let o = bin(&["train", "--config", &bad, "--out", "/tmp/never.rrnt"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[schema]") && err.contains("train.learning_rte"), "{err}");

    let o = bin(&["decode", "--model", "/nonexistent.rrnt", "--input", &bad]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[io]"));

    let junk = write(dir.path(), "junk.rrnt", "not an archive");
    let o = bin(&["decode", "--model", &junk, "--input", &bad]);
    assert_eq!(o.status.code(), Some(6));

    let diverge = write(dir.path(), "d.json", r#"{"task": {"train_size": 16, "dev_size": 4}, "train": {"learning_rate": 1e308, "epochs": 3}}"#);
    let o = bin(&["train", "--config", &diverge, "--out", dir.path().join("x.rrnt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[divergence]"));
}

#[test]
fn bench_json_reports_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.json",
        r#"{"bench": {"runs": 5, "warmup": 1, "decoders": ["LSTM", "ReducedSmall"], "core_label": "test"}}"#,
    );
    let o = bin(&["bench", "--json", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["comparisons"][0]["decoder"], "ReducedSmall");
    assert!(v["comparisons"][0]["flop_ratio"].as_f64().unwrap() > 5.0);
    assert_eq!(v["records"][0]["core_label"], "test");
}
