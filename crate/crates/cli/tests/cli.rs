//! CLI behavior: exit codes, output artifacts, record schemas.

use std::path::{Path, PathBuf};
use std::process::Command;

fn cadx_bin() -> &'static str {
    env!("CARGO_BIN_EXE_cadx")
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cadx-cli-{tag}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(cadx_bin()).args(args).output().unwrap()
}

fn exit_code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

const TINY_CONFIG: &str = r#"{
  "version": 1,
  "pipeline": {
    "seed": 3,
    "folds": 2,
    "preproc": {"crop_size": 32, "target_size": 32},
    "net": {"input_size": 32, "conv_channels": [4, 8], "fc1_dim": 32, "fc2_dim": 32},
    "train": {"epochs": 2, "batch_size": 8, "cnn_frames_per_volume": 3}
  }
}"#;

/// Generates a tiny phantom and trains a model directory for it.
fn setup_trained(tag: &str) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let dir = scratch(tag);
    let data = dir.join("data");
    let model = dir.join("model");
    let config = dir.join("config.json");
    std::fs::write(&config, TINY_CONFIG).unwrap();
    let out = run(&[
        "phantom",
        "--out",
        data.to_str().unwrap(),
        "--patients",
        "2",
        "--specimens",
        "1",
        "--volumes",
        "1",
        "--frames",
        "6",
        "--size",
        "32",
        "--seed",
        "11",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "train",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (dir, data, model, config)
}

#[test]
fn hpv_flag_must_be_binary() {
    let out = run(&[
        "predict", "--model", "m", "--volume", "v", "--age", "40", "--hpv", "2",
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--hpv"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn unknown_config_keys_are_rejected_not_ignored() {
    let dir = scratch("badconfig");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{"version": 1, "pipeline": {"seed": 1, "learning_rato": 0.1}}"#,
    )
    .unwrap();
    let out = run(&[
        "evaluate",
        "--manifest",
        "nonexistent.json",
        "--out",
        dir.join("out").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rato"));
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = scratch("nomanifest");
    let out = run(&[
        "evaluate",
        "--manifest",
        dir.join("missing.json").to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn phantom_rejects_tiny_frames() {
    let dir = scratch("tinyframes");
    let out = run(&[
        "phantom",
        "--out",
        dir.join("d").to_str().unwrap(),
        "--size",
        "8",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn train_writes_the_model_directory_contract() {
    let (_dir, _data, model, _config) = setup_trained("traindir");
    for name in ["cnn.ckpt", "cnn.meta.json", "svm.model", "meta.json", "config.json"] {
        assert!(model.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn predict_emits_a_versioned_record() {
    let (_dir, data, model, _config) = setup_trained("predict");
    let volume_dir = first_volume_dir(&data);
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--volume",
        volume_dir.to_str().unwrap(),
        "--age",
        "44",
        "--hpv",
        "1",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is one JSON record");
    assert_eq!(record["version"], 1);
    assert_eq!(record["threshold"], 0.5);
    let dist = record["distribution"].as_array().unwrap();
    assert_eq!(dist.len(), 5);
    let sum: f64 = dist.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-12);
    assert!(record["fine_class"].as_u64().unwrap() < 5);
    assert!(matches!(record["binary"].as_str().unwrap(), "low" | "high"));

    // Threshold override switches the record's threshold field.
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--volume",
        volume_dir.to_str().unwrap(),
        "--age",
        "44",
        "--hpv",
        "0",
        "--threshold",
        "0.9",
    ]);
    assert_eq!(exit_code(&out), 0);
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["threshold"], 0.9);
}

#[test]
fn predict_missing_volume_dir_is_a_data_error() {
    let (_dir, _data, model, _config) = setup_trained("predictmissing");
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--volume",
        "/definitely/not/here",
        "--age",
        "40",
        "--hpv",
        "0",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn explain_zero_weight_model_writes_all_zero_pgm() {
    let (dir, data, model, _config) = setup_trained("explainzero");
    // Zero out the checkpoint parameters in place.
    let ckpt = model.join("cnn.ckpt");
    let mut net = cadx_core::neuralnet::load_checkpoint(&ckpt).unwrap();
    for (_, tensor) in net.param_tensors_mut() {
        tensor.fill(0.0);
    }
    cadx_core::neuralnet::save_checkpoint(&net, &ckpt).unwrap();

    let frame = first_volume_dir(&data).join("f000.pgm");
    let out_map = dir.join("map.pgm");
    let out = run(&[
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--frame",
        frame.to_str().unwrap(),
        "--method",
        "gb",
        "--class",
        "auto",
        "--out",
        out_map.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let map = cadx_core::dataset::read_frame(&out_map).unwrap();
    assert!(
        map.data().iter().all(|&v| v == 0.0),
        "zero-weight model must give an all-zero attribution map"
    );
}

#[test]
fn explain_validates_method_and_class() {
    let out = run(&[
        "explain", "--model", "m", "--frame", "f", "--method", "sorcery", "--out", "o",
    ]);
    assert_eq!(exit_code(&out), 1);
    let out = run(&[
        "explain", "--model", "m", "--frame", "f", "--method", "gb", "--class", "7", "--out", "o",
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn pca_writes_projection_table() {
    let (dir, data, model, _config) = setup_trained("pca");
    let csv_path = dir.join("fc2.csv");
    let out = run(&[
        "pca",
        "--model",
        model.to_str().unwrap(),
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--components",
        "3",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "volume_id,frame,label,p1,p2,p3");
    // 10 volumes x 6 frames, all accepted on this phantom.
    assert_eq!(lines.count(), 60);
}

#[test]
fn preprocess_reports_rejection_counts() {
    let (dir, data, _model, config) = setup_trained("preprocess");
    let out_dir = dir.join("cache");
    let out = run(&[
        "preprocess",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "accepted:",
        "rejected saturated:",
        "rejected dark:",
        "rejected blurry:",
    ] {
        assert!(stdout.contains(needle), "missing '{needle}' in {stdout}");
    }
    assert!(out_dir.join("cache_meta.json").is_file());
    // Each volume directory carries its sidecar.
    let sidecars = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter(|e| e.path().join("sidecar.json").is_file())
        .count();
    assert_eq!(sidecars, 10);
}

fn first_volume_dir(data: &Path) -> PathBuf {
    let frames_root = data.join("frames");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(frames_root)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.into_iter().next().expect("phantom has volumes")
}
