use std::path::Path;
use std::process::{Command, Output};

fn tvnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvnet"))
        .args(args)
        .env("TVNET_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tvnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"{
  "synth": {"num_train": 10, "num_test": 3},
  "tem": {"hidden": 8, "schedule": [{"lr": 0.001, "epochs": 2}]},
  "pem": {"hidden": 8, "schedule": [{"lr": 0.001, "epochs": 2}]},
  "vem": {"conv_channels": 4, "hidden": 4, "schedule": [{"lr": 0.001, "epochs": 1}]}
}"#;

fn setup(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("small.json");
    std::fs::write(&cfg, SMALL).unwrap();
    ok(&["gen-data", "--config", s(&cfg), "--out-dir", s(&dir.join("data"))]);
    cfg
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tvnc"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn gen_data_is_seed_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let cfg = setup(d.path());
    ok(&["gen-data", "--config", s(&cfg), "--out-dir", s(&d.path().join("again"))]);
    ok(&["gen-data", "--config", s(&cfg), "--seed", "7", "--out-dir", s(&d.path().join("other"))]);
    let ann = |x: &str| std::fs::read(d.path().join(x).join("train/annotations.json")).unwrap();
    assert_eq!(ann("data"), ann("again"));
    assert_ne!(ann("data"), ann("other"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("data/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn stage_order_is_enforced() {
    let d = tempfile::tempdir().unwrap();
    let cfg = setup(d.path());
    let train = d.path().join("data/train");
    let out = tvnet(&["train", "--config", s(&cfg), "--data", s(&train), "--stage", "vem", "--out-dir", s(&d.path().join("ck"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `train --stage tem` first"));
}

#[test]
fn all_equals_individual_stages_and_pipeline_runs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = setup(d.path());
    let train = d.path().join("data/train");
    let test = d.path().join("data/test");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["train", "--config", s(&cfg), "--data", s(&train), "--stage", "all", "--out-dir", s(&a), "--plots"]);
    for st in ["tem", "pem", "vem"] {
        ok(&["train", "--config", s(&cfg), "--data", s(&train), "--stage", st, "--out-dir", s(&b), "--jobs", "2"]);
    }
    assert_eq!(files(&a), files(&b));
    assert!(a.join("vem_loss.svg").exists());
    assert!(std::fs::read_to_string(a.join("tem_loss.csv")).unwrap().starts_with("unit,epoch,loss"));

    let out = d.path().join("out");
    ok(&["infer", "--data", s(&test), "--ckpt", s(&a), "--out-dir", s(&out), "--plots"]);
    assert!(out.join("predictions.json").exists());
    assert!(out.join("manifest.json").exists());
    let curve = std::fs::read_to_string(out.join("curves/test_00000.csv")).unwrap();
    assert_eq!(curve.lines().count(), 101);
    assert!(out.join("curves/test_00000.svg").exists());

    let report = ok(&[
        "eval",
        "--pred",
        s(&out.join("predictions.json")),
        "--gt",
        s(&test.join("annotations.json")),
        "--out-dir",
        s(&out),
    ]);
    assert!(String::from_utf8_lossy(&report.stdout).contains("average mAP"));
    assert!(out.join("eval.csv").exists());

    let abl = d.path().join("abl");
    ok(&["ablate", "--sweep", "alpha", "--train", s(&train), "--test", s(&test), "--ckpt", s(&a), "--out-dir", s(&abl)]);
    let table = std::fs::read_to_string(abl.join("ablation_alpha.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 11);
    assert!(table.lines().nth(1).unwrap().starts_with("alpha=0.0"));

    let bad = tvnet(&["ablate", "--sweep", "nope", "--train", s(&train), "--test", s(&test), "--ckpt", s(&a), "--out-dir", s(&abl)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("tem-parts, alpha, window, tau, xi, encoder"));

    let mismatch = tvnet(&["infer", "--preset", "thumos", "--data", s(&test), "--ckpt", s(&a), "--out-dir", s(&out)]);
    assert!(!mismatch.status.success());
}

#[test]
fn perfect_predictions_score_one() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let gt_path = d.path().join("data/test/annotations.json");
    let gt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&gt_path).unwrap()).unwrap();
    let mut preds = serde_json::Map::new();
    for (vid, ann) in gt.as_object().unwrap() {
        let list: Vec<serde_json::Value> = ann["annotations"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| serde_json::json!({"segment": a["segment"], "score": 0.9, "label": a["label"]}))
            .collect();
        preds.insert(vid.clone(), serde_json::Value::Array(list));
    }
    let pred_path = d.path().join("perfect.json");
    std::fs::write(&pred_path, serde_json::Value::Object(preds).to_string()).unwrap();
    let out = ok(&["eval", "--pred", s(&pred_path), "--gt", s(&gt_path), "--thresholds", "thumos", "--out-dir", s(d.path())]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("mAP@0.30 = 1.0000"), "{text}");
    assert!(text.contains("average mAP = 1.0000"), "{text}");
}
