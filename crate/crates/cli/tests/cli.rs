//! Runs the `moments` binary end to end.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn moments(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moments")).arg("-q").args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = moments(args);
    assert!(
        out.status.success(),
        "moments {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary json")
}

/// Exit code and the error object from the last stderr line.
fn fails(args: &[&str]) -> (i32, Value) {
    let out = moments(args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().unwrap_or_default();
    let err: Value = serde_json::from_str(last).unwrap_or(Value::Null);
    (out.status.code().unwrap(), err)
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_predictions(dir: &Path, rows: &[(u8, u8, f64)]) -> PathBuf {
    let mut text = String::from("id,label,prediction,score\n");
    for (i, (l, p, sc)) in rows.iter().enumerate() {
        text.push_str(&format!("m{i},{l},{p},{sc}\n"));
    }
    let path = dir.join("preds.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn metric(v: &Value, name: &str) -> (f64, f64, f64) {
    let row = v["result"]["rows"].as_array().unwrap().iter().find(|r| r["metric"] == name).unwrap();
    (row["value"].as_f64().unwrap(), row["ci_lo"].as_f64().unwrap(), row["ci_hi"].as_f64().unwrap())
}

#[test]
fn metrics_on_all_correct_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(u8, u8, f64)> = (0..50).map(|i| ((i % 2) as u8, (i % 2) as u8, (i % 2) as f64 * 0.8 + 0.1)).collect();
    let preds = write_predictions(dir.path(), &rows);
    let out = dir.path().join("m");
    let summary = ok(&["metrics", "--predictions", s(&preds), "-o", s(&out), "--report"]);
    assert_eq!(summary["status"], "ok");
    let v = json(out.join("metrics.json"));
    for name in ["mcc", "accuracy", "f1", "roc_auc"] {
        assert_eq!(metric(&v, name), (1.0, 1.0, 1.0), "{name}");
    }
    assert!(std::fs::read_to_string(out.join("metrics.csv")).unwrap().starts_with("metric,"));
    let html = std::fs::read_to_string(out.join("report.html")).unwrap();
    assert!(html.contains("<svg") && html.contains("</html>"));
}

#[test]
fn metrics_are_reproducible_and_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(u8, u8, f64)> =
        (0..80).map(|i| ((i % 2) as u8, ((i % 2) ^ (i % 5 == 0) as usize) as u8, (i % 7) as f64 / 7.0)).collect();
    let preds = write_predictions(dir.path(), &rows);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["metrics", "--predictions", s(&preds), "-o", s(&a), "--seed", "9"]);
    ok(&["metrics", "--predictions", s(&preds), "-o", s(&b), "--seed", "9"]);
    for f in ["metrics.json", "metrics.csv", "run_manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let v = json(a.join("metrics.json"));
    let p = &v["provenance"];
    assert_eq!(p["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(p["inputs"][0]["path"], s(&preds));
    assert_eq!(p["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(p["tool_version"].as_str().unwrap().starts_with("moments "));
    let m = json(a.join("run_manifest.json"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["provenance"], *p);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(u8, u8, f64)> = (0..30).map(|i| ((i % 2) as u8, (i % 3 == 0) as u8, 0.5)).collect();
    let preds = write_predictions(dir.path(), &rows);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[global]\nseed = 4\n[metrics]\nresamples = 50\nlevel = 0.9\n").unwrap();
    let a = dir.path().join("a");
    ok(&["-c", s(&cfg), "metrics", "--predictions", s(&preds), "-o", s(&a)]);
    let v = json(a.join("metrics.json"));
    assert_eq!((v["result"]["resamples"].as_u64(), v["result"]["seed"].as_u64()), (Some(50), Some(4)));
    let b = dir.path().join("b");
    ok(&["-c", s(&cfg), "metrics", "--predictions", s(&preds), "-o", s(&b), "--resamples", "20"]);
    let w = json(b.join("metrics.json"));
    assert_eq!(w["result"]["resamples"].as_u64(), Some(20));
    assert_eq!(w["result"]["level"].as_f64(), Some(0.9));
    assert_ne!(v["provenance"]["config_hash"], w["provenance"]["config_hash"]);
}

#[test]
fn contrib_reproduces_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let logits = dir.path().join("logits.jsonl");
    std::fs::write(
        &logits,
        concat!(
            r#"{"moment_id":"im","ground_truth":1,"entries":{"V":3.81,"L":-0.18,"LV":-0.93}}"#,
            "\n",
            r#"{"moment_id":"nim","ground_truth":0,"entries":{"V":0.5,"L":0.87,"LV":1.34}}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("c");
    ok(&["contrib", "--logits", s(&logits), "-o", s(&out), "--report"]);
    let v = json(out.join("contributions.json"));
    let score = |m: &str, slice: &str| {
        v["result"]["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["modality"] == m && r["slice"] == slice)
            .unwrap()["score"]
            .as_f64()
            .unwrap()
    };
    for (m, slice, want) in [("V", "im", 3.06), ("L", "im", -4.92), ("V", "nim", 0.97), ("L", "nim", 1.71)] {
        assert!((score(m, slice) - want).abs() < 1e-9, "{m} {slice}: {}", score(m, slice));
    }
    assert_eq!(v["result"]["combos"], serde_json::json!(["L", "V", "LV"]));
    let pairs = std::fs::read_to_string(out.join("confidence_pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 3);
    assert!(std::fs::read_to_string(out.join("report.html")).unwrap().contains("<circle"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    let (code, err) = fails(&["metrics", "--predictions", "/nonexistent/p.csv", "-o", s(&out)]);
    assert_eq!(code, 2);
    assert_eq!(err["error"]["kind"], "config");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,label,prediction\na,2,1\n").unwrap();
    let (code, err) = fails(&["metrics", "--predictions", s(&bad), "-o", s(&out)]);
    assert_eq!(code, 3);
    assert_eq!(err["error"]["code"], 3);

    std::fs::write(&bad, "id,label,prediction\na,1\n").unwrap();
    assert_eq!(fails(&["metrics", "--predictions", s(&bad), "-o", s(&out)]).0, 3);

    let preds = write_predictions(dir.path(), &[(1, 1, 0.9), (0, 0, 0.1)]);
    let (code, _) = fails(&["metrics", "--predictions", s(&preds), "-o", s(&out), "--level", "1.5"]);
    assert_eq!(code, 2);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[metrics]\nresample = 3\n").unwrap();
    assert_eq!(fails(&["-c", s(&cfg), "metrics", "--predictions", s(&preds), "-o", s(&out)]).0, 2);

    assert_eq!(moments(&["metrics"]).status.code(), Some(2));

    let logits = dir.path().join("l.jsonl");
    std::fs::write(&logits, "{not json}\n").unwrap();
    assert_eq!(fails(&["contrib", "--logits", s(&logits), "-o", s(&out)]).0, 3);
}

#[test]
fn localize_recovers_a_synthetic_pair() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    ok(&["synth", "generate", "-o", s(&syn), "--seed", "12"]);
    for f in ["game.y4m", "highlight.y4m", "ground_truth.json", "transcript.json", "run_manifest.json"] {
        assert!(syn.join(f).exists(), "{f}");
    }
    let loc = dir.path().join("loc");
    ok(&[
        "localize",
        s(&syn.join("highlight.y4m")),
        s(&syn.join("game.y4m")),
        "-o",
        s(&loc),
        "--truth",
        s(&syn.join("ground_truth.json")),
    ]);
    let ev = json(loc.join("evaluation.json"));
    assert!(ev["result"]["min_iou"].as_f64().unwrap() >= 0.9, "{ev}");
    assert!(ev["result"]["max_boundary_error"].as_f64().unwrap() <= 1.0);
    let al = json(loc.join("alignment.json"));
    assert_eq!(al["result"]["moments"].as_array().unwrap().len(), 3);
    assert_eq!(al["result"]["localized_fraction"].as_f64(), Some(1.0));
    let csv = std::fs::read_to_string(loc.join("moments.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn pipeline_from_synthetic_games_to_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p);
    let layouts = ["10-18,50-64,95-106", "5-17,40-49,80-92", "20-31,60-70,100-113", "8-20,45-55,75-86"];
    let mut alignment_args = Vec::new();
    for (i, seg) in layouts.iter().enumerate() {
        let seed = (30 + i).to_string();
        let syn = d(&format!("syn{i}"));
        ok(&["synth", "generate", "-o", s(&syn), "--seed", &seed, "--segments", seg]);
        ok(&["localize", s(&syn.join("highlight.y4m")), s(&syn.join("game.y4m")), "-o", s(&d(&format!("loc{i}")))]);
        alignment_args.push(format!("g{i}={}", s(&d(&format!("loc{i}/alignment.json")))));
    }

    let nim_dir = d("nim");
    let mut args = vec!["sample-nim", "-o", s(&nim_dir)];
    for a in &alignment_args {
        args.extend(["--alignment", a.as_str()]);
    }
    ok(&args);
    let plan = json(d("nim/nim_spans.json"));
    assert_eq!(plan["result"]["fitted"], true);
    for g in plan["result"]["games"].as_array().unwrap() {
        assert_eq!(g["unplaced"], 0, "{g}");
        assert_eq!(g["nim"].as_array().unwrap().len(), 3);
    }

    let mut manifests = Vec::new();
    for i in 0..layouts.len() {
        let ext = d(&format!("ext{i}"));
        ok(&[
            "extract",
            "--alignment",
            s(&d(&format!("loc{i}/alignment.json"))),
            "--nim",
            s(&d("nim/nim_spans.json")),
            "--transcript",
            s(&d(&format!("syn{i}/transcript.json"))),
            "--game-id",
            &format!("g{i}"),
            "--dry-run",
            "-o",
            s(&ext),
        ]);
        let text = std::fs::read_to_string(ext.join("manifest.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 7);
        manifests.push(ext.join("manifest.jsonl"));
    }

    let stats_dir = d("stats");
    let mut args = vec!["stats", "-o", s(&stats_dir), "--report"];
    for m in &manifests {
        args.extend(["--manifest", s(m)]);
    }
    ok(&args);
    let st = json(d("stats/stats.json"));
    assert_eq!(st["result"]["records"], 24);
    assert_eq!(st["result"]["games"], 4);
    let mean = |label: u64, modality: &str| -> f64 {
        st["result"]["summaries"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["label"] == label && r["modality"] == modality)
            .unwrap()["mean"]
            .as_f64()
            .unwrap()
    };
    for label in [0, 1] {
        assert!(mean(label, "audio") > mean(label, "video"));
    }

    let (bl, model_path, split_path, ev) = (d("bl"), d("bl/model.json"), d("bl/split.json"), d("ev"));
    let mut args = vec!["baseline", "train", "-o", s(&bl), "--features", "ngram"];
    for m in &manifests {
        args.extend(["--manifest", s(m)]);
    }
    ok(&args);
    let model = json(d("bl/model.json"));
    assert_eq!(model["result"]["feature_spec"]["kind"], "ngram");
    let split = json(d("bl/split.json"));
    assert_eq!(split["result"]["train"].as_array().unwrap().len() + split["result"]["test"].as_array().unwrap().len(), 24);
    let acc = metric(&json(d("bl/metrics.json")), "accuracy").0;
    assert!(acc >= 0.75, "held-out accuracy {acc}");

    let mut args = vec![
        "baseline",
        "eval",
        "--model",
        s(&model_path),
        "--split",
        s(&split_path),
        "-o",
        s(&ev),
    ];
    for m in &manifests {
        args.extend(["--manifest", s(m)]);
    }
    ok(&args);
    assert_eq!(
        std::fs::read_to_string(d("ev/predictions.csv")).unwrap(),
        std::fs::read_to_string(d("bl/predictions.csv")).unwrap()
    );
}
