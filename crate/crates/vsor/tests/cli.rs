use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use vsor::layout::{Manifest, SequenceDir};
use vsor_core::annotation::RankAnnotation;
use vsor_core::maps::Mask;

fn vsor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsor"))
        .args(args)
        .env("VSOR_THREADS", "2")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn strip(i: usize) -> Mask {
    Mask::rect(4, 6, 0, 2 * i, 4, 2 * i + 2)
}

fn annotation(strips: &[usize], ranks: &[usize]) -> RankAnnotation {
    let masks: Vec<Mask> = strips.iter().map(|&i| strip(i)).collect();
    RankAnnotation::from_masks(&masks, ranks).unwrap()
}

fn write_clip(root: &Path, frames: &[RankAnnotation]) {
    let manifest = Manifest {
        frames: (0..frames.len() as u32).collect(),
        seed: None,
    };
    let seq = SequenceDir::create(&root.join("clip"), manifest).unwrap();
    for (i, a) in frames.iter().enumerate() {
        seq.save_annotation(i as u32, a).unwrap();
    }
}

/// Three vertical strips on a 4x6 frame.
///
/// Frame 0: ground truth ranks (1,2,3), prediction (1,3,2). Levels (3,2,1)
/// against (3,1,2) give a correlation of 1/2; the normalized rank maps differ
/// by 1/3 on two of the three strips, so MAE = 2/9.
///
/// Frame 1: ground truth ranks (3,2,1), prediction covers only the first two
/// strips with ranks (2,1). Levels (1,2,3) against (1,2,0) give -1/2; the
/// per-strip differences 1/6, 1/3 and 1 average to MAE = 1/2.
fn hand_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let gt = dir.join("gt");
    let pred = dir.join("pred");
    write_clip(
        &gt,
        &[
            annotation(&[0, 1, 2], &[1, 2, 3]),
            annotation(&[0, 1, 2], &[3, 2, 1]),
        ],
    );
    write_clip(
        &pred,
        &[
            annotation(&[0, 1, 2], &[1, 3, 2]),
            annotation(&[0, 1], &[2, 1]),
        ],
    );
    (gt, pred)
}

fn close(v: &Value, want: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() < 1e-12
}

#[test]
fn eval_hand_computed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = hand_fixture(dir.path());
    let maps = dir.path().join("maps");
    let r = json(&vsor(&[
        "eval",
        "--gt",
        p(&gt),
        "--pred",
        p(&pred),
        "--dump-maps",
        p(&maps),
    ]));
    assert!(close(&r["iou_threshold"], 0.5));
    let frames = r["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 2);
    assert!(close(&frames[0]["sa_sor"], 0.5));
    assert!(close(&frames[0]["mae"], 2.0 / 9.0));
    assert!(close(&frames[1]["sa_sor"], -0.5));
    assert!(close(&frames[1]["mae"], 0.5));
    let agg = &r["aggregate"];
    assert!(close(&agg["sa_sor"], 0.0));
    assert!(close(&agg["mae"], (2.0 / 9.0 + 0.5) / 2.0));
    assert_eq!(agg["frames"], 2);
    assert_eq!(agg["sa_sor_undefined_count"], 0);

    let dumped = vsor::pgm::read(&maps.join("clip").join("00001.pgm")).unwrap();
    assert_eq!((dumped.width, dumped.height), (6, 4));
    // predicted rank 1 on the second strip is the top of the scale
    assert_eq!(dumped.samples[2], 65535);
    assert_eq!(dumped.samples[5], 0);
}

fn golden(name: &str, out: &Output) {
    json(out);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("VSOR_BLESS").is_some() {
        fs::write(&path, &out.stdout).unwrap();
    }
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        fs::read_to_string(&path).unwrap(),
        "{name} differs from the golden file"
    );
}

#[test]
fn golden_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = hand_fixture(dir.path());
    golden("eval_hand.json", &vsor(&["eval", "--gt", p(&gt), "--pred", p(&pred)]));
    golden("stats_video.json", &vsor(&["stats", "--data", p(&pred), "--per", "video"]));
    golden("gradcheck_seed0.json", &vsor(&["gradcheck"]));
}

#[test]
fn manifest_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = hand_fixture(dir.path());
    fs::write(gt.join("clip/manifest.json"), r#"{"frames": [1, 0]}"#).unwrap();
    let r = json(&vsor(&["eval", "--gt", p(&gt), "--pred", p(&pred)]));
    assert_eq!(r["frames"][0]["frame"], 0);
    fs::write(gt.join("clip/manifest.json"), r#"{"frames": [1, 1]}"#).unwrap();
    assert_eq!(vsor(&["eval", "--gt", p(&gt), "--pred", p(&pred)]).status.code(), Some(1));
}

#[test]
fn eval_prediction_equal_to_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, _) = hand_fixture(dir.path());
    let r = json(&vsor(&["eval", "--gt", p(&gt), "--pred", p(&gt)]));
    assert!(close(&r["aggregate"]["sa_sor"], 1.0));
    assert!(close(&r["aggregate"]["mae"], 0.0));
}

#[test]
fn eval_missing_predictions_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = hand_fixture(dir.path());
    fs::remove_file(pred.join("clip/ranks/00001.json")).unwrap();
    let out = vsor(&["eval", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clip/1"));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(
        vsor(&["eval", "--gt", p(&gt), "--pred", p(&empty)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn invalid_annotation_exits_one_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, _) = hand_fixture(dir.path());
    let ranks = gt.join("clip/ranks/00000.json");
    fs::write(&ranks, r#"{"ranks": {"1": 1, "2": 2, "3": 2}}"#).unwrap();
    let out = vsor(&["stats", "--data", p(&gt)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("00000"));
}

#[test]
fn missing_directory_is_an_io_error() {
    let out = vsor(&["stats", "--data", "/nonexistent/vsor-data"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(vsor(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vsor(&["eval", "--gt", "x"]).status.code(), Some(1));
    assert_eq!(
        vsor(&["train", "--set", "no.such.key=1"]).status.code(),
        Some(1)
    );
}

#[test]
fn stats_reports_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = hand_fixture(dir.path());
    let r = json(&vsor(&["stats", "--data", p(&gt)]));
    assert_eq!(r["frame_count"], 2);
    assert!(close(&r["invalid_rate"], 0.0));
    let hist: Vec<f64> = r["count_histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(hist, vec![0.0, 0.0, 1.0, 0.0, 0.0]);

    let r = json(&vsor(&["stats", "--data", p(&pred), "--per", "video"]));
    assert_eq!(r["per"], "video");
    assert_eq!(r["sequences"], 1);
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "synth",
            "--out",
            p(out),
            "--sequences",
            "3",
            "--seed",
            "9",
            "--set",
            "frames=2",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    let ra = json(&vsor(
        &args(&a).iter().map(String::as_str).collect::<Vec<_>>(),
    ));
    json(&vsor(
        &args(&b).iter().map(String::as_str).collect::<Vec<_>>(),
    ));
    assert_eq!(ra["sequences"], 3);
    assert_eq!(ra["frames"], 6);
    assert_eq!(tree_bytes(&a), tree_bytes(&b));

    let r = json(&vsor(&["stats", "--data", p(&a)]));
    assert_eq!(r["frame_count"], 6);
    let r = json(&vsor(&["eval", "--gt", p(&a), "--pred", p(&b)]));
    assert!(close(&r["aggregate"]["sa_sor"], 1.0));
}

#[test]
fn train_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.bin");
    let preds = dir.path().join("preds");
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{"variant": "full", "channels": 4, "iterations": 10,
            "train_sequences": 4, "eval_sequences": 2}"#,
    )
    .unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["train", "--config", p(&config)];
        args.extend_from_slice(extra);
        json(&vsor(&args))
    };
    let params_arg = format!("params_out={}", p(&params));
    let preds_arg = format!("predictions_out={}", p(&preds));
    let r = run(&["--set", &params_arg, "--set", &preds_arg]);
    assert_eq!(r["variant"], "full");
    assert_eq!(r["iterations"], 10);
    assert_eq!(r["losses"].as_array().unwrap().len(), 10);
    assert!(r["wall_clock_secs"].as_f64().unwrap() >= 0.0);
    assert!(r["eval"]["mae"].as_f64().unwrap() >= 0.0);
    assert!(params.exists());

    let (cfg, _) = vsor::commands::load_params(&params).unwrap();
    assert_eq!(cfg.channels, 4);

    let gt = dir.path().join("gt");
    let seed = (vsor::config::EVAL_SEED_OFFSET).to_string();
    json(&vsor(&[
        "synth",
        "--out",
        p(&gt),
        "--sequences",
        "2",
        "--seed",
        &seed,
        "--set",
        "channels=4",
    ]));
    let e = json(&vsor(&["eval", "--gt", p(&gt), "--pred", p(&preds)]));
    assert_eq!(e["aggregate"]["frames"], r["eval"]["frames"]);
    assert!(close(
        &e["aggregate"]["mae"],
        r["eval"]["mae"].as_f64().unwrap()
    ));

    let mut again = run(&[]);
    let mut first = r.clone();
    for v in [&mut again, &mut first] {
        let o = v.as_object_mut().unwrap();
        for k in ["wall_clock_secs", "params_out", "predictions_out"] {
            o.remove(k);
        }
    }
    assert_eq!(first, again);
}

#[test]
fn gradcheck_passes_and_is_reproducible() {
    let a = vsor(&["gradcheck", "--seed", "3"]);
    let r = json(&a);
    assert_eq!(r["passed"], true);
    assert!(!r["checks"].as_array().unwrap().is_empty());
    let b = vsor(&["gradcheck", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn corrupted_backward_fails_gradcheck() {
    let out = vsor(&["gradcheck", "--corrupt-backward"]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["passed"], false);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = hand_fixture(dir.path());
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_vsor"))
            .args(["eval", "--gt", p(&gt), "--pred", p(&pred)])
            .env("VSOR_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(one.stdout, run("4").stdout);
    assert_eq!(run("lots").status.code(), Some(1));
}
