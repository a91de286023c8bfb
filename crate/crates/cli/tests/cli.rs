use std::path::Path;
use std::process::{Command, Output};

use kws_core::align::{write_cpst, CharPosteriorMatrix};
use kws_core::frontend::{load_wav, read_fmat, write_wav, AudioClip, Matrix, WavEncoding};
use kws_core::model::load_checkpoint;
use tempfile::TempDir;

const SMALL: &str = r#"{
  "model": {"n_conv_filters": 4, "kernel_time": 20, "kernel_freq": 5, "stride_time": 8, "stride_freq": 4,
            "n_rec_layers": 1, "rec_hidden": 8, "cell_kind": "gru", "fc_units": 16},
  "train": {"max_epochs": 3, "batch_size": 8},
  "paths": {"toy_dir": "toy", "train_manifest": "toy/train.jsonl", "eval_manifest": "toy/eval.jsonl",
            "checkpoint": "toy/model.ckpt", "metrics": "toy/metrics.csv"}
}"#;

fn kws(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kws"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn kws")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = kws(dir, args);
    assert!(
        out.status.success(),
        "kws {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn toy_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    ok(dir.path(), &["--config", "small.json", "synth"]);
    dir
}

#[test]
fn version_includes_build_id() {
    let dir = TempDir::new().unwrap();
    let v = stdout(&ok(dir.path(), &["--version"]));
    assert!(
        v.starts_with(&format!("kws {} (", env!("CARGO_PKG_VERSION"))),
        "{v}"
    );
}

#[test]
fn sweep_lists_every_reference_row() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["sweep", "--out", "sweep.csv"]);
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 27);
    assert!(text.lines().any(|l| l.split(',').any(|f| f == "229090")));
}

#[test]
fn featurize_writes_40_by_151() {
    let dir = TempDir::new().unwrap();
    let clip = AudioClip::new(
        (0..24_000).map(|i| (i as f32 * 0.05).sin() * 0.3).collect(),
        16_000,
    )
    .unwrap();
    write_wav(dir.path().join("a.wav"), &clip, WavEncoding::Pcm16).unwrap();
    ok(dir.path(), &["featurize", "a.wav", "--out", "a.fmat"]);
    let fm = read_fmat(dir.path().join("a.fmat")).unwrap();
    assert_eq!((fm.n_mels, fm.n_frames), (40, 151));
    assert!(fm.values.iter().all(|v| v.is_finite()));
}

#[test]
fn align_without_decay_follows_the_per_character_argmax() {
    let dir = TempDir::new().unwrap();
    // Character 0 peaks at frame 2, character 2 at frame 7.
    let mut scores = Matrix::zeros(3, 10);
    for t in 0..10 {
        scores.data[t] = if t == 2 { 0.9 } else { 0.1 };
        scores.data[10 + t] = if t == 5 { 0.8 } else { 0.1 };
        scores.data[20 + t] = if t == 7 { 0.7 } else { 0.1 };
    }
    let post = CharPosteriorMatrix::new("abc", scores, 100.0, 0.5).unwrap();
    write_cpst(dir.path().join("utt.cpst"), &post).unwrap();
    std::fs::write(
        dir.path().join("a1.json"),
        r#"{"align": {"alpha": 1.0, "smooth_window": 1}}"#,
    )
    .unwrap();
    let out = ok(dir.path(), &["--config", "a1.json", "align", "utt.cpst"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["path"], "utt.wav");
    assert_eq!(v["begin_s"].as_f64().unwrap(), 0.5 + 2.0 / 100.0);
    assert_eq!(v["end_s"].as_f64().unwrap(), 0.5 + 7.0 / 100.0);
    assert_eq!(v["ordered"], true);

    // The flag overrides the file.
    let out = ok(
        dir.path(),
        &["--config", "a1.json", "align", "--alpha", "0.5", "utt.cpst"],
    );
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["begin_s"].as_f64().unwrap(), 0.52);
}

#[test]
fn chop_cuts_padded_spans_and_skips_unordered_ones() {
    let dir = TempDir::new().unwrap();
    let clip = AudioClip::new(vec![0.25; 16_000], 16_000).unwrap();
    write_wav(dir.path().join("rec.wav"), &clip, WavEncoding::Pcm16).unwrap();
    std::fs::write(
        dir.path().join("spans.jsonl"),
        concat!(
            r#"{"path":"rec.wav","begin_s":0.3,"end_s":0.5,"ordered":true}"#,
            "\n",
            r#"{"path":"rec.wav","begin_s":0.6,"end_s":0.4,"ordered":false}"#,
            "\n"
        ),
    )
    .unwrap();
    ok(dir.path(), &["chop", "spans.jsonl", "--out", "cut"]);
    let cut = load_wav(dir.path().join("cut/00000_rec.wav")).unwrap();
    assert_eq!(cut.len(), 6400);
    let manifest = std::fs::read_to_string(dir.path().join("cut/chopped.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert!(!dir.path().join("cut/00001_rec.wav").exists());
}

#[test]
fn usage_errors_exit_1_and_data_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(kws(dir.path(), &["no-such-command"]).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.json"), r#"{"trian": {}}"#).unwrap();
    assert_eq!(
        kws(dir.path(), &["--config", "bad.json", "sweep"])
            .status
            .code(),
        Some(1)
    );
    std::fs::write(
        dir.path().join("geom.json"),
        r#"{"stream": {"window_s": 1.0}}"#,
    )
    .unwrap();
    assert_eq!(
        kws(dir.path(), &["--config", "geom.json", "sweep"])
            .status
            .code(),
        Some(1)
    );
    let missing = kws(dir.path(), &["featurize", "missing.wav"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.wav"));
    std::fs::write(dir.path().join("junk.wav"), b"not a wav file").unwrap();
    assert_eq!(
        kws(dir.path(), &["featurize", "junk.wav"]).status.code(),
        Some(2)
    );
}

#[test]
fn toy_pipeline_trains_evaluates_and_detects() {
    let dir = toy_dir();
    let d = dir.path();
    ok(d, &["--config", "small.json", "--seed", "5", "train"]);
    let ckpt = load_checkpoint(d.join("toy/model.ckpt")).unwrap();
    assert_eq!(ckpt.config.n_conv_filters, 4);
    let metrics = std::fs::read_to_string(d.join("toy/metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().next().unwrap(),
        "epoch,step,train_loss,dev_loss,lr"
    );
    assert_eq!(metrics.lines().count(), 4);

    // Continuing appends rows without a second header.
    ok(
        d,
        &[
            "--config",
            "small.json",
            "train",
            "--init",
            "toy/model.ckpt",
        ],
    );
    let metrics = std::fs::read_to_string(d.join("toy/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 7);

    let summary = stdout(&ok(
        d,
        &["--config", "small.json", "eval", "--out", "eval.csv"],
    ));
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["keywords"], 3);
    assert!(v["negative_hours"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(d.join("eval.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "threshold,fa_per_hour,frr_percent"
    );
    assert!(d.join("eval.json").exists());

    let events = stdout(&ok(
        d,
        &[
            "--config",
            "small.json",
            "detect",
            "toy/wav/stream_kw.wav",
            "--threshold",
            "0.0",
        ],
    ));
    let times: Vec<f64> = events
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["time_s"]
                .as_f64()
                .unwrap()
        })
        .collect();
    assert!(!times.is_empty());
    assert!(times.windows(2).all(|w| w[1] - w[0] > 1.0));

    ok(
        d,
        &[
            "--config",
            "small.json",
            "mine",
            "--manifest",
            "toy/eval.jsonl",
            "--threshold",
            "0.0",
            "--cap",
            "2",
            "--out",
            "mined.jsonl",
        ],
    );
    let mined = std::fs::read_to_string(d.join("mined.jsonl")).unwrap();
    assert!(mined.lines().count() <= 4);
    for l in mined.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["label"], "negative");
        assert!(v["offset_s"].is_number());
    }
}

#[test]
fn augment_writes_labeled_features() {
    let dir = toy_dir();
    let d = dir.path();
    ok(
        d,
        &[
            "--config",
            "small.json",
            "augment",
            "--out",
            "aug",
            "--snr-low",
            "0",
            "--snr-high",
            "5",
        ],
    );
    let labels = std::fs::read_to_string(d.join("aug/labels.jsonl")).unwrap();
    assert!(labels.lines().count() > 0);
    let first: serde_json::Value = serde_json::from_str(labels.lines().next().unwrap()).unwrap();
    let fm = read_fmat(d.join("aug").join(first["path"].as_str().unwrap())).unwrap();
    assert_eq!((fm.n_mels, fm.n_frames), (40, 151));

    let bad = kws(
        d,
        &[
            "--config",
            "small.json",
            "augment",
            "--snr-low",
            "9",
            "--snr-high",
            "1",
        ],
    );
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn training_is_reproducible_under_a_seed() {
    let dir = toy_dir();
    let d = dir.path();
    let run = |seed: &str, out: &str| {
        ok(
            d,
            &[
                "--config",
                "small.json",
                "--seed",
                seed,
                "train",
                "--metrics",
                "m.csv",
                "--out",
                out,
            ],
        );
        std::fs::read(d.join(out)).unwrap()
    };
    let a = run("11", "a.ckpt");
    let b = run("11", "b.ckpt");
    let c = run("12", "c.ckpt");
    assert_eq!(a, b);
    assert_ne!(a, c);
}
