use std::path::Path;
use std::process::{Command, Output};

use heartseg::model::{EncoderBlock, Tfan, TfanConfig};
use heartseg::signal_io::{write_wav, Recording};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heartseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, levels: &str, seed: &str) {
    let o = run(&["synth", "--levels", levels, "--seed", seed, "--out", p(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn tiny_model() -> TfanConfig {
    let block = |dilation| EncoderBlock {
        channels: 4,
        kernel_size: 3,
        dilation,
    };
    TfanConfig {
        encoder_blocks: vec![block(1), block(2)],
        decoder_conv_channels: vec![4],
        lstm_hidden: 4,
        ..TfanConfig::compact()
    }
}

fn tiny_run_config(seed: u64) -> String {
    serde_json::json!({
        "model": serde_json::from_str::<serde_json::Value>(&tiny_model().to_json()).unwrap(),
        "loss": {"c1": 1.0, "c2": 2.0, "prob_floor": 1e-7},
        "optimizer": {
            "learning_rate": 0.001, "momentum": 0.9, "batch_size": 8,
            "patience": 20, "max_epochs": 1, "window_overlap": 0.0
        },
        "seed": seed,
        "folds": 5,
        "overlap": 0.5
    })
    .to_string()
}

#[test]
fn missing_out_is_a_usage_error() {
    let o = run(&["synth", "--levels", "1,1,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert!(o.stdout.is_empty());
}

#[test]
fn synth_writes_pairs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "2,1,1", "7");
    synth(&b, "2,1,1", "7");
    let manifest = std::fs::read(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest, std::fs::read(b.join("manifest.csv")).unwrap());
    let count = |ext: &str| {
        std::fs::read_dir(&a)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
            .count()
    };
    assert_eq!(count("wav"), 4);
    assert_eq!(count("csv"), 5);
    for name in ["LEVEL_I_000.wav", "LEVEL_I_001.csv", "LEVEL_III_000.wav"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn bad_level_counts_and_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--levels", "1,x,1", "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));

    let corpus = tmp.path().join("corpus");
    synth(&corpus, "1,0,0", "1");
    let cfg = tmp.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(&tiny_run_config(0)).unwrap();
    v["optimizer"]["nesterov"] = true.into();
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = run(&["train", p(&corpus), "--config", p(&cfg), "--out", p(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nesterov"));
}

#[test]
fn evaluate_identical_annotations_scores_100() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, "2,1,0", "3");
    let o = run(&["evaluate", "--truth", p(&corpus), "--pred", p(&corpus)]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    let figures: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(figures[0], "3");
    assert!(figures[1..].iter().all(|f| *f == "100.00"), "{row}");

    let report = tmp.path().join("report");
    let o = run(&[
        "evaluate",
        "--truth",
        p(&corpus),
        "--pred",
        p(&corpus),
        "--mode",
        "per-recording",
        "--sigma-ms",
        "50",
        "--out",
        p(&report),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("LEVEL_II_000"));
    assert!(text.contains("100.00 ± 0.00"));
    let csv = std::fs::read_to_string(report.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 3);
}

#[test]
fn evaluate_missing_prediction_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, "1,0,0", "3");
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = run(&["evaluate", "--truth", p(&corpus), "--pred", p(&empty)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn segment_rejects_short_recordings() {
    let tmp = tempfile::tempdir().unwrap();
    let model = Tfan::new(tiny_model()).unwrap();
    model.init_params(1).save(&tmp.path().join("best.weights")).unwrap();
    std::fs::write(tmp.path().join("model.json"), tiny_model().to_json()).unwrap();
    let wav = tmp.path().join("short.wav");
    let samples = (0..1500).map(|i| (i as f64 * 0.05).sin() * 0.5).collect();
    write_wav(&wav, &Recording::new("short", samples, 1000)).unwrap();
    let o = run(&[
        "segment",
        p(&wav),
        "--weights",
        p(&tmp.path().join("best.weights")),
        "--out",
        p(&tmp.path().join("seg")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("too short"));
}

#[test]
fn stratify_empty_manifest_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("manifest.csv"), "path,annotation,level\n").unwrap();
    let o = run(&["stratify", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stratify_recovers_generated_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, "0,0,4", "11");
    let out = tmp.path().join("strat");
    let o = run(&["stratify", p(&corpus), "--out", p(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("noise_murmur_%") && text.contains("arrhythmia_%") && text.contains("abnormal_hr_%"));

    let mut r = csv::Reader::from_path(out.join("assignments.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    let level = headers.iter().position(|h| h == "level").unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|row| &row[level] == "LEVEL_III"));

    let summary = std::fs::read_to_string(out.join("characteristics.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("LEVEL_III,4,100.00,100.00")));
}

#[test]
fn train_segment_evaluate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, "5,0,0", "21");
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, tiny_run_config(4)).unwrap();

    let train = |name: &str| {
        let out = tmp.path().join(name);
        let o = run(&["train", p(&corpus), "--config", p(&cfg), "--out", p(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o).lines().count(), 6);
        out
    };
    let a = train("run_a");
    let b = train("run_b");
    for j in 0..5 {
        let h = format!("fold_{j}/history.csv");
        assert_eq!(std::fs::read(a.join(&h)).unwrap(), std::fs::read(b.join(&h)).unwrap());
    }
    assert_eq!(std::fs::read(a.join("best.weights")).unwrap(), std::fs::read(b.join("best.weights")).unwrap());

    let seg = tmp.path().join("seg");
    let o = run(&["segment", p(&corpus), "--weights", p(&a.join("best.weights")), "--out", p(&seg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 5);
    let frames = std::fs::read_to_string(seg.join("LEVEL_I_000.frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 1 + 500);

    let o = run(&["evaluate", "--truth", p(&corpus), "--pred", p(&seg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
