use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use heartseg::dataset::{build_level, compute_indicators, flags, write_corpus, Level};
use heartseg::evaluation::{aggregate, evaluate_recording, format_pooled_table, format_table, report_csv};
use heartseg::inference::{write_frame_csv, Segmenter};
use heartseg::model::{ModelParams, Tfan, TfanConfig};
use heartseg::signal_io::{load_wav, Annotation};
use heartseg::training::{cross_validate, AnnotatedRecording};
use heartseg::Error;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{check_overlap, RunConfig};
use crate::{CliError, Mode};

type CliResult<T = ()> = Result<T, CliError>;

fn write_file(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    path: String,
    annotation: String,
    #[serde(default)]
    level: Option<String>,
}

struct CorpusEntry {
    id: String,
    wav: PathBuf,
    annotation: PathBuf,
    level: Option<String>,
}

/// Reads `dir/manifest.csv`; an empty manifest is a usage error.
fn read_manifest(dir: &Path) -> CliResult<Vec<CorpusEntry>> {
    let path = dir.join("manifest.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize::<ManifestEntry>() {
        let row = row.map_err(|e| csv_err(&path, e))?;
        let wav = dir.join(&row.path);
        let id = wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.push(CorpusEntry {
            id,
            wav,
            annotation: dir.join(&row.annotation),
            level: row.level,
        });
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{} lists no recordings", path.display())));
    }
    Ok(out)
}

fn parse_levels(spec: &str) -> CliResult<[usize; 3]> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--levels expects three counts like 10,10,10, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut n = [0; 3];
    for (slot, p) in n.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| bad())?;
    }
    if n.iter().sum::<usize>() == 0 {
        return Err(CliError::Usage("--levels asks for no recordings".into()));
    }
    Ok(n)
}

pub fn synth(levels: &str, seed: u64, out: &Path) -> CliResult {
    let counts = parse_levels(levels)?;
    let mut items = Vec::new();
    for (level, n) in Level::ALL.into_iter().zip(counts) {
        if n > 0 {
            info!("synthesizing {n} {level} recordings");
            items.extend(build_level(level, n, seed)?);
        }
    }
    write_corpus(out, &items)?;
    println!("{}", out.join("manifest.csv").display());
    Ok(())
}

fn load_corpus(dir: &Path) -> CliResult<Vec<AnnotatedRecording>> {
    read_manifest(dir)?
        .into_iter()
        .map(|e| {
            Ok(AnnotatedRecording {
                recording: load_wav(&e.wav)?,
                annotation: Annotation::load_csv(&e.annotation)?,
            })
        })
        .collect()
}

pub fn train(corpus: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> CliResult {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let items = load_corpus(corpus)?;
    if items.len() < cfg.folds {
        return Err(CliError::Usage(format!(
            "{} recordings cannot fill {} folds",
            items.len(),
            cfg.folds
        )));
    }
    create_dir(out)?;
    write_file(&out.join("run_config.json"), &cfg.to_json())?;
    write_file(&out.join("model.json"), &cfg.model.to_json())?;

    let tc = cfg.train_config();
    let cv = cross_validate(&items, cfg.folds, &tc, Some(out))?;
    cv.params.save(&out.join("best.weights"))?;
    info!("best fold {} written to {}", cv.best_fold, out.join("best.weights").display());

    let mut table = String::from("fold,best_epoch,best_val_accuracy,epochs,early_stopped,selected\n");
    for (j, f) in cv.folds.iter().enumerate() {
        let _ = writeln!(
            table,
            "{j},{},{:.6},{},{},{}",
            f.best_epoch,
            f.best_accuracy,
            f.history.len(),
            f.early_stopped,
            j == cv.best_fold
        );
    }
    write_file(&out.join("folds.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn wav_inputs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let rd = std::fs::read_dir(p).map_err(|e| Error::io(p, e))?;
            let mut found: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no WAV inputs found".into()));
    }
    Ok(out)
}

pub fn segment(inputs: &[PathBuf], weights: &Path, config: Option<&Path>, overlap: Option<f64>, out: &Path) -> CliResult {
    let (model_cfg, default_overlap) = match config {
        Some(p) => {
            let c = RunConfig::load(p)?;
            (c.model, c.overlap)
        }
        None => {
            let p = weights.parent().unwrap_or(Path::new(".")).join("model.json");
            let m = TfanConfig::load(&p).map_err(|e| CliError::Usage(format!("model config: {e} (pass --config)")))?;
            (m, 0.5)
        }
    };
    let overlap = overlap.unwrap_or(default_overlap);
    check_overlap(overlap)?;
    let model = Tfan::new(model_cfg).map_err(|e| CliError::Usage(format!("model config: {e}")))?;
    let params = ModelParams::load(weights)?;
    let mut seg = Segmenter::new(model, params).map_err(|e| CliError::Usage(format!("{}: {e}", weights.display())))?;
    seg.overlap = overlap;

    let files = wav_inputs(inputs)?;
    create_dir(out)?;
    for f in files {
        let rec = load_wav(&f)?;
        let s = seg.segment(&rec)?;
        let ann = out.join(format!("{}.csv", rec.id));
        s.annotation.save_csv(&ann)?;
        write_frame_csv(&out.join(format!("{}.frames.csv", rec.id)), &s)?;
        println!("{}", ann.display());
    }
    Ok(())
}

/// Reference entries: the manifest when present, otherwise every annotation
/// CSV in the directory.
fn truth_entries(dir: &Path) -> CliResult<Vec<CorpusEntry>> {
    if dir.join("manifest.csv").exists() {
        return read_manifest(dir);
    }
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out: Vec<CorpusEntry> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.ends_with(".csv") && !name.ends_with(".frames.csv")
        })
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            CorpusEntry {
                wav: p.with_extension("wav"),
                annotation: p,
                id,
                level: None,
            }
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if out.is_empty() {
        return Err(CliError::Usage(format!("no reference annotations in {}", dir.display())));
    }
    Ok(out)
}

pub fn evaluate(truth: &Path, pred: &Path, sigma_ms: u32, mode: Mode, out: Option<&Path>) -> CliResult {
    if sigma_ms == 0 {
        return Err(CliError::Usage("--sigma-ms must be positive".into()));
    }
    let sigma = sigma_ms as f64 / 1000.0;
    let mut results = Vec::new();
    for e in truth_entries(truth)? {
        let reference = Annotation::load_csv(&e.annotation)?;
        let predicted = Annotation::load_csv(&pred.join(format!("{}.csv", e.id)))?;
        // Without the audio the recording end is unknown; onsets are then
        // scored without the end-of-recording exclusion.
        let duration = if e.wav.exists() {
            load_wav(&e.wav)?.duration_s()
        } else {
            f64::INFINITY
        };
        results.push(evaluate_recording(&e.id, &reference, &predicted, sigma, duration)?);
    }
    let summary = aggregate(&results)?;
    match mode {
        Mode::Pooled => print!("{}", format_pooled_table(&summary)),
        Mode::PerRecording => print!("{}", format_table(&results, &summary)),
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("report.csv"), &report_csv(&results, &summary)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Assignment<'a> {
    recording: &'a str,
    d_noise_murmur: f64,
    d_rhythm: f64,
    d_rate: f64,
    f_s2: f64,
    level: &'static str,
    labeled_level: &'a str,
    high_noise_murmur: bool,
    arrhythmia: bool,
    abnormal_hr: bool,
    vague_s2: bool,
}

#[derive(Default)]
struct Tally {
    n: usize,
    flags: [usize; 4],
}

pub fn stratify(corpus: &Path, out: Option<&Path>) -> CliResult {
    let entries = read_manifest(corpus)?;
    let mut rows = csv::Writer::from_writer(Vec::new());
    let mut tallies: BTreeMap<Level, Tally> = Level::ALL.into_iter().map(|l| (l, Tally::default())).collect();
    let mut all = Tally::default();
    for e in &entries {
        let rec = load_wav(&e.wav)?;
        let ann = Annotation::load_csv(&e.annotation)?;
        let ind = compute_indicators(&rec, &ann)?;
        let level = heartseg::dataset::assign_level(&ind);
        let f = flags(&ind);
        let set = [f.high_noise_murmur, f.arrhythmia, f.abnormal_hr, f.vague_s2];
        for t in [tallies.get_mut(&level).expect("all levels present"), &mut all] {
            t.n += 1;
            for (c, &b) in t.flags.iter_mut().zip(&set) {
                *c += b as usize;
            }
        }
        rows.serialize(Assignment {
            recording: &e.id,
            d_noise_murmur: ind.d_noise_murmur,
            d_rhythm: ind.d_rhythm,
            d_rate: ind.d_rate,
            f_s2: ind.f_s2,
            level: level.name(),
            labeled_level: e.level.as_deref().unwrap_or(""),
            high_noise_murmur: f.high_noise_murmur,
            arrhythmia: f.arrhythmia,
            abnormal_hr: f.abnormal_hr,
            vague_s2: f.vague_s2,
        })
        .map_err(|err| csv_err(&e.annotation, err))?;
    }

    let pct = |k: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let mut table = format!(
        "{:<10} {:>10} {:>8} {:>14} {:>12} {:>14} {:>10}\n",
        "level", "recordings", "share_%", "noise_murmur_%", "arrhythmia_%", "abnormal_hr_%", "vague_s2_%"
    );
    let mut summary = String::from("level,recordings,share_pct,noise_murmur_pct,arrhythmia_pct,abnormal_hr_pct,vague_s2_pct\n");
    let named = tallies.iter().map(|(l, t)| (l.name(), t)).chain([("all", &all)]);
    for (name, t) in named {
        let share = pct(t.n, all.n);
        let p: Vec<f64> = t.flags.iter().map(|&k| pct(k, t.n)).collect();
        let _ = writeln!(
            table,
            "{name:<10} {:>10} {share:>8.1} {:>14.1} {:>12.1} {:>14.1} {:>10.1}",
            t.n, p[0], p[1], p[2], p[3]
        );
        let _ = writeln!(summary, "{name},{},{share:.2},{:.2},{:.2},{:.2},{:.2}", t.n, p[0], p[1], p[2], p[3]);
    }
    print!("{table}");
    if let Some(dir) = out {
        create_dir(dir)?;
        let bytes = rows.into_inner().map_err(|e| CliError::Data(Error::Format(e.to_string())))?;
        write_file(&dir.join("assignments.csv"), &String::from_utf8_lossy(&bytes))?;
        write_file(&dir.join("characteristics.csv"), &summary)?;
    }
    Ok(())
}
