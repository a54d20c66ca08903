//! Tolerance-based onset scoring, aggregation across recordings, and
//! paired significance testing.

mod counting;
mod stats;

pub use counting::{count_annotations, count_matches, count_matches_until, CountingState, Counts};
pub use stats::{incomplete_beta, paired_t_test, student_t_two_sided, TTest};

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::signal_io::{Annotation, HeartState};

/// Default onset tolerance.
pub const DEFAULT_SIGMA_S: f64 = 0.1;

/// Sensitivity, positive predictivity and F1, in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub se: f64,
    pub p_plus: f64,
    pub f1: f64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

pub fn compute_metrics(c: &Counts) -> Metrics {
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(100.0 * num as f64 / den as f64) };
    let se = ratio(c.tp, c.tp + c.fn_);
    let p_plus = ratio(c.tp, c.tp + c.fp);
    let (se_v, pp_v) = (se.unwrap_or(0.0), p_plus.unwrap_or(0.0));
    let f1 = if se_v + pp_v > 0.0 {
        Some(2.0 * se_v * pp_v / (se_v + pp_v))
    } else {
        None
    };
    Metrics {
        se: se_v,
        p_plus: pp_v,
        f1: f1.unwrap_or(0.0),
        undefined: se.is_none() || p_plus.is_none() || f1.is_none(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_state: [Metrics; 4],
    pub overall: Metrics,
    pub counts: CountingState,
}

impl MetricsReport {
    pub fn from_counts(counts: CountingState) -> Self {
        MetricsReport {
            per_state: counts.per_state.map(|c| compute_metrics(&c)),
            overall: compute_metrics(&counts.pooled()),
            counts,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordingResult {
    pub id: String,
    pub report: MetricsReport,
}

pub fn evaluate_recording(id: &str, truth: &Annotation, pred: &Annotation, sigma_s: f64, duration_s: f64) -> Result<RecordingResult> {
    let counts = count_annotations(truth, pred, sigma_s, duration_s)?;
    Ok(RecordingResult {
        id: id.to_string(),
        report: MetricsReport::from_counts(counts),
    })
}

/// Per-state F1 then overall SE, P+, F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Figures {
    pub f1_s1: f64,
    pub f1_systole: f64,
    pub f1_s2: f64,
    pub f1_diastole: f64,
    pub se: f64,
    pub p_plus: f64,
    pub f1: f64,
}

impl Figures {
    pub fn of(r: &MetricsReport) -> Self {
        Figures {
            f1_s1: r.per_state[0].f1,
            f1_systole: r.per_state[1].f1,
            f1_s2: r.per_state[2].f1,
            f1_diastole: r.per_state[3].f1,
            se: r.overall.se,
            p_plus: r.overall.p_plus,
            f1: r.overall.f1,
        }
    }

    fn to_array(self) -> [f64; 7] {
        [self.f1_s1, self.f1_systole, self.f1_s2, self.f1_diastole, self.se, self.p_plus, self.f1]
    }

    fn from_array(a: [f64; 7]) -> Self {
        Figures {
            f1_s1: a[0],
            f1_systole: a[1],
            f1_s2: a[2],
            f1_diastole: a[3],
            se: a[4],
            p_plus: a[5],
            f1: a[6],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// Metrics of the summed counts.
    pub pooled: MetricsReport,
    /// Mean of the per-recording figures.
    pub mean: Figures,
    /// Sample standard deviation over recordings divided by sqrt(n); 0 for n = 1.
    pub stderr: Figures,
    pub n: usize,
}

pub fn aggregate(results: &[RecordingResult]) -> Result<Summary> {
    ensure!(!results.is_empty(), EmptyInput, "nothing to aggregate");
    let total = results
        .iter()
        .map(|r| r.report.counts)
        .fold(CountingState::default(), |a, b| a + b);
    let rows: Vec<[f64; 7]> = results.iter().map(|r| Figures::of(&r.report).to_array()).collect();
    let n = rows.len() as f64;
    let mut mean = [0.0; 7];
    let mut se = [0.0; 7];
    for k in 0..7 {
        mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        if rows.len() > 1 {
            let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0);
            se[k] = var.sqrt() / n.sqrt();
        }
    }
    Ok(Summary {
        pooled: MetricsReport::from_counts(total),
        mean: Figures::from_array(mean),
        stderr: Figures::from_array(se),
        n: results.len(),
    })
}

const HEADER: [&str; 7] = ["F1_S1", "F1_systole", "F1_S2", "F1_diastole", "SE", "P+", "F1"];

/// Per-recording rows followed by `mean`, `stderr` and `pooled` rows.
pub fn report_csv(results: &[RecordingResult], summary: &Summary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt_err = |e: csv::Error| Error::Format(e.to_string());
    let mut head = vec!["recording"];
    head.extend(HEADER);
    head.extend(["TP", "FP", "FN", "pre_first_FP"]);
    w.write_record(&head).map_err(fmt_err)?;
    let mut row = |name: &str, f: Figures, c: Option<Counts>| -> Result<()> {
        let mut rec = vec![name.to_string()];
        rec.extend(f.to_array().iter().map(|v| format!("{v:.4}")));
        match c {
            Some(c) => rec.extend([c.tp, c.fp, c.fn_, c.pre_first_fp].iter().map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat(String::new()).take(4)),
        }
        w.write_record(&rec).map_err(fmt_err)
    };
    for r in results {
        row(&r.id, Figures::of(&r.report), Some(r.report.counts.pooled()))?;
    }
    row("mean", summary.mean, None)?;
    row("stderr", summary.stderr, None)?;
    row("pooled", Figures::of(&summary.pooled), Some(summary.pooled.counts.pooled()))?;
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn save_report_csv(path: &Path, results: &[RecordingResult], summary: &Summary) -> Result<()> {
    std::fs::write(path, report_csv(results, summary)?).map_err(|e| Error::io(path, e))
}

/// Plain-text table: per-recording rows, then mean ± standard error and the
/// pooled figures.
pub fn format_table(results: &[RecordingResult], summary: &Summary) -> String {
    let id_w = results.iter().map(|r| r.id.len()).max().unwrap_or(0).max(10);
    let mut s = String::new();
    let _ = write!(s, "{:<id_w$}", "recording");
    for h in HEADER {
        let _ = write!(s, " {h:>15}");
    }
    s.push('\n');
    for r in results {
        let _ = write!(s, "{:<id_w$}", r.id);
        for v in Figures::of(&r.report).to_array() {
            let _ = write!(s, " {v:>15.2}");
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<id_w$}", "mean ± se");
    for (m, e) in summary.mean.to_array().iter().zip(summary.stderr.to_array()) {
        let _ = write!(s, " {:>15}", format!("{m:.2} ± {e:.2}"));
    }
    s.push('\n');
    let _ = write!(s, "{:<id_w$}", "pooled");
    for v in Figures::of(&summary.pooled).to_array() {
        let _ = write!(s, " {v:>15.2}");
    }
    s.push('\n');
    push_notes(&mut s, summary);
    s
}

/// Figures of the summed counts only, one row.
pub fn format_pooled_table(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<12}", "recordings");
    for h in HEADER {
        let _ = write!(s, " {h:>11}");
    }
    s.push('\n');
    let _ = write!(s, "{:<12}", summary.n);
    for v in Figures::of(&summary.pooled).to_array() {
        let _ = write!(s, " {v:>11.2}");
    }
    s.push('\n');
    push_notes(&mut s, summary);
    s
}

fn push_notes(s: &mut String, summary: &Summary) {
    let flagged = summary.pooled.counts.pooled().pre_first_fp;
    if flagged > 0 {
        let _ = writeln!(s, "note: {flagged} false positives precede the first annotated onset of their state");
    }
    if summary.pooled.per_state.iter().chain([&summary.pooled.overall]).any(|m| m.undefined) {
        let _ = writeln!(s, "note: some ratios had zero denominators and are reported as 0");
    }
}

/// Per-state name used in report headers.
pub fn state_label(s: HeartState) -> &'static str {
    HEADER[s.index()]
}
