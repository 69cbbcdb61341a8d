//! Equal error rate evaluation and the emotion-breakdown report.
//!
//! The EER estimator is fixed as: acceptance at `score >= t`, threshold
//! sweep over all distinct scores plus a `+inf` sentinel, and linear
//! interpolation between the two adjacent operating points bracketing
//! the sign change of `FAR - FRR`. Ties between classes are handled by
//! the `>=` rule; there is no randomness anywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Emotion, Label};

/// One scored trial ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub utt_id: String,
    pub score: f64,
    pub label: Label,
    pub emotion: Emotion,
    pub source_system: String,
}

/// Equal error rate in percent over bonafide and spoof score sets.
///
/// Convention: higher score = more likely bonafide. FAR is the fraction
/// of spoof trials accepted (`score >= t`); FRR the fraction of bonafide
/// trials rejected (`score < t`).
pub fn eer(bonafide: &[f64], spoof: &[f64]) -> Result<f64> {
    if bonafide.is_empty() || spoof.is_empty() {
        return Err(Error::Evaluation(
            "eer needs at least one bonafide and one spoof trial".into(),
        ));
    }
    if bonafide.iter().chain(spoof).any(|s| !s.is_finite()) {
        return Err(Error::Evaluation("non-finite score".into()));
    }
    let mut bona_sorted = bonafide.to_vec();
    let mut spoof_sorted = spoof.to_vec();
    bona_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    spoof_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut thresholds: Vec<f64> = bona_sorted.iter().chain(&spoof_sorted).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let n_bona = bona_sorted.len() as f64;
    let n_spoof = spoof_sorted.len() as f64;
    let op_point = |t: f64| -> (f64, f64) {
        // partition_point gives the count of scores strictly below t.
        let bona_below = bona_sorted.partition_point(|&s| s < t) as f64;
        let spoof_below = spoof_sorted.partition_point(|&s| s < t) as f64;
        let far = (n_spoof - spoof_below) / n_spoof;
        let frr = bona_below / n_bona;
        (far, frr)
    };

    let (first_far, first_frr) = op_point(thresholds[0]);
    if first_far - first_frr <= 0.0 {
        return Ok(100.0 * 0.5 * (first_far + first_frr));
    }
    let mut prev_far = first_far;
    let mut prev_d = first_far - first_frr;
    for &t in &thresholds[1..] {
        let (far, frr) = op_point(t);
        let d = far - frr;
        if d <= 0.0 {
            // Interpolate within [prev, cur] where FAR - FRR crosses 0.
            let s = prev_d / (prev_d - d);
            return Ok(100.0 * (prev_far + s * (far - prev_far)));
        }
        prev_far = far;
        prev_d = d;
    }
    unreachable!("FAR - FRR is -1 at the +inf sentinel");
}

fn eer_trials(trials: &[&ScoredTrial]) -> Result<f64> {
    let bonafide: Vec<f64> = trials
        .iter()
        .filter(|t| t.label == Label::Bonafide)
        .map(|t| t.score)
        .collect();
    let spoof: Vec<f64> = trials
        .iter()
        .filter(|t| t.label == Label::Spoof)
        .map(|t| t.score)
        .collect();
    eer(&bonafide, &spoof)
}

/// A cell's EER is absent when the cell lacks one of the classes.
fn cell_eer(trials: &[&ScoredTrial]) -> Option<f64> {
    let has_bona = trials.iter().any(|t| t.label == Label::Bonafide);
    let has_spoof = trials.iter().any(|t| t.label == Label::Spoof);
    if has_bona && has_spoof {
        Some(eer_trials(trials).expect("both classes present"))
    } else {
        None
    }
}

/// Bonafide/spoof counts of one report cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub bonafide: usize,
    pub spoof: usize,
}

/// EER breakdown mirroring the evaluation table: HAS, per-emotion,
/// overall, and per-system cells.
///
/// Cell definitions: per-emotion cells use that emotion's bonafide and
/// spoof trials (bonafide trials are not pooled across emotions). The
/// HAS cell pools all non-neutral trials and is computed on the pooled
/// set, never averaged from per-emotion EERs. Per-system cells pair one
/// system's spoof trials with all bonafide trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer_overall: f64,
    pub eer_has: Option<f64>,
    /// Keyed by canonical emotion name; all four keys always present.
    pub eer_per_emotion: BTreeMap<String, Option<f64>>,
    pub eer_per_system: BTreeMap<String, Option<f64>>,
    pub counts: BTreeMap<String, CellCounts>,
}

fn counts_of(trials: &[&ScoredTrial]) -> CellCounts {
    CellCounts {
        bonafide: trials.iter().filter(|t| t.label == Label::Bonafide).count(),
        spoof: trials.iter().filter(|t| t.label == Label::Spoof).count(),
    }
}

/// Build the full breakdown report.
pub fn breakdown(trials: &[ScoredTrial]) -> Result<EvalReport> {
    if trials.is_empty() {
        return Err(Error::Evaluation("no trials to evaluate".into()));
    }
    let all: Vec<&ScoredTrial> = trials.iter().collect();
    let eer_overall = eer_trials(&all)?;

    let mut counts = BTreeMap::new();
    counts.insert("overall".to_string(), counts_of(&all));

    let has: Vec<&ScoredTrial> = all
        .iter()
        .filter(|t| t.emotion != Emotion::Neutral)
        .cloned()
        .collect();
    let eer_has = cell_eer(&has);
    counts.insert("has".to_string(), counts_of(&has));

    let mut eer_per_emotion = BTreeMap::new();
    for emotion in Emotion::ALL {
        let cell: Vec<&ScoredTrial> = all
            .iter()
            .filter(|t| t.emotion == emotion)
            .cloned()
            .collect();
        eer_per_emotion.insert(emotion.name().to_string(), cell_eer(&cell));
        counts.insert(emotion.name().to_string(), counts_of(&cell));
    }

    let bonafide: Vec<&ScoredTrial> = all
        .iter()
        .filter(|t| t.label == Label::Bonafide)
        .cloned()
        .collect();
    let mut systems: Vec<&str> = all
        .iter()
        .filter(|t| t.label == Label::Spoof)
        .map(|t| t.source_system.as_str())
        .collect();
    systems.sort_unstable();
    systems.dedup();
    let mut eer_per_system = BTreeMap::new();
    for system in systems {
        let mut cell: Vec<&ScoredTrial> = bonafide.clone();
        cell.extend(
            all.iter()
                .filter(|t| t.label == Label::Spoof && t.source_system == system)
                .cloned(),
        );
        eer_per_system.insert(system.to_string(), cell_eer(&cell));
        counts.insert(format!("system:{system}"), counts_of(&cell));
    }

    Ok(EvalReport {
        eer_overall,
        eer_has,
        eer_per_emotion,
        eer_per_system,
        counts,
    })
}

/// Output format for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::Input(format!("unknown report format `{other}`"))),
        }
    }
}

fn table_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "-".to_string(),
    }
}

/// Render a report as key-sorted JSON (full precision) or a fixed-width
/// text table (percent, 2 decimals, HAS first then the emotions then
/// Overall).
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            // Through Value so keys serialize sorted.
            let value = serde_json::to_value(report).expect("report is serializable");
            let mut text = serde_json::to_string_pretty(&value).expect("valid json");
            text.push('\n');
            text
        }
        ReportFormat::Table => {
            let mut out = String::new();
            out.push_str("EER% breakdown\n");
            out.push_str(&format!(
                "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
                "HAS", "Neutral", "Happy", "Angry", "Sad", "Overall"
            ));
            out.push_str(&format!(
                "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
                table_cell(report.eer_has),
                table_cell(report.eer_per_emotion["neutral"]),
                table_cell(report.eer_per_emotion["happy"]),
                table_cell(report.eer_per_emotion["angry"]),
                table_cell(report.eer_per_emotion["sad"]),
                table_cell(Some(report.eer_overall)),
            ));
            if !report.eer_per_system.is_empty() {
                out.push('\n');
                out.push_str("Per-system EER% (system spoof trials vs all bonafide)\n");
                for (system, v) in &report.eer_per_system {
                    out.push_str(&format!("{:>12} {:>8}\n", system, table_cell(*v)));
                }
            }
            out
        }
    }
}

/// Parse a report previously rendered as JSON.
pub fn parse_report_json(text: &str) -> Result<EvalReport> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("bad report JSON: {e}")))
}

/// Write a scored-trials TSV:
/// `utt_id<TAB>score<TAB>label<TAB>emotion<TAB>source_system`.
pub fn write_scored_trials(path: &std::path::Path, trials: &[ScoredTrial]) -> Result<()> {
    let mut out = String::new();
    for t in trials {
        out.push_str(&format!(
            "{}\t{:.8e}\t{}\t{}\t{}\n",
            t.utt_id, t.score, t.label, t.emotion, t.source_system
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a scored-trials TSV.
pub fn read_scored_trials(path: &std::path::Path) -> Result<Vec<ScoredTrial>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut trials = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "scored trials line {}: expected 5 columns, got {}",
                i + 1,
                fields.len()
            )));
        }
        let score = fields[1]
            .parse::<f64>()
            .ok()
            .filter(|s| s.is_finite())
            .ok_or_else(|| {
                Error::Format(format!("scored trials line {}: bad score `{}`", i + 1, fields[1]))
            })?;
        let label = Label::parse(fields[2]).ok_or_else(|| {
            Error::Format(format!("scored trials line {}: bad label `{}`", i + 1, fields[2]))
        })?;
        let emotion = Emotion::parse(fields[3]).ok_or_else(|| {
            Error::Format(format!(
                "scored trials line {}: bad emotion `{}`",
                i + 1,
                fields[3]
            ))
        })?;
        if !seen.insert(fields[0].to_string()) {
            return Err(Error::Validation(format!(
                "scored trials line {}: duplicate utt_id `{}`",
                i + 1,
                fields[0]
            )));
        }
        trials.push(ScoredTrial {
            utt_id: fields[0].to_string(),
            score,
            label,
            emotion,
            source_system: fields[4].to_string(),
        });
    }
    Ok(trials)
}
