//! Gated score fusion.
//!
//! The fused decision score is the convex combination of the four
//! expert scores weighted by the emotion probabilities. A hard-gating
//! variant (take the argmax expert only) is kept as an ablation
//! baseline.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::expert::LinearExpert;
use crate::features::FeatureVector;
use crate::gating::{
    argmax4, gate_probs, soften, EmotionProbabilities, GateModel, Temperature, N_EMOTIONS,
};
use crate::manifest::Emotion;

/// The four emotion-specialized experts, canonical order.
#[derive(Debug, Clone)]
pub struct ExpertRegistry {
    experts: [LinearExpert; N_EMOTIONS],
}

impl ExpertRegistry {
    /// Build from (emotion, expert) pairs. All four emotions must appear
    /// exactly once and the experts must share one feature dimension.
    pub fn new(entries: Vec<(Emotion, LinearExpert)>) -> Result<ExpertRegistry> {
        let mut slots: [Option<LinearExpert>; N_EMOTIONS] = Default::default();
        for (emotion, expert) in entries {
            let slot = &mut slots[emotion.index()];
            if slot.is_some() {
                return Err(Error::Config(format!(
                    "duplicate expert for emotion `{emotion}`"
                )));
            }
            *slot = Some(expert);
        }
        let experts: Vec<LinearExpert> = Emotion::ALL
            .iter()
            .zip(slots)
            .map(|(emotion, slot)| {
                slot.ok_or_else(|| Error::Config(format!("missing expert for emotion `{emotion}`")))
            })
            .collect::<Result<_>>()?;
        let experts: [LinearExpert; N_EMOTIONS] = experts.try_into().expect("length checked");
        let dim = experts[0].dim();
        if experts.iter().any(|e| e.dim() != dim) {
            return Err(Error::Config(
                "experts in a registry must share one feature dimension".into(),
            ));
        }
        Ok(ExpertRegistry { experts })
    }

    pub fn expert(&self, emotion: Emotion) -> &LinearExpert {
        &self.experts[emotion.index()]
    }

    pub fn dim(&self) -> usize {
        self.experts[0].dim()
    }

    fn score_all(&self, x: &FeatureVector) -> Result<[f64; N_EMOTIONS]> {
        let mut scores = [0.0; N_EMOTIONS];
        for (slot, expert) in scores.iter_mut().zip(&self.experts) {
            *slot = expert.score(x)?;
        }
        Ok(scores)
    }
}

/// Per-trial fusion output.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub utt_id: String,
    /// Per-expert scores, canonical emotion order.
    pub expert_scores: [f64; N_EMOTIONS],
    pub gating: EmotionProbabilities,
    pub fused: f64,
    /// 1 = authentic, 0 = spoof; set by [`decide`] when a threshold is
    /// applied.
    pub decision: Option<u8>,
}

/// Weighted average of expert scores (the fusion core).
pub fn fuse(scores: &[f64; N_EMOTIONS], gating: &EmotionProbabilities) -> Result<f64> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input("non-finite expert score".into()));
    }
    Ok(scores
        .iter()
        .zip(gating.values())
        .map(|(s, e)| s * e)
        .sum())
}

/// Full soft-gated fusion for one feature vector.
pub fn gem_score(
    utt_id: &str,
    x: &FeatureVector,
    registry: &ExpertRegistry,
    gate: &GateModel,
    temperature: Temperature,
) -> Result<FusionResult> {
    let expert_scores = registry.score_all(x)?;
    // Single gate evaluation; the stored probabilities are exactly the
    // ones fused.
    let gating = gate_probs(gate, x, temperature)?;
    let fused = fuse(&expert_scores, &gating)?;
    Ok(FusionResult {
        utt_id: utt_id.to_string(),
        expert_scores,
        gating,
        fused,
        decision: None,
    })
}

/// Hard-gating ablation: the argmax-logit expert decides alone. Logit
/// ties go to the lowest canonical emotion index.
pub fn hard_gate_score(
    utt_id: &str,
    x: &FeatureVector,
    registry: &ExpertRegistry,
    gate: &GateModel,
) -> Result<FusionResult> {
    let expert_scores = registry.score_all(x)?;
    let logits = gate.logits(x)?;
    let winner = argmax4(&logits.0);
    // Stored gating reflects the selection as softened probabilities.
    let gating = soften(&logits, Temperature::new(1.0)?)?;
    Ok(FusionResult {
        utt_id: utt_id.to_string(),
        expert_scores,
        gating,
        fused: expert_scores[winner.index()],
        decision: None,
    })
}

/// Fuse externally supplied per-expert scores with softened logits.
pub fn fuse_external(
    utt_id: &str,
    scores: &[f64; N_EMOTIONS],
    logits: &crate::gating::EmotionLogits,
    temperature: Temperature,
) -> Result<FusionResult> {
    let gating = soften(logits, temperature)?;
    let fused = fuse(scores, &gating)?;
    Ok(FusionResult {
        utt_id: utt_id.to_string(),
        expert_scores: *scores,
        gating,
        fused,
        decision: None,
    })
}

/// Threshold decision: authentic (1) iff the score is at or above the
/// threshold.
pub fn decide(fused: f64, threshold: f64) -> u8 {
    if fused >= threshold {
        1
    } else {
        0
    }
}

/// Write the fusion output TSV:
/// `utt_id  S_n S_h S_a S_s  E_n E_h E_a E_s  y_s`, 9 significant digits.
pub fn write_fusion_results(path: &Path, results: &[FusionResult]) -> Result<()> {
    let mut out = String::new();
    for r in results {
        out.push_str(&r.utt_id);
        for s in &r.expert_scores {
            out.push_str(&format!("\t{s:.8e}"));
        }
        for e in r.gating.values() {
            out.push_str(&format!("\t{e:.8e}"));
        }
        out.push_str(&format!("\t{:.8e}\n", r.fused));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read back the fused score column of a fusion output TSV.
pub fn read_fused_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 + 2 * N_EMOTIONS {
            return Err(Error::Format(format!(
                "fusion file line {}: expected {} columns, got {}",
                i + 1,
                2 + 2 * N_EMOTIONS,
                fields.len()
            )));
        }
        let fused = fields[fields.len() - 1]
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("fusion file line {}: bad y_s", i + 1)))?;
        if map.insert(fields[0].to_string(), fused).is_some() {
            return Err(Error::Validation(format!(
                "fusion file line {}: duplicate utt_id `{}`",
                i + 1,
                fields[0]
            )));
        }
    }
    Ok(map)
}
