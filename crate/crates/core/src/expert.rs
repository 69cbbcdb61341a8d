//! Trainable expert scorers with two-stage fine-tuning.
//!
//! An expert is a logistic-linear model over feature vectors that emits a
//! score in (0, 1), higher meaning more likely bonafide. A generalist is
//! trained on the full training set; specialists continue gradient
//! descent from the generalist's parameters on one emotion's subset.
//! Externally produced scores enter through [`load_scores`].

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::manifest::{Emotion, Label};
use crate::rng::SplitMix64;

/// Logistic-linear scorer: sigmoid(w.x + b).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearExpert {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub tag: String,
}

impl LinearExpert {
    pub fn zeros(dim: usize, tag: impl Into<String>) -> LinearExpert {
        LinearExpert {
            weights: vec![0.0; dim],
            bias: 0.0,
            tag: tag.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Bonafide score in (0, 1).
    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::Input(format!(
                "feature dimension {} != expert dimension {}",
                x.dim(),
                self.dim()
            )));
        }
        let z: f64 = self
            .weights
            .iter()
            .zip(&x.values)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias;
        Ok(sigmoid(z))
    }

    /// Serialize to the text model format: tag, dim, then one parameter
    /// per line (weights then bias) with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n{}\n", self.tag, self.dim());
        for w in &self.weights {
            out.push_str(&format!("{w:.16e}\n"));
        }
        out.push_str(&format!("{:.16e}\n", self.bias));
        out
    }

    pub fn from_text(text: &str) -> Result<LinearExpert> {
        let mut lines = text.lines();
        let tag = lines
            .next()
            .ok_or_else(|| Error::Format("empty model file".into()))?
            .to_string();
        let dim: usize = lines
            .next()
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| Error::Format("bad model dimension line".into()))?;
        let params: Vec<f64> = lines
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad model parameter `{l}`")))
            })
            .collect::<Result<_>>()?;
        if params.len() != dim + 1 {
            return Err(Error::Format(format!(
                "model file has {} parameters, expected {}",
                params.len(),
                dim + 1
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("non-finite model parameter".into()));
        }
        Ok(LinearExpert {
            weights: params[..dim].to_vec(),
            bias: params[dim],
            tag,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<LinearExpert> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LinearExpert::from_text(&text)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub l2: f64,
}

impl TrainConfig {
    /// Generalist-stage defaults.
    pub fn generalist() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            l2: 1e-4,
        }
    }

    /// Specialist-stage defaults: smaller batches, more epochs.
    pub fn specialist() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 100,
            seed: 0,
            l2: 1e-4,
        }
    }

    fn validate(&self, allow_zero_epochs: bool) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 && !allow_zero_epochs {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// One labeled training example.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: FeatureVector,
    pub label: Label,
    pub emotion: Emotion,
}

fn target(label: Label) -> f64 {
    match label {
        Label::Bonafide => 1.0,
        Label::Spoof => 0.0,
    }
}

fn check_two_classes(examples: &[TrainExample]) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let has_bona = examples.iter().any(|e| e.label == Label::Bonafide);
    let has_spoof = examples.iter().any(|e| e.label == Label::Spoof);
    if !has_bona || !has_spoof {
        return Err(Error::Training(
            "training set must contain both bonafide and spoof examples".into(),
        ));
    }
    Ok(())
}

fn check_dims(examples: &[TrainExample], dim: usize) -> Result<()> {
    if let Some(e) = examples.iter().find(|e| e.features.dim() != dim) {
        return Err(Error::Input(format!(
            "feature dimension {} != expected {dim}",
            e.features.dim()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy over `batch` plus `l2 * ||w||^2`, with its
/// analytic gradient. The bias is not regularized.
pub fn bce_loss_and_grad(
    weights: &[f64],
    bias: f64,
    batch: &[&TrainExample],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for ex in batch {
        let z: f64 = weights
            .iter()
            .zip(&ex.features.values)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + bias;
        let y = target(ex.label);
        // BCE in logit form: softplus(z) - y*z, numerically stable.
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += softplus - y * z;
        let residual = sigmoid(z) - y;
        for (g, v) in grad_w.iter_mut().zip(&ex.features.values) {
            *g += residual * v;
        }
        grad_b += residual;
    }
    loss /= n;
    grad_b /= n;
    let mut sq = 0.0;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g /= n;
        *g += 2.0 * l2 * w;
        sq += w * w;
    }
    loss += l2 * sq;
    (loss, grad_w, grad_b)
}

fn descend(
    expert: &mut LinearExpert,
    examples: &[TrainExample],
    config: &TrainConfig,
) {
    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        // Last short batch is kept.
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (_, grad_w, grad_b) =
                bce_loss_and_grad(&expert.weights, expert.bias, &batch, config.l2);
            for (w, g) in expert.weights.iter_mut().zip(&grad_w) {
                *w -= config.learning_rate * g;
            }
            expert.bias -= config.learning_rate * grad_b;
        }
    }
}

/// Stage 1: train a generalist from zero-initialized parameters.
pub fn train_generalist(
    examples: &[TrainExample],
    config: &TrainConfig,
) -> Result<LinearExpert> {
    config.validate(false)?;
    check_two_classes(examples)?;
    let dim = examples[0].features.dim();
    check_dims(examples, dim)?;
    let mut expert = LinearExpert::zeros(dim, "generalist");
    descend(&mut expert, examples, config);
    Ok(expert)
}

/// Stage 2: continue gradient descent from `base` on one emotion's
/// subset. `epochs = 0` is allowed here and returns the base unchanged
/// (retagged).
pub fn specialize(
    base: &LinearExpert,
    examples: &[TrainExample],
    config: &TrainConfig,
) -> Result<LinearExpert> {
    config.validate(true)?;
    if examples.is_empty() {
        return Err(Error::Training("empty specialization subset".into()));
    }
    let emotion = examples[0].emotion;
    if examples.iter().any(|e| e.emotion != emotion) {
        return Err(Error::Input(
            "specialization subset mixes emotions".into(),
        ));
    }
    check_two_classes(examples)?;
    check_dims(examples, base.dim())?;
    let mut expert = base.clone();
    expert.tag = format!("model-{}", &emotion.name()[..1]);
    descend(&mut expert, examples, config);
    Ok(expert)
}

/// Load an external score file: TSV `utt_id<TAB>score`.
///
/// Scores are passed through unchanged (any finite real); NaN/inf and
/// duplicate ids are rejected.
pub fn load_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

pub fn parse_scores(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (utt_id, raw) = line.split_once('\t').ok_or_else(|| {
            Error::Format(format!("score file line {}: expected 2 columns", i + 1))
        })?;
        let score = raw.parse::<f64>().ok().filter(|s| s.is_finite()).ok_or_else(|| {
            Error::Format(format!("score file line {}: bad score `{raw}`", i + 1))
        })?;
        if map.insert(utt_id.to_string(), score).is_some() {
            return Err(Error::Validation(format!(
                "score file line {}: duplicate utt_id `{utt_id}`",
                i + 1
            )));
        }
    }
    Ok(map)
}

/// Write a score TSV with 9 significant digits.
pub fn write_scores(path: &Path, scores: &[(String, f64)]) -> Result<()> {
    let mut out = String::new();
    for (utt_id, score) in scores {
        out.push_str(&format!("{utt_id}\t{score:.8e}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(values: Vec<f64>, label: Label, emotion: Emotion) -> TrainExample {
        TrainExample {
            features: FeatureVector { values },
            label,
            emotion,
        }
    }

    #[test]
    fn zero_expert_scores_half() {
        let expert = LinearExpert::zeros(3, "t");
        let x = FeatureVector { values: vec![1.0, -2.0, 0.5] };
        assert_eq!(expert.score(&x).unwrap(), 0.5);
    }

    #[test]
    fn orthogonal_input_scores_half() {
        let expert = LinearExpert {
            weights: vec![1.0, 0.0],
            bias: 0.0,
            tag: "t".into(),
        };
        let x = FeatureVector { values: vec![0.0, 5.0] };
        assert_eq!(expert.score(&x).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let expert = LinearExpert::zeros(3, "t");
        let x = FeatureVector { values: vec![1.0] };
        assert!(expert.score(&x).is_err());
    }

    #[test]
    fn single_class_set_rejected() {
        let examples = vec![
            ex(vec![1.0], Label::Bonafide, Emotion::Neutral),
            ex(vec![2.0], Label::Bonafide, Emotion::Neutral),
        ];
        assert!(matches!(
            train_generalist(&examples, &TrainConfig::generalist()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let examples: Vec<TrainExample> = (0..20)
            .map(|i| {
                let v = i as f64 / 10.0 - 1.0;
                ex(
                    vec![v, v * v],
                    if i % 2 == 0 { Label::Bonafide } else { Label::Spoof },
                    Emotion::Neutral,
                )
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 4,
            epochs: 20,
            seed: 99,
            l2: 1e-4,
        };
        let a = train_generalist(&examples, &cfg).unwrap();
        let b = train_generalist(&examples, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn specialize_zero_epochs_is_identity() {
        let base = LinearExpert {
            weights: vec![0.3, -0.7],
            bias: 0.2,
            tag: "generalist".into(),
        };
        let examples = vec![
            ex(vec![1.0, 0.0], Label::Bonafide, Emotion::Happy),
            ex(vec![0.0, 1.0], Label::Spoof, Emotion::Happy),
        ];
        let mut cfg = TrainConfig::specialist();
        cfg.epochs = 0;
        let spec = specialize(&base, &examples, &cfg).unwrap();
        assert_eq!(spec.weights, base.weights);
        assert_eq!(spec.bias, base.bias);
        assert_eq!(spec.tag, "model-h");
    }

    #[test]
    fn mixed_emotion_subset_rejected() {
        let base = LinearExpert::zeros(1, "generalist");
        let examples = vec![
            ex(vec![1.0], Label::Bonafide, Emotion::Happy),
            ex(vec![0.0], Label::Spoof, Emotion::Sad),
        ];
        assert!(matches!(
            specialize(&base, &examples, &TrainConfig::specialist()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn model_file_round_trips_bit_exactly() {
        let expert = LinearExpert {
            weights: vec![0.1 + 0.2, -1.0 / 3.0, 1e-300],
            bias: std::f64::consts::PI,
            tag: "model-h".into(),
        };
        let back = LinearExpert::from_text(&expert.to_text()).unwrap();
        assert_eq!(expert, back);
    }

    #[test]
    fn score_file_errors() {
        assert!(parse_scores("").unwrap().is_empty());
        let err = parse_scores("u1\tNaN\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = parse_scores("u1\t0.5\nu1\t0.6\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let map = parse_scores("u1\t0.5\nu2\t-3.25\nu3\t1e-4\n").unwrap();
        assert_eq!(map.len(), 3);
        assert_eq!(map["u2"], -3.25);
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        // Fixed fixture, full-batch descent with a small learning rate.
        let examples: Vec<TrainExample> = (0..16)
            .map(|i| {
                let v = (i as f64 * 0.37).sin();
                ex(
                    vec![v, v.cos()],
                    if v > 0.0 { Label::Bonafide } else { Label::Spoof },
                    Emotion::Neutral,
                )
            })
            .collect();
        let refs: Vec<&TrainExample> = examples.iter().collect();
        let mut w = vec![0.0, 0.0];
        let mut b = 0.0;
        let lr = 0.05;
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let (loss, gw, gb) = bce_loss_and_grad(&w, b, &refs, 1e-4);
            assert!(loss <= prev + 1e-12, "loss increased: {prev} -> {loss}");
            prev = loss;
            for (wi, gi) in w.iter_mut().zip(&gw) {
                *wi -= lr * gi;
            }
            b -= lr * gb;
        }
    }
}
