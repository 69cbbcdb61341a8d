//! Emotion gating: logits to temperature-softened probabilities.
//!
//! The gate is a 4-class multinomial-logistic classifier over the same
//! feature vectors the experts consume. At inference its logits (or
//! externally supplied ones) pass through a temperature softmax to
//! produce the convex weights used by the fusion. Training always uses
//! temperature 1; the temperature applies at inference only.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::manifest::Emotion;
use crate::rng::SplitMix64;

pub const N_EMOTIONS: usize = 4;

/// Raw 4-vector of class logits in canonical emotion order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionLogits(pub [f64; N_EMOTIONS]);

/// Strictly positive 4-vector summing to 1, canonical emotion order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionProbabilities([f64; N_EMOTIONS]);

impl EmotionProbabilities {
    pub fn values(&self) -> &[f64; N_EMOTIONS] {
        &self.0
    }

    pub fn get(&self, emotion: Emotion) -> f64 {
        self.0[emotion.index()]
    }

    /// Validate an externally built probability vector.
    pub fn new(values: [f64; N_EMOTIONS]) -> Result<EmotionProbabilities> {
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Input(
                "emotion probabilities must be strictly positive and finite".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "emotion probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(EmotionProbabilities(values))
    }

    /// Index of the largest entry; ties go to the lowest canonical index.
    pub fn argmax(&self) -> Emotion {
        argmax4(&self.0)
    }
}

/// Lowest-index argmax over a 4-vector.
pub fn argmax4(values: &[f64; N_EMOTIONS]) -> Emotion {
    let mut best = 0;
    for i in 1..N_EMOTIONS {
        if values[i] > values[best] {
            best = i;
        }
    }
    Emotion::from_index(best).unwrap()
}

/// Softmax temperature; larger flattens, smaller sharpens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Temperature> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Input(format!("temperature {t} must be > 0")));
        }
        Ok(Temperature(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(1.5)
    }
}

/// Temperature softmax with mandatory max-subtraction.
pub fn soften(logits: &EmotionLogits, temperature: Temperature) -> Result<EmotionProbabilities> {
    if logits.0.iter().any(|z| !z.is_finite()) {
        return Err(Error::Input("non-finite logit".into()));
    }
    let t = temperature.value();
    let max = logits.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps = [0.0; N_EMOTIONS];
    let mut sum = 0.0;
    for (e, z) in exps.iter_mut().zip(&logits.0) {
        *e = ((z - max) / t).exp();
        sum += *e;
    }
    for e in &mut exps {
        *e /= sum;
    }
    Ok(EmotionProbabilities(exps))
}

/// 4-class multinomial-logistic gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateModel {
    /// One weight vector per emotion class, canonical order.
    pub weights: [Vec<f64>; N_EMOTIONS],
    pub biases: [f64; N_EMOTIONS],
    pub tag: String,
}

impl GateModel {
    pub fn zeros(dim: usize, tag: impl Into<String>) -> GateModel {
        GateModel {
            weights: std::array::from_fn(|_| vec![0.0; dim]),
            biases: [0.0; N_EMOTIONS],
            tag: tag.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<EmotionLogits> {
        if x.dim() != self.dim() {
            return Err(Error::Input(format!(
                "feature dimension {} != gate dimension {}",
                x.dim(),
                self.dim()
            )));
        }
        let mut z = [0.0; N_EMOTIONS];
        for c in 0..N_EMOTIONS {
            z[c] = self.weights[c]
                .iter()
                .zip(&x.values)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + self.biases[c];
        }
        Ok(EmotionLogits(z))
    }

    /// Text format mirroring the expert model file: tag, dim, then one
    /// row per class with dim+1 tab-separated parameters (weights then
    /// bias), 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n{}\n", self.tag, self.dim());
        for c in 0..N_EMOTIONS {
            let row: Vec<String> = self.weights[c]
                .iter()
                .chain(std::iter::once(&self.biases[c]))
                .map(|p| format!("{p:.16e}"))
                .collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<GateModel> {
        let mut lines = text.lines();
        let tag = lines
            .next()
            .ok_or_else(|| Error::Format("empty gate file".into()))?
            .to_string();
        let dim: usize = lines
            .next()
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| Error::Format("bad gate dimension line".into()))?;
        let mut weights: [Vec<f64>; N_EMOTIONS] = std::array::from_fn(|_| Vec::new());
        let mut biases = [0.0; N_EMOTIONS];
        for c in 0..N_EMOTIONS {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("gate file missing row {c}")))?;
            let row: Vec<f64> = line
                .split('\t')
                .map(|p| {
                    p.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Format(format!("bad gate parameter `{p}`")))
                })
                .collect::<Result<_>>()?;
            if row.len() != dim + 1 {
                return Err(Error::Format(format!(
                    "gate row {c} has {} parameters, expected {}",
                    row.len(),
                    dim + 1
                )));
            }
            weights[c] = row[..dim].to_vec();
            biases[c] = row[dim];
        }
        Ok(GateModel {
            weights,
            biases,
            tag,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<GateModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GateModel::from_text(&text)
    }
}

/// Gate inference: temperature-softened class probabilities for `x`.
pub fn gate_probs(
    gate: &GateModel,
    x: &FeatureVector,
    temperature: Temperature,
) -> Result<EmotionProbabilities> {
    soften(&gate.logits(x)?, temperature)
}

/// One gate-training example.
#[derive(Debug, Clone)]
pub struct GateExample {
    pub features: FeatureVector,
    pub emotion: Emotion,
}

/// Mean multinomial cross-entropy plus `l2 * sum ||W_c||^2`, with its
/// analytic gradient. Uses temperature 1. Biases are not regularized.
pub fn ce_loss_and_grad(
    gate: &GateModel,
    batch: &[&GateExample],
    l2: f64,
) -> (f64, [Vec<f64>; N_EMOTIONS], [f64; N_EMOTIONS]) {
    let n = batch.len() as f64;
    let dim = gate.dim();
    let mut loss = 0.0;
    let mut grad_w: [Vec<f64>; N_EMOTIONS] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut grad_b = [0.0; N_EMOTIONS];
    for ex in batch {
        let logits = gate.logits(&ex.features).expect("dims checked by caller");
        let probs = soften(&logits, Temperature(1.0)).expect("finite logits");
        let y = ex.emotion.index();
        loss -= probs.0[y].ln();
        for c in 0..N_EMOTIONS {
            let residual = probs.0[c] - if c == y { 1.0 } else { 0.0 };
            for (g, v) in grad_w[c].iter_mut().zip(&ex.features.values) {
                *g += residual * v;
            }
            grad_b[c] += residual;
        }
    }
    loss /= n;
    for c in 0..N_EMOTIONS {
        grad_b[c] /= n;
        let mut sq = 0.0;
        for (g, w) in grad_w[c].iter_mut().zip(&gate.weights[c]) {
            *g /= n;
            *g += 2.0 * l2 * w;
            sq += w * w;
        }
        loss += l2 * sq;
    }
    (loss, grad_w, grad_b)
}

/// Train the gate by seeded mini-batch gradient descent.
pub fn train_gate(
    examples: &[GateExample],
    config: &crate::expert::TrainConfig,
) -> Result<GateModel> {
    if !(config.learning_rate > 0.0) || config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config("invalid gate training config".into()));
    }
    if examples.is_empty() {
        return Err(Error::Training("empty gate training set".into()));
    }
    let first = examples[0].emotion;
    if examples.iter().all(|e| e.emotion == first) {
        return Err(Error::Training(
            "gate training set needs at least 2 distinct emotion classes".into(),
        ));
    }
    let dim = examples[0].features.dim();
    if let Some(e) = examples.iter().find(|e| e.features.dim() != dim) {
        return Err(Error::Input(format!(
            "feature dimension {} != expected {dim}",
            e.features.dim()
        )));
    }
    let mut gate = GateModel::zeros(dim, "gate");
    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&GateExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (_, grad_w, grad_b) = ce_loss_and_grad(&gate, &batch, config.l2);
            for c in 0..N_EMOTIONS {
                for (w, g) in gate.weights[c].iter_mut().zip(&grad_w[c]) {
                    *w -= config.learning_rate * g;
                }
                gate.biases[c] -= config.learning_rate * grad_b[c];
            }
        }
    }
    Ok(gate)
}

/// Load an external logits file:
/// TSV `utt_id<TAB>z_neutral<TAB>z_happy<TAB>z_angry<TAB>z_sad`.
pub fn load_logits(path: &Path) -> Result<BTreeMap<String, EmotionLogits>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_logits(&text)
}

pub fn parse_logits(text: &str) -> Result<BTreeMap<String, EmotionLogits>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 1 + N_EMOTIONS {
            return Err(Error::Format(format!(
                "logits file line {}: expected {} columns, got {}",
                i + 1,
                1 + N_EMOTIONS,
                fields.len()
            )));
        }
        let mut z = [0.0; N_EMOTIONS];
        for (slot, raw) in z.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::Format(format!("logits file line {}: bad value `{raw}`", i + 1))
                })?;
        }
        if map.insert(fields[0].to_string(), EmotionLogits(z)).is_some() {
            return Err(Error::Validation(format!(
                "logits file line {}: duplicate utt_id `{}`",
                i + 1,
                fields[0]
            )));
        }
    }
    Ok(map)
}

/// Write a logits TSV with 9 significant digits.
pub fn write_logits(path: &Path, logits: &[(String, EmotionLogits)]) -> Result<()> {
    let mut out = String::new();
    for (utt_id, z) in logits {
        out.push_str(utt_id);
        for v in &z.0 {
            out.push_str(&format!("\t{v:.8e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let probs = soften(&EmotionLogits([0.0; 4]), Temperature::new(2.3).unwrap()).unwrap();
        for &p in probs.values() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_logit_stays_finite() {
        let probs = soften(
            &EmotionLogits([1000.0, 0.0, 0.0, 0.0]),
            Temperature::new(1.0).unwrap(),
        )
        .unwrap();
        assert!(probs.values().iter().all(|p| p.is_finite()));
        assert!(probs.values()[0] > 1.0 - 1e-12);
    }

    #[test]
    fn invalid_temperature_rejected() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
    }

    #[test]
    fn non_finite_logit_rejected() {
        assert!(soften(
            &EmotionLogits([f64::NAN, 0.0, 0.0, 0.0]),
            Temperature::default()
        )
        .is_err());
    }

    #[test]
    fn zero_gate_gives_uniform_probs() {
        let gate = GateModel::zeros(3, "g");
        let x = FeatureVector { values: vec![1.0, 2.0, -0.5] };
        let probs = gate_probs(&gate, &x, Temperature::default()).unwrap();
        for &p in probs.values() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn argmax_preserved_across_temperatures() {
        let gate = GateModel {
            weights: std::array::from_fn(|c| vec![c as f64 * 0.5 - 0.3, 0.1]),
            biases: [0.2, -0.1, 0.05, 0.0],
            tag: "g".into(),
        };
        let x = FeatureVector { values: vec![0.7, -1.3] };
        let cold = gate_probs(&gate, &x, Temperature::new(0.1).unwrap()).unwrap();
        let hot = gate_probs(&gate, &x, Temperature::new(10.0).unwrap()).unwrap();
        assert_eq!(cold.argmax(), hot.argmax());
    }

    #[test]
    fn argmax_tie_goes_to_lowest_index() {
        assert_eq!(argmax4(&[1.0, 1.0, 0.0, 0.0]), Emotion::Neutral);
        assert_eq!(argmax4(&[0.0, 2.0, 2.0, 0.0]), Emotion::Happy);
    }

    #[test]
    fn all_single_class_training_rejected() {
        let examples: Vec<GateExample> = (0..4)
            .map(|i| GateExample {
                features: FeatureVector { values: vec![i as f64] },
                emotion: Emotion::Neutral,
            })
            .collect();
        assert!(matches!(
            train_gate(&examples, &crate::expert::TrainConfig::generalist()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn gate_file_round_trips_bit_exactly() {
        let gate = GateModel {
            weights: std::array::from_fn(|c| vec![0.1 * c as f64 + 1.0 / 3.0, -2.5e-12]),
            biases: [0.25, -0.75, std::f64::consts::E, 0.0],
            tag: "gate".into(),
        };
        assert_eq!(GateModel::from_text(&gate.to_text()).unwrap(), gate);
    }

    #[test]
    fn logits_file_parsing() {
        assert!(parse_logits("").unwrap().is_empty());
        let map = parse_logits("u1\t1\t2\t3\t4\nu2\t-1\t0\t0.5\t0\n").unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["u1"].0, [1.0, 2.0, 3.0, 4.0]);
        let err = parse_logits("u1\t1\t2\t3\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(parse_logits("u1\t1\t2\t3\tinf\n").is_err());
    }
}
