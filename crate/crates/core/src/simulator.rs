//! Synthetic fixtures with known ground truth.
//!
//! Two generators back the property-based evaluation: [`gen_scores`]
//! draws per-expert Gaussian score sets plus gating logits with a
//! controllable margin, and [`gen_corpus`] writes a tiny tone-mixture
//! WAV corpus whose emotion is encoded as a disjoint frequency band and
//! whose spoof class carries a fixed spectral marker.
//!
//! Every draw comes from a SplitMix64 stream derived per
//! (expert, emotion, label) cell, so changing one cell's count never
//! perturbs another cell's values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{write_wav, Waveform};
use crate::gating::{EmotionLogits, N_EMOTIONS};
use crate::manifest::{Emotion, Label, Manifest, TrialRecord, BONAFIDE_SYSTEM};
use crate::metrics::ScoredTrial;
use crate::rng::{derive_seed, SplitMix64};

/// Gaussian score distribution parameters for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussParams {
    pub mean: f64,
    pub std: f64,
}

/// Spoof-system name used for simulator-generated trials.
pub const SIM_SYSTEM: &str = "simtts";

/// Per-emotion tone bands (Hz), pairwise disjoint.
pub const EMOTION_BANDS: [(f64, f64); N_EMOTIONS] = [
    (200.0, 600.0),   // neutral
    (800.0, 1400.0),  // happy
    (1800.0, 2600.0), // angry
    (3200.0, 4200.0), // sad
];

/// Simulator configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    /// Score trials per (emotion, label) cell.
    pub trials_per_cell: usize,
    /// Logit margin of the true emotion over the others; larger means
    /// closer to one-hot gating.
    pub gate_logit_gap: f64,
    /// `score_params[expert][emotion][label]` with label index
    /// 0 = bonafide, 1 = spoof.
    pub score_params: [[[GaussParams; 2]; N_EMOTIONS]; N_EMOTIONS],
    /// Corpus utterances per (emotion, label) cell.
    pub corpus_utts_per_cell: usize,
    pub corpus_len_s: f64,
    pub corpus_sample_rate: u32,
    /// Additive Gaussian noise amplitude for corpus synthesis.
    pub corpus_noise: f64,
}

impl SimConfig {
    /// Symmetric construction: every expert uses `specialist` on its own
    /// emotion and `off` elsewhere, with the same bonafide/spoof pair.
    pub fn symmetric(
        seed: u64,
        trials_per_cell: usize,
        gate_logit_gap: f64,
        specialist: [GaussParams; 2],
        off: [GaussParams; 2],
    ) -> SimConfig {
        let score_params = std::array::from_fn(|expert| {
            std::array::from_fn(|emotion| {
                if expert == emotion {
                    specialist
                } else {
                    off
                }
            })
        });
        SimConfig {
            seed,
            trials_per_cell,
            gate_logit_gap,
            score_params,
            corpus_utts_per_cell: 50,
            corpus_len_s: 1.0,
            corpus_sample_rate: 16000,
            corpus_noise: 0.005,
        }
    }

    /// Defaults matching the dominance fixture: sharp specialists,
    /// noisy off-emotion experts, near-one-hot gating.
    pub fn default_with_seed(seed: u64) -> SimConfig {
        SimConfig::symmetric(
            seed,
            300,
            20.0,
            [
                GaussParams { mean: 0.9, std: 0.05 },
                GaussParams { mean: 0.1, std: 0.05 },
            ],
            [
                GaussParams { mean: 0.6, std: 0.2 },
                GaussParams { mean: 0.4, std: 0.2 },
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cell == 0 || self.corpus_utts_per_cell == 0 {
            return Err(Error::Config("simulator cell counts must be >= 1".into()));
        }
        if !(self.gate_logit_gap >= 0.0) {
            return Err(Error::Config("gate_logit_gap must be >= 0".into()));
        }
        for expert in &self.score_params {
            for emotion in expert {
                for cell in emotion {
                    if !(cell.std > 0.0) || !cell.mean.is_finite() {
                        return Err(Error::Config(
                            "score distribution needs finite mean and std > 0".into(),
                        ));
                    }
                }
            }
        }
        if !(self.corpus_len_s > 0.0) || self.corpus_sample_rate == 0 {
            return Err(Error::Config("invalid corpus length or sample rate".into()));
        }
        if !(self.corpus_noise >= 0.0) {
            return Err(Error::Config("corpus_noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Read a simulator config from a flat key-value file. Only the
    /// symmetric construction is expressible in file form.
    pub fn from_config(cfg: &crate::config::KeyValueConfig) -> Result<SimConfig> {
        cfg.ensure_known_keys(&[
            "seed",
            "trials_per_cell",
            "gate_logit_gap",
            "specialist.bona_mean",
            "specialist.spoof_mean",
            "specialist.std",
            "off.bona_mean",
            "off.spoof_mean",
            "off.std",
            "corpus.utts_per_cell",
            "corpus.len_s",
            "corpus.sample_rate",
            "corpus.noise",
        ])?;
        let base = SimConfig::default_with_seed(cfg.get_parsed("seed")?.unwrap_or(0));
        let spec_bona = cfg.get_parsed("specialist.bona_mean")?.unwrap_or(0.9);
        let spec_spoof = cfg.get_parsed("specialist.spoof_mean")?.unwrap_or(0.1);
        let spec_std = cfg.get_parsed("specialist.std")?.unwrap_or(0.05);
        let off_bona = cfg.get_parsed("off.bona_mean")?.unwrap_or(0.6);
        let off_spoof = cfg.get_parsed("off.spoof_mean")?.unwrap_or(0.4);
        let off_std = cfg.get_parsed("off.std")?.unwrap_or(0.2);
        let mut config = SimConfig::symmetric(
            base.seed,
            cfg.get_parsed("trials_per_cell")?.unwrap_or(base.trials_per_cell),
            cfg.get_parsed("gate_logit_gap")?.unwrap_or(base.gate_logit_gap),
            [
                GaussParams { mean: spec_bona, std: spec_std },
                GaussParams { mean: spec_spoof, std: spec_std },
            ],
            [
                GaussParams { mean: off_bona, std: off_std },
                GaussParams { mean: off_spoof, std: off_std },
            ],
        );
        if let Some(v) = cfg.get_parsed("corpus.utts_per_cell")? {
            config.corpus_utts_per_cell = v;
        }
        if let Some(v) = cfg.get_parsed("corpus.len_s")? {
            config.corpus_len_s = v;
        }
        if let Some(v) = cfg.get_parsed("corpus.sample_rate")? {
            config.corpus_sample_rate = v;
        }
        if let Some(v) = cfg.get_parsed("corpus.noise")? {
            config.corpus_noise = v;
        }
        config.validate()?;
        Ok(config)
    }
}

/// One synthetic trial's identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrial {
    pub utt_id: String,
    pub emotion: Emotion,
    pub label: Label,
}

impl SimTrial {
    pub fn source_system(&self) -> &'static str {
        match self.label {
            Label::Bonafide => BONAFIDE_SYSTEM,
            Label::Spoof => SIM_SYSTEM,
        }
    }
}

/// Aligned synthetic score batch: index `i` of every field refers to the
/// same trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub trials: Vec<SimTrial>,
    /// `expert_scores[expert][i]`, canonical expert order.
    pub expert_scores: [Vec<f64>; N_EMOTIONS],
    pub logits: Vec<EmotionLogits>,
}

impl SyntheticBatch {
    /// One expert's scores as scored trials (raw, unclamped).
    pub fn scored_trials(&self, expert: Emotion) -> Vec<ScoredTrial> {
        self.trials
            .iter()
            .zip(&self.expert_scores[expert.index()])
            .map(|(t, &score)| ScoredTrial {
                utt_id: t.utt_id.clone(),
                score,
                label: t.label,
                emotion: t.emotion,
                source_system: t.source_system().to_string(),
            })
            .collect()
    }

    /// Soft-gated fusion of the batch's raw scores at temperature `t`.
    pub fn fused_trials(&self, t: crate::gating::Temperature) -> Result<Vec<ScoredTrial>> {
        self.trials
            .iter()
            .enumerate()
            .map(|(i, trial)| {
                let scores = std::array::from_fn(|e| self.expert_scores[e][i]);
                let result =
                    crate::ensemble::fuse_external(&trial.utt_id, &scores, &self.logits[i], t)?;
                Ok(ScoredTrial {
                    utt_id: trial.utt_id.clone(),
                    score: result.fused,
                    label: trial.label,
                    emotion: trial.emotion,
                    source_system: trial.source_system().to_string(),
                })
            })
            .collect()
    }

    /// Clamp a raw score into the open unit interval for components that
    /// require (0, 1).
    pub fn clamp_unit(score: f64) -> f64 {
        score.clamp(1e-9, 1.0 - 1e-9)
    }
}

/// Draw the synthetic score batch.
pub fn gen_scores(config: &SimConfig) -> Result<SyntheticBatch> {
    config.validate()?;
    let mut trials = Vec::new();
    for emotion in Emotion::ALL {
        for label in [Label::Bonafide, Label::Spoof] {
            for i in 0..config.trials_per_cell {
                trials.push(SimTrial {
                    utt_id: format!("{emotion}_{label}_{i:05}"),
                    emotion,
                    label,
                });
            }
        }
    }

    let mut expert_scores: [Vec<f64>; N_EMOTIONS] =
        std::array::from_fn(|_| vec![0.0; trials.len()]);
    for (expert_idx, scores) in expert_scores.iter_mut().enumerate() {
        let expert = Emotion::from_index(expert_idx).unwrap();
        let mut offset = 0;
        for emotion in Emotion::ALL {
            for label in [Label::Bonafide, Label::Spoof] {
                let cell = config.score_params[expert_idx][emotion.index()]
                    [if label == Label::Bonafide { 0 } else { 1 }];
                let mut rng = SplitMix64::new(derive_seed(
                    config.seed,
                    &format!("scores/{expert}/{emotion}/{label}"),
                ));
                for slot in scores[offset..offset + config.trials_per_cell].iter_mut() {
                    *slot = cell.mean + cell.std * rng.next_gaussian();
                }
                offset += config.trials_per_cell;
            }
        }
    }

    let logits = trials
        .iter()
        .map(|t| {
            let mut z = [0.0; N_EMOTIONS];
            z[t.emotion.index()] = config.gate_logit_gap;
            EmotionLogits(z)
        })
        .collect();

    Ok(SyntheticBatch {
        trials,
        expert_scores,
        logits,
    })
}

/// Generate the tone corpus and its manifest. WAV files are written into
/// `out_dir`; the manifest references them by absolute path within it.
pub fn gen_corpus(config: &SimConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let n_samples = (config.corpus_len_s * config.corpus_sample_rate as f64).round() as usize;
    let mut records = Vec::new();
    for emotion in Emotion::ALL {
        let (band_lo, band_hi) = EMOTION_BANDS[emotion.index()];
        for label in [Label::Bonafide, Label::Spoof] {
            let mut rng = SplitMix64::new(derive_seed(
                config.seed,
                &format!("corpus/{emotion}/{label}"),
            ));
            for i in 0..config.corpus_utts_per_cell {
                let speaker = format!("spk{}", i % 2);
                let system = match label {
                    Label::Bonafide => BONAFIDE_SYSTEM,
                    Label::Spoof => SIM_SYSTEM,
                };
                let utt_id = format!("{speaker}_{emotion}_{label}_{system}_{i:04}");
                let samples = synth_utterance(
                    &mut rng,
                    n_samples,
                    config.corpus_sample_rate,
                    band_lo,
                    band_hi,
                    label,
                    config.corpus_noise,
                );
                let path = out_dir.join(format!("{utt_id}.wav"));
                write_wav(&path, &Waveform::new(samples, config.corpus_sample_rate)?)?;
                records.push(TrialRecord {
                    utt_id,
                    speaker_id: speaker,
                    emotion,
                    label,
                    source_system: system.to_string(),
                    audio_path: Some(path),
                    duration_s: Some(config.corpus_len_s),
                });
            }
        }
    }
    Manifest::from_records(records)
}

/// Spoof spectral marker: a tone outside every emotion band.
const SPOOF_MARKER_HZ: f64 = 6500.0;
const SPOOF_MARKER_AMP: f64 = 0.12;

fn synth_utterance(
    rng: &mut SplitMix64,
    n_samples: usize,
    sample_rate: u32,
    band_lo: f64,
    band_hi: f64,
    label: Label,
    noise: f64,
) -> Vec<f64> {
    let sr = sample_rate as f64;
    // Three tones inside the emotion band, random frequency and phase.
    let tones: Vec<(f64, f64)> = (0..3)
        .map(|_| {
            let freq = band_lo + (band_hi - band_lo) * rng.next_f64();
            let phase = std::f64::consts::TAU * rng.next_f64();
            (freq, phase)
        })
        .collect();
    (0..n_samples)
        .map(|n| {
            let t = n as f64 / sr;
            let mut s: f64 = tones
                .iter()
                .map(|(f, p)| 0.15 * (std::f64::consts::TAU * f * t + p).sin())
                .sum();
            if label == Label::Spoof {
                s += SPOOF_MARKER_AMP * (std::f64::consts::TAU * SPOOF_MARKER_HZ * t).sin();
            }
            if noise > 0.0 {
                s += noise * rng.next_gaussian();
            }
            s.clamp(-1.0, 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_scores_is_reproducible() {
        let config = SimConfig::default_with_seed(7);
        let a = gen_scores(&config).unwrap();
        let b = gen_scores(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cell_streams_are_independent() {
        // Growing one cell count grows every cell, but the first draws of
        // each cell are unchanged because streams are per-cell.
        let small = gen_scores(&SimConfig::default_with_seed(3)).unwrap();
        let mut big_cfg = SimConfig::default_with_seed(3);
        big_cfg.trials_per_cell *= 2;
        let big = gen_scores(&big_cfg).unwrap();
        let n = 300;
        for expert in 0..N_EMOTIONS {
            for cell in 0..8 {
                for i in 0..n {
                    assert_eq!(
                        small.expert_scores[expert][cell * n + i],
                        big.expert_scores[expert][cell * 2 * n + i]
                    );
                }
            }
        }
    }

    #[test]
    fn tiny_std_separates_specialist_per_emotion() {
        let config = SimConfig::symmetric(
            1,
            50,
            20.0,
            [
                GaussParams { mean: 0.9, std: 1e-6 },
                GaussParams { mean: 0.1, std: 1e-6 },
            ],
            [
                GaussParams { mean: 0.6, std: 0.2 },
                GaussParams { mean: 0.4, std: 0.2 },
            ],
        );
        let batch = gen_scores(&config).unwrap();
        for emotion in Emotion::ALL {
            let trials: Vec<_> = batch
                .scored_trials(emotion)
                .into_iter()
                .filter(|t| t.emotion == emotion)
                .collect();
            let report = crate::metrics::breakdown(&trials).unwrap();
            assert_eq!(report.eer_overall, 0.0);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut config = SimConfig::default_with_seed(0);
        config.trials_per_cell = 0;
        assert!(gen_scores(&config).is_err());
        let mut config = SimConfig::default_with_seed(0);
        config.score_params[0][0][0].std = 0.0;
        assert!(gen_scores(&config).is_err());
        let mut config = SimConfig::default_with_seed(0);
        config.gate_logit_gap = -1.0;
        assert!(gen_scores(&config).is_err());
    }

    #[test]
    fn corpus_file_count_and_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = SimConfig::default_with_seed(5);
        config.corpus_utts_per_cell = 3;
        config.corpus_len_s = 0.1;
        let manifest = gen_corpus(&config, dir.path()).unwrap();
        assert_eq!(manifest.len(), 8 * 3);
        let wavs = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref().unwrap().path().extension().map(|x| x == "wav") == Some(true)
            })
            .count();
        assert_eq!(wavs, 8 * 3);
        // Manifest round-trips through CSV.
        let csv_path = dir.path().join("manifest.csv");
        crate::manifest::save_manifest(&manifest, &csv_path).unwrap();
        let back = crate::manifest::load_manifest(&csv_path).unwrap();
        assert_eq!(back.len(), manifest.len());
    }
}
