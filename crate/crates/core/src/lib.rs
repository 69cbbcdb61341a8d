//! Gated-ensemble anti-spoofing toolkit.
//!
//! The pipeline combines four emotion-specialized spoof scorers through a
//! soft gating network: each expert emits a score in (0, 1), a 4-class
//! emotion classifier emits temperature-softened probabilities, and the
//! fused decision score is their weighted average. Evaluation reports
//! equal error rate broken down per emotion, over the pooled emotional
//! (Happy/Angry/Sad) subset, per spoofing system, and overall.
//!
//! Modules mirror the pipeline stages:
//!
//! - [`manifest`]: corpus manifests and speaker/system-disjoint splits
//! - [`features`]: WAV ingest and log band-energy feature extraction
//! - [`expert`]: trainable logistic scorers with generalist/specialist stages
//! - [`gating`]: emotion probabilities via temperature softmax
//! - [`ensemble`]: score fusion (soft and hard gating) and decisions
//! - [`metrics`]: EER and the emotion-breakdown evaluation report
//! - [`simulator`]: synthetic scores, logits, and a tiny tone corpus
//! - [`config`]: flat `key = value` config files

pub mod config;
pub mod ensemble;
pub mod error;
pub mod expert;
pub mod features;
pub mod gating;
pub mod manifest;
pub mod metrics;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use manifest::Emotion;
