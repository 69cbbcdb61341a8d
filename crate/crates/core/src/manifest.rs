//! Corpus manifests and speaker/system-disjoint split construction.
//!
//! A manifest is a CSV listing one trial per row. Splits are built so
//! that train/validation/test share no speakers and no spoofing systems:
//! a record follows its speaker's split, and spoof records are kept only
//! when their source system is the one assigned to that split.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::KeyValueConfig;
use crate::error::{Error, Result};

/// The four emotion classes, in canonical index order.
///
/// The index order (Neutral=0, Happy=1, Angry=2, Sad=3) is shared by the
/// gating vector, the expert registry, and every serialized 4-vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Neutral = 0,
    Happy = 1,
    Angry = 2,
    Sad = 3,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [Emotion::Neutral, Emotion::Happy, Emotion::Angry, Emotion::Sad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Emotion> {
        Emotion::ALL.get(index).copied()
    }

    /// Case-insensitive parse; accepts the noun aliases
    /// "happiness"/"anger"/"sadness".
    pub fn parse(s: &str) -> Option<Emotion> {
        match s.to_ascii_lowercase().as_str() {
            "neutral" => Some(Emotion::Neutral),
            "happy" | "happiness" => Some(Emotion::Happy),
            "angry" | "anger" => Some(Emotion::Angry),
            "sad" | "sadness" => Some(Emotion::Sad),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Happy => "happy",
            Emotion::Angry => "angry",
            Emotion::Sad => "sad",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trial class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s.to_ascii_lowercase().as_str() {
            "bonafide" => Some(Label::Bonafide),
            "spoof" => Some(Label::Spoof),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Source system name reserved for genuine speech.
pub const BONAFIDE_SYSTEM: &str = "bonafide";

/// One utterance's identity and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub emotion: Emotion,
    pub label: Label,
    /// `"bonafide"` for genuine speech, otherwise a spoof-system id.
    pub source_system: String,
    pub audio_path: Option<PathBuf>,
    pub duration_s: Option<f64>,
}

impl TrialRecord {
    fn check_consistency(&self) -> Result<()> {
        let bona_system = self.source_system == BONAFIDE_SYSTEM;
        let bona_label = self.label == Label::Bonafide;
        if bona_system != bona_label {
            return Err(Error::Validation(format!(
                "trial `{}`: label `{}` inconsistent with source_system `{}`",
                self.utt_id, self.label, self.source_system
            )));
        }
        Ok(())
    }
}

pub const MANIFEST_HEADER: &str = "utt_id,speaker_id,emotion,label,source_system,audio_path,duration_s";

/// An ordered, validated collection of trial records.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    records: Vec<TrialRecord>,
    /// Where this manifest came from, for error messages and logs.
    pub provenance: Option<PathBuf>,
}

impl Manifest {
    /// Build from records, enforcing utt_id uniqueness and label/system
    /// consistency.
    pub fn from_records(records: Vec<TrialRecord>) -> Result<Manifest> {
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            rec.check_consistency()?;
            if !seen.insert(rec.utt_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate utt_id `{}`",
                    rec.utt_id
                )));
            }
        }
        drop(seen);
        Ok(Manifest {
            records,
            provenance: None,
        })
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TrialRecord> {
        self.records.iter()
    }

    /// Records satisfying `pred`, in their original order.
    pub fn filter(&self, pred: impl Fn(&TrialRecord) -> bool) -> Manifest {
        Manifest {
            records: self.records.iter().filter(|r| pred(r)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn filter_emotion(&self, emotion: Emotion) -> Manifest {
        self.filter(|r| r.emotion == emotion)
    }

    /// The pooled Happy ∪ Angry ∪ Sad subset.
    pub fn filter_emotional(&self) -> Manifest {
        self.filter(|r| r.emotion != Emotion::Neutral)
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Serialize to the manifest CSV format (UTF-8, LF line endings).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            let path = r
                .audio_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            let dur = r.duration_s.map(|d| format!("{d}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.utt_id, r.speaker_id, r.emotion, r.label, r.source_system, path, dur
            ));
        }
        out
    }
}

/// Load and validate a manifest CSV.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    manifest.provenance = Some(path.to_path_buf());
    Ok(manifest)
}

/// Parse manifest CSV text. Row numbers in errors count the header as
/// line 1.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("manifest is empty, expected header".into()))?;
    if header.trim_end() != MANIFEST_HEADER {
        return Err(Error::Format(format!(
            "bad manifest header: expected `{MANIFEST_HEADER}`, got `{header}`"
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!(
                "row {row}: expected 7 fields, got {}",
                fields.len()
            )));
        }
        let emotion = Emotion::parse(fields[2]).ok_or_else(|| {
            Error::Validation(format!("row {row}: unknown emotion `{}`", fields[2]))
        })?;
        let label = Label::parse(fields[3]).ok_or_else(|| {
            Error::Validation(format!("row {row}: unknown label `{}`", fields[3]))
        })?;
        let duration_s = if fields[6].is_empty() {
            None
        } else {
            Some(fields[6].parse::<f64>().map_err(|_| {
                Error::Format(format!("row {row}: bad duration `{}`", fields[6]))
            })?)
        };
        records.push(TrialRecord {
            utt_id: fields[0].to_string(),
            speaker_id: fields[1].to_string(),
            emotion,
            label,
            source_system: fields[4].to_string(),
            audio_path: if fields[5].is_empty() {
                None
            } else {
                Some(PathBuf::from(fields[5]))
            },
            duration_s,
        });
    }
    Manifest::from_records(records)
}

/// Write a manifest CSV.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest.to_csv()).map_err(|e| Error::io(path, e))
}

/// Assignment of speakers and spoofing systems to the three splits.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub train_speakers: BTreeSet<String>,
    pub valid_speakers: BTreeSet<String>,
    pub test_speakers: BTreeSet<String>,
    pub train_system: String,
    pub valid_system: String,
    pub test_system: String,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("train", &self.train_speakers, "valid", &self.valid_speakers),
            ("train", &self.train_speakers, "test", &self.test_speakers),
            ("valid", &self.valid_speakers, "test", &self.test_speakers),
        ];
        for (na, a, nb, b) in pairs {
            if let Some(spk) = a.intersection(b).next() {
                return Err(Error::Config(format!(
                    "speaker `{spk}` appears in both {na} and {nb} splits"
                )));
            }
        }
        let systems = [
            ("train", &self.train_system),
            ("valid", &self.valid_system),
            ("test", &self.test_system),
        ];
        for i in 0..systems.len() {
            for j in i + 1..systems.len() {
                if systems[i].1 == systems[j].1 {
                    return Err(Error::Config(format!(
                        "system `{}` assigned to both {} and {} splits",
                        systems[i].1, systems[i].0, systems[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Read a split spec from a flat key-value config file.
    pub fn from_config(cfg: &KeyValueConfig) -> Result<SplitSpec> {
        cfg.ensure_known_keys(&[
            "train_speakers",
            "valid_speakers",
            "test_speakers",
            "train_system",
            "valid_system",
            "test_system",
        ])?;
        let list = |key: &str| -> Result<BTreeSet<String>> {
            cfg.get_list(key)
                .map(|v| v.into_iter().collect())
                .ok_or_else(|| Error::Config(format!("missing split key `{key}`")))
        };
        let system = |key: &str| -> Result<String> {
            cfg.get(key)
                .map(String::from)
                .ok_or_else(|| Error::Config(format!("missing split key `{key}`")))
        };
        let spec = SplitSpec {
            train_speakers: list("train_speakers")?,
            valid_speakers: list("valid_speakers")?,
            test_speakers: list("test_speakers")?,
            train_system: system("train_system")?,
            valid_system: system("valid_system")?,
            test_system: system("test_system")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The three output splits of [`build_splits`].
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Manifest,
    pub valid: Manifest,
    pub test: Manifest,
}

/// Partition a manifest into speaker- and system-disjoint splits.
///
/// Every record follows its speaker's split. Bonafide records are always
/// kept; spoof records are kept only when their source system matches the
/// split's assigned system. Speakers listed in no split are dropped with
/// a logged warning.
pub fn build_splits(manifest: &Manifest, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let manifest_speakers: HashSet<&str> =
        manifest.iter().map(|r| r.speaker_id.as_str()).collect();
    for (name, speakers) in [
        ("train", &spec.train_speakers),
        ("valid", &spec.valid_speakers),
        ("test", &spec.test_speakers),
    ] {
        for spk in speakers {
            if !manifest_speakers.contains(spk.as_str()) {
                return Err(Error::Config(format!(
                    "{name} speaker `{spk}` does not appear in the manifest"
                )));
            }
        }
    }

    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    let mut dropped_speakers: BTreeSet<&str> = BTreeSet::new();
    for rec in manifest.iter() {
        let target = if spec.train_speakers.contains(&rec.speaker_id) {
            Some((&mut train, &spec.train_system))
        } else if spec.valid_speakers.contains(&rec.speaker_id) {
            Some((&mut valid, &spec.valid_system))
        } else if spec.test_speakers.contains(&rec.speaker_id) {
            Some((&mut test, &spec.test_system))
        } else {
            dropped_speakers.insert(&rec.speaker_id);
            None
        };
        if let Some((bucket, system)) = target {
            if rec.label == Label::Bonafide || &rec.source_system == system {
                bucket.push(rec.clone());
            }
        }
    }
    for spk in dropped_speakers {
        log::warn!("speaker `{spk}` not assigned to any split; its records were dropped");
    }
    Ok(Splits {
        train: Manifest::from_records(train)?,
        valid: Manifest::from_records(valid)?,
        test: Manifest::from_records(test)?,
    })
}
