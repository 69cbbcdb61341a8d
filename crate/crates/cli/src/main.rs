//! `gem`: command-line driver wiring the toolkit stages into
//! reproducible experiments.
//!
//! One binary, one subcommand per pipeline stage. All randomness flows
//! from a single `seed`; each stage derives its own stream by hashing
//! the stage name into it, so stages can be re-run independently without
//! perturbing each other. Artifacts are written to a temporary name and
//! renamed on success, and every subcommand leaves a run log recording
//! the config hash, seed, and tool version.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use gem_core::config::KeyValueConfig;
use gem_core::ensemble;
use gem_core::error::{Error, Result};
use gem_core::expert::{self, LinearExpert, TrainConfig, TrainExample};
use gem_core::features::{self, FeatureConfig, FeatureVector};
use gem_core::gating::{self, GateExample, GateModel, Temperature};
use gem_core::manifest::{self, Emotion, Label, Manifest, SplitSpec, TrialRecord};
use gem_core::metrics::{self, ReportFormat, ScoredTrial};
use gem_core::rng::derive_seed;
use gem_core::simulator::{self, SimConfig};

#[derive(Parser)]
#[command(name = "gem", version, about = "Gated ensemble anti-spoofing toolkit")]
struct Cli {
    /// Flat `key = value` config file; CLI flags override file keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for all stage-derived randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimMode {
    Scores,
    Corpus,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Build a manifest CSV from a directory of WAV files named
    /// `<speaker>_<emotion>_<label>_<system>_<idx>.wav`.
    BuildManifest {
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a manifest into speaker/system-disjoint splits.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Key-value file with train/valid/test speakers and systems.
        #[arg(long)]
        split_config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Extract log band-energy features for every manifest record.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the generalist expert on a manifest's trials.
    TrainExpert {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a base expert on one emotion's subset.
    Specialize {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        emotion: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the 4-class emotion gate.
    TrainGate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every cached feature vector with one expert model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse the four expert scores with gating probabilities.
    ///
    /// Either model route (--features --gate --model-*) or score-file
    /// route (--logits --scores-*).
    Fuse {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        gate: Option<PathBuf>,
        #[arg(long)]
        model_n: Option<PathBuf>,
        #[arg(long)]
        model_h: Option<PathBuf>,
        #[arg(long)]
        model_a: Option<PathBuf>,
        #[arg(long)]
        model_s: Option<PathBuf>,
        #[arg(long)]
        logits: Option<PathBuf>,
        #[arg(long)]
        scores_n: Option<PathBuf>,
        #[arg(long)]
        scores_h: Option<PathBuf>,
        #[arg(long)]
        scores_a: Option<PathBuf>,
        #[arg(long)]
        scores_s: Option<PathBuf>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Hard-gating ablation: argmax expert decides alone.
        #[arg(long)]
        hard: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate scores against a manifest and write the EER report.
    Eval {
        /// Fusion output TSV (10 columns) to take y_s from.
        #[arg(long)]
        fused: Option<PathBuf>,
        /// Plain 2-column `utt_id<TAB>score` TSV.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
    },
    /// Generate synthetic score batches or a tone corpus.
    Simulate {
        #[arg(long, value_enum)]
        mode: SimMode,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        sim_config: Option<PathBuf>,
    },
    /// Re-render a report JSON in another format.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const RUN_CONFIG_KEYS: &[&str] = &[
    "seed",
    "temperature",
    "feature.frame_len_ms",
    "feature.hop_ms",
    "feature.fft_size",
    "feature.n_bands",
    "feature.floor_eps",
    "train.lr",
    "train.batch_size",
    "train.epochs",
    "train.l2",
    "specialist.lr",
    "specialist.batch_size",
    "specialist.epochs",
    "specialist.l2",
    "gate.lr",
    "gate.batch_size",
    "gate.epochs",
    "gate.l2",
];

/// Resolved run configuration: file keys with flag overrides applied.
struct RunConfig {
    seed: u64,
    temperature: Temperature,
    feature: FeatureConfig,
    train: TrainConfig,
    specialist: TrainConfig,
    gate: TrainConfig,
    /// Canonical content hash over config file and derived settings.
    hash: String,
}

impl RunConfig {
    fn resolve(cli: &Cli) -> Result<RunConfig> {
        let file = match &cli.config {
            Some(path) => {
                require_input(path)?;
                let cfg = KeyValueConfig::load(path)?;
                cfg.ensure_known_keys(RUN_CONFIG_KEYS)?;
                cfg
            }
            None => KeyValueConfig::default(),
        };
        let seed = cli
            .seed
            .or(file.get_parsed("seed")?)
            .unwrap_or(0);
        let temperature = Temperature::new(file.get_parsed("temperature")?.unwrap_or(1.5))?;

        let mut feature = FeatureConfig::default();
        if let Some(v) = file.get_parsed("feature.frame_len_ms")? {
            feature.frame_len_ms = v;
        }
        if let Some(v) = file.get_parsed("feature.hop_ms")? {
            feature.hop_ms = v;
        }
        if let Some(v) = file.get_parsed("feature.fft_size")? {
            feature.fft_size = v;
        }
        if let Some(v) = file.get_parsed("feature.n_bands")? {
            feature.n_bands = v;
        }
        if let Some(v) = file.get_parsed("feature.floor_eps")? {
            feature.floor_eps = v;
        }

        let stage = |prefix: &str, base: TrainConfig| -> Result<TrainConfig> {
            let mut cfg = base;
            if let Some(v) = file.get_parsed(&format!("{prefix}.lr"))? {
                cfg.learning_rate = v;
            }
            if let Some(v) = file.get_parsed(&format!("{prefix}.batch_size"))? {
                cfg.batch_size = v;
            }
            if let Some(v) = file.get_parsed(&format!("{prefix}.epochs"))? {
                cfg.epochs = v;
            }
            if let Some(v) = file.get_parsed(&format!("{prefix}.l2"))? {
                cfg.l2 = v;
            }
            Ok(cfg)
        };
        let train = stage("train", TrainConfig::generalist())?;
        let specialist = stage("specialist", TrainConfig::specialist())?;
        let gate = stage("gate", TrainConfig::generalist())?;

        let mut hasher = Sha256::new();
        hasher.update(file.canonical_string());
        hasher.update(format!("seed={seed}\n"));
        let hash = hex_digest(&hasher.finalize());

        Ok(RunConfig {
            seed,
            temperature,
            feature,
            train,
            specialist,
            gate,
            hash,
        })
    }

    fn stage_train_config(&self, stage: &str, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.seed = derive_seed(self.seed, stage);
        cfg
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn require_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Input(format!(
            "missing input file: {}",
            path.display()
        )));
    }
    Ok(())
}

/// Write through a temporary name and rename on success.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = match path.file_name() {
        Some(name) => {
            let mut n = name.to_os_string();
            n.push(".tmp");
            path.with_file_name(n)
        }
        None => return Err(Error::Input(format!("bad output path {}", path.display()))),
    };
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_run_log(config: &RunConfig, subcommand: &str, artifact: &Path) -> Result<()> {
    let log_path = artifact.with_file_name(format!("run-{subcommand}.log"));
    let body = format!(
        "tool = gem {}\nsubcommand = {}\nseed = {}\nconfig_hash = {}\n",
        env!("CARGO_PKG_VERSION"),
        subcommand,
        config.seed,
        config.hash
    );
    write_atomic(&log_path, |tmp| {
        std::fs::write(tmp, &body).map_err(|e| Error::io(tmp, e))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("gem: {err}");
            if err.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = RunConfig::resolve(cli)?;
    if cli.jobs != 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure worker pool: {e}")))?;
    }
    match &cli.command {
        Command::BuildManifest { audio_dir, out } => cmd_build_manifest(&config, audio_dir, out),
        Command::Split {
            manifest,
            split_config,
            out_dir,
        } => cmd_split(&config, manifest, split_config, out_dir),
        Command::ExtractFeatures { manifest, out } => cmd_extract(&config, manifest, out),
        Command::TrainExpert {
            features,
            manifest,
            out,
        } => cmd_train_expert(&config, features, manifest, out),
        Command::Specialize {
            base,
            features,
            manifest,
            emotion,
            out,
        } => cmd_specialize(&config, base, features, manifest, emotion, out),
        Command::TrainGate {
            features,
            manifest,
            out,
        } => cmd_train_gate(&config, features, manifest, out),
        Command::Score {
            model,
            features,
            out,
        } => cmd_score(&config, model, features, out),
        Command::Fuse {
            features,
            gate,
            model_n,
            model_h,
            model_a,
            model_s,
            logits,
            scores_n,
            scores_h,
            scores_a,
            scores_s,
            temperature,
            hard,
            out,
        } => {
            let temperature = match temperature {
                Some(t) => Temperature::new(*t)?,
                None => config.temperature,
            };
            let models = [model_n, model_h, model_a, model_s];
            let score_files = [scores_n, scores_h, scores_a, scores_s];
            if models.iter().all(|m| m.is_some()) && features.is_some() && gate.is_some() {
                if score_files.iter().any(|s| s.is_some()) || logits.is_some() {
                    return Err(Error::Input(
                        "pass either model-route or score-route flags, not both".into(),
                    ));
                }
                cmd_fuse_models(
                    &config,
                    features.as_ref().unwrap(),
                    gate.as_ref().unwrap(),
                    models.map(|m| m.clone().unwrap()),
                    temperature,
                    *hard,
                    out,
                )
            } else if score_files.iter().all(|s| s.is_some()) && logits.is_some() {
                if *hard {
                    return Err(Error::Input(
                        "--hard requires the model route (it needs raw logits per trial)".into(),
                    ));
                }
                cmd_fuse_scores(
                    &config,
                    score_files.map(|s| s.clone().unwrap()),
                    logits.as_ref().unwrap(),
                    temperature,
                    out,
                )
            } else {
                Err(Error::Input(
                    "fuse needs either --features/--gate/--model-{n,h,a,s} \
                     or --logits/--scores-{n,h,a,s}"
                        .into(),
                ))
            }
        }
        Command::Eval {
            fused,
            scores,
            manifest,
            out,
            format,
        } => cmd_eval(&config, fused.as_deref(), scores.as_deref(), manifest, out, *format),
        Command::Simulate {
            mode,
            out_dir,
            sim_config,
        } => cmd_simulate(&config, *mode, out_dir, sim_config.as_deref()),
        Command::Report {
            report,
            format,
            out,
        } => cmd_report(report, *format, out.as_deref()),
    }
}

// --- subcommands ---------------------------------------------------------

fn cmd_build_manifest(config: &RunConfig, audio_dir: &Path, out: &Path) -> Result<()> {
    if !audio_dir.is_dir() {
        return Err(Error::Input(format!(
            "missing audio directory: {}",
            audio_dir.display()
        )));
    }
    let mut names: Vec<String> = std::fs::read_dir(audio_dir)
        .map_err(|e| Error::io(audio_dir, e))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            name.ends_with(".wav").then_some(name)
        })
        .collect();
    names.sort();
    let manifest_dir = out.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    for name in names {
        let stem = name.trim_end_matches(".wav");
        let parts: Vec<&str> = stem.split('_').collect();
        if parts.len() != 5 {
            return Err(Error::Validation(format!(
                "file `{name}`: expected <speaker>_<emotion>_<label>_<system>_<idx>.wav"
            )));
        }
        let emotion = Emotion::parse(parts[1])
            .ok_or_else(|| Error::Validation(format!("file `{name}`: unknown emotion `{}`", parts[1])))?;
        let label = Label::parse(parts[2])
            .ok_or_else(|| Error::Validation(format!("file `{name}`: unknown label `{}`", parts[2])))?;
        let abs = audio_dir.join(&name);
        let rel = abs
            .strip_prefix(manifest_dir)
            .map(Path::to_path_buf)
            .unwrap_or(abs);
        records.push(TrialRecord {
            utt_id: stem.to_string(),
            speaker_id: parts[0].to_string(),
            emotion,
            label,
            source_system: parts[3].to_string(),
            audio_path: Some(rel),
            duration_s: None,
        });
    }
    let manifest = Manifest::from_records(records)?;
    write_atomic(out, |tmp| manifest::save_manifest(&manifest, tmp))?;
    write_run_log(config, "build-manifest", out)
}

fn cmd_split(
    config: &RunConfig,
    manifest_path: &Path,
    split_config: &Path,
    out_dir: &Path,
) -> Result<()> {
    require_input(manifest_path)?;
    require_input(split_config)?;
    let manifest = manifest::load_manifest(manifest_path)?;
    let spec = SplitSpec::from_config(&KeyValueConfig::load(split_config)?)?;
    let splits = manifest::build_splits(&manifest, &spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, split) in [
        ("train.csv", &splits.train),
        ("valid.csv", &splits.valid),
        ("test.csv", &splits.test),
    ] {
        let path = out_dir.join(name);
        write_atomic(&path, |tmp| manifest::save_manifest(split, tmp))?;
    }
    write_run_log(config, "split", &out_dir.join("splits"))
}

/// Resolve a manifest record's audio path relative to the manifest file.
fn resolve_audio(manifest_path: &Path, record: &TrialRecord) -> Result<PathBuf> {
    let rel = record.audio_path.as_ref().ok_or_else(|| {
        Error::Validation(format!("trial `{}` has no audio_path", record.utt_id))
    })?;
    if rel.is_absolute() {
        Ok(rel.clone())
    } else {
        Ok(manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(rel))
    }
}

fn cmd_extract(config: &RunConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    use rayon::prelude::*;
    require_input(manifest_path)?;
    let manifest = manifest::load_manifest(manifest_path)?;
    let jobs: Vec<(String, PathBuf)> = manifest
        .iter()
        .map(|r| Ok((r.utt_id.clone(), resolve_audio(manifest_path, r)?)))
        .collect::<Result<_>>()?;
    // Parallel per utterance; output order follows the manifest so the
    // cache file is deterministic regardless of worker count.
    let entries: Vec<(String, FeatureVector)> = jobs
        .into_par_iter()
        .map(|(utt_id, path)| {
            let wav = features::read_wav(&path)?;
            let fv = features::extract(&wav, &config.feature)?;
            Ok((utt_id, fv))
        })
        .collect::<Result<_>>()?;
    write_atomic(out, |tmp| features::write_feature_cache(tmp, &entries))?;
    write_run_log(config, "extract-features", out)
}

fn load_examples(
    features_path: &Path,
    manifest_path: &Path,
) -> Result<Vec<TrainExample>> {
    require_input(features_path)?;
    require_input(manifest_path)?;
    let cache = features::read_feature_cache(features_path)?;
    let manifest = manifest::load_manifest(manifest_path)?;
    manifest
        .iter()
        .map(|r| {
            let fv = cache.get(&r.utt_id).ok_or_else(|| {
                Error::Validation(format!(
                    "trial `{}` has no entry in feature cache {}",
                    r.utt_id,
                    features_path.display()
                ))
            })?;
            Ok(TrainExample {
                features: fv.clone(),
                label: r.label,
                emotion: r.emotion,
            })
        })
        .collect()
}

fn cmd_train_expert(
    config: &RunConfig,
    features_path: &Path,
    manifest_path: &Path,
    out: &Path,
) -> Result<()> {
    let examples = load_examples(features_path, manifest_path)?;
    let train_cfg = config.stage_train_config("train-expert", &config.train);
    let expert = expert::train_generalist(&examples, &train_cfg)?;
    write_atomic(out, |tmp| expert.save(tmp))?;
    write_run_log(config, "train-expert", out)
}

fn cmd_specialize(
    config: &RunConfig,
    base_path: &Path,
    features_path: &Path,
    manifest_path: &Path,
    emotion: &str,
    out: &Path,
) -> Result<()> {
    require_input(base_path)?;
    let emotion = Emotion::parse(emotion)
        .ok_or_else(|| Error::Input(format!("unknown emotion `{emotion}`")))?;
    let base = LinearExpert::load(base_path)?;
    let examples: Vec<TrainExample> = load_examples(features_path, manifest_path)?
        .into_iter()
        .filter(|e| e.emotion == emotion)
        .collect();
    let stage = format!("specialize/{emotion}");
    let train_cfg = config.stage_train_config(&stage, &config.specialist);
    let specialist = expert::specialize(&base, &examples, &train_cfg)?;
    write_atomic(out, |tmp| specialist.save(tmp))?;
    write_run_log(config, &format!("specialize-{emotion}"), out)
}

fn cmd_train_gate(
    config: &RunConfig,
    features_path: &Path,
    manifest_path: &Path,
    out: &Path,
) -> Result<()> {
    let examples: Vec<GateExample> = load_examples(features_path, manifest_path)?
        .into_iter()
        .map(|e| GateExample {
            features: e.features,
            emotion: e.emotion,
        })
        .collect();
    let train_cfg = config.stage_train_config("train-gate", &config.gate);
    let gate = gating::train_gate(&examples, &train_cfg)?;
    write_atomic(out, |tmp| gate.save(tmp))?;
    write_run_log(config, "train-gate", out)
}

fn cmd_score(
    config: &RunConfig,
    model_path: &Path,
    features_path: &Path,
    out: &Path,
) -> Result<()> {
    require_input(model_path)?;
    require_input(features_path)?;
    let model = LinearExpert::load(model_path)?;
    let cache = features::read_feature_cache(features_path)?;
    let scores: Vec<(String, f64)> = cache
        .iter()
        .map(|(utt_id, fv)| Ok((utt_id.clone(), model.score(fv)?)))
        .collect::<Result<_>>()?;
    write_atomic(out, |tmp| expert::write_scores(tmp, &scores))?;
    write_run_log(config, "score", out)
}

fn cmd_fuse_models(
    config: &RunConfig,
    features_path: &Path,
    gate_path: &Path,
    model_paths: [PathBuf; 4],
    temperature: Temperature,
    hard: bool,
    out: &Path,
) -> Result<()> {
    require_input(features_path)?;
    require_input(gate_path)?;
    for path in &model_paths {
        require_input(path)?;
    }
    let cache = features::read_feature_cache(features_path)?;
    let gate = GateModel::load(gate_path)?;
    let registry = ensemble::ExpertRegistry::new(
        Emotion::ALL
            .iter()
            .zip(&model_paths)
            .map(|(&emotion, path)| Ok((emotion, LinearExpert::load(path)?)))
            .collect::<Result<_>>()?,
    )?;
    let results: Vec<ensemble::FusionResult> = cache
        .iter()
        .map(|(utt_id, fv)| {
            if hard {
                ensemble::hard_gate_score(utt_id, fv, &registry, &gate)
            } else {
                ensemble::gem_score(utt_id, fv, &registry, &gate, temperature)
            }
        })
        .collect::<Result<_>>()?;
    write_atomic(out, |tmp| ensemble::write_fusion_results(tmp, &results))?;
    write_run_log(config, "fuse", out)
}

fn cmd_fuse_scores(
    config: &RunConfig,
    score_paths: [PathBuf; 4],
    logits_path: &Path,
    temperature: Temperature,
    out: &Path,
) -> Result<()> {
    for path in &score_paths {
        require_input(path)?;
    }
    require_input(logits_path)?;
    let score_maps: Vec<BTreeMap<String, f64>> = score_paths
        .iter()
        .map(|p| expert::load_scores(p))
        .collect::<Result<_>>()?;
    let logits = gating::load_logits(logits_path)?;
    let results: Vec<ensemble::FusionResult> = logits
        .iter()
        .map(|(utt_id, z)| {
            let mut scores = [0.0; 4];
            for (slot, (map, path)) in scores.iter_mut().zip(score_maps.iter().zip(&score_paths)) {
                // Missing trials are a hard error: silent imputation
                // would corrupt the EER downstream.
                *slot = *map.get(utt_id).ok_or_else(|| {
                    Error::Validation(format!(
                        "trial `{utt_id}` missing from score file {}",
                        path.display()
                    ))
                })?;
            }
            ensemble::fuse_external(utt_id, &scores, z, temperature)
        })
        .collect::<Result<_>>()?;
    write_atomic(out, |tmp| ensemble::write_fusion_results(tmp, &results))?;
    write_run_log(config, "fuse", out)
}

fn cmd_eval(
    config: &RunConfig,
    fused: Option<&Path>,
    scores: Option<&Path>,
    manifest_path: &Path,
    out: &Path,
    format: OutputFormat,
) -> Result<()> {
    require_input(manifest_path)?;
    let score_map: BTreeMap<String, f64> = match (fused, scores) {
        (Some(path), None) => {
            require_input(path)?;
            ensemble::read_fused_scores(path)?
        }
        (None, Some(path)) => {
            require_input(path)?;
            expert::load_scores(path)?
        }
        _ => {
            return Err(Error::Input(
                "eval needs exactly one of --fused or --scores".into(),
            ))
        }
    };
    let manifest = manifest::load_manifest(manifest_path)?;
    let trials: Vec<ScoredTrial> = manifest
        .iter()
        .map(|r| {
            let score = *score_map.get(&r.utt_id).ok_or_else(|| {
                Error::Validation(format!("trial `{}` has no score", r.utt_id))
            })?;
            Ok(ScoredTrial {
                utt_id: r.utt_id.clone(),
                score,
                label: r.label,
                emotion: r.emotion,
                source_system: r.source_system.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let report = metrics::breakdown(&trials)?;
    let rendered = metrics::render_report(
        &report,
        match format {
            OutputFormat::Json => ReportFormat::Json,
            OutputFormat::Table => ReportFormat::Table,
        },
    );
    write_atomic(out, |tmp| {
        std::fs::write(tmp, &rendered).map_err(|e| Error::io(tmp, e))
    })?;
    write_run_log(config, "eval", out)
}

fn cmd_simulate(
    config: &RunConfig,
    mode: SimMode,
    out_dir: &Path,
    sim_config: Option<&Path>,
) -> Result<()> {
    let sim = match sim_config {
        Some(path) => {
            require_input(path)?;
            let mut file = KeyValueConfig::load(path)?;
            // The root seed governs unless the sim config pins its own.
            if file.get("seed").is_none() {
                file.set("seed", config.seed.to_string());
            }
            SimConfig::from_config(&file)?
        }
        None => SimConfig::default_with_seed(config.seed),
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    match mode {
        SimMode::Scores => {
            let batch = simulator::gen_scores(&sim)?;
            for emotion in Emotion::ALL {
                let rows: Vec<(String, f64)> = batch
                    .trials
                    .iter()
                    .zip(&batch.expert_scores[emotion.index()])
                    .map(|(t, &s)| (t.utt_id.clone(), s))
                    .collect();
                let path = out_dir.join(format!("expert_{emotion}.tsv"));
                write_atomic(&path, |tmp| expert::write_scores(tmp, &rows))?;
            }
            let logit_rows: Vec<(String, gating::EmotionLogits)> = batch
                .trials
                .iter()
                .zip(&batch.logits)
                .map(|(t, z)| (t.utt_id.clone(), *z))
                .collect();
            write_atomic(&out_dir.join("logits.tsv"), |tmp| {
                gating::write_logits(tmp, &logit_rows)
            })?;
            let records: Vec<TrialRecord> = batch
                .trials
                .iter()
                .map(|t| TrialRecord {
                    utt_id: t.utt_id.clone(),
                    speaker_id: "sim".to_string(),
                    emotion: t.emotion,
                    label: t.label,
                    source_system: t.source_system().to_string(),
                    audio_path: None,
                    duration_s: None,
                })
                .collect();
            let manifest = Manifest::from_records(records)?;
            write_atomic(&out_dir.join("trials.csv"), |tmp| {
                manifest::save_manifest(&manifest, tmp)
            })?;
        }
        SimMode::Corpus => {
            let audio_dir = out_dir.join("audio");
            let manifest = simulator::gen_corpus(&sim, &audio_dir)?;
            // Manifest references audio relative to its own location.
            let relative = Manifest::from_records(
                manifest
                    .iter()
                    .map(|r| {
                        let mut rec = r.clone();
                        rec.audio_path = rec.audio_path.map(|p| {
                            p.strip_prefix(out_dir).map(Path::to_path_buf).unwrap_or(p)
                        });
                        rec
                    })
                    .collect(),
            )?;
            write_atomic(&out_dir.join("manifest.csv"), |tmp| {
                manifest::save_manifest(&relative, tmp)
            })?;
        }
    }
    write_run_log(config, "simulate", &out_dir.join("simulate"))
}

fn cmd_report(report_path: &Path, format: OutputFormat, out: Option<&Path>) -> Result<()> {
    require_input(report_path)?;
    let text = std::fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let report: metrics::EvalReport = serde_json_from(&text)?;
    let rendered = metrics::render_report(
        &report,
        match format {
            OutputFormat::Json => ReportFormat::Json,
            OutputFormat::Table => ReportFormat::Table,
        },
    );
    match out {
        Some(path) => write_atomic(path, |tmp| {
            std::fs::write(tmp, &rendered).map_err(|e| Error::io(tmp, e))
        }),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn serde_json_from(text: &str) -> Result<metrics::EvalReport> {
    gem_core::metrics::parse_report_json(text)
}
