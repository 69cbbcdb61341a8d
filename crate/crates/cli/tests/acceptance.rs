//! Acceptance gate: every release criterion in one target, one printed
//! pass/fail line per criterion. Run with `cargo test --test acceptance
//! -- --nocapture` to see the lines on success.

use std::process::Command;
use std::time::Instant;

use gem_core::ensemble::{fuse, fuse_external};
use gem_core::expert::{bce_loss_and_grad, TrainExample};
use gem_core::features::FeatureVector;
use gem_core::gating::{
    ce_loss_and_grad, soften, EmotionLogits, GateExample, GateModel, Temperature, N_EMOTIONS,
};
use gem_core::manifest::{
    build_splits, Emotion, Label, Manifest, SplitSpec, TrialRecord, BONAFIDE_SYSTEM,
};
use gem_core::metrics::{breakdown, eer, render_report, ReportFormat, ScoredTrial};
use gem_core::rng::SplitMix64;
use gem_core::simulator::{gen_scores, GaussParams, SimConfig};
use gem_testkit::{brute_force_eer, PHI_MINUS_ONE};

type Check = fn() -> Result<(), String>;

#[test]
fn acceptance() {
    let criteria: [(&str, Check); 10] = [
        ("eer oracle equivalence", c01_eer_oracle),
        ("eer invariances", c02_eer_invariances),
        ("analytic gaussian eer", c03_analytic_gaussian),
        ("gating contract", c04_gating_contract),
        ("fusion contract", c05_fusion_contract),
        ("gradient checks", c06_gradient_checks),
        ("split protocol", c07_split_protocol),
        ("gem dominance", c08_gem_dominance),
        ("end-to-end pipeline", c09_end_to_end),
        ("report fidelity", c10_report_fidelity),
    ];
    let mut failures = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(()) => println!("acceptance {:02} {name}: PASS", i + 1),
            Err(why) => {
                println!("acceptance {:02} {name}: FAIL ({why})", i + 1);
                failures.push(format!("{name}: {why}"));
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}

fn fail(msg: impl Into<String>) -> Result<(), String> {
    Err(msg.into())
}

// 1. eer() matches a brute-force oracle within 1e-12 over 1,000 random
//    score sets (class sizes 2-200) in under 10 s.
fn c01_eer_oracle() -> Result<(), String> {
    let start = Instant::now();
    let mut rng = SplitMix64::new(1001);
    for case in 0..1000 {
        let nb = 2 + rng.next_below(199);
        let ns = 2 + rng.next_below(199);
        let mut bonafide: Vec<f64> = (0..nb).map(|_| rng.next_f64()).collect();
        let mut spoof: Vec<f64> = (0..ns).map(|_| rng.next_f64()).collect();
        if case % 4 == 0 {
            // Quantize to force score ties across and within classes.
            for s in bonafide.iter_mut().chain(spoof.iter_mut()) {
                *s = (*s * 16.0).round() / 16.0;
            }
        }
        let got = eer(&bonafide, &spoof).map_err(|e| e.to_string())?;
        let want = brute_force_eer(&bonafide, &spoof);
        if (got - want).abs() > 1e-12 {
            return fail(format!("case {case}: {got} vs oracle {want}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 10.0 {
        return fail(format!("took {elapsed:?}, budget 10 s"));
    }
    Ok(())
}

// 2. Monotone-transform invariance, polarity symmetry, and boundary
//    cases over 200 random sets.
fn c02_eer_invariances() -> Result<(), String> {
    let mut rng = SplitMix64::new(1002);
    for case in 0..200 {
        let nb = 3 + rng.next_below(30);
        let ns = 3 + rng.next_below(30);
        let bonafide: Vec<f64> = (0..nb).map(|_| rng.next_f64() * 2.0).collect();
        let spoof: Vec<f64> = (0..ns).map(|_| rng.next_f64() * 2.0).collect();
        let base = eer(&bonafide, &spoof).map_err(|e| e.to_string())?;
        if !(0.0..=100.0).contains(&base) {
            return fail(format!("case {case}: eer {base} out of [0, 100]"));
        }
        let mapped = |f: &dyn Fn(f64) -> f64| {
            let b: Vec<f64> = bonafide.iter().map(|&s| f(s)).collect();
            let s: Vec<f64> = spoof.iter().map(|&s| f(s)).collect();
            eer(&b, &s).unwrap()
        };
        for (name, m) in [
            ("exp", mapped(&|s| s.exp())),
            ("affine", mapped(&|s| 3.0 * s + 7.0)),
        ] {
            if (m - base).abs() > 1e-9 {
                return fail(format!("case {case}: {name} map moved eer {base} -> {m}"));
            }
        }
        // Polarity: negate scores and swap class roles.
        let neg_b: Vec<f64> = spoof.iter().map(|s| -s).collect();
        let neg_s: Vec<f64> = bonafide.iter().map(|s| -s).collect();
        let flipped = eer(&neg_b, &neg_s).unwrap();
        if (flipped - base).abs() > 1e-9 {
            return fail(format!("case {case}: polarity {base} vs {flipped}"));
        }
    }
    // Boundary cases.
    let sep = eer(&[0.9, 0.8, 0.7], &[0.3, 0.2]).unwrap();
    if sep != 0.0 {
        return fail(format!("separable set gave {sep}"));
    }
    let same = [0.1, 0.4, 0.4, 0.9];
    let half = eer(&same, &same).unwrap();
    if (half - 50.0).abs() > 1e-9 {
        return fail(format!("identical distributions gave {half}"));
    }
    Ok(())
}

// 3. Equal-variance Gaussians with a 2-sigma mean gap land within 1.0
//    point of 100 * Phi(-1) for 10 seeds at 10,000 trials per class.
fn c03_analytic_gaussian() -> Result<(), String> {
    let analytic = 100.0 * PHI_MINUS_ONE;
    let params = [
        GaussParams { mean: 1.0, std: 0.5 },
        GaussParams { mean: 0.0, std: 0.5 },
    ];
    for seed in 0..10u64 {
        // 2,500 per (emotion, label) cell -> 10,000 per class pooled.
        let config = SimConfig::symmetric(seed, 2500, 6.0, params, params);
        let batch = gen_scores(&config).map_err(|e| e.to_string())?;
        let trials = batch.scored_trials(Emotion::Neutral);
        let bona: Vec<f64> = trials
            .iter()
            .filter(|t| t.label == Label::Bonafide)
            .map(|t| t.score)
            .collect();
        let spoof: Vec<f64> = trials
            .iter()
            .filter(|t| t.label == Label::Spoof)
            .map(|t| t.score)
            .collect();
        if bona.len() != 10_000 || spoof.len() != 10_000 {
            return fail(format!("seed {seed}: {} / {} trials", bona.len(), spoof.len()));
        }
        let empirical = eer(&bona, &spoof).unwrap();
        if (empirical - analytic).abs() > 1.0 {
            return fail(format!("seed {seed}: {empirical} vs analytic {analytic}"));
        }
    }
    Ok(())
}

// 4. Soften(): normalization, exact shift invariance, temperature
//    limits, and T = 1.5 oracle agreement within 1e-12.
fn c04_gating_contract() -> Result<(), String> {
    let mut rng = SplitMix64::new(1004);
    let t_paper = Temperature::new(1.5).unwrap();
    for case in 0..500 {
        let raw: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64() * 20.0 - 10.0);
        let probs = soften(&EmotionLogits(raw), t_paper).map_err(|e| e.to_string())?;
        let sum: f64 = probs.values().iter().sum();
        if (sum - 1.0).abs() > 1e-9 || probs.values().iter().any(|&p| p <= 0.0) {
            return fail(format!("case {case}: sum {sum}"));
        }
        let want = gem_testkit::oracle_softmax(&raw, 1.5);
        for c in 0..N_EMOTIONS {
            if (probs.values()[c] - want[c]).abs() > 1e-12 {
                return fail(format!("case {case}: oracle mismatch at {c}"));
            }
        }
        // Exact shift invariance on dyadic logits, where the shifted
        // inputs are themselves exactly representable.
        let dyadic: [f64; N_EMOTIONS] =
            std::array::from_fn(|_| (rng.next_below(64) as f64 - 32.0) * 0.25);
        let shift = (rng.next_below(64) as f64 - 32.0) * 0.25;
        let shifted: [f64; N_EMOTIONS] = std::array::from_fn(|c| dyadic[c] + shift);
        let a = soften(&EmotionLogits(dyadic), t_paper).unwrap();
        let b = soften(&EmotionLogits(shifted), t_paper).unwrap();
        if a.values() != b.values() {
            return fail(format!("case {case}: shift invariance broken"));
        }
    }
    // Temperature limits.
    for case in 0..100 {
        let raw: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64() * 20.0 - 10.0);
        let hot = soften(&EmotionLogits(raw), Temperature::new(1e4).unwrap()).unwrap();
        if hot.values().iter().any(|&p| (p - 0.25).abs() > 1e-3) {
            return fail(format!("hot case {case}: not uniform"));
        }
        let gapped: [f64; N_EMOTIONS] = loop {
            let cand: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64() * 10.0 - 5.0);
            let mut sorted = cand;
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sorted[0] - sorted[1] >= 0.1 {
                break cand;
            }
        };
        let cold = soften(&EmotionLogits(gapped), Temperature::new(1e-3).unwrap()).unwrap();
        let max = cold.values().iter().cloned().fold(f64::MIN, f64::max);
        if max <= 1.0 - 1e-6 {
            return fail(format!("cold case {case}: max prob {max}"));
        }
    }
    Ok(())
}

// 5. Fusion (Eq. 3): convexity on 10,000 random (S, E); one-hot gating
//    selects within 1e-6; uniform gating is exactly the mean; hard gate
//    equals the T = 1e-4 soft limit within 1e-6 on 1,000 trials.
fn c05_fusion_contract() -> Result<(), String> {
    let mut rng = SplitMix64::new(1005);
    for case in 0..10_000 {
        let scores: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64());
        let raw: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64() * 8.0 - 4.0);
        let gating = soften(&EmotionLogits(raw), Temperature::default()).unwrap();
        let fused = fuse(&scores, &gating).map_err(|e| e.to_string())?;
        let lo = scores.iter().cloned().fold(f64::MAX, f64::min);
        let hi = scores.iter().cloned().fold(f64::MIN, f64::max);
        if fused < lo - 1e-12 || fused > hi + 1e-12 {
            return fail(format!("case {case}: {fused} outside [{lo}, {hi}]"));
        }
    }
    for case in 0..200 {
        let scores: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64());
        // One-hot: a 60-logit gap makes the off-probabilities ~ e^-60.
        let winner = rng.next_below(N_EMOTIONS);
        let raw: [f64; N_EMOTIONS] =
            std::array::from_fn(|c| if c == winner { 60.0 } else { 0.0 });
        let gating = soften(&EmotionLogits(raw), Temperature::new(1.0).unwrap()).unwrap();
        let fused = fuse(&scores, &gating).unwrap();
        if (fused - scores[winner]).abs() > 1e-6 {
            return fail(format!("one-hot case {case}: {fused} vs {}", scores[winner]));
        }
        // Uniform: zero logits give probabilities of exactly 0.25, and
        // the weighted sum equals the arithmetic mean bit for bit.
        let uniform = soften(&EmotionLogits([0.0; N_EMOTIONS]), Temperature::new(1.0).unwrap())
            .unwrap();
        let fused = fuse(&scores, &uniform).unwrap();
        let mean = scores.iter().sum::<f64>() / 4.0;
        if fused.to_bits() != mean.to_bits() {
            return fail(format!("uniform case {case}: {fused} vs mean {mean}"));
        }
    }
    let cold = Temperature::new(1e-4).unwrap();
    let mut checked = 0;
    while checked < 1000 {
        let scores: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64());
        let raw: [f64; N_EMOTIONS] = std::array::from_fn(|_| rng.next_f64() * 6.0 - 3.0);
        let mut sorted = raw;
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if sorted[0] - sorted[1] < 1e-2 {
            continue; // near-tie: the limit is ambiguous by construction
        }
        let soft = fuse_external("u", &scores, &EmotionLogits(raw), cold)
            .map_err(|e| e.to_string())?
            .fused;
        let winner = gem_core::gating::argmax4(&raw);
        let hard = scores[winner.index()];
        if (soft - hard).abs() > 1e-6 {
            return fail(format!("trial {checked}: soft {soft} vs hard {hard}"));
        }
        checked += 1;
    }
    Ok(())
}

// 6. Expert and gate analytic gradients match central finite
//    differences within rel. 1e-5 on 100 random configurations.
fn c06_gradient_checks() -> Result<(), String> {
    let mut rng = SplitMix64::new(1006);
    let h = 1e-5;
    let rel_ok = |analytic: f64, fd: f64| (analytic - fd).abs() <= 1e-5 * fd.abs().max(1.0);
    for case in 0..50 {
        let dim = 2 + rng.next_below(6);
        let examples: Vec<TrainExample> = (0..(4 + rng.next_below(8)))
            .map(|i| TrainExample {
                features: FeatureVector {
                    values: (0..dim).map(|_| rng.next_f64() * 2.0 - 1.0).collect(),
                },
                label: if i % 2 == 0 { Label::Bonafide } else { Label::Spoof },
                emotion: Emotion::Neutral,
            })
            .collect();
        let batch: Vec<&TrainExample> = examples.iter().collect();
        let mut w: Vec<f64> = (0..dim).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let b = rng.next_f64() - 0.5;
        let l2 = 1e-3;
        let (_, grad_w, grad_b) = bce_loss_and_grad(&w, b, &batch, l2);
        for d in 0..dim {
            let orig = w[d];
            w[d] = orig + h;
            let (lp, _, _) = bce_loss_and_grad(&w, b, &batch, l2);
            w[d] = orig - h;
            let (lm, _, _) = bce_loss_and_grad(&w, b, &batch, l2);
            w[d] = orig;
            if !rel_ok(grad_w[d], (lp - lm) / (2.0 * h)) {
                return fail(format!("expert case {case}, w[{d}]"));
            }
        }
        let (lp, _, _) = bce_loss_and_grad(&w, b + h, &batch, l2);
        let (lm, _, _) = bce_loss_and_grad(&w, b - h, &batch, l2);
        if !rel_ok(grad_b, (lp - lm) / (2.0 * h)) {
            return fail(format!("expert case {case}, bias"));
        }
    }
    for case in 0..50 {
        let dim = 2 + rng.next_below(4);
        let examples: Vec<GateExample> = (0..(4 + rng.next_below(6)))
            .map(|i| GateExample {
                features: FeatureVector {
                    values: (0..dim).map(|_| rng.next_f64() * 2.0 - 1.0).collect(),
                },
                emotion: Emotion::ALL[i % N_EMOTIONS],
            })
            .collect();
        let batch: Vec<&GateExample> = examples.iter().collect();
        let mut gate = GateModel::zeros(dim, "g");
        for c in 0..N_EMOTIONS {
            for w in gate.weights[c].iter_mut() {
                *w = rng.next_f64() * 2.0 - 1.0;
            }
            gate.biases[c] = rng.next_f64() - 0.5;
        }
        let l2 = 1e-3;
        let (_, grad_w, grad_b) = ce_loss_and_grad(&gate, &batch, l2);
        for c in 0..N_EMOTIONS {
            for d in 0..dim {
                let orig = gate.weights[c][d];
                gate.weights[c][d] = orig + h;
                let (lp, _, _) = ce_loss_and_grad(&gate, &batch, l2);
                gate.weights[c][d] = orig - h;
                let (lm, _, _) = ce_loss_and_grad(&gate, &batch, l2);
                gate.weights[c][d] = orig;
                if !rel_ok(grad_w[c][d], (lp - lm) / (2.0 * h)) {
                    return fail(format!("gate case {case}, w[{c}][{d}]"));
                }
            }
            let orig = gate.biases[c];
            gate.biases[c] = orig + h;
            let (lp, _, _) = ce_loss_and_grad(&gate, &batch, l2);
            gate.biases[c] = orig - h;
            let (lm, _, _) = ce_loss_and_grad(&gate, &batch, l2);
            gate.biases[c] = orig;
            if !rel_ok(grad_b[c], (lp - lm) / (2.0 * h)) {
                return fail(format!("gate case {case}, bias[{c}]"));
            }
        }
    }
    Ok(())
}

// 7. Split protocol on the full-layout fixture: 4,800 + 4,800 train,
//    2,400 + 2,400 validation, 4,800 + 4,800 test, zero overlap.
fn c07_split_protocol() -> Result<(), String> {
    let systems = ["styletts2", "f5tts", "cosyvoice"];
    let mut records = Vec::new();
    for spk in 0..10 {
        for emotion in Emotion::ALL {
            for system in std::iter::once(BONAFIDE_SYSTEM).chain(systems) {
                for i in 0..300 {
                    records.push(TrialRecord {
                        utt_id: format!("spk{spk}_{}_{system}_{i:04}", emotion.name()),
                        speaker_id: format!("spk{spk}"),
                        emotion,
                        label: if system == BONAFIDE_SYSTEM {
                            Label::Bonafide
                        } else {
                            Label::Spoof
                        },
                        source_system: system.to_string(),
                        audio_path: None,
                        duration_s: None,
                    });
                }
            }
        }
    }
    let manifest = Manifest::from_records(records).map_err(|e| e.to_string())?;
    let spec = SplitSpec {
        train_speakers: (0..4).map(|i| format!("spk{i}")).collect(),
        valid_speakers: (4..6).map(|i| format!("spk{i}")).collect(),
        test_speakers: (6..10).map(|i| format!("spk{i}")).collect(),
        train_system: "cosyvoice".into(),
        valid_system: "f5tts".into(),
        test_system: "styletts2".into(),
    };
    let splits = build_splits(&manifest, &spec).map_err(|e| e.to_string())?;
    for (name, split, nb, ns) in [
        ("train", &splits.train, 4800, 4800),
        ("valid", &splits.valid, 2400, 2400),
        ("test", &splits.test, 4800, 4800),
    ] {
        let b = split.count_label(Label::Bonafide);
        let s = split.count_label(Label::Spoof);
        if b != nb || s != ns {
            return fail(format!("{name}: {b} + {s}, wanted {nb} + {ns}"));
        }
    }
    let spk = |m: &Manifest| -> std::collections::BTreeSet<String> {
        m.iter().map(|r| r.speaker_id.clone()).collect()
    };
    let sys = |m: &Manifest| -> std::collections::BTreeSet<String> {
        m.iter()
            .filter(|r| r.label == Label::Spoof)
            .map(|r| r.source_system.clone())
            .collect()
    };
    let (a, b, c) = (spk(&splits.train), spk(&splits.valid), spk(&splits.test));
    if !(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)) {
        return fail("speaker overlap across splits");
    }
    let (a, b, c) = (sys(&splits.train), sys(&splits.valid), sys(&splits.test));
    if !(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)) {
        return fail("spoof-system overlap across splits");
    }
    Ok(())
}

// 8. With near-one-hot gating and a verified specialist advantage, GEM
//    overall EER is within 0.5 points of the best single expert across
//    20 seeds.
fn c08_gem_dominance() -> Result<(), String> {
    for seed in 0..20u64 {
        let config = SimConfig::default_with_seed(seed);
        if config.gate_logit_gap < 20.0 {
            return fail("fixture gate_logit_gap below 20");
        }
        let batch = gen_scores(&config).map_err(|e| e.to_string())?;
        // Simulator invariant: each specialist beats every off-emotion
        // expert on its own emotion by more than 5 points.
        for emotion in Emotion::ALL {
            let cell = |expert: Emotion| -> f64 {
                let trials = batch.scored_trials(expert);
                let bona: Vec<f64> = trials
                    .iter()
                    .filter(|t| t.emotion == emotion && t.label == Label::Bonafide)
                    .map(|t| t.score)
                    .collect();
                let spoof: Vec<f64> = trials
                    .iter()
                    .filter(|t| t.emotion == emotion && t.label == Label::Spoof)
                    .map(|t| t.score)
                    .collect();
                eer(&bona, &spoof).unwrap()
            };
            let own = cell(emotion);
            for other in Emotion::ALL {
                if other != emotion && own + 5.0 >= cell(other) {
                    return fail(format!(
                        "seed {seed}: no specialist advantage on {}",
                        emotion.name()
                    ));
                }
            }
        }
        let fused = batch
            .fused_trials(Temperature::default())
            .map_err(|e| e.to_string())?;
        let gem = breakdown(&fused).unwrap().eer_overall;
        let best = Emotion::ALL
            .into_iter()
            .map(|e| breakdown(&batch.scored_trials(e)).unwrap().eer_overall)
            .fold(f64::MAX, f64::min);
        if gem > best + 0.5 {
            return fail(format!("seed {seed}: GEM {gem} vs best single {best}"));
        }
    }
    Ok(())
}

// 9. Full CLI pipeline on a generated tone corpus: finishes in < 60 s,
//    GEM is within 1.0 point of the generalist, and a rerun with the
//    same seed reproduces every output byte-identically.
fn c09_end_to_end() -> Result<(), String> {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(
        tmp.path().join("run.cfg"),
        "train.lr = 0.05\ntrain.epochs = 40\n\
         specialist.lr = 0.05\nspecialist.epochs = 60\n\
         gate.lr = 0.05\ngate.epochs = 40\n",
    )
    .map_err(|e| e.to_string())?;

    let run = |dir: &str| -> Result<(f64, f64), String> {
        let root = tmp.path().join(dir);
        std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
        let gem = |args: &[&str]| -> Result<(), String> {
            let out = Command::new(env!("CARGO_BIN_EXE_gem"))
                .args(["--config", "../run.cfg", "--seed", "11"])
                .args(args)
                .current_dir(&root)
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!(
                    "gem {args:?} failed: {}",
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
            Ok(())
        };
        gem(&["simulate", "--mode", "corpus", "--out-dir", "."])?;
        gem(&["extract-features", "--manifest", "manifest.csv", "--out", "features.tsv"])?;
        gem(&["train-expert", "--features", "features.tsv", "--manifest", "manifest.csv", "--out", "base.model"])?;
        for (flag, name) in [
            ("neutral", "model_n"),
            ("happy", "model_h"),
            ("angry", "model_a"),
            ("sad", "model_s"),
        ] {
            gem(&[
                "specialize", "--base", "base.model", "--features", "features.tsv",
                "--manifest", "manifest.csv", "--emotion", flag, "--out", name,
            ])?;
        }
        gem(&["train-gate", "--features", "features.tsv", "--manifest", "manifest.csv", "--out", "gate.model"])?;
        gem(&[
            "fuse", "--features", "features.tsv", "--gate", "gate.model",
            "--model-n", "model_n", "--model-h", "model_h",
            "--model-a", "model_a", "--model-s", "model_s",
            "--out", "fused.tsv",
        ])?;
        gem(&["eval", "--fused", "fused.tsv", "--manifest", "manifest.csv", "--out", "gem.json"])?;
        gem(&["score", "--model", "base.model", "--features", "features.tsv", "--out", "gen.tsv"])?;
        gem(&["eval", "--scores", "gen.tsv", "--manifest", "manifest.csv", "--out", "gen.json"])?;
        let overall = |name: &str| -> Result<f64, String> {
            let text = std::fs::read_to_string(root.join(name)).map_err(|e| e.to_string())?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            v["eer_overall"].as_f64().ok_or("no eer_overall".to_string())
        };
        Ok((overall("gem.json")?, overall("gen.json")?))
    };

    let (gem_eer, gen_eer) = run("a")?;
    if gem_eer > gen_eer + 1.0 {
        return fail(format!("GEM {gem_eer} vs generalist {gen_eer}"));
    }
    let _ = run("b")?;
    // Byte-identical rerun over every produced file, audio included.
    let mut stack = vec![std::path::PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir_a = tmp.path().join("a").join(&rel);
        for entry in std::fs::read_dir(&dir_a).map_err(|e| e.to_string())? {
            let entry = entry.map_err(|e| e.to_string())?;
            let sub = rel.join(entry.file_name());
            if entry.path().is_dir() {
                stack.push(sub);
            } else {
                let a = std::fs::read(tmp.path().join("a").join(&sub)).map_err(|e| e.to_string())?;
                let b = std::fs::read(tmp.path().join("b").join(&sub))
                    .map_err(|e| format!("{}: {e}", sub.display()))?;
                if a != b {
                    return fail(format!("{} differs between reruns", sub.display()));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 60.0 {
        return fail(format!("took {elapsed:?}, budget 60 s"));
    }
    Ok(())
}

// 10. breakdown() emits the expected report column structure, and the HAS cell
//     equals an independent EER recomputation on pooled non-neutral
//     trials.
fn c10_report_fidelity() -> Result<(), String> {
    let mut rng = SplitMix64::new(1010);
    let systems = ["styletts2", "f5tts", "cosyvoice"];
    let mut trials = Vec::new();
    for emotion in Emotion::ALL {
        for i in 0..80 {
            let (label, system, loc) = if i % 2 == 0 {
                (Label::Bonafide, BONAFIDE_SYSTEM, 0.7)
            } else {
                (Label::Spoof, systems[i % 3], 0.3)
            };
            trials.push(ScoredTrial {
                utt_id: format!("{}_{i:03}", emotion.name()),
                score: loc + 0.3 * (rng.next_f64() - 0.5),
                label,
                emotion,
                source_system: system.to_string(),
            });
        }
    }
    let report = breakdown(&trials).map_err(|e| e.to_string())?;
    let table = render_report(&report, ReportFormat::Table);
    let header: Vec<&str> = table
        .lines()
        .nth(1)
        .unwrap_or("")
        .split_whitespace()
        .collect();
    if header != ["HAS", "Neutral", "Happy", "Angry", "Sad", "Overall"] {
        return fail(format!("header {header:?}"));
    }
    // Independent recomputation of every cell.
    let pool = |pred: &dyn Fn(&ScoredTrial) -> bool, label: Label| -> Vec<f64> {
        trials
            .iter()
            .filter(|t| pred(t) && t.label == label)
            .map(|t| t.score)
            .collect()
    };
    let has = brute_force_eer(
        &pool(&|t| t.emotion != Emotion::Neutral, Label::Bonafide),
        &pool(&|t| t.emotion != Emotion::Neutral, Label::Spoof),
    );
    if (report.eer_has.unwrap_or(f64::NAN) - has).abs() > 1e-12 {
        return fail(format!("HAS {:?} vs pooled {has}", report.eer_has));
    }
    for emotion in Emotion::ALL {
        let want = brute_force_eer(
            &pool(&|t| t.emotion == emotion, Label::Bonafide),
            &pool(&|t| t.emotion == emotion, Label::Spoof),
        );
        let name = emotion.name().to_lowercase();
        let got = report.eer_per_emotion[&name].unwrap_or(f64::NAN);
        if (got - want).abs() > 1e-12 {
            return fail(format!("{name}: {got} vs {want}"));
        }
    }
    for system in systems {
        let want = brute_force_eer(
            &pool(&|_| true, Label::Bonafide),
            &pool(&|t| t.source_system == system, Label::Spoof),
        );
        let got = report.eer_per_system[system].unwrap_or(f64::NAN);
        if (got - want).abs() > 1e-12 {
            return fail(format!("{system}: {got} vs {want}"));
        }
    }
    let overall = brute_force_eer(
        &pool(&|_| true, Label::Bonafide),
        &pool(&|_| true, Label::Spoof),
    );
    if (report.eer_overall - overall).abs() > 1e-12 {
        return fail(format!("overall {} vs {overall}", report.eer_overall));
    }
    Ok(())
}
