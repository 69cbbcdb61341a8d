//! Independent oracles used by the test suites.
//!
//! Everything here is deliberately naive: quadratic-time sweeps, direct
//! DFT sums, compensated-summation reference math. None of it shares
//! code with the implementations it checks.

/// Standard normal CDF at -1: the analytic EER (as a fraction) of two
/// equal-variance Gaussians whose means are 2 sigma apart.
pub const PHI_MINUS_ONE: f64 = 0.158_655_253_931_457_05;

/// Brute-force EER in percent: enumerate every candidate threshold with
/// a full O(n) pass each, then interpolate linearly at the FAR/FRR
/// crossing. Acceptance rule is `score >= t`.
pub fn brute_force_eer(bonafide: &[f64], spoof: &[f64]) -> f64 {
    assert!(!bonafide.is_empty() && !spoof.is_empty());
    let mut thresholds: Vec<f64> = bonafide.iter().chain(spoof).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let rates = |t: f64| -> (f64, f64) {
        let accepted_spoof = spoof.iter().filter(|&&s| s >= t).count() as f64;
        let rejected_bona = bonafide.iter().filter(|&&s| s < t).count() as f64;
        (
            accepted_spoof / spoof.len() as f64,
            rejected_bona / bonafide.len() as f64,
        )
    };

    let mut prev: Option<(f64, f64)> = None;
    for &t in &thresholds {
        let (far, frr) = rates(t);
        if far - frr <= 0.0 {
            return match prev {
                None => 100.0 * 0.5 * (far + frr),
                Some((pfar, pfrr)) => {
                    let d1 = pfar - pfrr;
                    let d2 = far - frr;
                    let s = d1 / (d1 - d2);
                    100.0 * (pfar + s * (far - pfar))
                }
            };
        }
        prev = Some((far, frr));
    }
    unreachable!("FAR - FRR is negative at the sentinel")
}

/// Naive O(N^2) DFT of a real signal. Returns (re, im) pairs.
pub fn naive_dft(signal: &[f64]) -> Vec<(f64, f64)> {
    let n = signal.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in signal.iter().enumerate() {
                let ang = -std::f64::consts::TAU * k as f64 * t as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            (re, im)
        })
        .collect()
}

/// Kahan-compensated dot product.
pub fn kahan_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    let mut c = 0.0;
    for (x, y) in a.iter().zip(b) {
        let term = x * y - c;
        let t = sum + term;
        c = (t - sum) - term;
        sum = t;
    }
    sum
}

/// Reference sigmoid built on the compensated dot product.
pub fn oracle_sigmoid_score(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    let z = kahan_dot(weights, x) + bias;
    1.0 / (1.0 + (-z).exp())
}

/// Reference temperature softmax with compensated summation.
pub fn oracle_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let mut sum = 0.0;
    let mut c = 0.0;
    for &e in &exps {
        let term = e - c;
        let t = sum + term;
        c = (t - sum) - term;
        sum = t;
    }
    exps.iter().map(|e| e / sum).collect()
}

/// Exhaustive 2-D linear separability check with a required margin.
/// Sweeps a dense grid of directions plus every pairwise difference
/// direction; returns true if some (w, b) separates the classes with
/// functional margin at least `margin` under unit-norm w.
pub fn separable_2d(positive: &[[f64; 2]], negative: &[[f64; 2]], margin: f64) -> bool {
    let mut directions: Vec<[f64; 2]> = (0..3600)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 3600.0;
            [a.cos(), a.sin()]
        })
        .collect();
    for p in positive {
        for n in negative {
            let d = [p[0] - n[0], p[1] - n[1]];
            let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if norm > 0.0 {
                directions.push([d[0] / norm, d[1] / norm]);
            }
        }
    }
    for w in directions {
        let min_pos = positive
            .iter()
            .map(|p| w[0] * p[0] + w[1] * p[1])
            .fold(f64::INFINITY, f64::min);
        let max_neg = negative
            .iter()
            .map(|n| w[0] * n[0] + w[1] * n[1])
            .fold(f64::NEG_INFINITY, f64::max);
        if min_pos - max_neg >= 2.0 * margin {
            return true;
        }
    }
    false
}

/// Nearest-centroid classifier accuracy over labeled points.
pub fn nearest_centroid_accuracy(points: &[(Vec<f64>, usize)], n_classes: usize) -> f64 {
    let dim = points[0].0.len();
    let mut centroids = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (x, c) in points {
        counts[*c] += 1;
        for (acc, v) in centroids[*c].iter_mut().zip(x) {
            *acc += v;
        }
    }
    for (centroid, count) in centroids.iter_mut().zip(&counts) {
        for v in centroid.iter_mut() {
            *v /= *count as f64;
        }
    }
    let correct = points
        .iter()
        .filter(|(x, c)| {
            let best = (0..n_classes)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum();
                    let db: f64 = centroids[b].iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            best == *c
        })
        .count();
    correct as f64 / points.len() as f64
}

/// Confusion matrix (tp, fp, tn, fn) at a threshold with the `>=`
/// acceptance rule; positives are bonafide.
pub fn confusion_matrix(
    bonafide: &[f64],
    spoof: &[f64],
    threshold: f64,
) -> (usize, usize, usize, usize) {
    let tp = bonafide.iter().filter(|&&s| s >= threshold).count();
    let fn_ = bonafide.len() - tp;
    let fp = spoof.iter().filter(|&&s| s >= threshold).count();
    let tn = spoof.len() - fp;
    (tp, fp, tn, fn_)
}
