//! Deterministic randomness.
//!
//! All stochastic steps in the toolkit (batch shuffles, synthetic score
//! draws) flow through [`SplitMix64`], Steele et al.'s 64-bit mixing
//! generator. It is seedable from a single `u64`, and independent streams
//! are derived by hashing a stream label into the seed ([`derive_seed`]),
//! so adding trials to one simulator cell never perturbs another.

/// SplitMix64 PRNG. One `u64` of state, full 2^64 period.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform usize in [0, bound) via rejection sampling (no modulo bias).
    pub fn next_below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        let bound = bound as u64;
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// One standard-normal draw via the Box-Muller transform.
    ///
    /// Uses the cosine branch only, so each draw consumes exactly two
    /// uniforms and streams stay aligned regardless of how many draws a
    /// caller takes.
    pub fn next_gaussian(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Derive a stream seed from a root seed and a textual label.
///
/// FNV-1a over the label folded into the root seed, then one SplitMix64
/// mixing step so nearby labels land far apart.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in label.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x100000001b3);
    }
    SplitMix64::new(root ^ h).next_u64()
}
