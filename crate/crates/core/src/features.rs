//! Signal front end: WAV ingest and log band-energy features.
//!
//! Each utterance is framed, windowed (Hamming), transformed with a
//! radix-2 FFT, pushed through a triangular filterbank on a mel-warped
//! axis, and log-compressed. The per-band mean and standard deviation of
//! the log energies across frames form the fixed-dimension feature
//! vector consumed by the experts and the gating classifier.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Waveform> {
        if samples.is_empty() {
            return Err(Error::Input("waveform is empty".into()));
        }
        for (i, &s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Input(format!("non-finite sample at index {i}")));
            }
            if s.abs() > 1.0 + 1e-6 {
                return Err(Error::Input(format!(
                    "sample {i} = {s} exceeds [-1, 1]"
                )));
            }
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Front-end parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub n_bands: usize,
    pub floor_eps: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            n_bands: 24,
            floor_eps: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn frame_len_samples(&self, sample_rate: u32) -> usize {
        (self.frame_len_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// Output dimension: per-band mean then per-band std.
    pub fn dim(&self) -> usize {
        2 * self.n_bands
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        let frame = self.frame_len_samples(sample_rate);
        if frame == 0 || self.hop_samples(sample_rate) == 0 {
            return Err(Error::Config("frame or hop length rounds to zero".into()));
        }
        if self.fft_size < frame {
            return Err(Error::Config(format!(
                "fft_size {} shorter than frame length {} samples",
                self.fft_size, frame
            )));
        }
        if self.n_bands < 1 {
            return Err(Error::Config("n_bands must be >= 1".into()));
        }
        if !(self.floor_eps > 0.0) {
            return Err(Error::Config("floor_eps must be > 0".into()));
        }
        Ok(())
    }

    /// Center frequency (Hz) of triangular band `band` at `sample_rate`.
    pub fn band_center_hz(&self, band: usize, sample_rate: u32) -> f64 {
        let nyquist = sample_rate as f64 / 2.0;
        let m_max = hz_to_mel(nyquist);
        mel_to_hz(m_max * (band + 1) as f64 / (self.n_bands + 1) as f64)
    }
}

/// Fixed-dimension utterance summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

// --- WAV I/O ------------------------------------------------------------

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Read a mono 16-bit PCM RIFF/WAVE file, scaling samples by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    let fmt_err = |msg: String| Error::Format(msg);
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fmt_err("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4).unwrap() as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(fmt_err(format!(
                "truncated chunk `{}`",
                String::from_utf8_lossy(id)
            )));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(fmt_err("fmt chunk too short".into()));
                }
                fmt = Some((
                    read_u16(body, 0).unwrap(),
                    read_u16(body, 2).unwrap(),
                    read_u32(body, 4).unwrap(),
                    read_u16(body, 14).unwrap(),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }
    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| fmt_err("missing fmt chunk".into()))?;
    if format != 1 {
        return Err(fmt_err(format!("audio_format={format} (want PCM=1)")));
    }
    if channels != 1 {
        return Err(fmt_err(format!("channels={channels} (want mono)")));
    }
    if bits != 16 {
        return Err(fmt_err(format!("bits_per_sample={bits} (want 16)")));
    }
    let data = data.ok_or_else(|| fmt_err("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(fmt_err("data chunk has odd byte length".into()));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Write a mono 16-bit PCM WAV. Samples are clamped to [-1, 1] and scaled
/// by 32767.
pub fn write_wav(path: &Path, waveform: &Waveform) -> Result<()> {
    let n = waveform.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&waveform.sample_rate.to_le_bytes());
    out.extend_from_slice(&(waveform.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &waveform.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

// --- FFT ----------------------------------------------------------------

/// In-place iterative radix-2 FFT over interleaved (re, im) pairs.
/// Length must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -std::f64::consts::TAU / len as f64;
        let (w_re, w_im) = (ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
        }
        len *= 2;
    }
}

/// One-sided power spectrum of a real frame zero-padded to `fft_size`.
/// Returns `fft_size / 2 + 1` bins of |X[k]|^2.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Vec<f64> {
    let mut re = vec![0.0; fft_size];
    let mut im = vec![0.0; fft_size];
    re[..frame.len()].copy_from_slice(frame);
    fft_in_place(&mut re, &mut im);
    (0..=fft_size / 2)
        .map(|k| re[k] * re[k] + im[k] * im[k])
        .collect()
}

fn hamming_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| {
            0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (len - 1) as f64).cos()
        })
        .collect()
}

/// Triangular filterbank on the mel-warped axis, 0 Hz to Nyquist.
/// Rows are bands, columns are one-sided FFT bins.
pub fn filterbank(config: &FeatureConfig, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = config.fft_size / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let m_max = hz_to_mel(nyquist);
    // n_bands + 2 edge points, equally spaced in mel.
    let edges_hz: Vec<f64> = (0..config.n_bands + 2)
        .map(|i| mel_to_hz(m_max * i as f64 / (config.n_bands + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / config.fft_size as f64;
    let mut bank = vec![vec![0.0; n_bins]; config.n_bands];
    for (b, row) in bank.iter_mut().enumerate() {
        let (lo, center, hi) = (edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]);
        for (k, w) in row.iter_mut().enumerate() {
            let f = bin_hz(k);
            if f > lo && f < center {
                *w = (f - lo) / (center - lo);
            } else if (f - center).abs() == 0.0 {
                *w = 1.0;
            } else if f > center && f < hi {
                *w = (hi - f) / (hi - center);
            }
        }
    }
    bank
}

/// Extract the pooled log band-energy feature vector.
///
/// Output layout: `n_bands` per-band means of the log energies across
/// frames, then `n_bands` per-band (population) standard deviations.
pub fn extract(waveform: &Waveform, config: &FeatureConfig) -> Result<FeatureVector> {
    config.validate(waveform.sample_rate)?;
    let frame_len = config.frame_len_samples(waveform.sample_rate);
    let hop = config.hop_samples(waveform.sample_rate);
    if waveform.samples.len() < frame_len {
        return Err(Error::Input(format!(
            "waveform of {} samples shorter than one frame ({frame_len})",
            waveform.samples.len()
        )));
    }
    let n_frames = (waveform.samples.len() - frame_len) / hop + 1;
    let window = hamming_window(frame_len);
    let bank = filterbank(config, waveform.sample_rate);

    // Per-band log energies for every frame; pooling is two-pass so a
    // constant band yields an exactly zero standard deviation.
    let mut log_energies = vec![vec![0.0; n_frames]; config.n_bands];
    let mut frame_buf = vec![0.0; frame_len];
    for f in 0..n_frames {
        let start = f * hop;
        for (i, w) in window.iter().enumerate() {
            frame_buf[i] = waveform.samples[start + i] * w;
        }
        let power = power_spectrum(&frame_buf, config.fft_size);
        for (b, filter) in bank.iter().enumerate() {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            log_energies[b][f] = (energy + config.floor_eps).ln();
        }
    }
    let nf = n_frames as f64;
    let mut values = Vec::with_capacity(config.dim());
    let means: Vec<f64> = log_energies
        .iter()
        .map(|band| band.iter().sum::<f64>() / nf)
        .collect();
    values.extend_from_slice(&means);
    for (band, mean) in log_energies.iter().zip(&means) {
        let var = band.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / nf;
        values.push(var.sqrt());
    }
    Ok(FeatureVector { values })
}

// --- Feature cache I/O ----------------------------------------------------

/// Write the feature cache: one line per utterance,
/// `utt_id<TAB>v1<TAB>...<TAB>vD`, 9 significant digits.
pub fn write_feature_cache(
    path: &Path,
    entries: &[(String, FeatureVector)],
) -> Result<()> {
    let mut out = String::new();
    for (utt_id, fv) in entries {
        out.push_str(utt_id);
        for v in &fv.values {
            out.push('\t');
            out.push_str(&format!("{v:.8e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a feature cache. All rows must share one dimension; duplicate
/// ids are rejected.
pub fn read_feature_cache(path: &Path) -> Result<BTreeMap<String, FeatureVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let utt_id = parts.next().unwrap().to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::Format(format!("feature cache line {}: bad value `{p}`", i + 1))
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::Format(format!(
                "feature cache line {}: no values",
                i + 1
            )));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Format(format!(
                    "feature cache line {}: dimension {} != {}",
                    i + 1,
                    values.len(),
                    d
                )))
            }
            _ => {}
        }
        if map.insert(utt_id.clone(), FeatureVector { values }).is_some() {
            return Err(Error::Validation(format!(
                "feature cache: duplicate utt_id `{utt_id}`"
            )));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_waveform_gives_floor_log_and_zero_std() {
        let cfg = FeatureConfig::default();
        let wav = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let fv = extract(&wav, &cfg).unwrap();
        let floor_log = cfg.floor_eps.ln();
        for b in 0..cfg.n_bands {
            assert!((fv.values[b] - floor_log).abs() < 1e-12);
            // Mean accumulation leaves sub-1e-12 residue on the deviations.
            assert!(fv.values[cfg.n_bands + b].abs() < 1e-12);
        }
    }

    #[test]
    fn short_waveform_rejected() {
        let cfg = FeatureConfig::default();
        let wav = Waveform::new(vec![0.1; 100], 16000).unwrap();
        assert!(extract(&wav, &cfg).is_err());
    }

    #[test]
    fn extract_is_deterministic() {
        let cfg = FeatureConfig::default();
        let samples: Vec<f64> = (0..16000)
            .map(|i| 0.4 * (std::f64::consts::TAU * 440.0 * i as f64 / 16000.0).sin())
            .collect();
        let wav = Waveform::new(samples, 16000).unwrap();
        let a = extract(&wav, &cfg).unwrap();
        let b = extract(&wav, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..100).map(|i| ((i as f64) / 100.0) - 0.5).collect();
        write_wav(&path, &Waveform::new(samples.clone(), 16000).unwrap()).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples.len(), samples.len());
        for (a, b) in back.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn silence_wav_reads_back_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        write_wav(&path, &Waveform::new(vec![0.0; 16000], 16000).unwrap()).unwrap();
        let wav = read_wav(&path).unwrap();
        assert_eq!(wav.samples.len(), 16000);
        assert!(wav.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_min_sample_scales_to_minus_one() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 2).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&(-32768i16).to_le_bytes());
        let wav = parse_wav(&bytes).unwrap();
        assert_eq!(wav.samples, vec![-1.0]);
    }

    #[test]
    fn stereo_file_names_channel_count() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 4).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        let err = parse_wav(&bytes).unwrap_err();
        assert!(err.to_string().contains("channels=2"), "{err}");
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&path, &Waveform::new(vec![0.0; 100], 16000).unwrap()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(60);
        assert!(parse_wav(&bytes).is_err());
    }

    #[test]
    fn feature_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.tsv");
        let entries = vec![
            ("u1".to_string(), FeatureVector { values: vec![1.0, -2.5] }),
            ("u2".to_string(), FeatureVector { values: vec![0.125, 3e-7] }),
        ];
        write_feature_cache(&path, &entries).unwrap();
        let back = read_feature_cache(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (id, fv) in &entries {
            let got = &back[id];
            for (a, b) in got.values.iter().zip(&fv.values) {
                assert!((a - b).abs() <= b.abs() * 1e-8);
            }
        }
    }
}
