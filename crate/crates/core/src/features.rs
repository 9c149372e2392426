//! MFCC front end.
//!
//! Chain: pre-emphasis, center-padded Hamming-windowed framing, power
//! spectrum, triangular mel filterbank, natural-log energies, orthonormal
//! DCT-II over the mel axis. The waveform is padded or truncated to a fixed
//! duration first, so the frame count is fixed as well.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio_io::{AudioClip, WORKING_SAMPLE_RATE};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid MFCC config: {0}")]
    InvalidConfig(String),
    #[error("signal of {len} samples is too short to frame (need at least 2)")]
    SignalTooShort { len: usize },
    #[error("mel filter {index} covers no FFT bin")]
    DegenerateFilter { index: usize },
    #[error("clip is at {got} Hz but the extractor is configured for {expected} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub pre_emphasis_coeff: f64,
    pub frame_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mel_filters: usize,
    pub n_coefficients: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub target_frames: usize,
    pub clip_seconds: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: WORKING_SAMPLE_RATE,
            pre_emphasis_coeff: 0.97,
            frame_length: 2048,
            hop_length: 512,
            n_fft: 2048,
            n_mel_filters: 128,
            n_coefficients: 40,
            fmin: 0.0,
            fmax: None,
            target_frames: 862,
            clip_seconds: 20.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    /// Same front end, shorter fixed clip. `target_frames` follows the
    /// framing formula so no frame padding or truncation happens.
    pub fn with_clip_seconds(mut self, seconds: f64) -> Self {
        self.clip_seconds = seconds;
        self.target_frames = 1 + self.clip_samples() / self.hop_length;
        self
    }

    pub fn fmax_hz(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |msg: String| Err(FeatureError::InvalidConfig(msg));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.pre_emphasis_coeff) {
            return bad(format!("pre_emphasis_coeff {} not in [0, 1)", self.pre_emphasis_coeff));
        }
        if self.hop_length == 0 || self.hop_length > self.frame_length || self.frame_length > self.n_fft {
            return bad(format!(
                "need 0 < hop ({}) <= frame_length ({}) <= n_fft ({})",
                self.hop_length, self.frame_length, self.n_fft
            ));
        }
        if self.n_coefficients == 0 || self.n_coefficients > self.n_mel_filters {
            return bad(format!(
                "need 0 < n_coefficients ({}) <= n_mel_filters ({})",
                self.n_coefficients, self.n_mel_filters
            ));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        let fmax = self.fmax_hz();
        if !(self.fmin >= 0.0 && self.fmin < fmax && fmax <= nyquist) {
            return bad(format!("need 0 <= fmin ({}) < fmax ({fmax}) <= {nyquist}", self.fmin));
        }
        if self.target_frames == 0 || !(self.clip_seconds > 0.0) {
            return bad("target_frames and clip_seconds must be positive".into());
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form. Stored in caches and checkpoints
    /// so features built under one config are never read under another.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }
}

/// Coefficient-by-frame matrix, row-major (one row per coefficient).
#[derive(Clone, Debug, PartialEq)]
pub struct MfccMatrix {
    n_coefficients: usize,
    n_frames: usize,
    values: Vec<f64>,
}

impl MfccMatrix {
    pub fn new(n_coefficients: usize, n_frames: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_coefficients * n_frames, "MFCC matrix size mismatch");
        Self {
            n_coefficients,
            n_frames,
            values,
        }
    }

    pub fn zeros(n_coefficients: usize, n_frames: usize) -> Self {
        Self::new(n_coefficients, n_frames, vec![0.0; n_coefficients * n_frames])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_coefficients, self.n_frames)
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_coefficients
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn get(&self, coeff: usize, frame: usize) -> f64 {
        self.values[coeff * self.n_frames + frame]
    }

    pub fn row(&self, coeff: usize) -> &[f64] {
        &self.values[coeff * self.n_frames..(coeff + 1) * self.n_frames]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64).sqrt()
    }
}

pub fn pre_emphasize(samples: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(&first) = samples.first() {
        out.push(first);
        out.extend(samples.windows(2).map(|w| w[1] - coeff * w[0]));
    }
    out
}

/// Symmetric Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos()).collect()
}

/// Index into a signal of length `len` extended by mirror reflection
/// without repeating the edge sample.
fn reflect_index(idx: isize, len: usize) -> usize {
    let period = 2 * (len as isize - 1);
    let mut i = idx.rem_euclid(period);
    if i >= len as isize {
        i = period - i;
    }
    i as usize
}

pub fn frame_count(n_samples: usize, hop_length: usize) -> usize {
    1 + n_samples / hop_length
}

/// Split into centered, Hamming-windowed frames of `frame_length` samples.
pub fn frame_and_window(samples: &[f64], cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    if samples.len() < 2 {
        return Err(FeatureError::SignalTooShort { len: samples.len() });
    }
    let window = hamming(cfg.frame_length);
    let half = (cfg.frame_length / 2) as isize;
    let n = frame_count(samples.len(), cfg.hop_length);
    let frames = (0..n)
        .map(|t| {
            let start = (t * cfg.hop_length) as isize - half;
            window
                .iter()
                .enumerate()
                .map(|(i, w)| w * samples[reflect_index(start + i as isize, samples.len())])
                .collect()
        })
        .collect();
    Ok(frames)
}

/// Reusable FFT plan for power spectra of a fixed size.
#[derive(Clone)]
pub struct SpectrumPlan {
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectrumPlan {
    pub fn new(n_fft: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self { n_fft, fft }
    }

    /// `|X[k]|^2` for `k = 0..=n_fft/2`, zero-padding the frame to `n_fft`.
    pub fn power(&self, frame: &[f64], scratch: &mut Vec<Complex<f64>>) -> Vec<f64> {
        assert!(frame.len() <= self.n_fft, "frame longer than n_fft");
        scratch.clear();
        scratch.extend(frame.iter().map(|&v| Complex::new(v, 0.0)));
        scratch.resize(self.n_fft, Complex::new(0.0, 0.0));
        self.fft.process(scratch);
        scratch[..=self.n_fft / 2].iter().map(|c| c.norm_sqr()).collect()
    }
}

pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    SpectrumPlan::new(n_fft).power(frame, &mut Vec::new())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// One triangular filter, stored from its first nonzero bin.
#[derive(Clone, Debug)]
struct Triangle {
    start: usize,
    weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MelFilterbank {
    n_bins: usize,
    filters: Vec<Triangle>,
}

impl MelFilterbank {
    pub fn new(cfg: &MfccConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let n_bins = cfg.n_bins();
        let lo = hz_to_mel(cfg.fmin);
        let hi = hz_to_mel(cfg.fmax_hz());
        let n_points = cfg.n_mel_filters + 2;
        let bins: Vec<usize> = (0..n_points)
            .map(|i| {
                let mel = lo + (hi - lo) * i as f64 / (n_points - 1) as f64;
                let hz = mel_to_hz(mel);
                ((hz * cfg.n_fft as f64 / cfg.sample_rate as f64).round() as usize).min(n_bins - 1)
            })
            .collect();

        let mut filters = Vec::with_capacity(cfg.n_mel_filters);
        for m in 0..cfg.n_mel_filters {
            let (left, peak, right) = (bins[m], bins[m + 1], bins[m + 2]);
            let mut weights = Vec::with_capacity(right - left + 1);
            for k in left..=right {
                let w = if k < peak {
                    (k - left) as f64 / (peak - left) as f64
                } else if k == peak && (peak > left || right > peak) {
                    1.0
                } else if k > peak {
                    (right - k) as f64 / (right - peak) as f64
                } else {
                    0.0
                };
                weights.push(w);
            }
            if weights.iter().all(|&w| w == 0.0) {
                return Err(FeatureError::DegenerateFilter { index: m });
            }
            filters.push(Triangle { start: left, weights });
        }
        Ok(Self { n_bins, filters })
    }

    pub fn n_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.filters
            .iter()
            .map(|f| {
                let mut row = vec![0.0; self.n_bins];
                row[f.start..f.start + f.weights.len()].copy_from_slice(&f.weights);
                row
            })
            .collect()
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|f| {
                f.weights
                    .iter()
                    .zip(&spectrum[f.start..])
                    .map(|(w, s)| w * s)
                    .sum()
            })
            .collect()
    }
}

/// Dense `n_mel_filters x (n_fft/2 + 1)` filterbank matrix.
pub fn mel_filterbank(cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    Ok(MelFilterbank::new(cfg)?.to_dense())
}

/// First `n_out` rows of the orthonormal `n_in`-point DCT-II matrix.
pub fn dct_ii_orthonormal(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..n_in)
                .map(|m| scale * (PI * k as f64 * (m as f64 + 0.5) / n).cos())
                .collect()
        })
        .collect()
}

/// Keep the first `target` frames or append zero frames up to it.
pub fn pad_or_truncate(m: &MfccMatrix, target: usize) -> MfccMatrix {
    let (rows, cols) = m.shape();
    let keep = cols.min(target);
    let mut values = vec![0.0; rows * target];
    for r in 0..rows {
        values[r * target..r * target + keep].copy_from_slice(&m.row(r)[..keep]);
    }
    MfccMatrix::new(rows, target, values)
}

/// Configured extractor with precomputed window, filterbank, DCT and FFT plan.
#[derive(Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    plan: SpectrumPlan,
    filterbank: MelFilterbank,
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let filterbank = MelFilterbank::new(&cfg)?;
        let dct = dct_ii_orthonormal(cfg.n_coefficients, cfg.n_mel_filters);
        Ok(Self {
            plan: SpectrumPlan::new(cfg.n_fft),
            filterbank,
            dct,
            cfg,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<MfccMatrix, FeatureError> {
        let cfg = &self.cfg;
        if clip.sample_rate != cfg.sample_rate {
            return Err(FeatureError::SampleRateMismatch {
                expected: cfg.sample_rate,
                got: clip.sample_rate,
            });
        }
        if clip.samples.len() < 2 {
            return Err(FeatureError::SignalTooShort {
                len: clip.samples.len(),
            });
        }
        let mut wave = clip.samples.clone();
        wave.resize(cfg.clip_samples(), 0.0);
        let emphasized = pre_emphasize(&wave, cfg.pre_emphasis_coeff);
        let frames = frame_and_window(&emphasized, cfg)?;

        let n_frames = frames.len();
        let n_coeff = cfg.n_coefficients;
        let mut values = vec![0.0; n_coeff * n_frames];
        let mut scratch = Vec::with_capacity(cfg.n_fft);
        for (t, frame) in frames.iter().enumerate() {
            let spectrum = self.plan.power(frame, &mut scratch);
            let log_mel: Vec<f64> = self
                .filterbank
                .apply(&spectrum)
                .into_iter()
                .map(|e| e.max(cfg.log_floor).ln())
                .collect();
            for (k, basis) in self.dct.iter().enumerate() {
                values[k * n_frames + t] = basis.iter().zip(&log_mel).map(|(b, v)| b * v).sum();
            }
        }
        Ok(pad_or_truncate(
            &MfccMatrix::new(n_coeff, n_frames, values),
            cfg.target_frames,
        ))
    }
}

/// One-shot extraction; prefer [`MfccExtractor`] when processing many clips.
pub fn extract_mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<MfccMatrix, FeatureError> {
    MfccExtractor::new(cfg.clone())?.extract(clip)
}
