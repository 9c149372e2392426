//! Reference implementations used as test oracles. Written from the
//! textbook definitions, sharing nothing with the production code paths.

#![allow(dead_code)]

pub mod grad;

use std::f64::consts::PI;

use lungsound::MfccConfig;

/// `|X[k]|^2`, `k = 0..=n/2`, by the O(n^2) DFT sum.
pub fn naive_power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let cos: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).cos()).collect();
    let sin: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).sin()).collect();
    (0..=n_fft / 2)
        .map(|k| {
            // four interleaved partial sums, combined at the end
            let (mut re, mut im) = ([0.0; 4], [0.0; 4]);
            let mut idx = 0usize;
            for (i, &x) in frame.iter().enumerate() {
                re[i % 4] += x * cos[idx];
                im[i % 4] -= x * sin[idx];
                idx += k;
                if idx >= n_fft {
                    idx -= n_fft;
                }
            }
            let (re, im) = (re.iter().sum::<f64>(), im.iter().sum::<f64>());
            re * re + im * im
        })
        .collect()
}

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Dense triangular filterbank with edges snapped to FFT bins.
pub fn naive_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let n_bins = cfg.n_fft / 2 + 1;
    let fmax = cfg.fmax.unwrap_or(cfg.sample_rate as f64 / 2.0);
    let (m_lo, m_hi) = (mel(cfg.fmin), mel(fmax));
    let m = cfg.n_mel_filters;
    let edge: Vec<f64> = (0..m + 2)
        .map(|i| {
            let hz = inv_mel(m_lo + (m_hi - m_lo) * i as f64 / (m + 1) as f64);
            ((hz * cfg.n_fft as f64 / cfg.sample_rate as f64).round()).min((n_bins - 1) as f64)
        })
        .collect();
    (0..m)
        .map(|j| {
            let (l, c, r) = (edge[j], edge[j + 1], edge[j + 2]);
            (0..n_bins)
                .map(|k| {
                    let k = k as f64;
                    let up = if c > l { (k - l) / (c - l) } else if k >= c { 1.0 } else { 0.0 };
                    let down = if r > c { (r - k) / (r - c) } else if k <= c { 1.0 } else { 0.0 };
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Full MFCC chain, written out step by step. Returns `n_coefficients`
/// rows of `target_frames` values.
pub fn naive_mfcc(samples: &[f64], cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let n = (cfg.clip_seconds * cfg.sample_rate as f64).round() as usize;
    let mut x: Vec<f64> = samples.iter().copied().take(n).collect();
    while x.len() < n {
        x.push(0.0);
    }
    let mut y = vec![x[0]];
    for i in 1..n {
        y.push(x[i] - cfg.pre_emphasis_coeff * x[i - 1]);
    }

    // mirror padding without repeating the edge sample
    let pad = cfg.frame_length / 2;
    let mut padded: Vec<f64> = (1..=pad).rev().map(|i| y[i]).collect();
    padded.extend_from_slice(&y);
    padded.extend((1..=pad).map(|i| y[n - 1 - i]));

    let win: Vec<f64> = (0..cfg.frame_length)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (cfg.frame_length - 1) as f64).cos())
        .collect();
    let fb = naive_filterbank(cfg);
    let n_frames = 1 + n / cfg.hop_length;
    let mut out = vec![vec![0.0; cfg.target_frames]; cfg.n_coefficients];
    for t in 0..n_frames.min(cfg.target_frames) {
        let frame: Vec<f64> = (0..cfg.frame_length)
            .map(|i| padded[t * cfg.hop_length + i] * win[i])
            .collect();
        let power = naive_power_spectrum(&frame, cfg.n_fft);
        let log_e: Vec<f64> = fb
            .iter()
            .map(|f| f.iter().zip(&power).map(|(a, b)| a * b).sum::<f64>().max(cfg.log_floor).ln())
            .collect();
        let nm = log_e.len() as f64;
        for (k, row) in out.iter_mut().enumerate() {
            let s: f64 = log_e
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nm)).cos())
                .sum();
            row[t] = s * if k == 0 { (1.0 / nm).sqrt() } else { (2.0 / nm).sqrt() };
        }
    }
    out
}

/// Sum of tones plus seeded uniform noise.
pub fn test_signal(len: usize, sample_rate: f64, tones: &[(f64, f64)], noise: f64, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..len)
        .map(|i| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            let t = i as f64 / sample_rate;
            tones.iter().map(|(f, a)| a * (2.0 * PI * f * t).sin()).sum::<f64>() + noise * u
        })
        .collect()
}

/// Featurized synthetic recordings, `per_class` of each class, in class order.
pub fn synth_features(per_class: usize, seconds: f64, seed: u64) -> Vec<(lungsound::MfccMatrix, usize)> {
    use lungsound::features::MfccExtractor;
    use lungsound::synth::{generate_clip, SynthSpec};
    let spec = SynthSpec {
        per_class,
        seconds,
        seed,
        ..SynthSpec::default()
    };
    let ex = MfccExtractor::new(MfccConfig::default().with_clip_seconds(seconds)).unwrap();
    (0..lungsound::NUM_CLASSES)
        .flat_map(|c| (0..per_class).map(move |i| (c, i)))
        .map(|(c, i)| (ex.extract(&generate_clip(c, i, &spec)).unwrap(), c))
        .collect()
}
