mod support;

use lungsound::features::{dct_ii_orthonormal, extract_mfcc, mel_filterbank, power_spectrum};
use lungsound::{AudioClip, MfccConfig};
use support::{naive_filterbank, naive_mfcc, naive_power_spectrum, test_signal};

#[test]
fn fft_matches_naive_dft() {
    for (n, seed) in [(16, 1), (512, 2), (2048, 3)] {
        let frame = test_signal(n - 3, 8000.0, &[(440.0, 0.5)], 0.2, seed);
        let fast = power_spectrum(&frame, n);
        let slow = naive_power_spectrum(&frame, n);
        assert_eq!(fast.len(), n / 2 + 1);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn pure_tone_peaks_at_its_bin() {
    // 1000 Hz at 16 kHz with n_fft 256 sits exactly on bin 16
    let frame = test_signal(256, 16000.0, &[(1000.0, 1.0)], 0.0, 0);
    let p = power_spectrum(&frame, 256);
    let peak = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak, 16);
}

#[test]
fn filterbank_matches_reference() {
    for cfg in [
        MfccConfig::default(),
        MfccConfig {
            sample_rate: 16000,
            n_fft: 512,
            frame_length: 512,
            hop_length: 160,
            n_mel_filters: 40,
            n_coefficients: 13,
            fmin: 20.0,
            fmax: Some(7600.0),
            ..MfccConfig::default()
        },
    ] {
        let a = mel_filterbank(&cfg).unwrap();
        let b = naive_filterbank(&cfg);
        assert_eq!(a, b);
    }
}

#[test]
fn dct_rows_are_orthonormal() {
    let d = dct_ii_orthonormal(128, 128);
    for i in 0..128 {
        for j in 0..128 {
            let dot: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-10);
        }
    }
}

fn max_abs_diff(cfg: &MfccConfig, samples: Vec<f64>) -> f64 {
    let fast = extract_mfcc(&AudioClip::new(samples.clone(), cfg.sample_rate), cfg).unwrap();
    let slow = naive_mfcc(&samples, cfg);
    assert_eq!(fast.shape(), (slow.len(), slow[0].len()));
    let mut worst = 0.0f64;
    for (k, row) in slow.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            worst = worst.max((fast.get(k, t) - v).abs());
        }
    }
    worst
}

#[test]
fn extractor_matches_reference_pipeline() {
    let cfg = MfccConfig::default().with_clip_seconds(0.5);
    let sr = cfg.sample_rate as f64;
    // full-length noisy tone, a short clip that gets zero-padded, and one
    // that gets truncated
    let cases = [
        test_signal(11025, sr, &[(300.0, 0.4), (2500.0, 0.1)], 0.05, 1),
        test_signal(4000, sr, &[(800.0, 0.6)], 0.01, 2),
        test_signal(30000, sr, &[], 0.3, 3),
    ];
    for samples in cases {
        assert!(max_abs_diff(&cfg, samples) < 1e-5);
    }
}

#[test]
fn reference_pipeline_on_small_config() {
    let cfg = MfccConfig {
        sample_rate: 8000,
        frame_length: 256,
        n_fft: 256,
        hop_length: 80,
        n_mel_filters: 26,
        n_coefficients: 13,
        ..MfccConfig::default()
    }
    .with_clip_seconds(0.25);
    assert_eq!(cfg.target_frames, 26);
    let samples = test_signal(1500, 8000.0, &[(500.0, 0.5)], 0.1, 9);
    assert!(max_abs_diff(&cfg, samples) < 1e-9);
}
