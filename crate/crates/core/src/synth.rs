//! Synthetic six-class corpus: each class is a distinct mixture of tones and
//! band-limited noise. Laid out like the real corpus (WAV files named by
//! patient plus a diagnosis CSV) so the whole pipeline can run on it.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio_io::{self, AudioClip, AudioError};
use crate::dataset::DiagnosisLabel;
use crate::NUM_CLASSES;

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub per_class: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    /// Standard deviation of the broadband noise floor.
    pub noise_level: f64,
    /// Recordings written under an out-of-scope diagnosis.
    pub excluded: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            per_class: 60,
            seconds: 2.0,
            sample_rate: 22050,
            noise_level: 0.05,
            excluded: 2,
            seed: 0,
        }
    }
}

struct Recipe {
    tones: &'static [f64],
    /// Center of the resonant noise band, Hz; 0 for none.
    band: f64,
    tremolo: f64,
}

const RECIPES: [Recipe; NUM_CLASSES] = [
    Recipe { tones: &[220.0], band: 3000.0, tremolo: 0.0 },
    Recipe { tones: &[440.0, 660.0], band: 0.0, tremolo: 3.0 },
    Recipe { tones: &[150.0], band: 300.0, tremolo: 0.0 },
    Recipe { tones: &[], band: 800.0, tremolo: 0.0 },
    Recipe { tones: &[1200.0], band: 5000.0, tremolo: 5.0 },
    Recipe { tones: &[330.0, 2000.0], band: 1500.0, tremolo: 0.0 },
];

const BAND_RMS: f64 = 0.15;

/// White noise through a two-pole resonator at `center` Hz, scaled to
/// `BAND_RMS`.
fn band_noise(n: usize, center: f64, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let r: f64 = 0.98;
    let a1 = 2.0 * r * (TAU * center / sr).cos();
    let a2 = -r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let y = rng.random_range(-1.0..1.0) + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= BAND_RMS / rms);
    }
    out
}

/// One recording of `class`. `index` varies pitch jitter, phases and noise.
pub fn generate_clip(class: usize, index: usize, spec: &SynthSpec) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((class as u64) << 32) ^ index as u64);
    let recipe = &RECIPES[class];
    let n = (spec.seconds * spec.sample_rate as f64).round() as usize;
    let sr = spec.sample_rate as f64;
    let jitter = 1.0 + rng.random_range(-0.03..0.03);
    let phases: Vec<f64> = recipe.tones.iter().map(|_| rng.random_range(0.0..TAU)).collect();
    let gain = rng.random_range(0.6..1.0);
    let floor = Normal::new(0.0, spec.noise_level).expect("valid noise level");
    let band = if recipe.band > 0.0 {
        band_noise(n, recipe.band * jitter, sr, &mut rng)
    } else {
        vec![0.0; n]
    };

    let mut out = Vec::with_capacity(n);
    for (i, b) in band.into_iter().enumerate() {
        let t = i as f64 / sr;
        let mut v: f64 = recipe
            .tones
            .iter()
            .zip(&phases)
            .map(|(f, ph)| 0.3 * (TAU * f * jitter * t + ph).sin())
            .sum();
        if recipe.tremolo > 0.0 {
            v *= 0.6 + 0.4 * (TAU * recipe.tremolo * t).sin();
        }
        v = gain * (v + b) + floor.sample(&mut rng);
        out.push(v.clamp(-1.0, 1.0));
    }
    AudioClip::new(out, spec.sample_rate)
}

pub struct SynthCorpus {
    pub audio_dir: PathBuf,
    pub diagnosis_csv: PathBuf,
    pub recordings: usize,
}

/// Write the corpus under `root/audio` plus `root/diagnosis.csv`. Every
/// recording gets its own patient id.
pub fn write_corpus(root: &Path, spec: &SynthSpec) -> Result<SynthCorpus, AudioError> {
    let audio_dir = root.join("audio");
    fs::create_dir_all(&audio_dir)?;
    let mut csv = String::new();
    let mut count = 0;
    let mut emit = |patient: u32, diagnosis: &str, clip: &AudioClip| -> Result<(), AudioError> {
        let stem = format!("{patient}_1b1_Tc_sc_Synth");
        audio_io::write_wav(audio_dir.join(format!("{stem}.wav")), clip)?;
        let _ = writeln!(csv, "{patient},{diagnosis}");
        count += 1;
        Ok(())
    };
    for class in DiagnosisLabel::ALL {
        for i in 0..spec.per_class {
            let patient = 1000 * (class.class_id() as u32 + 1) + i as u32;
            emit(patient, class.name(), &generate_clip(class.class_id(), i, spec))?;
        }
    }
    for i in 0..spec.excluded {
        emit(9000 + i as u32, "Asthma", &generate_clip(0, 10_000 + i, spec))?;
    }
    let diagnosis_csv = root.join("diagnosis.csv");
    fs::write(&diagnosis_csv, csv)?;
    Ok(SynthCorpus {
        audio_dir,
        diagnosis_csv,
        recordings: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clips_are_deterministic_and_bounded() {
        let spec = SynthSpec {
            seconds: 0.1,
            ..SynthSpec::default()
        };
        for c in 0..NUM_CLASSES {
            let a = generate_clip(c, 3, &spec);
            assert_eq!(a, generate_clip(c, 3, &spec));
            assert_ne!(a, generate_clip(c, 4, &spec));
            assert_eq!(a.samples.len(), 2205);
            assert!(a.samples.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
