//! WAV decoding and sample-rate conversion.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Rate every clip is brought to before feature extraction. With a 512-sample
/// hop, a 20 s clip at this rate yields exactly 862 frames.
pub const WORKING_SAMPLE_RATE: u32 = 22050;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("WAV file contains no audio frames")]
    EmptyAudio,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono waveform with amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug)]
enum SampleFormat {
    Int { bits: u16 },
    Float32,
}

struct Format {
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    sample: SampleFormat,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Read a WAV file from disk.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes)
}

/// Decode an in-memory RIFF/WAVE image. Multi-channel audio is averaged to
/// mono; integer samples are divided by the format's maximum magnitude.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader("missing RIFF/WAVE magic".into()));
    }
    let riff_len = read_u32(bytes, 4) as usize;
    if riff_len + 8 > bytes.len() || riff_len < 4 {
        return Err(AudioError::MalformedHeader(format!(
            "RIFF size {riff_len} does not fit a {}-byte file",
            bytes.len()
        )));
    }
    let end = riff_len + 8;

    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= end {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= end)
            .ok_or_else(|| {
                AudioError::MalformedHeader(format!(
                    "chunk {:?} of {size} bytes overruns the file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let format = format.ok_or_else(|| AudioError::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedHeader("no data chunk".into()))?;

    let frame_bytes = format.block_align as usize;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(AudioError::EmptyAudio);
    }

    let channels = format.channels as usize;
    let bytes_per_sample = frame_bytes / channels;
    let mut samples = Vec::with_capacity(frames);
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0;
        for ch in 0..channels {
            let raw = &frame[ch * bytes_per_sample..(ch + 1) * bytes_per_sample];
            acc += decode_sample(raw, format.sample);
        }
        samples.push(acc / channels as f64);
    }
    Ok(AudioClip::new(samples, format.sample_rate))
}

fn parse_fmt(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::MalformedHeader(format!(
            "fmt chunk is {} bytes, need at least 16",
            body.len()
        )));
    }
    let mut tag = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let block_align = read_u16(body, 12);
    let bits = read_u16(body, 14);

    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(AudioError::MalformedHeader(
                "truncated WAVE_FORMAT_EXTENSIBLE fmt chunk".into(),
            ));
        }
        // first two bytes of the sub-format GUID carry the plain format code
        tag = read_u16(body, 24);
    }
    if channels == 0 || sample_rate == 0 {
        return Err(AudioError::MalformedHeader(format!(
            "{channels} channels at {sample_rate} Hz"
        )));
    }
    let sample = match (tag, bits) {
        (FORMAT_PCM, 8 | 16 | 24 | 32) => SampleFormat::Int { bits },
        (FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float32,
        (FORMAT_PCM | FORMAT_IEEE_FLOAT, _) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format {tag} with {bits} bits per sample"
            )))
        }
        _ => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format code {tag:#06x}"
            )))
        }
    };
    let expected_align = channels as usize * (bits as usize / 8);
    if block_align as usize != expected_align {
        return Err(AudioError::MalformedHeader(format!(
            "block align {block_align}, expected {expected_align}"
        )));
    }
    Ok(Format {
        channels,
        sample_rate,
        block_align,
        sample,
    })
}

fn decode_sample(raw: &[u8], format: SampleFormat) -> f64 {
    match format {
        // 8-bit PCM is unsigned with a 128 midpoint
        SampleFormat::Int { bits: 8 } => (raw[0] as f64 - 128.0) / 128.0,
        SampleFormat::Int { bits: 16 } => i16::from_le_bytes([raw[0], raw[1]]) as f64 / 32768.0,
        SampleFormat::Int { bits: 24 } => {
            let v = i32::from_le_bytes([0, raw[0], raw[1], raw[2]]) >> 8;
            v as f64 / 8_388_608.0
        }
        SampleFormat::Int { .. } => {
            i32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64 / 2_147_483_648.0
        }
        SampleFormat::Float32 => {
            let v = f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64;
            if v.is_finite() {
                v.clamp(-1.0, 1.0)
            } else {
                0.0
            }
        }
    }
}

/// Encode interleaved frames as a 16-bit PCM WAV image.
pub fn encode_wav_pcm16(channels: &[&[f64]], sample_rate: u32) -> Vec<u8> {
    assert!(!channels.is_empty());
    let n_ch = channels.len();
    let frames = channels[0].len();
    let data_len = frames * n_ch * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * n_ch as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(n_ch as u16 * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..frames {
        for ch in channels {
            let v = (ch[i].clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Write a mono clip as 16-bit PCM.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), AudioError> {
    fs::write(path, encode_wav_pcm16(&[&clip.samples], clip.sample_rate))?;
    Ok(())
}

/// Linear-interpolation resampling. Output length is the input length scaled
/// by the rate ratio, rounded to the nearest sample.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate || clip.samples.is_empty() {
        return AudioClip::new(clip.samples.clone(), target_rate);
    }
    let n_in = clip.samples.len();
    let n_out = ((n_in as f64 * target_rate as f64 / clip.sample_rate as f64).round() as usize).max(1);
    let step = clip.sample_rate as f64 / target_rate as f64;
    let last = n_in - 1;
    let samples = (0..n_out)
        .map(|j| {
            let pos = j as f64 * step;
            let i = pos.floor() as usize;
            if i >= last {
                return clip.samples[last];
            }
            let frac = pos - i as f64;
            let (a, b) = (clip.samples[i], clip.samples[i + 1]);
            if frac == 0.0 {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect();
    AudioClip::new(samples, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_with(tag: u16, channels: u16, bits: u16, rate: u32, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        let align = channels * bits / 8;
        out.extend_from_slice(&(rate * align as u32).to_le_bytes());
        out.extend_from_slice(&align.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn single_pcm16_sample() {
        let clip = decode_wav(&wav_with(1, 1, 16, 44100, &16384i16.to_le_bytes())).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
        assert_eq!(clip.sample_rate, 44100);
    }

    #[test]
    fn stereo_float_averaged() {
        let mut data = Vec::new();
        data.extend_from_slice(&0.2f32.to_le_bytes());
        data.extend_from_slice(&0.6f32.to_le_bytes());
        let clip = decode_wav(&wav_with(3, 2, 32, 8000, &data)).unwrap();
        assert!((clip.samples[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn integer_widths() {
        let clip = decode_wav(&wav_with(1, 1, 8, 8000, &[0, 128, 255])).unwrap();
        assert_eq!(clip.samples, vec![-1.0, 0.0, 127.0 / 128.0]);

        let v: i32 = -4_194_304; // -0.5 in 24-bit
        let b = v.to_le_bytes();
        let clip = decode_wav(&wav_with(1, 1, 24, 8000, &b[..3])).unwrap();
        assert_eq!(clip.samples, vec![-0.5]);

        let clip = decode_wav(&wav_with(1, 1, 32, 8000, &i32::MIN.to_le_bytes())).unwrap();
        assert_eq!(clip.samples, vec![-1.0]);
    }

    #[test]
    fn empty_data_chunk() {
        assert!(matches!(
            decode_wav(&wav_with(1, 1, 16, 8000, &[])),
            Err(AudioError::EmptyAudio)
        ));
    }

    #[test]
    fn rejects_bad_magic_and_overruns() {
        let mut bytes = wav_with(1, 1, 16, 8000, &[0, 0]);
        bytes[0] = b'X';
        assert!(matches!(decode_wav(&bytes), Err(AudioError::MalformedHeader(_))));

        let mut bytes = wav_with(1, 1, 16, 8000, &[0, 0]);
        let n = bytes.len();
        bytes[n - 6..n - 2].copy_from_slice(&1000u32.to_le_bytes());
        assert!(matches!(decode_wav(&bytes), Err(AudioError::MalformedHeader(_))));
    }

    #[test]
    fn rejects_compressed() {
        // 0x0055 is MPEG layer 3
        let bytes = wav_with(0x55, 1, 16, 8000, &[0, 0]);
        assert!(matches!(decode_wav(&bytes), Err(AudioError::UnsupportedEncoding(_))));
        let bytes = wav_with(3, 1, 16, 8000, &[0, 0]);
        assert!(matches!(decode_wav(&bytes), Err(AudioError::UnsupportedEncoding(_))));
    }

    #[test]
    fn skips_unknown_and_odd_chunks() {
        let mut bytes = wav_with(1, 1, 16, 8000, &1000i16.to_le_bytes());
        // splice a 3-byte LIST chunk (plus pad byte) before fmt
        let extra = [b'L', b'I', b'S', b'T', 3, 0, 0, 0, 1, 2, 3, 0];
        bytes.splice(12..12, extra);
        let len = (bytes.len() - 8) as u32;
        bytes[4..8].copy_from_slice(&len.to_le_bytes());
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples, vec![1000.0 / 32768.0]);
    }

    #[test]
    fn pcm16_encode_decode() {
        let clip = AudioClip::new(vec![0.0, 0.25, -0.5, 0.999], 16000);
        let back = decode_wav(&encode_wav_pcm16(&[&clip.samples], 16000)).unwrap();
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn resample_identity() {
        let clip = AudioClip::new(vec![0.1, -0.2, 0.3], 22050);
        assert_eq!(resample(&clip, 22050), clip);
    }

    #[test]
    fn resample_preserves_duration() {
        let clip = AudioClip::new(vec![0.0; 4000], 4000);
        let out = resample(&clip, 8000);
        assert!((out.samples.len() as i64 - 8000).abs() <= 1);
        assert_eq!(out.sample_rate, 8000);
    }

    #[test]
    fn resample_constant() {
        let clip = AudioClip::new(vec![0.3; 1234], 11025);
        for rate in [4000, 22050, 44100] {
            let out = resample(&clip, rate);
            assert!(out.samples.iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
    }
}
