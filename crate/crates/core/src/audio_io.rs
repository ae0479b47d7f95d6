//! PCM WAV input/output and noise mixing.
//!
//! Only 16-bit integer PCM is accepted on input. Multi-channel files are
//! folded to mono by averaging the channels of each frame. Output is always
//! 16-bit mono.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

const PCM16_SCALE: f64 = 32768.0;
const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("no such file: {0}")]
    NotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a RIFF/WAVE file")]
    NotWave,
    #[error("unsupported WAV format (format tag {format_tag}, {bits} bits per sample); only 16-bit PCM is supported")]
    UnsupportedFormat { format_tag: u16, bits: u16 },
    #[error("truncated RIFF chunk `{0}`")]
    Truncated(String),
    #[error("malformed WAV: {0}")]
    Malformed(&'static str),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("noise ({noise} samples) is shorter than the clean signal ({clean} samples)")]
    NoiseTooShort { clean: usize, noise: usize },
    #[error("{0} signal has zero power")]
    ZeroPower(&'static str),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// A mono signal with its sampling rate. Samples nominally lie in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Mean squared amplitude.
pub fn power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// Global SNR in dB of `noisy` measured against `clean`.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let n = clean.len().min(noisy.len());
    let signal: f64 = clean[..n].iter().map(|s| s * s).sum();
    let noise: f64 = clean[..n]
        .iter()
        .zip(&noisy[..n])
        .map(|(c, y)| (y - c) * (y - c))
        .sum();
    10.0 * (signal / noise).log10()
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(AudioError::Truncated("fmt ".into()));
    }
    let mut format_tag = le_u16(&body[0..2]);
    let bits = le_u16(&body[14..16]);
    if format_tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) subformat GUID(16)
        if body.len() < 40 {
            return Err(AudioError::Truncated("fmt ".into()));
        }
        format_tag = le_u16(&body[24..26]);
    }
    Ok(FmtChunk {
        format_tag,
        channels: le_u16(&body[2..4]),
        sample_rate: le_u32(&body[4..8]),
        bits,
    })
}

/// Decodes an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        if bytes.len() >= 4 && &bytes[0..4] == b"RIFF" && bytes.len() < 12 {
            return Err(AudioError::Truncated("RIFF".into()));
        }
        return Err(AudioError::NotWave);
    }
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Err(AudioError::Truncated("chunk header".into()));
        }
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes[pos + 4..pos + 8]) as usize;
        let name = String::from_utf8_lossy(id).into_owned();
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or(AudioError::Truncated(name))?;
        match id {
            b"fmt " => fmt = Some(parse_fmt(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let fmt = fmt.ok_or(AudioError::Malformed("missing fmt chunk"))?;
    let data = data.ok_or(AudioError::Malformed("missing data chunk"))?;
    if fmt.format_tag != WAVE_FORMAT_PCM || fmt.bits != 16 {
        return Err(AudioError::UnsupportedFormat {
            format_tag: fmt.format_tag,
            bits: fmt.bits,
        });
    }
    if fmt.channels == 0 {
        return Err(AudioError::Malformed("zero channels"));
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::Malformed("zero sample rate"));
    }
    let block = 2 * fmt.channels as usize;
    if data.len() % block != 0 {
        return Err(AudioError::Truncated("data".into()));
    }
    let channels = fmt.channels as f64;
    let samples: Vec<f64> = data
        .chunks_exact(block)
        .map(|frame| {
            let sum: f64 = frame
                .chunks_exact(2)
                .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / PCM16_SCALE)
                .sum();
            sum / channels
        })
        .collect();
    if samples.is_empty() {
        return Err(AudioError::Malformed("no samples"));
    }
    Ok(AudioBuffer::new(samples, fmt.sample_rate))
}

/// Reads a 16-bit PCM WAV file and folds it to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            AudioError::NotFound(path.to_path_buf())
        } else {
            AudioError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    decode_wav(&bytes)
}

/// Quantizes one sample to PCM16, clamping to the representable range.
pub fn quantize(sample: f64) -> i16 {
    let max = 1.0 - 1.0 / PCM16_SCALE;
    (sample.clamp(-1.0, max) * PCM16_SCALE).round() as i16
}

/// Encodes a buffer as a 16-bit mono RIFF/WAVE image.
pub fn encode_wav(buf: &AudioBuffer) -> Result<Vec<u8>> {
    if let Some(i) = buf.samples.iter().position(|s| !s.is_finite()) {
        return Err(AudioError::NonFinite(i));
    }
    let data_len = buf.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buf.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(out)
}

/// Writes a 16-bit mono PCM WAV file.
pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(buf)?;
    fs::write(path, bytes).map_err(|e| AudioError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Gain applied to `noise` so that `clean + gain * noise` has the requested
/// global SNR. Both slices must already have the same length.
pub fn snr_gain(clean: &[f64], noise: &[f64], snr_db: f64) -> Result<f64> {
    let p_clean = power(clean);
    let p_noise = power(noise);
    if p_clean <= 0.0 {
        return Err(AudioError::ZeroPower("clean"));
    }
    if p_noise <= 0.0 {
        return Err(AudioError::ZeroPower("noise"));
    }
    Ok((p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// Adds `noise` (truncated to the clean length) to `clean` at `snr_db`.
pub fn mix_at_snr(clean: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    if clean.sample_rate_hz != noise.sample_rate_hz {
        return Err(AudioError::SampleRateMismatch(
            clean.sample_rate_hz,
            noise.sample_rate_hz,
        ));
    }
    if noise.len() < clean.len() {
        return Err(AudioError::NoiseTooShort {
            clean: clean.len(),
            noise: noise.len(),
        });
    }
    let noise = &noise.samples[..clean.len()];
    let gain = snr_gain(&clean.samples, noise, snr_db)?;
    let samples = clean
        .samples
        .iter()
        .zip(noise)
        .map(|(c, n)| c + gain * n)
        .collect();
    Ok(AudioBuffer::new(samples, clean.sample_rate_hz))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm_image(channels: u16, format_tag: u16, bits: u16, samples: &[i16]) -> Vec<u8> {
        let data_len = samples.len() * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format_tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&8000u32.to_le_bytes());
        out.extend_from_slice(&(8000u32 * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn decodes_scaled_samples() {
        let buf = decode_wav(&pcm_image(1, 1, 16, &[0, 16384, -32768])).unwrap();
        assert_eq!(buf.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(buf.sample_rate_hz, 8000);
    }

    #[test]
    fn stereo_is_averaged() {
        let buf = decode_wav(&pcm_image(2, 1, 16, &[16384, 0])).unwrap();
        assert_eq!(buf.samples, vec![0.25]);
        // channels [1.0, 0.0] are only representable as [32767/32768, 0]
        let buf = decode_wav(&pcm_image(2, 1, 16, &[-32768, 0])).unwrap();
        assert_eq!(buf.samples, vec![-0.5]);
    }

    #[test]
    fn float_wav_is_unsupported() {
        let err = decode_wav(&pcm_image(1, 3, 8, &[0, 0])).unwrap_err();
        assert!(matches!(err, AudioError::UnsupportedFormat { format_tag: 3, bits: 8 }));
        let err = decode_wav(&pcm_image(1, 1, 24, &[0, 0])).unwrap_err();
        assert!(matches!(err, AudioError::UnsupportedFormat { bits: 24, .. }));
    }

    #[test]
    fn truncated_data_chunk() {
        let mut img = pcm_image(1, 1, 16, &[1, 2, 3, 4]);
        img.truncate(img.len() - 3);
        assert!(matches!(decode_wav(&img), Err(AudioError::Truncated(c)) if c == "data"));
    }

    #[test]
    fn missing_file_is_distinct() {
        let err = read_wav("/nonexistent/definitely/missing.wav").unwrap_err();
        assert!(matches!(err, AudioError::NotFound(_)));
    }

    #[test]
    fn not_riff() {
        assert!(matches!(decode_wav(b"hello world, not a wav"), Err(AudioError::NotWave)));
    }

    #[test]
    fn quantization_examples() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(2.0), 32767);
        assert_eq!(quantize(-1.0), -32768);
        assert_eq!(quantize(-7.0), -32768);
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let buf = AudioBuffer::new(vec![0.0, 0.25, -0.3, 0.999, -1.0, 2.0], 16000);
        write_wav(&buf, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate_hz, 16000);
        assert_eq!(back.samples[5], 32767.0 / 32768.0);
        for (a, b) in buf.samples.iter().zip(&back.samples).take(5) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn write_rejects_nan() {
        let buf = AudioBuffer::new(vec![0.0, f64::NAN], 8000);
        assert!(matches!(encode_wav(&buf), Err(AudioError::NonFinite(1))));
    }

    #[test]
    fn unwritable_path() {
        let buf = AudioBuffer::new(vec![0.0], 8000);
        let err = write_wav(&buf, "/nonexistent/dir/out.wav").unwrap_err();
        assert!(matches!(err, AudioError::Io { .. }));
    }

    #[test]
    fn equal_power_gain_is_one() {
        let clean = [1.0, -1.0, 1.0, -1.0];
        let noise = [-1.0, -1.0, 1.0, 1.0];
        assert_eq!(snr_gain(&clean, &noise, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn huge_snr_returns_clean() {
        let clean = AudioBuffer::new(vec![0.1, -0.2, 0.3, 0.05], 8000);
        let noise = AudioBuffer::new(vec![0.5, 0.5, -0.5, -0.5, 9.0], 8000);
        let mix = mix_at_snr(&clean, &noise, 300.0).unwrap();
        assert_eq!(mix.len(), 4);
        for (a, b) in mix.samples.iter().zip(&clean.samples) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mix_errors() {
        let clean = AudioBuffer::new(vec![0.1; 10], 8000);
        let short = AudioBuffer::new(vec![0.1; 5], 8000);
        let other_rate = AudioBuffer::new(vec![0.1; 10], 16000);
        let silent = AudioBuffer::new(vec![0.0; 10], 8000);
        assert!(matches!(mix_at_snr(&clean, &short, 0.0), Err(AudioError::NoiseTooShort { .. })));
        assert!(matches!(mix_at_snr(&clean, &other_rate, 0.0), Err(AudioError::SampleRateMismatch(..))));
        assert!(matches!(mix_at_snr(&clean, &silent, 0.0), Err(AudioError::ZeroPower("noise"))));
        assert!(matches!(mix_at_snr(&silent, &clean, 0.0), Err(AudioError::ZeroPower("clean"))));
    }
}
