//! RIFF/WAVE reader and writer for linear PCM (16-bit LE and IEEE float 32).
//!
//! Multi-channel files are averaged down to mono on decode; the writer exists
//! for producing test fixtures and desk-scale corpora.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioBuffer, AudioError};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Sample encodings the writer can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Decode a WAV file into a normalized mono buffer.
pub fn decode_pcm(path: &Path) -> Result<AudioBuffer, AudioError> {
    let bytes = fs::read(path)?;
    decode_bytes(&bytes)
}

fn decode_bytes(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::MalformedHeader("file shorter than RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::MalformedHeader("missing RIFF magic".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader("missing WAVE marker".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if body_start + 16 > bytes.len() || size < 16 {
                    return Err(AudioError::MalformedHeader("fmt chunk truncated".into()));
                }
                let b = &bytes[body_start..];
                let format = u16::from_le_bytes([b[0], b[1]]);
                let channels = u16::from_le_bytes([b[2], b[3]]);
                let rate = u32::from_le_bytes([b[4], b[5], b[6], b[7]]);
                let bits = u16::from_le_bytes([b[14], b[15]]);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                if body_start + size > bytes.len() {
                    return Err(AudioError::TruncatedPayload(format!(
                        "data chunk declares {size} bytes, file has {}",
                        bytes.len() - body_start
                    )));
                }
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_start + size + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| AudioError::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedHeader("no data chunk".into()))?;
    if channels == 0 {
        return Err(AudioError::MalformedHeader("zero channels".into()));
    }
    if rate == 0 {
        return Err(AudioError::MalformedHeader("zero sample rate".into()));
    }

    let samples = match (format, bits) {
        (FORMAT_PCM, 16) => {
            if data.len() % (2 * channels as usize) != 0 {
                return Err(AudioError::TruncatedPayload("partial PCM16 frame".into()));
            }
            data.chunks_exact(2 * channels as usize)
                .map(|frame| {
                    let sum: f64 = frame
                        .chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32_768.0)
                        .sum();
                    (sum / channels as f64) as f32
                })
                .collect()
        }
        (FORMAT_IEEE_FLOAT, 32) => {
            if data.len() % (4 * channels as usize) != 0 {
                return Err(AudioError::TruncatedPayload("partial float32 frame".into()));
            }
            data.chunks_exact(4 * channels as usize)
                .map(|frame| {
                    let sum: f64 = frame
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .sum();
                    ((sum / channels as f64) as f32).clamp(-1.0, 1.0)
                })
                .collect()
        }
        (f, b) => {
            return Err(AudioError::UnsupportedEncoding(format!("format {f}, {b} bits/sample")))
        }
    };
    Ok(AudioBuffer::new(samples, rate))
}

/// Write `buf` as mono 16-bit PCM.
pub fn encode_pcm16(path: &Path, buf: &AudioBuffer) -> Result<(), AudioError> {
    encode(path, buf, WavEncoding::Pcm16)
}

/// Write `buf` as mono IEEE float 32.
pub fn encode_f32(path: &Path, buf: &AudioBuffer) -> Result<(), AudioError> {
    encode(path, buf, WavEncoding::Float32)
}

/// Write `buf` with the requested encoding.
pub fn encode_pcm16_to<W: Write>(w: &mut W, buf: &AudioBuffer) -> Result<(), AudioError> {
    w.write_all(&render(buf, WavEncoding::Pcm16))?;
    Ok(())
}

fn encode(path: &Path, buf: &AudioBuffer, enc: WavEncoding) -> Result<(), AudioError> {
    fs::write(path, render(buf, enc))?;
    Ok(())
}

fn render(buf: &AudioBuffer, enc: WavEncoding) -> Vec<u8> {
    let (format, bits): (u16, u16) = match enc {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16),
        WavEncoding::Float32 => (FORMAT_IEEE_FLOAT, 32),
    };
    let bytes_per_sample = bits as usize / 8;
    let data_len = buf.samples.len() * bytes_per_sample;
    let mut out = Vec::with_capacity(44 + data_len);

    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    let byte_rate = buf.sample_rate * bytes_per_sample as u32;
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    match enc {
        WavEncoding::Pcm16 => {
            for &s in &buf.samples {
                let q = (s as f64 * 32_767.0).round().clamp(-32_768.0, 32_767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        WavEncoding::Float32 => {
            for &s in &buf.samples {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
    }
    out
}
