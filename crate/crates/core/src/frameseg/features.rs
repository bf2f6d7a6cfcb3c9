//! Encoder feature sequences at 50 Hz and their on-disk formats.

use std::fs;
use std::path::Path;

use crate::{FRAME_RATE, CHUNK_SECONDS};

use super::FramesegError;

/// Frames a duration occupies at the 50 Hz frame rate.
pub fn frames_for_duration(duration_s: f64) -> usize {
    (duration_s * FRAME_RATE as f64).round() as usize
}

/// A T × D feature matrix for one chunk, plus which encoder layers were
/// concatenated to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    pub chunk_id: String,
    pub t: usize,
    pub d: usize,
    /// Row-major T × D.
    pub data: Vec<f64>,
    pub layer_tags: String,
}

impl FeatureSeq {
    pub fn new(
        chunk_id: impl Into<String>,
        t: usize,
        d: usize,
        data: Vec<f64>,
        layer_tags: impl Into<String>,
    ) -> Result<Self, FramesegError> {
        if data.len() != t * d {
            return Err(FramesegError::Malformed(format!(
                "feature matrix has {} values, expected {t}×{d}",
                data.len()
            )));
        }
        Ok(FeatureSeq { chunk_id: chunk_id.into(), t, d, data, layer_tags: layer_tags.into() })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.d..(t + 1) * self.d]
    }

    /// Column means: the time-pooled D-vector.
    pub fn time_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for t in 0..self.t {
            for (m, &v) in mean.iter_mut().zip(self.row(t)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.t as f64;
        }
        mean
    }
}

/// A per-frame sequence of posteriors in [0,1] or hard labels {0,1} at the
/// 50 Hz frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub values: Vec<f64>,
}

impl FrameSeries {
    pub fn from_labels(labels: &[bool]) -> Self {
        FrameSeries { values: labels.iter().map(|&b| f64::from(u8::from(b))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hard labels by thresholding at ½.
    pub fn threshold(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > 0.5).collect()
    }
}

/// Split a feature sequence into consecutive disjoint windows; a final
/// short remainder is kept as a shorter window.
pub fn slice_features(seq: &FeatureSeq, window_s: f64) -> Vec<FeatureSeq> {
    let window_frames = frames_for_duration(window_s).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    let mut k = 0;
    while start < seq.t {
        let end = (start + window_frames).min(seq.t);
        out.push(FeatureSeq {
            chunk_id: format!("{}@{k}", seq.chunk_id),
            t: end - start,
            d: seq.d,
            data: seq.data[start * seq.d..end * seq.d].to_vec(),
            layer_tags: seq.layer_tags.clone(),
        });
        start = end;
        k += 1;
    }
    out
}

/// Same slicing for raw audio; defaults to the corpus chunk length.
pub fn slice_audio(buf: &crate::audio::AudioBuffer, window_s: f64) -> Vec<crate::audio::AudioBuffer> {
    let window = ((window_s * buf.sample_rate as f64).round() as usize).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start < buf.samples.len() {
        let end = (start + window).min(buf.samples.len());
        out.push(crate::audio::AudioBuffer::new(
            buf.samples[start..end].to_vec(),
            buf.sample_rate,
        ));
        start = end;
    }
    out
}

/// Default evaluation slicing: 30 s windows, no overlap.
pub fn default_eval_window_s() -> f64 {
    CHUNK_SECONDS
}

const MAGIC: &[u8; 4] = b"FSQ1";

pub fn write_feature_seq(path: &Path, seq: &FeatureSeq) -> Result<(), FramesegError> {
    let mut out =
        Vec::with_capacity(4 + 8 + seq.chunk_id.len() + 16 + 4 * seq.data.len() + 8 + seq.layer_tags.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(seq.chunk_id.len() as u64).to_le_bytes());
    out.extend_from_slice(seq.chunk_id.as_bytes());
    out.extend_from_slice(&(seq.t as u64).to_le_bytes());
    out.extend_from_slice(&(seq.d as u64).to_le_bytes());
    for &v in &seq.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(seq.layer_tags.len() as u64).to_le_bytes());
    out.extend_from_slice(seq.layer_tags.as_bytes());
    fs::write(path, out)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], FramesegError> {
    if *pos + n > bytes.len() {
        return Err(FramesegError::Malformed(format!(
            "expected {n} bytes at offset {pos}, file has {}",
            bytes.len()
        )));
    }
    let out = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(out)
}

fn take_u64(bytes: &[u8], pos: &mut usize) -> Result<u64, FramesegError> {
    Ok(u64::from_le_bytes(take(bytes, pos, 8)?.try_into().unwrap()))
}

fn take_string(bytes: &[u8], pos: &mut usize) -> Result<String, FramesegError> {
    let len = take_u64(bytes, pos)? as usize;
    Ok(std::str::from_utf8(take(bytes, pos, len)?)
        .map_err(|_| FramesegError::Malformed("string field is not UTF-8".into()))?
        .to_string())
}

pub fn read_feature_seq(path: &Path) -> Result<FeatureSeq, FramesegError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    if take(&bytes, &mut pos, 4)? != MAGIC {
        return Err(FramesegError::Malformed("bad magic".into()));
    }
    let chunk_id = take_string(&bytes, &mut pos)?;
    let t = take_u64(&bytes, &mut pos)? as usize;
    let d = take_u64(&bytes, &mut pos)? as usize;
    let n = t
        .checked_mul(d)
        .filter(|&n| n <= bytes.len() / 4 + 1)
        .ok_or_else(|| FramesegError::Malformed(format!("implausible shape {t}×{d}")))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(f32::from_le_bytes(take(&bytes, &mut pos, 4)?.try_into().unwrap()) as f64);
    }
    let layer_tags = take_string(&bytes, &mut pos)?;
    FeatureSeq::new(chunk_id, t, d, data, layer_tags)
}

/// Label file: length-prefixed chunk id, frame count, then one byte per
/// frame, each 0 or 1.
pub fn write_label_file(path: &Path, chunk_id: &str, labels: &[bool]) -> Result<(), FramesegError> {
    let mut out = Vec::with_capacity(8 + chunk_id.len() + 8 + labels.len());
    out.extend_from_slice(&(chunk_id.len() as u64).to_le_bytes());
    out.extend_from_slice(chunk_id.as_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    out.extend(labels.iter().map(|&b| u8::from(b)));
    fs::write(path, out)?;
    Ok(())
}

pub fn read_label_file(path: &Path) -> Result<(String, Vec<bool>), FramesegError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let chunk_id = take_string(&bytes, &mut pos)?;
    let t = take_u64(&bytes, &mut pos)? as usize;
    let raw = take(&bytes, &mut pos, t)?;
    let mut labels = Vec::with_capacity(t);
    for &b in raw {
        match b {
            0 => labels.push(false),
            1 => labels.push(true),
            other => {
                return Err(FramesegError::Malformed(format!("label byte {other} is not 0/1")))
            }
        }
    }
    Ok((chunk_id, labels))
}
