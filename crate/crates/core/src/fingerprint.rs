//! Compact, corruption-robust binary hash codes over audio windows.
//!
//! One 32-bit code is emitted per hop. Each code summarizes a 1.0 s analysis
//! window: the window is split into two halves, each half is reduced to 33
//! log-spaced band energies over 300-3000 Hz, and bit `m` is the sign of the
//! time-frequency energy derivative
//! `(E2[m] - E2[m+1]) - (E1[m] - E1[m+1])`.
//!
//! Band-energy *differences* make the codes invariant to uniform gain, and
//! keeping all bands below 3 kHz makes them stable under low-pass filtering —
//! the two corruption classes the dedup stage must survive.

use std::fmt;
use std::fs;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::CANONICAL_RATE;

/// Default Hamming tolerance for code similarity: holds the low-pass
/// robustness suite together while random pairs (expected distance 16)
/// stay far outside.
pub const DEFAULT_TOL: u32 = 6;

const N_BANDS: usize = 33;
const BAND_LO_HZ: f64 = 300.0;
const BAND_HI_HZ: f64 = 3_000.0;

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("audio too short to fingerprint: {duration_s:.3} s < window {window_s:.3} s")]
    TooShort { duration_s: f64, window_s: f64 },
    #[error("buffer at {0} Hz, expected the canonical {CANONICAL_RATE} Hz")]
    NonCanonicalRate(u32),
    #[error("malformed fingerprint file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One hash code at one hop position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpCode {
    pub bits: u32,
    pub frame_index: u32,
}

/// Analysis geometry. The default window is exactly four hops, which lets
/// half-window energies be shared between overlapping codes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpParams {
    pub window_s: f64,
    pub hop_s: f64,
}

impl Default for FpParams {
    fn default() -> Self {
        FpParams { window_s: 1.0, hop_s: 0.25 }
    }
}

/// Ordered code sequence for one source file.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintTrack {
    pub source_id: String,
    pub hop_s: f64,
    pub window_s: f64,
    pub codes: Vec<FpCode>,
}

impl FingerprintTrack {
    /// Build a track from raw code words; frame indices are their positions.
    pub fn from_codes(source_id: impl Into<String>, hop_s: f64, window_s: f64, bits: Vec<u32>) -> Self {
        let codes = bits
            .into_iter()
            .enumerate()
            .map(|(i, b)| FpCode { bits: b, frame_index: i as u32 })
            .collect();
        FingerprintTrack { source_id: source_id.into(), hop_s, window_s, codes }
    }

    /// Audio duration covered by the codes.
    pub fn duration_s(&self) -> f64 {
        if self.codes.is_empty() {
            0.0
        } else {
            (self.codes.len() - 1) as f64 * self.hop_s + self.window_s
        }
    }
}

impl fmt::Display for FingerprintTrack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} codes, {:.1} s)", self.source_id, self.codes.len(), self.duration_s())
    }
}

/// Number of differing bits between two codes, 0..=32.
pub fn hamming(a: FpCode, b: FpCode) -> u32 {
    (a.bits ^ b.bits).count_ones()
}

/// True iff the codes differ in at most `tol` bits.
pub fn similar(a: FpCode, b: FpCode, tol: u32) -> bool {
    hamming(a, b) <= tol
}

/// Fingerprint `buf` with the default geometry.
pub fn extract(buf: &AudioBuffer, source_id: &str) -> Result<FingerprintTrack, FingerprintError> {
    extract_with(buf, source_id, &FpParams::default())
}

/// Fingerprint `buf` with explicit geometry.
pub fn extract_with(
    buf: &AudioBuffer,
    source_id: &str,
    params: &FpParams,
) -> Result<FingerprintTrack, FingerprintError> {
    if buf.sample_rate != CANONICAL_RATE {
        return Err(FingerprintError::NonCanonicalRate(buf.sample_rate));
    }
    let window = (params.window_s * CANONICAL_RATE as f64).round() as usize;
    let hop = (params.hop_s * CANONICAL_RATE as f64).round() as usize;
    assert!(window > 0 && hop > 0, "degenerate fingerprint geometry");
    if buf.samples.len() < window {
        return Err(FingerprintError::TooShort {
            duration_s: buf.duration_seconds(),
            window_s: params.window_s,
        });
    }

    let n_codes = (buf.samples.len() - window) / hop + 1;
    let half = window / 2;
    let analyzer = BandAnalyzer::new(half);

    let bits: Vec<u32> = if window == 4 * hop {
        // Shared grid: the second half of code i is the first half of code i+2.
        let n_halves = n_codes + 2;
        let energies: Vec<[f64; N_BANDS]> = (0..n_halves)
            .map(|g| analyzer.band_energies(&buf.samples[g * hop..g * hop + half]))
            .collect();
        (0..n_codes).map(|i| code_bits(&energies[i], &energies[i + 2])).collect()
    } else {
        (0..n_codes)
            .map(|i| {
                let start = i * hop;
                let e1 = analyzer.band_energies(&buf.samples[start..start + half]);
                let e2 = analyzer.band_energies(&buf.samples[start + half..start + window]);
                code_bits(&e1, &e2)
            })
            .collect()
    };

    Ok(FingerprintTrack::from_codes(source_id, params.hop_s, params.window_s, bits))
}

fn code_bits(e1: &[f64; N_BANDS], e2: &[f64; N_BANDS]) -> u32 {
    let mut bits = 0u32;
    for m in 0..N_BANDS - 1 {
        let d = (e2[m] - e2[m + 1]) - (e1[m] - e1[m + 1]);
        if d > 0.0 {
            bits |= 1 << m;
        }
    }
    bits
}

struct BandAnalyzer {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    fft_len: usize,
    hann: Vec<f64>,
    /// Half-open FFT bin range per band.
    band_bins: Vec<(usize, usize)>,
    input_len: usize,
}

impl BandAnalyzer {
    fn new(input_len: usize) -> Self {
        let fft_len = input_len.next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(fft_len);
        let hann: Vec<f64> = (0..input_len)
            .map(|k| {
                0.5 * (1.0
                    - (2.0 * std::f64::consts::PI * k as f64 / (input_len - 1) as f64).cos())
            })
            .collect();

        let bin_hz = CANONICAL_RATE as f64 / fft_len as f64;
        let log_step = (BAND_HI_HZ / BAND_LO_HZ).ln() / N_BANDS as f64;
        let edge = |j: usize| BAND_LO_HZ * (log_step * j as f64).exp();
        let band_bins = (0..N_BANDS)
            .map(|j| {
                let lo = (edge(j) / bin_hz).ceil() as usize;
                let hi = (edge(j + 1) / bin_hz).ceil() as usize;
                (lo, hi.max(lo + 1))
            })
            .collect();

        BandAnalyzer { fft, fft_len, hann, band_bins, input_len }
    }

    fn band_energies(&self, samples: &[f32]) -> [f64; N_BANDS] {
        debug_assert_eq!(samples.len(), self.input_len);
        let mut data = vec![Complex::new(0.0f64, 0.0); self.fft_len];
        for (k, (&s, &w)) in samples.iter().zip(&self.hann).enumerate() {
            data[k].re = s as f64 * w;
        }
        self.fft.process(&mut data);
        let mut energies = [0.0f64; N_BANDS];
        for (j, &(lo, hi)) in self.band_bins.iter().enumerate() {
            energies[j] = data[lo..hi].iter().map(|c| c.norm_sqr()).sum();
        }
        energies
    }
}

// Binary track format: magic "FPT1", hop and window as f64 LE, source id
// length-prefixed (u64 LE) UTF-8, code count u64 LE, codes as u32 LE words
// in frame order.
const MAGIC: &[u8; 4] = b"FPT1";

pub fn write_track(path: &Path, track: &FingerprintTrack) -> Result<(), FingerprintError> {
    let mut out = Vec::with_capacity(4 + 16 + 8 + track.source_id.len() + 8 + 4 * track.codes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&track.hop_s.to_le_bytes());
    out.extend_from_slice(&track.window_s.to_le_bytes());
    out.extend_from_slice(&(track.source_id.len() as u64).to_le_bytes());
    out.extend_from_slice(track.source_id.as_bytes());
    out.extend_from_slice(&(track.codes.len() as u64).to_le_bytes());
    for code in &track.codes {
        out.extend_from_slice(&code.bits.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_track(path: &Path) -> Result<FingerprintTrack, FingerprintError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], FingerprintError> {
        if *pos + n > bytes.len() {
            return Err(FingerprintError::Malformed(format!(
                "expected {n} bytes at offset {pos}, file has {}",
                bytes.len()
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4)? != MAGIC {
        return Err(FingerprintError::Malformed("bad magic".into()));
    }
    let hop_s = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let window_s = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let id_len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let source_id = std::str::from_utf8(take(&mut pos, id_len)?)
        .map_err(|_| FingerprintError::Malformed("source id is not UTF-8".into()))?
        .to_string();
    let n = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let mut bits = Vec::with_capacity(n);
    for _ in 0..n {
        bits.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
    }
    Ok(FingerprintTrack::from_codes(source_id, hop_s, window_s, bits))
}
