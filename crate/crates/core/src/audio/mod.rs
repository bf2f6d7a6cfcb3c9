//! Audio decode, resampling, synthesis and filtering.
//!
//! Everything downstream works on mono buffers at the canonical rate; this
//! module is the only place that touches sample formats or rates. All
//! operations are pure per-buffer and safe to run from many workers.

mod wav;

pub use wav::{decode_pcm, encode_pcm16, encode_pcm16_to, encode_f32, WavEncoding};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::CANONICAL_RATE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("truncated payload: {0}")]
    TruncatedPayload(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("invalid cutoff: {0} Hz for sample rate {1} Hz")]
    InvalidCutoff(f64, u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio signal, samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioBuffer { samples, sample_rate }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| s as f64 * s as f64).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    /// Sub-signal covering `[start_s, start_s + dur_s)`, clamped to the buffer.
    pub fn slice_seconds(&self, start_s: f64, dur_s: f64) -> AudioBuffer {
        let a = ((start_s * self.sample_rate as f64).round() as usize).min(self.samples.len());
        let b = (a + (dur_s * self.sample_rate as f64).round() as usize).min(self.samples.len());
        AudioBuffer::new(self.samples[a..b].to_vec(), self.sample_rate)
    }

    /// Sample-wise `ga * self + gb * other`, clamped to `[-1, 1]`.
    /// The shorter signal is treated as zero-padded.
    pub fn mix(&self, other: &AudioBuffer, ga: f32, gb: f32) -> AudioBuffer {
        assert_eq!(self.sample_rate, other.sample_rate, "mix requires equal rates");
        let n = self.samples.len().max(other.samples.len());
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.samples.get(i).copied().unwrap_or(0.0);
            let b = other.samples.get(i).copied().unwrap_or(0.0);
            out.push((ga * a + gb * b).clamp(-1.0, 1.0));
        }
        AudioBuffer::new(out, self.sample_rate)
    }

    pub fn scaled(&self, gain: f32) -> AudioBuffer {
        AudioBuffer::new(
            self.samples.iter().map(|&s| (s * gain).clamp(-1.0, 1.0)).collect(),
            self.sample_rate,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Pure sine at `freq_hz`.
    Tone,
    /// Uniform white noise in `[-0.5, 0.5]`, seeded.
    WhiteNoise,
    /// Three harmonics at `freq_hz`, `2*freq_hz`, `3*freq_hz`.
    ToneMix,
}

/// Deterministic signal description; equal specs synthesize equal buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub freq_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl SynthSpec {
    pub fn tone(freq_hz: f64, duration_s: f64) -> Self {
        SynthSpec { kind: SynthKind::Tone, freq_hz, duration_s, seed: 0, sample_rate: CANONICAL_RATE }
    }

    pub fn white_noise(duration_s: f64, seed: u64) -> Self {
        SynthSpec { kind: SynthKind::WhiteNoise, freq_hz: 0.0, duration_s, seed, sample_rate: CANONICAL_RATE }
    }

    pub fn tone_mix(freq_hz: f64, duration_s: f64) -> Self {
        SynthSpec { kind: SynthKind::ToneMix, freq_hz, duration_s, seed: 0, sample_rate: CANONICAL_RATE }
    }

    pub fn at_rate(mut self, sample_rate: u32) -> Self {
        self.sample_rate = sample_rate;
        self
    }
}

/// Synthesize the signal described by `spec`. Pure function of the spec,
/// including the seed; tones have amplitude 0.5.
pub fn synth_signal(spec: &SynthSpec) -> Result<AudioBuffer, AudioError> {
    if spec.sample_rate == 0 {
        return Err(AudioError::InvalidSpec("sample rate must be positive".into()));
    }
    if !(spec.duration_s > 0.0) {
        return Err(AudioError::InvalidSpec(format!("duration {} s must be > 0", spec.duration_s)));
    }
    let nyquist = spec.sample_rate as f64 / 2.0;
    let n = (spec.duration_s * spec.sample_rate as f64).round() as usize;
    let samples = match spec.kind {
        SynthKind::Tone => {
            if !(spec.freq_hz > 0.0 && spec.freq_hz < nyquist) {
                return Err(AudioError::InvalidSpec(format!(
                    "tone frequency {} Hz outside (0, {}) Hz",
                    spec.freq_hz, nyquist
                )));
            }
            let w = 2.0 * std::f64::consts::PI * spec.freq_hz / spec.sample_rate as f64;
            (0..n).map(|k| (0.5 * (w * k as f64).sin()) as f32).collect()
        }
        SynthKind::ToneMix => {
            if !(spec.freq_hz > 0.0 && 3.0 * spec.freq_hz < nyquist) {
                return Err(AudioError::InvalidSpec(format!(
                    "tone mix needs 3 * {} Hz below {} Hz",
                    spec.freq_hz, nyquist
                )));
            }
            let w = 2.0 * std::f64::consts::PI * spec.freq_hz / spec.sample_rate as f64;
            // Amplitudes sum to 0.5, decaying across harmonics.
            (0..n)
                .map(|k| {
                    let t = k as f64;
                    let v = 0.25 * (w * t).sin() + 0.15 * (2.0 * w * t).sin() + 0.10 * (3.0 * w * t).sin();
                    v as f32
                })
                .collect()
        }
        SynthKind::WhiteNoise => {
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            (0..n).map(|_| rng.gen_range(-0.5f32..=0.5f32)).collect()
        }
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

// Windowed-sinc kernel parameters. 64 taps (32 zero crossings per side at the
// lower of the two rates) with a Kaiser window; fixed so fingerprints stay
// reproducible across runs.
const RESAMPLE_HALF_ZC: f64 = 32.0;
const RESAMPLE_BETA: f64 = 8.6;
const RESAMPLE_ROLLOFF: f64 = 0.945;

/// Band-limited resampling to `target_rate`. Identity (bitwise) when the
/// rates already match; duration is preserved within one output sample.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    assert!(target_rate > 0, "target rate must be positive");
    if target_rate == buf.sample_rate {
        return buf.clone();
    }
    let src = buf.sample_rate as u128;
    let dst = target_rate as u128;
    let out_len = ((buf.samples.len() as u128 * dst + src / 2) / src) as usize;

    let ratio = target_rate as f64 / buf.sample_rate as f64;
    let cutoff = RESAMPLE_ROLLOFF * ratio.min(1.0);
    let half = RESAMPLE_HALF_ZC / cutoff;

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio;
        let k_lo = (t - half).ceil().max(0.0) as usize;
        let k_hi = ((t + half).floor() as usize).min(buf.samples.len().saturating_sub(1));
        let mut acc = 0.0f64;
        let mut norm = 0.0f64;
        for k in k_lo..=k_hi {
            let u = t - k as f64;
            let w = cutoff * sinc(cutoff * u) * kaiser(u / half, RESAMPLE_BETA);
            acc += w * buf.samples[k] as f64;
            norm += w;
        }
        let v = if norm.abs() > 1e-12 { acc / norm } else { 0.0 };
        out.push((v as f32).clamp(-1.0, 1.0));
    }
    AudioBuffer::new(out, target_rate)
}

const LOWPASS_TAPS: usize = 255;
const LOWPASS_BETA: f64 = 8.6;

/// FIR low-pass with delay compensation. Attenuation beyond the transition
/// band (about 2.5% of the sample rate past the cutoff) exceeds 40 dB.
pub fn lowpass(buf: &AudioBuffer, cutoff_hz: f64) -> Result<AudioBuffer, AudioError> {
    let nyquist = buf.sample_rate as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(AudioError::InvalidCutoff(cutoff_hz, buf.sample_rate));
    }
    let fc = cutoff_hz / nyquist; // in Nyquist units
    let m = (LOWPASS_TAPS - 1) / 2;
    let mut h = vec![0.0f64; LOWPASS_TAPS];
    let mut sum = 0.0f64;
    for (i, tap) in h.iter_mut().enumerate() {
        let u = i as f64 - m as f64;
        *tap = fc * sinc(fc * u) * kaiser(u / m as f64, LOWPASS_BETA);
        sum += *tap;
    }
    // Unity DC gain keeps passband tones at their input level.
    for tap in h.iter_mut() {
        *tap /= sum;
    }

    let n = buf.samples.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0f64;
        for (j, &tap) in h.iter().enumerate() {
            let k = i as isize + j as isize - m as isize;
            if k >= 0 && (k as usize) < n {
                acc += tap * buf.samples[k as usize] as f64;
            }
        }
        out.push((acc as f32).clamp(-1.0, 1.0));
    }
    Ok(AudioBuffer::new(out, buf.sample_rate))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Kaiser window on `[-1, 1]`, zero outside.
fn kaiser(u: f64, beta: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta)
}

fn bessel_i0(x: f64) -> f64 {
    // Power series; converges quickly for the argument range used here.
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let half_x = x / 2.0;
    for k in 1..64 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}
