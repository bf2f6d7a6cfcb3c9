//! Per-chunk content descriptions.
//!
//! Real deployments attach transcripts, language tags, speech/gender
//! timelines and music proportions produced by external tools; those arrive
//! as JSON sidecar files, one per chunk. The baseline detectors in this
//! module are deliberately simple signal-processing proxies (log-energy VAD,
//! spectral-flatness music scoring) so the pipeline runs end-to-end without
//! any external model; they are stand-ins, not reimplementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::CHUNK_SECONDS;

#[derive(Debug, Error)]
pub enum DescribeError {
    #[error("sidecar schema violation: {0}")]
    SchemaViolation(String),
    #[error("music proportions sum to {0}, outside 1 ± 1e-3")]
    ProportionSumError(f64),
    #[error("overlapping speech segments: {0}")]
    OverlappingSegments(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub start: f64,
    pub end: f64,
    pub gender: Gender,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusicProps {
    pub no: f64,
    pub bg: f64,
    pub fg: f64,
}

impl MusicProps {
    pub fn sum(&self) -> f64 {
        self.no + self.bg + self.fg
    }
}

/// Everything the pipeline knows about one chunk's content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub language: String,
    pub transcript: String,
    pub speech_segments: Vec<SpeechSegment>,
    pub music_props: MusicProps,
}

/// Labels derived from an Annotation by the corpus heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContentFlags {
    pub has_music: bool,
    pub is_speech: bool,
}

impl Annotation {
    /// A silence annotation: no speech, no music, nothing known.
    pub fn silence() -> Self {
        Annotation {
            language: "unknown".into(),
            transcript: String::new(),
            speech_segments: Vec::new(),
            music_props: MusicProps { no: 1.0, bg: 0.0, fg: 0.0 },
        }
    }

    /// Validate invariants and normalize: proportions renormalized when the
    /// sum is within 1e-3 of 1, segments sorted by start time.
    pub fn validated(mut self) -> Result<Self, DescribeError> {
        for v in [self.music_props.no, self.music_props.bg, self.music_props.fg] {
            if !v.is_finite() || v < 0.0 {
                return Err(DescribeError::SchemaViolation(format!(
                    "music proportion {v} out of range"
                )));
            }
        }
        let sum = self.music_props.sum();
        if (sum - 1.0).abs() > 1e-3 {
            return Err(DescribeError::ProportionSumError(sum));
        }
        self.music_props.no /= sum;
        self.music_props.bg /= sum;
        self.music_props.fg /= sum;

        if self.language.is_empty() {
            return Err(DescribeError::SchemaViolation("empty language tag".into()));
        }
        for s in &self.speech_segments {
            if !(s.start.is_finite() && s.end.is_finite() && s.start < s.end) {
                return Err(DescribeError::SchemaViolation(format!(
                    "segment [{}, {}] must satisfy start < end",
                    s.start, s.end
                )));
            }
            if s.start < 0.0 || s.end > CHUNK_SECONDS + 1e-9 {
                return Err(DescribeError::SchemaViolation(format!(
                    "segment [{}, {}] outside [0, {CHUNK_SECONDS}]",
                    s.start, s.end
                )));
            }
        }
        self.speech_segments
            .sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap().then(a.end.partial_cmp(&b.end).unwrap()));
        for pair in self.speech_segments.windows(2) {
            if pair[1].start < pair[0].end - 1e-9 {
                return Err(DescribeError::OverlappingSegments(format!(
                    "[{}, {}] and [{}, {}]",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        Ok(self)
    }

    pub fn total_speech_seconds(&self) -> f64 {
        // fold, not sum: the empty sum is -0.0, which leaks into reports.
        self.speech_segments.iter().map(|s| s.end - s.start).fold(0.0, |a, w| a + w)
    }
}

/// Parse and validate one sidecar document.
pub fn ingest_sidecar(path: &Path) -> Result<Annotation, DescribeError> {
    let text = fs::read_to_string(path)?;
    let raw: Annotation = serde_json::from_str(&text)
        .map_err(|e| DescribeError::SchemaViolation(e.to_string()))?;
    raw.validated()
}

/// Serialize an annotation to sidecar JSON.
pub fn render_sidecar(a: &Annotation) -> String {
    let mut s = serde_json::to_string_pretty(a).expect("annotation serializes");
    s.push('\n');
    s
}

pub fn write_sidecar(path: &Path, a: &Annotation) -> Result<(), DescribeError> {
    fs::write(path, render_sidecar(a))?;
    Ok(())
}

/// Load every `<chunk_id>.json` in a directory into an id -> Annotation map.
pub fn ingest_sidecar_dir(dir: &Path) -> Result<BTreeMap<String, Annotation>, DescribeError> {
    let mut map = BTreeMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| DescribeError::SchemaViolation(format!("bad sidecar name {path:?}")))?
            .to_string();
        map.insert(id, ingest_sidecar(&path)?);
    }
    Ok(map)
}

const VAD_FRAME_S: f64 = 0.025;
const VAD_THRESHOLD_DB: f64 = 12.0;
const VAD_HANGOVER_S: f64 = 0.3;
const ENERGY_FLOOR: f64 = 1e-12;

/// Energy-threshold voice activity detection: 25 ms frames are active when
/// their log energy exceeds the noise floor (5th percentile) by 12 dB;
/// active runs closer than 0.3 s are merged. Gender is always `unknown` —
/// this baseline has no speaker model.
pub fn baseline_vad(buf: &AudioBuffer) -> Vec<SpeechSegment> {
    let frame = ((VAD_FRAME_S * buf.sample_rate as f64).round() as usize).max(1);
    let n_frames = buf.samples.len() / frame;
    if n_frames == 0 {
        return Vec::new();
    }
    let log_e: Vec<f64> = (0..n_frames)
        .map(|i| {
            let s = &buf.samples[i * frame..(i + 1) * frame];
            let e = s.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>() / frame as f64;
            e.max(ENERGY_FLOOR).log10()
        })
        .collect();
    let mut sorted = log_e.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let floor = sorted[(n_frames - 1) * 5 / 100];
    let threshold = floor + VAD_THRESHOLD_DB / 10.0;

    let mut segments: Vec<(f64, f64)> = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=n_frames {
        let active = i < n_frames && log_e[i] > threshold;
        match (active, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(start)) => {
                let s = start as f64 * VAD_FRAME_S;
                let e = i as f64 * VAD_FRAME_S;
                match segments.last_mut() {
                    Some(last) if s - last.1 <= VAD_HANGOVER_S => last.1 = e,
                    _ => segments.push((s, e)),
                }
                run_start = None;
            }
            _ => {}
        }
    }
    segments
        .into_iter()
        .map(|(start, end)| SpeechSegment { start, end, gender: Gender::Unknown })
        .collect()
}

const MUSIC_FRAME: usize = 1024;
const FLATNESS_FG: f64 = 0.05;
const FLATNESS_BG: f64 = 0.30;

/// Spectral-flatness music scoring: frames with strongly tonal spectra
/// (flatness < 0.05) vote foreground music, mildly tonal frames
/// (0.05..0.30) background, flat frames no-music. Returns per-class frame
/// proportions (p_no, p_bg, p_fg), each a nonnegative count ratio, summing
/// to 1 up to rounding.
pub fn baseline_music_score(buf: &AudioBuffer) -> (f64, f64, f64) {
    let n_frames = buf.samples.len() / MUSIC_FRAME;
    if n_frames == 0 {
        return (1.0, 0.0, 0.0);
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(MUSIC_FRAME);
    let hann: Vec<f64> = (0..MUSIC_FRAME)
        .map(|k| {
            0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (MUSIC_FRAME - 1) as f64).cos())
        })
        .collect();

    let (mut fg, mut bg) = (0usize, 0usize);
    let mut data = vec![Complex::new(0.0f64, 0.0); MUSIC_FRAME];
    for i in 0..n_frames {
        for (k, c) in data.iter_mut().enumerate() {
            *c = Complex::new(buf.samples[i * MUSIC_FRAME + k] as f64 * hann[k], 0.0);
        }
        fft.process(&mut data);
        let bins = &data[1..MUSIC_FRAME / 2];
        let mut log_sum = 0.0;
        let mut sum = 0.0;
        for c in bins {
            let p = c.norm_sqr() + 1e-20;
            log_sum += p.ln();
            sum += p;
        }
        let n = bins.len() as f64;
        let flatness = (log_sum / n).exp() / (sum / n);
        if flatness < FLATNESS_FG {
            fg += 1;
        } else if flatness < FLATNESS_BG {
            bg += 1;
        }
    }
    let p_fg = fg as f64 / n_frames as f64;
    let p_bg = bg as f64 / n_frames as f64;
    // From the integer count: 1.0 - p_fg - p_bg can round below zero when
    // every frame is tonal.
    let p_no = (n_frames - fg - bg) as f64 / n_frames as f64;
    (p_no, p_bg, p_fg)
}

/// Corpus labeling heuristics. All comparisons are strict: a chunk has music
/// when the no-music proportion is below 0.85, and is speech when it carries
/// strictly more than 20 s of detected speech with foreground music below
/// 0.30.
pub fn label_heuristics(a: &Annotation) -> ContentFlags {
    ContentFlags {
        has_music: a.music_props.no < 0.85,
        is_speech: a.total_speech_seconds() > 20.0 && a.music_props.fg < 0.30,
    }
}

/// Gendered speaking seconds (male, female); unknown-gender segments count
/// toward neither.
pub fn speaking_time(a: &Annotation) -> (f64, f64) {
    let mut male = 0.0;
    let mut female = 0.0;
    for s in &a.speech_segments {
        match s.gender {
            Gender::Male => male += s.end - s.start,
            Gender::Female => female += s.end - s.start,
            Gender::Unknown => {}
        }
    }
    (male, female)
}
