//! Bundled synthetic corpus: thirty deterministic broadcast-style sources
//! with planted duplicates, a held-out evaluation excerpt, and an annotator
//! that stands in for pretrained describers in end-to-end runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use wavesift::audio::{encode_pcm16, lowpass, synth_signal, AudioBuffer, SynthSpec};
use wavesift::corpus::{write_catalog, ChunkManifest, SourceFile};
use wavesift::describe::{Annotation, Gender, MusicProps, SpeechSegment};

use crate::CliError;

pub const N_SOURCES: usize = 30;

const CHANNELS: [&str; 4] = ["radio1", "radio2", "tv1", "tv2"];

fn channel(i: usize) -> &'static str {
    CHANNELS[i % CHANNELS.len()]
}

/// Source dates ascend with the index, so planted copies (which always sit
/// at a higher index than their original) broadcast later and lose the
/// keep-first dedup race.
fn date(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + Days::new(37 * i as u64)
}

/// The base audio for source `i`, before planted-copy overrides. Tonal
/// tracks carry a per-source noise floor: a pure stationary tone has no
/// spectro-temporal structure for the fingerprinter, so without the floor
/// two distinct tones could hash alike.
fn base_signal(i: usize) -> Result<AudioBuffer, CliError> {
    let dur = (45 + 15 * (i % 6)) as f64;
    let noise = synth_signal(&SynthSpec::white_noise(dur, 1000 + i as u64))
        .map_err(|e| CliError::Stage(e.to_string()))?;
    let buf = match i % 3 {
        0 => noise,
        1 => {
            let tone = synth_signal(&SynthSpec::tone(420.0 + 70.0 * i as f64, dur))
                .map_err(|e| CliError::Stage(e.to_string()))?;
            tone.mix(&noise, 1.0, 0.2)
        }
        _ => {
            let mix = synth_signal(&SynthSpec::tone_mix(310.0 + 40.0 * i as f64, dur))
                .map_err(|e| CliError::Stage(e.to_string()))?;
            mix.mix(&noise, 1.0, 0.2)
        }
    };
    Ok(buf)
}

/// Write the bundled corpus under `out`: `audio/` with the thirty sources,
/// `eval/` with two held-out recordings, `catalog.tsv`, and a ready-to-run
/// `pipeline.toml`.
///
/// Planted material:
/// - `src05` is an exact rebroadcast of `src02`
/// - `src11` is a 40 s excerpt of `src07` starting at 10 s
/// - `src17` is `src09` through a 4 kHz low-pass (a bandwidth-reduced relay)
/// - `eval00` is a 40 s excerpt of `src13`, so the blocklist stage must drop
///   `src13`; `eval01` matches nothing
pub fn synth_corpus(out: &Path) -> Result<(), CliError> {
    let audio_dir = out.join("audio");
    let eval_dir = out.join("eval");
    fs::create_dir_all(&audio_dir).map_err(|e| CliError::Stage(e.to_string()))?;
    fs::create_dir_all(&eval_dir).map_err(|e| CliError::Stage(e.to_string()))?;

    let stage = |e: &dyn std::fmt::Display| CliError::Stage(e.to_string());

    let mut buffers: Vec<AudioBuffer> = Vec::with_capacity(N_SOURCES);
    for i in 0..N_SOURCES {
        let buf = match i {
            5 => buffers[2].clone(),
            11 => buffers[7].slice_seconds(10.0, 40.0),
            17 => lowpass(&buffers[9], 4_000.0).map_err(|e| stage(&e))?,
            _ => base_signal(i)?,
        };
        buffers.push(buf);
    }

    let mut catalog = Vec::with_capacity(N_SOURCES);
    for (i, buf) in buffers.iter().enumerate() {
        let id = format!("src{i:02}");
        let rel = format!("audio/{id}.wav");
        encode_pcm16(&audio_dir.join(format!("{id}.wav")), buf).map_err(|e| stage(&e))?;
        catalog.push(SourceFile {
            id,
            path: rel.into(),
            duration_s: buf.duration_seconds(),
            channel: channel(i).into(),
            broadcast_date: date(i),
        });
    }
    write_catalog(&out.join("catalog.tsv"), &catalog).map_err(|e| stage(&e))?;

    let eval00 = buffers[13].slice_seconds(10.0, 40.0);
    let eval01 = synth_signal(&SynthSpec::white_noise(35.0, 9_999)).map_err(|e| stage(&e))?;
    encode_pcm16(&eval_dir.join("eval00.wav"), &eval00).map_err(|e| stage(&e))?;
    encode_pcm16(&eval_dir.join("eval01.wav"), &eval01).map_err(|e| stage(&e))?;

    fs::write(out.join("pipeline.toml"), default_pipeline_toml())
        .map_err(|e| stage(&e))?;
    Ok(())
}

/// Config tuned to the bundled corpus; paths are relative to the config
/// file, so the directory is relocatable.
pub fn default_pipeline_toml() -> String {
    "\
[paths]
work = \"work\"
catalog = \"catalog.tsv\"
eval_audio = \"eval\"

[dedup]
min_run = 4
tol = 6

[chunk]
count = 56
seed = 11

[describe]
mode = \"synthetic\"

[subsample]
size = 12
seed = 40
dup_fraction = 0.25
dup_copies = 3
gender_target = 0.5
"
    .to_string()
}

/// Deterministic annotation for the chunk at position `i` of the sorted
/// manifest. The schedule mixes languages, music levels, speech loads and
/// gender orders so every subsample builder has a non-trivial pool.
pub fn synth_annotation(i: usize) -> Annotation {
    let language = if i % 2 == 0 { "fr" } else { "en" };
    let music_props = if i % 3 == 0 {
        MusicProps { no: 0.55, bg: 0.40, fg: 0.05 }
    } else {
        MusicProps { no: 0.95, bg: 0.03, fg: 0.02 }
    };

    let mut speech_segments = Vec::new();
    let mut transcript = String::new();
    if i % 3 != 1 {
        let split = (8 + i % 7) as f64;
        let (g1, g2) = if i % 4 < 2 {
            (Gender::Female, Gender::Male)
        } else {
            (Gender::Male, Gender::Female)
        };
        speech_segments.push(SpeechSegment { start: 0.5, end: 0.5 + split, gender: g1 });
        speech_segments.push(SpeechSegment { start: 1.5 + split, end: 26.5, gender: g2 });
        write!(
            transcript,
            "bulletin {i} en direct suivi du point meteo et des titres de la redaction"
        )
        .unwrap();
    }

    Annotation {
        language: language.into(),
        transcript,
        speech_segments,
        music_props,
    }
    .validated()
    .expect("fixture annotation is valid")
}

/// Annotations for every chunk of a manifest, keyed by chunk id, indexed in
/// manifest order.
pub fn synth_annotations(
    manifest: &ChunkManifest,
) -> std::collections::BTreeMap<String, Annotation> {
    manifest
        .chunks
        .iter()
        .enumerate()
        .map(|(i, c)| (c.chunk_id.clone(), synth_annotation(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use wavesift::describe::label_heuristics;

    #[test]
    fn dates_ascend_with_the_index() {
        for i in 1..N_SOURCES {
            assert!(date(i) > date(i - 1), "{} !> {}", date(i), date(i - 1));
        }
        assert_eq!(date(0).to_string(), "2010-01-01");
        assert_eq!(date(1).to_string(), "2010-02-07");
    }

    #[test]
    fn annotation_schedule_covers_every_pool() {
        let flags: Vec<_> = (0..56).map(|i| (synth_annotation(i), i)).collect();
        let speech = flags.iter().filter(|(a, _)| label_heuristics(a).is_speech).count();
        let music = flags.iter().filter(|(a, _)| label_heuristics(a).has_music).count();
        let fr = flags.iter().filter(|(a, _)| a.language == "fr").count();
        assert!(speech >= 12, "only {speech} speech chunks");
        assert!(56 - music >= 12, "only {} music-free chunks", 56 - music);
        assert!(fr >= 12, "only {fr} french chunks");
        // Both gender orders appear, so balancing has material to work with.
        assert!(flags.iter().any(|(a, _)| a.speech_segments.first().map(|s| s.gender)
            == Some(Gender::Female)));
        assert!(flags.iter().any(|(a, _)| a.speech_segments.first().map(|s| s.gender)
            == Some(Gender::Male)));
    }

    #[test]
    fn speech_chunks_carry_twenty_five_seconds() {
        for i in [0, 2, 3, 5, 6] {
            let a = synth_annotation(i);
            if i % 3 == 1 {
                assert!(a.speech_segments.is_empty());
            } else {
                assert!((a.total_speech_seconds() - 25.0).abs() < 1e-9);
            }
        }
    }
}
