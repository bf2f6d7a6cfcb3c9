//! The five curation stages (dedup → blocklist → chunk → describe →
//! subsample) over a resolved config, plus the append-only run ledger.
//!
//! Every stage is a pure function of its declared inputs and the config, so
//! re-running one with unchanged inputs rewrites byte-identical outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use wavesift::audio::decode_pcm;
use wavesift::corpus::{
    read_catalog, read_manifest, sample_chunks, stats_report, write_manifest, ChunkManifest,
    SourceFile,
};
use wavesift::dedup::{
    apply_blocklist, build_index, dedup_corpus, read_report_verdicts, write_report, DedupReport,
};
use wavesift::describe::{
    ingest_sidecar_dir, label_heuristics, write_sidecar, Annotation,
};
use wavesift::fingerprint::{extract, read_track, write_track, FingerprintTrack};
use wavesift::subsample::{
    build_base, build_duplicates, build_filtered, build_gender_balanced, render_subsample,
    verify_subsample, Predicate, Subsample, SubsampleName,
};

use crate::config::{DescribeMode, PipelineConfig};
use crate::fixtures::synth_annotations;
use crate::CliError;

pub const STAGE_ORDER: [&str; 5] = ["dedup", "blocklist", "chunk", "describe", "subsample"];

/// A resolved config plus its hash: everything a stage needs.
pub struct Workspace {
    pub cfg: PipelineConfig,
    pub hash: String,
}

impl Workspace {
    pub fn new(cfg: PipelineConfig, hash: String) -> Self {
        Workspace { cfg, hash }
    }

    fn work(&self) -> &Path {
        &self.cfg.paths.work
    }

    pub fn fingerprints_dir(&self) -> PathBuf {
        self.work().join("fingerprints")
    }

    pub fn eval_fingerprints_dir(&self) -> PathBuf {
        self.work().join("eval-fingerprints")
    }

    pub fn dedup_report_path(&self) -> PathBuf {
        self.work().join("dedup.tsv")
    }

    pub fn blocklist_report_path(&self) -> PathBuf {
        self.work().join("blocklist.tsv")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.work().join("chunks.tsv")
    }

    pub fn sidecars_dir(&self) -> PathBuf {
        self.work().join("sidecars")
    }

    pub fn describe_summary_path(&self) -> PathBuf {
        self.work().join("describe.tsv")
    }

    pub fn subsamples_dir(&self) -> PathBuf {
        self.work().join("subsamples")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.work().join("ledger.tsv")
    }

    pub fn stats_text_path(&self) -> PathBuf {
        self.work().join("stats.txt")
    }

    pub fn stats_kv_path(&self) -> PathBuf {
        self.work().join("stats.tsv")
    }
}

fn stage_err(e: impl std::fmt::Display) -> CliError {
    CliError::Stage(e.to_string())
}

fn io_stage(e: std::io::Error) -> CliError {
    CliError::Stage(e.to_string())
}

/// Append one `stage status config_hash detail` line. The ledger is never
/// rewritten; a fresh run directory accumulates exactly one line per stage
/// execution, so outputs stay traceable to their config.
fn append_ledger(ws: &Workspace, stage: &str, status: &str, detail: &str) -> Result<(), CliError> {
    fs::create_dir_all(ws.work()).map_err(io_stage)?;
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(ws.ledger_path())
        .map_err(io_stage)?;
    writeln!(file, "{stage}\t{status}\t{}\t{detail}", ws.hash).map_err(io_stage)?;
    Ok(())
}

/// Run one named stage, recording the outcome in the ledger. Returns the
/// stage's one-line report.
pub fn run_stage(ws: &Workspace, name: &str, seed: Option<u64>) -> Result<String, CliError> {
    let result = match name {
        "dedup" => stage_dedup(ws),
        "blocklist" => stage_blocklist(ws),
        "chunk" => stage_chunk(ws, seed),
        "describe" => stage_describe(ws),
        "subsample" => stage_subsample(ws, seed),
        other => return Err(CliError::Config(format!("unknown stage {other:?}"))),
    };
    match result {
        Ok(detail) => {
            append_ledger(ws, name, "ok", &detail)?;
            log::info!("{name}: {detail}");
            Ok(detail)
        }
        Err(e) => {
            // Best effort: a failed stage should still leave a trace.
            let _ = append_ledger(ws, name, "failed", &e.to_string());
            Err(e)
        }
    }
}

/// Run `target` after all stages before it, in order.
pub fn run_through(ws: &Workspace, target: &str, seed: Option<u64>) -> Result<Vec<String>, CliError> {
    let end = STAGE_ORDER
        .iter()
        .position(|&s| s == target)
        .ok_or_else(|| CliError::Config(format!("unknown stage {target:?}")))?;
    let mut reports = Vec::with_capacity(end + 1);
    for &stage in &STAGE_ORDER[..=end] {
        reports.push(run_stage(ws, stage, seed)?);
    }
    Ok(reports)
}

/// Catalog rows with audio paths resolved against the catalog's directory.
pub fn load_catalog(ws: &Workspace) -> Result<Vec<SourceFile>, CliError> {
    let path = &ws.cfg.paths.catalog;
    if !path.is_file() {
        return Err(CliError::MissingInput(format!("source catalog {}", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut catalog = read_catalog(path).map_err(stage_err)?;
    for src in &mut catalog {
        if src.path.is_relative() {
            src.path = base.join(&src.path);
        }
    }
    Ok(catalog)
}

fn fingerprint_file(src: &SourceFile) -> Result<FingerprintTrack, CliError> {
    if !src.path.is_file() {
        return Err(CliError::MissingInput(format!("audio file {}", src.path.display())));
    }
    let buf = decode_pcm(&src.path).map_err(stage_err)?;
    extract(&buf, &src.id).map_err(stage_err)
}

/// Fingerprint every catalog source (in retention order: ascending broadcast
/// date, ties by id, so the earliest broadcast survives dedup), then remove
/// every track that repeats material already kept.
fn stage_dedup(ws: &Workspace) -> Result<String, CliError> {
    let mut catalog = load_catalog(ws)?;
    catalog.sort_by(|a, b| a.broadcast_date.cmp(&b.broadcast_date).then(a.id.cmp(&b.id)));

    let dir = ws.fingerprints_dir();
    fs::create_dir_all(&dir).map_err(io_stage)?;
    let tracks: Vec<FingerprintTrack> = catalog
        .par_iter()
        .map(|src| {
            let track = fingerprint_file(src)?;
            write_track(&dir.join(format!("{}.fpt", src.id)), &track).map_err(stage_err)?;
            Ok(track)
        })
        .collect::<Result<_, CliError>>()?;

    let report =
        dedup_corpus(&tracks, ws.cfg.dedup.min_run, ws.cfg.dedup.tol).map_err(stage_err)?;
    write_report(&ws.dedup_report_path(), &report).map_err(stage_err)?;
    Ok(format!("kept {} of {} sources", report.kept.len(), tracks.len()))
}

fn require_report(path: &Path, produced_by: &str) -> Result<(Vec<String>, Vec<String>), CliError> {
    if !path.is_file() {
        return Err(CliError::MissingInput(format!(
            "{} report {}; run the {produced_by} stage first",
            produced_by,
            path.display()
        )));
    }
    read_report_verdicts(path).map_err(stage_err)
}

/// Fingerprint the held-out evaluation recordings and drop every kept source
/// that shares a span with them.
fn stage_blocklist(ws: &Workspace) -> Result<String, CliError> {
    let (kept_ids, _) = require_report(&ws.dedup_report_path(), "dedup")?;

    let eval_dir = &ws.cfg.paths.eval_audio;
    if !eval_dir.is_dir() {
        return Err(CliError::MissingInput(format!(
            "evaluation audio directory {}",
            eval_dir.display()
        )));
    }
    let mut eval_wavs: Vec<PathBuf> = fs::read_dir(eval_dir)
        .map_err(io_stage)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("wav"))
        .collect();
    eval_wavs.sort();

    let out = ws.eval_fingerprints_dir();
    fs::create_dir_all(&out).map_err(io_stage)?;
    let eval_tracks: Vec<FingerprintTrack> = eval_wavs
        .par_iter()
        .map(|path| {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Stage(format!("unusable file name {}", path.display())))?;
            let buf = decode_pcm(path).map_err(stage_err)?;
            let track = extract(&buf, id).map_err(stage_err)?;
            write_track(&out.join(format!("{id}.fpt")), &track).map_err(stage_err)?;
            Ok(track)
        })
        .collect::<Result<_, CliError>>()?;
    let block = build_index(&eval_tracks).map_err(stage_err)?;

    let fpt_dir = ws.fingerprints_dir();
    let tracks: Vec<FingerprintTrack> = kept_ids
        .iter()
        .map(|id| {
            let path = fpt_dir.join(format!("{id}.fpt"));
            if !path.is_file() {
                return Err(CliError::MissingInput(format!(
                    "fingerprint file {}; run the dedup stage first",
                    path.display()
                )));
            }
            read_track(&path).map_err(stage_err)
        })
        .collect::<Result<_, _>>()?;

    let (kept, removed) = apply_blocklist(&block, &tracks, ws.cfg.dedup.min_run, ws.cfg.dedup.tol);
    let durations: BTreeMap<&str, f64> =
        tracks.iter().map(|t| (t.source_id.as_str(), t.duration_s())).collect();
    let total_s: f64 = durations.values().sum();
    let removed_s: f64 = removed.iter().map(|r| durations[r.source_id.as_str()]).sum();
    let report = DedupReport {
        kept,
        removed,
        removed_duration_s: removed_s,
        removed_fraction: if total_s > 0.0 { removed_s / total_s } else { 0.0 },
    };
    write_report(&ws.blocklist_report_path(), &report).map_err(stage_err)?;
    Ok(format!(
        "kept {} of {} sources against {} evaluation tracks",
        report.kept.len(),
        tracks.len(),
        eval_tracks.len()
    ))
}

/// Sample the 30 s chunk manifest from the sources that survived both
/// removal passes.
fn stage_chunk(ws: &Workspace, seed: Option<u64>) -> Result<String, CliError> {
    let (kept_ids, _) = require_report(&ws.blocklist_report_path(), "blocklist")?;
    let keep: BTreeSet<&str> = kept_ids.iter().map(|s| s.as_str()).collect();
    let catalog: Vec<SourceFile> =
        load_catalog(ws)?.into_iter().filter(|f| keep.contains(f.id.as_str())).collect();

    let seed = seed.unwrap_or(ws.cfg.chunk.seed);
    let manifest = sample_chunks(&catalog, ws.cfg.chunk.count, seed).map_err(stage_err)?;
    write_manifest(&ws.manifest_path(), &manifest).map_err(stage_err)?;
    Ok(format!("sampled {} chunks from {} sources", manifest.chunks.len(), catalog.len()))
}

fn require_manifest(ws: &Workspace) -> Result<ChunkManifest, CliError> {
    let path = ws.manifest_path();
    if !path.is_file() {
        return Err(CliError::MissingInput(format!(
            "chunk manifest {}; run the chunk stage first",
            path.display()
        )));
    }
    read_manifest(&path).map_err(stage_err)
}

fn baseline_annotation(ws: &Workspace, manifest: &ChunkManifest) -> Result<BTreeMap<String, Annotation>, CliError> {
    let catalog = load_catalog(ws)?;
    let by_id: BTreeMap<&str, &SourceFile> =
        catalog.iter().map(|f| (f.id.as_str(), f)).collect();
    let entries: Vec<(String, Annotation)> = manifest
        .chunks
        .par_iter()
        .map(|chunk| {
            let src = by_id.get(chunk.source_id.as_str()).ok_or_else(|| {
                CliError::MissingInput(format!("catalog entry for source {}", chunk.source_id))
            })?;
            let buf = decode_pcm(&src.path).map_err(stage_err)?;
            let slice = buf.slice_seconds(chunk.offset_s, chunk.duration_s);
            let (no, bg, fg) = wavesift::describe::baseline_music_score(&slice);
            let annotation = Annotation {
                language: "unknown".into(),
                transcript: String::new(),
                speech_segments: wavesift::describe::baseline_vad(&slice),
                music_props: wavesift::describe::MusicProps { no, bg, fg },
            }
            .validated()
            .map_err(stage_err)?;
            Ok((chunk.chunk_id.clone(), annotation))
        })
        .collect::<Result<_, CliError>>()?;
    Ok(entries.into_iter().collect())
}

/// Produce one sidecar per chunk (from the configured annotation source) and
/// a tab-separated content summary.
fn stage_describe(ws: &Workspace) -> Result<String, CliError> {
    let manifest = require_manifest(ws)?;

    let annotations: BTreeMap<String, Annotation> = match ws.cfg.describe.mode {
        DescribeMode::Synthetic => synth_annotations(&manifest),
        DescribeMode::Baseline => baseline_annotation(ws, &manifest)?,
        DescribeMode::Ingest => {
            let dir = &ws.cfg.describe.sidecars;
            if !dir.is_dir() {
                return Err(CliError::MissingInput(format!(
                    "sidecar directory {}",
                    dir.display()
                )));
            }
            ingest_sidecar_dir(dir).map_err(stage_err)?
        }
    };

    let missing: Vec<&str> = manifest
        .chunks
        .iter()
        .filter(|c| !annotations.contains_key(&c.chunk_id))
        .map(|c| c.chunk_id.as_str())
        .collect();
    if let Some(first) = missing.first() {
        return Err(CliError::MissingInput(format!(
            "annotations for {} chunks (first: {first})",
            missing.len()
        )));
    }

    let dir = ws.sidecars_dir();
    fs::create_dir_all(&dir).map_err(io_stage)?;
    let mut summary = String::new();
    for chunk in &manifest.chunks {
        let a = &annotations[&chunk.chunk_id];
        write_sidecar(&dir.join(format!("{}.json", chunk.chunk_id)), a).map_err(stage_err)?;
        let flags = label_heuristics(a);
        writeln!(
            summary,
            "{}\t{}\t{:.1}\t{:.2}\t{}\t{}",
            chunk.chunk_id,
            a.language,
            a.total_speech_seconds(),
            a.music_props.no,
            flags.has_music,
            flags.is_speech
        )
        .unwrap();
    }
    fs::write(ws.describe_summary_path(), summary).map_err(io_stage)?;
    Ok(format!("annotated {} chunks", manifest.chunks.len()))
}

/// Manifest joined with its sidecar annotations; the input of the subsample
/// and stats steps.
pub fn annotated_manifest(ws: &Workspace) -> Result<ChunkManifest, CliError> {
    let mut manifest = require_manifest(ws)?;
    let dir = ws.sidecars_dir();
    if !dir.is_dir() {
        return Err(CliError::MissingInput(format!(
            "chunk annotations {}; run the describe stage first",
            dir.display()
        )));
    }
    manifest.annotations = ingest_sidecar_dir(&dir).map_err(stage_err)?;
    let missing: Vec<&str> = manifest
        .chunks
        .iter()
        .filter(|c| !manifest.annotations.contains_key(&c.chunk_id))
        .map(|c| c.chunk_id.as_str())
        .collect();
    if let Some(first) = missing.first() {
        return Err(CliError::MissingInput(format!(
            "annotations for {} chunks (first: {first}); run the describe stage first",
            missing.len()
        )));
    }
    Ok(manifest)
}

/// Build and verify the six controlled subsamples.
fn stage_subsample(ws: &Workspace, seed: Option<u64>) -> Result<String, CliError> {
    let manifest = annotated_manifest(ws)?;
    let p = &ws.cfg.subsample;
    let base_seed = seed.unwrap_or(p.seed);
    let n = p.size;

    let build = |name: SubsampleName, base: Option<&Subsample>| -> Result<Subsample, CliError> {
        let seed = base_seed + name as u64;
        match name {
            SubsampleName::Base => build_base(&manifest, n, seed),
            SubsampleName::NoMusic | SubsampleName::OnlySpeech | SubsampleName::OnlyFr => {
                build_filtered(&manifest, Predicate::for_name(name).unwrap(), n, seed)
            }
            SubsampleName::Gender => build_gender_balanced(&manifest, n, seed, p.gender_target),
            SubsampleName::Duplicates => {
                build_duplicates(base.unwrap(), p.dup_fraction, p.dup_copies, seed)
            }
        }
        .map_err(stage_err)
    };

    let dir = ws.subsamples_dir();
    fs::create_dir_all(&dir).map_err(io_stage)?;
    let mut verify_log = String::new();
    let mut base = None;
    for name in SubsampleName::ALL {
        let sub = build(name, base.as_ref())?;
        let report = verify_subsample(&sub, &manifest).map_err(stage_err)?;
        write!(verify_log, "== {name} ==\n{}", report.render()).unwrap();
        if !report.all_pass() {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name.as_str())
                .collect();
            return Err(CliError::Stage(format!(
                "subsample {name} failed verification: {}",
                failed.join(", ")
            )));
        }
        fs::write(dir.join(format!("{name}.tsv")), render_subsample(&sub)).map_err(io_stage)?;
        if name == SubsampleName::Base {
            base = Some(sub);
        }
    }
    fs::write(dir.join("verify.txt"), verify_log).map_err(io_stage)?;
    Ok(format!("built {} subsamples of {} segments", SubsampleName::ALL.len(), n))
}

/// Corpus statistics over the annotated manifest, written next to the other
/// run outputs. Not a pipeline stage: it derives reports, it does not feed
/// later stages.
pub fn write_stats(ws: &Workspace) -> Result<String, CliError> {
    let manifest = annotated_manifest(ws)?;
    let report = stats_report(&manifest).map_err(stage_err)?;
    let text = report.render_text();
    fs::write(ws.stats_text_path(), &text).map_err(io_stage)?;
    fs::write(ws.stats_kv_path(), report.render_kv()).map_err(io_stage)?;
    Ok(text)
}
