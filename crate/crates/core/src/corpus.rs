//! Chunk catalog: 30 s chunk sampling from source files, manifest
//! persistence, and corpus statistics.
//!
//! Chunk offsets live on a 1 s grid and never overlap within a file. The
//! sampler is exact, not rejection-based: it first distributes the requested
//! count over files by drawing a uniform subset of the corpus's
//! non-overlapping capacity slots, then draws each file's offsets uniformly
//! from all valid non-overlapping combinations via the standard gap
//! bijection, so even exact-capacity requests (a 90 s file asked for 3
//! chunks) succeed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::describe::{label_heuristics, speaking_time, Annotation};
use crate::CHUNK_SECONDS;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("requested {requested} chunks but non-overlapping capacity is {capacity}")]
    InsufficientMaterial { requested: usize, capacity: usize },
    #[error("{missing} chunks lack annotations (first: {first})")]
    MissingAnnotations { missing: usize, first: String },
    #[error("malformed catalog: {0}")]
    MalformedCatalog(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("malformed date {0:?}: expected YYYY-MM-DD or YYYY")]
    MalformedDate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One source recording in the archive catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFile {
    pub id: String,
    pub path: PathBuf,
    pub duration_s: f64,
    pub channel: String,
    pub broadcast_date: NaiveDate,
}

/// One 30 s chunk with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord {
    pub chunk_id: String,
    pub source_id: String,
    pub offset_s: f64,
    pub duration_s: f64,
    pub channel: String,
    pub broadcast_date: NaiveDate,
}

/// The chunk catalog, optionally joined with per-chunk annotations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkManifest {
    pub chunks: Vec<ChunkRecord>,
    pub annotations: BTreeMap<String, Annotation>,
}

impl ChunkManifest {
    pub fn total_hours(&self) -> f64 {
        Self::hours_for(self.chunks.len())
    }

    pub fn hours_for(n_chunks: usize) -> f64 {
        n_chunks as f64 * CHUNK_SECONDS / 3600.0
    }

    pub fn annotation(&self, chunk_id: &str) -> Option<&Annotation> {
        self.annotations.get(chunk_id)
    }
}

/// Parse a broadcast date: full ISO-8601 day, or a bare year (archive
/// metadata is often year-only), which rounds to January 1.
pub fn parse_date(s: &str) -> Result<NaiveDate, CorpusError> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    if let Ok(year) = s.parse::<i32>() {
        if let Some(d) = NaiveDate::from_ymd_opt(year, 1, 1) {
            return Ok(d);
        }
    }
    Err(CorpusError::MalformedDate(s.to_string()))
}

fn chunk_id_for(source_id: &str, offset_s: u64) -> String {
    format!("{source_id}+{offset_s:05}")
}

/// Number of 1 s-grid offsets available in a file (0 for short files).
fn grid_positions(duration_s: f64) -> u64 {
    if duration_s < CHUNK_SECONDS {
        0
    } else {
        (duration_s - CHUNK_SECONDS).floor() as u64 + 1
    }
}

/// Maximum non-overlapping 30 s chunks a file can host on the 1 s grid.
fn capacity(duration_s: f64) -> u64 {
    let g = grid_positions(duration_s);
    if g == 0 {
        0
    } else {
        (g - 1) / CHUNK_SECONDS as u64 + 1
    }
}

/// Draw a uniform k-subset of 0..m without replacement, sorted ascending.
fn sample_combination(m: u64, k: usize, rng: &mut ChaCha20Rng) -> Vec<u64> {
    debug_assert!(k as u64 <= m);
    let mut pool: Vec<u64> = (0..m).collect();
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Uniform set of `k` non-overlapping grid offsets for one file with `g`
/// grid positions, via the gap bijection between valid offset sets and
/// k-subsets of a contracted range.
fn sample_offsets(g: u64, k: usize, rng: &mut ChaCha20Rng) -> Vec<u64> {
    if k == 0 {
        return Vec::new();
    }
    let step = CHUNK_SECONDS as u64;
    let m = g - step * (k as u64 - 1); // contracted range size
    sample_combination(m + k as u64 - 1, k, rng)
        .into_iter()
        .enumerate()
        .map(|(j, u)| (u - j as u64) + step * j as u64)
        .collect()
}

/// Sample `n` chunks uniformly over the eligible (file, offset) space:
/// files weighted by remaining non-overlapping capacity, offsets uniform
/// over each file's valid non-overlapping combinations. Deterministic per
/// seed; the manifest is sorted by (source_id, offset).
pub fn sample_chunks(
    catalog: &[SourceFile],
    n: usize,
    seed: u64,
) -> Result<ChunkManifest, CorpusError> {
    let mut slots: Vec<u32> = Vec::new();
    for (i, file) in catalog.iter().enumerate() {
        for _ in 0..capacity(file.duration_s) {
            slots.push(i as u32);
        }
    }
    if n > slots.len() {
        return Err(CorpusError::InsufficientMaterial { requested: n, capacity: slots.len() });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in 0..n {
        let j = rng.gen_range(i..slots.len());
        slots.swap(i, j);
    }
    let mut counts = vec![0usize; catalog.len()];
    for &s in &slots[..n] {
        counts[s as usize] += 1;
    }

    let mut chunks = Vec::with_capacity(n);
    for (i, file) in catalog.iter().enumerate() {
        if counts[i] == 0 {
            continue;
        }
        for offset in sample_offsets(grid_positions(file.duration_s), counts[i], &mut rng) {
            chunks.push(ChunkRecord {
                chunk_id: chunk_id_for(&file.id, offset),
                source_id: file.id.clone(),
                offset_s: offset as f64,
                duration_s: CHUNK_SECONDS,
                channel: file.channel.clone(),
                broadcast_date: file.broadcast_date,
            });
        }
    }
    chunks.sort_by(|a, b| {
        a.source_id.cmp(&b.source_id).then(a.offset_s.partial_cmp(&b.offset_s).unwrap())
    });
    Ok(ChunkManifest { chunks, annotations: BTreeMap::new() })
}

/// Corpus-level aggregates over an annotated manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub total_segments: usize,
    pub total_hours: f64,
    /// Percent of chunks flagged is_speech / has_music.
    pub pct_speech: f64,
    pub pct_music: f64,
    /// Percent of gendered speaking time (the two sum to 100 when any
    /// gendered speech exists).
    pub pct_women_time: f64,
    pub pct_men_time: f64,
    pub language_shares_overall: BTreeMap<String, f64>,
    pub language_shares_speech: BTreeMap<String, f64>,
    pub language_shares_music: BTreeMap<String, f64>,
    pub per_year_hours: BTreeMap<i32, f64>,
    /// Women's share of gendered speaking time per broadcast year, percent.
    pub per_year_gender_ratio: BTreeMap<i32, f64>,
}

pub fn stats_report(manifest: &ChunkManifest) -> Result<StatsReport, CorpusError> {
    let missing: Vec<&str> = manifest
        .chunks
        .iter()
        .filter(|c| !manifest.annotations.contains_key(&c.chunk_id))
        .map(|c| c.chunk_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingAnnotations {
            missing: missing.len(),
            first: missing[0].to_string(),
        });
    }

    let n = manifest.chunks.len();
    let mut speech_chunks = 0usize;
    let mut music_chunks = 0usize;
    let (mut male_s, mut female_s) = (0.0f64, 0.0f64);
    let mut lang_all: BTreeMap<String, usize> = BTreeMap::new();
    let mut lang_speech: BTreeMap<String, usize> = BTreeMap::new();
    let mut lang_music: BTreeMap<String, usize> = BTreeMap::new();
    let mut year_chunks: BTreeMap<i32, usize> = BTreeMap::new();
    let mut year_gender: BTreeMap<i32, (f64, f64)> = BTreeMap::new();

    for chunk in &manifest.chunks {
        let a = &manifest.annotations[&chunk.chunk_id];
        let flags = label_heuristics(a);
        let (m, f) = speaking_time(a);
        male_s += m;
        female_s += f;
        *lang_all.entry(a.language.clone()).or_default() += 1;
        if flags.is_speech {
            speech_chunks += 1;
            *lang_speech.entry(a.language.clone()).or_default() += 1;
        }
        if flags.has_music {
            music_chunks += 1;
            *lang_music.entry(a.language.clone()).or_default() += 1;
        }
        let year = chunk.broadcast_date.year();
        *year_chunks.entry(year).or_default() += 1;
        let g = year_gender.entry(year).or_insert((0.0, 0.0));
        g.0 += m;
        g.1 += f;
    }

    let pct = |count: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        }
    };
    let shares = |counts: BTreeMap<String, usize>, total: usize| {
        counts.into_iter().map(|(k, v)| (k, pct(v, total))).collect::<BTreeMap<_, _>>()
    };

    let gendered = male_s + female_s;
    let (pct_women, pct_men) = if gendered > 0.0 {
        (100.0 * female_s / gendered, 100.0 * male_s / gendered)
    } else {
        (0.0, 0.0)
    };

    Ok(StatsReport {
        total_segments: n,
        total_hours: manifest.total_hours(),
        pct_speech: pct(speech_chunks, n),
        pct_music: pct(music_chunks, n),
        pct_women_time: pct_women,
        pct_men_time: pct_men,
        language_shares_overall: shares(lang_all, n),
        language_shares_speech: shares(lang_speech, speech_chunks),
        language_shares_music: shares(lang_music, music_chunks),
        per_year_hours: year_chunks
            .into_iter()
            .map(|(y, c)| (y, ChunkManifest::hours_for(c)))
            .collect(),
        per_year_gender_ratio: year_gender
            .into_iter()
            .filter(|(_, (m, f))| m + f > 0.0)
            .map(|(y, (m, f))| (y, 100.0 * f / (m + f)))
            .collect(),
    })
}

impl StatsReport {
    /// Human-readable report.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "corpus statistics").unwrap();
        writeln!(out, "  segments        {}", self.total_segments).unwrap();
        writeln!(out, "  total hours     {:.2}", self.total_hours).unwrap();
        writeln!(out, "  speech chunks   {:.1}%", self.pct_speech).unwrap();
        writeln!(out, "  music chunks    {:.1}%", self.pct_music).unwrap();
        writeln!(out, "  speaking time   women {:.2}%  men {:.2}%", self.pct_women_time, self.pct_men_time).unwrap();
        for (scope, shares) in [
            ("overall", &self.language_shares_overall),
            ("among speech", &self.language_shares_speech),
            ("among music", &self.language_shares_music),
        ] {
            writeln!(out, "  languages {scope}:").unwrap();
            for (lang, share) in shares {
                writeln!(out, "    {lang:<10} {share:.1}%").unwrap();
            }
        }
        writeln!(out, "  hours per year:").unwrap();
        for (year, hours) in &self.per_year_hours {
            writeln!(out, "    {year} {hours:.3}").unwrap();
        }
        writeln!(out, "  women share per year:").unwrap();
        for (year, share) in &self.per_year_gender_ratio {
            writeln!(out, "    {year} {share:.2}%").unwrap();
        }
        out
    }

    /// Machine-readable key/value lines, sorted by key.
    pub fn render_kv(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        kv.insert("total_segments".into(), self.total_segments.to_string());
        kv.insert("total_hours".into(), format!("{}", self.total_hours));
        kv.insert("pct_speech".into(), format!("{}", self.pct_speech));
        kv.insert("pct_music".into(), format!("{}", self.pct_music));
        kv.insert("pct_women_time".into(), format!("{}", self.pct_women_time));
        kv.insert("pct_men_time".into(), format!("{}", self.pct_men_time));
        for (lang, v) in &self.language_shares_overall {
            kv.insert(format!("lang_overall.{lang}"), format!("{v}"));
        }
        for (lang, v) in &self.language_shares_speech {
            kv.insert(format!("lang_speech.{lang}"), format!("{v}"));
        }
        for (lang, v) in &self.language_shares_music {
            kv.insert(format!("lang_music.{lang}"), format!("{v}"));
        }
        for (year, v) in &self.per_year_hours {
            kv.insert(format!("year_hours.{year}"), format!("{v}"));
        }
        for (year, v) in &self.per_year_gender_ratio {
            kv.insert(format!("year_women_share.{year}"), format!("{v}"));
        }
        let mut out = String::new();
        for (k, v) in kv {
            writeln!(out, "{k}\t{v}").unwrap();
        }
        out
    }
}

// Catalog file: one source per line, tab-separated:
// id, path, duration_s, channel, date.
pub fn write_catalog(path: &Path, catalog: &[SourceFile]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for f in catalog {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            f.id,
            f.path.display(),
            f.duration_s,
            f.channel,
            f.broadcast_date.format("%Y-%m-%d")
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_catalog(path: &Path) -> Result<Vec<SourceFile>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut catalog = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(CorpusError::MalformedCatalog(format!(
                "line {}: expected 5 tab-separated fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let duration_s: f64 = fields[2].parse().map_err(|_| {
            CorpusError::MalformedCatalog(format!("line {}: bad duration {:?}", lineno + 1, fields[2]))
        })?;
        catalog.push(SourceFile {
            id: fields[0].to_string(),
            path: PathBuf::from(fields[1]),
            duration_s,
            channel: fields[3].to_string(),
            broadcast_date: parse_date(fields[4])?,
        });
    }
    Ok(catalog)
}

// Manifest file: one chunk per line, tab-separated:
// chunk_id, source_id, offset_s, duration_s, channel, date.
pub fn write_manifest(path: &Path, manifest: &ChunkManifest) -> Result<(), CorpusError> {
    let mut out = String::new();
    for c in &manifest.chunks {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.chunk_id,
            c.source_id,
            c.offset_s,
            c.duration_s,
            c.channel,
            c.broadcast_date.format("%Y-%m-%d")
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<ChunkManifest, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut chunks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(CorpusError::MalformedManifest(format!(
                "line {}: expected 6 tab-separated fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64, CorpusError> {
            s.parse().map_err(|_| {
                CorpusError::MalformedManifest(format!("line {}: bad number {s:?}", lineno + 1))
            })
        };
        chunks.push(ChunkRecord {
            chunk_id: fields[0].to_string(),
            source_id: fields[1].to_string(),
            offset_s: num(fields[2])?,
            duration_s: num(fields[3])?,
            channel: fields[4].to_string(),
            broadcast_date: parse_date(fields[5])?,
        });
    }
    Ok(ChunkManifest { chunks, annotations: BTreeMap::new() })
}
