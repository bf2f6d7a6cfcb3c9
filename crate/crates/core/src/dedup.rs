//! Copy detection over fingerprint tracks and keep-first corpus dedup.
//!
//! The index is a multi-index hash over the four 8-bit sub-blocks of each
//! code: a query code retrieves every indexed code that agrees exactly on at
//! least one sub-block. By pigeonhole this finds *all* codes within Hamming
//! distance 3; codes at distance 4..tol are still found whenever one
//! sub-block survives intact, which exact and near-exact copies provide in
//! abundance. The consecutive-run requirement (`min_run`) then restores
//! precision: a duplicate is declared only when at least `min_run` adjacent
//! codes agree at one fixed time offset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::fingerprint::FingerprintTrack;

/// Minimum consecutive similar codes to declare a copy (1 s of agreement at
/// the default 0.25 s hop).
pub const DEFAULT_MIN_RUN: usize = 4;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("duplicate source id: {0}")]
    DuplicateSourceId(String),
    #[error("malformed dedup report: {0}")]
    MalformedReport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A maximal run of consecutive similar codes at one fixed offset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatchSpan {
    pub query_source: String,
    pub ref_source: String,
    pub query_start: u32,
    pub ref_start: u32,
    /// Number of consecutive similar codes.
    pub length: usize,
    /// `ref_start - query_start`, constant across the span.
    pub offset: i64,
}

/// Inverted index from (sub-block position, sub-block value) to postings.
pub struct FpIndex {
    sources: Vec<IndexedTrack>,
    by_id: BTreeMap<String, u32>,
    /// postings[block][value] -> (source index, frame index), sorted by
    /// (source_id, frame_index).
    postings: Vec<Vec<Vec<(u32, u32)>>>,
}

struct IndexedTrack {
    source_id: String,
    codes: Vec<u32>,
}

impl Default for FpIndex {
    fn default() -> Self {
        Self::new()
    }
}

impl FpIndex {
    pub fn new() -> Self {
        FpIndex {
            sources: Vec::new(),
            by_id: BTreeMap::new(),
            postings: vec![vec![Vec::new(); 256]; 4],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn source_ids(&self) -> impl Iterator<Item = &str> {
        self.sources.iter().map(|t| t.source_id.as_str())
    }

    pub fn insert_track(&mut self, track: &FingerprintTrack) -> Result<(), DedupError> {
        if self.by_id.contains_key(&track.source_id) {
            return Err(DedupError::DuplicateSourceId(track.source_id.clone()));
        }
        let src = self.sources.len() as u32;

        // Group this track's postings per bucket, then splice each group in
        // at the position that keeps the bucket sorted by (source_id, frame).
        let mut pending: BTreeMap<(usize, u8), Vec<u32>> = BTreeMap::new();
        for code in &track.codes {
            for block in 0..4 {
                let value = (code.bits >> (8 * block)) as u8;
                pending.entry((block, value)).or_default().push(code.frame_index);
            }
        }
        for ((block, value), frames) in pending {
            let bucket = &mut self.postings[block][value as usize];
            let pos = bucket.partition_point(|&(s, _)| {
                self.sources[s as usize].source_id < track.source_id
            });
            bucket.splice(pos..pos, frames.into_iter().map(|f| (src, f)));
        }

        self.by_id.insert(track.source_id.clone(), src);
        self.sources.push(IndexedTrack {
            source_id: track.source_id.clone(),
            codes: track.codes.iter().map(|c| c.bits).collect(),
        });
        Ok(())
    }

    /// All indexed codes sharing at least one sub-block with `bits`,
    /// as (source_id, frame_index) pairs sorted and deduplicated.
    pub fn probe(&self, bits: u32) -> Vec<(&str, u32)> {
        let mut hits = BTreeSet::new();
        for block in 0..4 {
            let value = (bits >> (8 * block)) as u8;
            for &(src, frame) in &self.postings[block][value as usize] {
                hits.insert((self.sources[src as usize].source_id.as_str(), frame));
            }
        }
        hits.into_iter().collect()
    }

    /// Distinct (source index, offset) alignments suggested by sub-block hits.
    fn candidate_alignments(&self, query: &FingerprintTrack) -> BTreeSet<(u32, i64)> {
        let mut cands = BTreeSet::new();
        for code in &query.codes {
            for block in 0..4 {
                let value = (code.bits >> (8 * block)) as u8;
                for &(src, ref_frame) in &self.postings[block][value as usize] {
                    cands.insert((src, ref_frame as i64 - code.frame_index as i64));
                }
            }
        }
        cands
    }
}

/// Index every track; source ids must be unique.
pub fn build_index(tracks: &[FingerprintTrack]) -> Result<FpIndex, DedupError> {
    let mut idx = FpIndex::new();
    for t in tracks {
        idx.insert_track(t)?;
    }
    Ok(idx)
}

/// All maximal spans of at least `min_run` consecutive query codes, each
/// similar within `tol` to an indexed code at one fixed offset. The trivial
/// self-alignment (same source, offset 0) is excluded.
pub fn find_spans(
    idx: &FpIndex,
    query: &FingerprintTrack,
    min_run: usize,
    tol: u32,
) -> Vec<MatchSpan> {
    assert!(min_run >= 1, "min_run must be at least 1");
    let query_bits: Vec<u32> = query.codes.iter().map(|c| c.bits).collect();
    let mut spans = Vec::new();
    for (src, offset) in idx.candidate_alignments(query) {
        let track = &idx.sources[src as usize];
        if track.source_id == query.source_id && offset == 0 {
            continue;
        }
        spans_at_offset(
            &query.source_id,
            &query_bits,
            &track.source_id,
            &track.codes,
            offset,
            min_run,
            tol,
            &mut spans,
        );
    }
    spans.sort();
    spans
}

/// Reference quadratic scanner enumerating every (ref, offset) alignment
/// directly. Used to validate the indexed search; identical contract.
pub fn find_spans_bruteforce(
    refs: &[FingerprintTrack],
    query: &FingerprintTrack,
    min_run: usize,
    tol: u32,
) -> Vec<MatchSpan> {
    assert!(min_run >= 1, "min_run must be at least 1");
    let query_bits: Vec<u32> = query.codes.iter().map(|c| c.bits).collect();
    let mut spans = Vec::new();
    for track in refs {
        let ref_bits: Vec<u32> = track.codes.iter().map(|c| c.bits).collect();
        let lo = -(query_bits.len() as i64 - 1);
        let hi = ref_bits.len() as i64 - 1;
        for offset in lo..=hi {
            if track.source_id == query.source_id && offset == 0 {
                continue;
            }
            spans_at_offset(
                &query.source_id,
                &query_bits,
                &track.source_id,
                &ref_bits,
                offset,
                min_run,
                tol,
                &mut spans,
            );
        }
    }
    spans.sort();
    spans
}

/// Walk one alignment and append every maximal similar run of length
/// >= min_run.
#[allow(clippy::too_many_arguments)]
fn spans_at_offset(
    query_id: &str,
    query: &[u32],
    ref_id: &str,
    refs: &[u32],
    offset: i64,
    min_run: usize,
    tol: u32,
    out: &mut Vec<MatchSpan>,
) {
    let q_lo = 0i64.max(-offset) as usize;
    let q_hi = (query.len() as i64).min(refs.len() as i64 - offset).max(0) as usize;
    if q_hi.saturating_sub(q_lo) < min_run {
        return;
    }
    let mut run_start: Option<usize> = None;
    for q in q_lo..=q_hi {
        let ok = q < q_hi && {
            let r = (q as i64 + offset) as usize;
            (query[q] ^ refs[r]).count_ones() <= tol
        };
        match (ok, run_start) {
            (true, None) => run_start = Some(q),
            (false, Some(start)) => {
                if q - start >= min_run {
                    out.push(MatchSpan {
                        query_source: query_id.to_string(),
                        ref_source: ref_id.to_string(),
                        query_start: start as u32,
                        ref_start: (start as i64 + offset) as u32,
                        length: q - start,
                        offset,
                    });
                }
                run_start = None;
            }
            _ => {}
        }
    }
}

/// One removal decision: the track and the first span that condemned it.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovedRecord {
    pub source_id: String,
    pub span: MatchSpan,
}

impl RemovedRecord {
    pub fn matched_ref(&self) -> &str {
        &self.span.ref_source
    }
}

/// Outcome of a keep-first dedup pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupReport {
    pub kept: Vec<String>,
    pub removed: Vec<RemovedRecord>,
    pub removed_duration_s: f64,
    pub removed_fraction: f64,
}

/// Streaming keep-first dedup. `tracks` must already be ordered by the
/// caller's retention priority (ascending broadcast date in the pipeline, so
/// the first broadcast survives). Each track is queried against the index of
/// previously kept tracks; on any span it is removed, otherwise indexed.
pub fn dedup_corpus(
    tracks: &[FingerprintTrack],
    min_run: usize,
    tol: u32,
) -> Result<DedupReport, DedupError> {
    let mut idx = FpIndex::new();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    let mut total_s = 0.0;
    let mut removed_s = 0.0;
    for track in tracks {
        total_s += track.duration_s();
        let spans = find_spans(&idx, track, min_run, tol);
        match spans.into_iter().next() {
            Some(span) => {
                removed_s += track.duration_s();
                removed.push(RemovedRecord { source_id: track.source_id.clone(), span });
            }
            None => {
                idx.insert_track(track)?;
                kept.push(track.source_id.clone());
            }
        }
    }
    let removed_fraction = if total_s > 0.0 { removed_s / total_s } else { 0.0 };
    Ok(DedupReport { kept, removed, removed_duration_s: removed_s, removed_fraction })
}

/// Partition `chunks` by whether they match the blocklist index: a chunk is
/// removed iff `find_spans` against `block` is non-empty.
pub fn apply_blocklist(
    block: &FpIndex,
    chunks: &[FingerprintTrack],
    min_run: usize,
    tol: u32,
) -> (Vec<String>, Vec<RemovedRecord>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for chunk in chunks {
        let spans = find_spans(block, chunk, min_run, tol);
        match spans.into_iter().next() {
            Some(span) => removed.push(RemovedRecord { source_id: chunk.source_id.clone(), span }),
            None => kept.push(chunk.source_id.clone()),
        }
    }
    (kept, removed)
}

/// Render a report as line-delimited records: kept sources first, then
/// removals with their condemning span.
pub fn render_report(report: &DedupReport) -> String {
    let mut out = String::new();
    for id in &report.kept {
        writeln!(out, "{id}\tKEPT").unwrap();
    }
    for rec in &report.removed {
        writeln!(
            out,
            "{}\tREMOVED\t{}\t{}\t{}",
            rec.source_id,
            rec.span.ref_source,
            rec.span.offset,
            rec.span.length
        )
        .unwrap();
    }
    out
}

pub fn write_report(path: &Path, report: &DedupReport) -> Result<(), DedupError> {
    fs::write(path, render_report(report))?;
    Ok(())
}

/// Parse the verdict lines of a rendered report: (kept ids, removed ids).
pub fn read_report_verdicts(path: &Path) -> Result<(Vec<String>, Vec<String>), DedupError> {
    let text = fs::read_to_string(path)?;
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        match fields.next() {
            Some("KEPT") => kept.push(id.to_string()),
            Some("REMOVED") => removed.push(id.to_string()),
            _ => {
                return Err(DedupError::MalformedReport(format!(
                    "line {}: expected KEPT or REMOVED verdict",
                    lineno + 1
                )))
            }
        }
    }
    Ok((kept, removed))
}
