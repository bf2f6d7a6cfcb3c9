//! The six acoustically controlled pretraining subsets.
//!
//! `base` is a uniform draw; `no_music`, `only_speech` and `only_fr` are
//! uniform draws from predicate-filtered pools; `gender` greedily balances
//! accumulated speaking seconds toward a target female share; `duplicates`
//! replicates a fraction of `base` ten times and removes other segments so
//! total duration is conserved. Every builder is deterministic per seed, and
//! `verify_subsample` re-checks every constraint from scratch.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::corpus::ChunkManifest;
use crate::describe::{label_heuristics, speaking_time, Annotation};

#[derive(Debug, Error)]
pub enum SubsampleError {
    #[error("pool {name:?} has {available} chunks, {needed} needed")]
    InsufficientPool { name: String, needed: usize, available: usize },
    #[error("chunk {0} has no annotation; run describe first")]
    MissingAnnotation(String),
    #[error("base subsample has repeated id {0}; duplicates must build from a repeat-free base")]
    BaseNotUnique(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown segment id {0}")]
    UnknownSegmentId(String),
    #[error("malformed subsample file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SubsampleName {
    Base,
    NoMusic,
    OnlySpeech,
    OnlyFr,
    Gender,
    Duplicates,
}

impl SubsampleName {
    pub const ALL: [SubsampleName; 6] = [
        SubsampleName::Base,
        SubsampleName::NoMusic,
        SubsampleName::OnlySpeech,
        SubsampleName::OnlyFr,
        SubsampleName::Gender,
        SubsampleName::Duplicates,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SubsampleName::Base => "base",
            SubsampleName::NoMusic => "no_music",
            SubsampleName::OnlySpeech => "only_speech",
            SubsampleName::OnlyFr => "only_fr",
            SubsampleName::Gender => "gender",
            SubsampleName::Duplicates => "duplicates",
        }
    }
}

impl fmt::Display for SubsampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubsampleName {
    type Err = SubsampleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubsampleName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| SubsampleError::MalformedFile(format!("unknown subsample name {s:?}")))
    }
}

/// Filters for the three predicate subsamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    NotHasMusic,
    IsSpeech,
    LanguageFr,
}

impl Predicate {
    pub fn eval(&self, a: &Annotation) -> bool {
        let flags = label_heuristics(a);
        match self {
            Predicate::NotHasMusic => !flags.has_music,
            Predicate::IsSpeech => flags.is_speech,
            Predicate::LanguageFr => a.language == "fr",
        }
    }

    pub fn for_name(name: SubsampleName) -> Option<Predicate> {
        match name {
            SubsampleName::NoMusic => Some(Predicate::NotHasMusic),
            SubsampleName::OnlySpeech => Some(Predicate::IsSpeech),
            SubsampleName::OnlyFr => Some(Predicate::LanguageFr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleSpec {
    pub name: SubsampleName,
    pub target_segments: usize,
    pub seed: u64,
    pub dup_fraction: f64,
    pub dup_copies: usize,
    pub gender_target: f64,
}

impl SubsampleSpec {
    pub fn new(name: SubsampleName, target_segments: usize, seed: u64) -> Self {
        SubsampleSpec {
            name,
            target_segments,
            seed,
            dup_fraction: 0.01,
            dup_copies: 10,
            gender_target: 0.5,
        }
    }
}

/// Achieved statistics recorded at build time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub pool_size: usize,
    pub achieved_female_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub spec: SubsampleSpec,
    pub segment_ids: Vec<String>,
    pub provenance: Provenance,
}

fn partial_shuffle<T>(items: &mut [T], take: usize, rng: &mut ChaCha20Rng) {
    for i in 0..take.min(items.len()) {
        let j = rng.gen_range(i..items.len());
        items.swap(i, j);
    }
}

fn annotation_of<'a>(
    manifest: &'a ChunkManifest,
    chunk_id: &str,
) -> Result<&'a Annotation, SubsampleError> {
    manifest
        .annotations
        .get(chunk_id)
        .ok_or_else(|| SubsampleError::MissingAnnotation(chunk_id.to_string()))
}

/// Uniform random n-subset of the manifest, without replacement.
pub fn build_base(
    manifest: &ChunkManifest,
    n: usize,
    seed: u64,
) -> Result<Subsample, SubsampleError> {
    let mut ids: Vec<String> = manifest.chunks.iter().map(|c| c.chunk_id.clone()).collect();
    if n > ids.len() {
        return Err(SubsampleError::InsufficientPool {
            name: "base".into(),
            needed: n,
            available: ids.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    partial_shuffle(&mut ids, n, &mut rng);
    ids.truncate(n);
    Ok(Subsample {
        spec: SubsampleSpec::new(SubsampleName::Base, n, seed),
        provenance: Provenance { pool_size: manifest.chunks.len(), achieved_female_share: None },
        segment_ids: ids,
    })
}

/// Uniform n-subset of the chunks satisfying `predicate`.
pub fn build_filtered(
    manifest: &ChunkManifest,
    predicate: Predicate,
    n: usize,
    seed: u64,
) -> Result<Subsample, SubsampleError> {
    let name = match predicate {
        Predicate::NotHasMusic => SubsampleName::NoMusic,
        Predicate::IsSpeech => SubsampleName::OnlySpeech,
        Predicate::LanguageFr => SubsampleName::OnlyFr,
    };
    let mut pool = Vec::new();
    for chunk in &manifest.chunks {
        if predicate.eval(annotation_of(manifest, &chunk.chunk_id)?) {
            pool.push(chunk.chunk_id.clone());
        }
    }
    if n > pool.len() {
        return Err(SubsampleError::InsufficientPool {
            name: name.to_string(),
            needed: n,
            available: pool.len(),
        });
    }
    let pool_size = pool.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    partial_shuffle(&mut pool, n, &mut rng);
    pool.truncate(n);
    Ok(Subsample {
        spec: SubsampleSpec::new(name, n, seed),
        provenance: Provenance { pool_size, achieved_female_share: None },
        segment_ids: pool,
    })
}

/// Greedy gender balancing over speaking seconds: the pool (speech chunks
/// with known-gender speech) is shuffled by seed, then at each step the
/// chunk whose gendered seconds bring the running female share closest to
/// `target` is added, ties resolved in shuffle order.
pub fn build_gender_balanced(
    manifest: &ChunkManifest,
    n: usize,
    seed: u64,
    target: f64,
) -> Result<Subsample, SubsampleError> {
    let mut pool: Vec<(String, f64, f64)> = Vec::new(); // (id, male_s, female_s)
    for chunk in &manifest.chunks {
        let a = annotation_of(manifest, &chunk.chunk_id)?;
        let (m, f) = speaking_time(a);
        if label_heuristics(a).is_speech && m + f > 0.0 {
            pool.push((chunk.chunk_id.clone(), m, f));
        }
    }
    if n > pool.len() {
        return Err(SubsampleError::InsufficientPool {
            name: "gender".into(),
            needed: n,
            available: pool.len(),
        });
    }
    let pool_size = pool.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    partial_shuffle(&mut pool, pool_size, &mut rng);

    let mut picked = Vec::with_capacity(n);
    let (mut tot_m, mut tot_f) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, m, f)) in pool.iter().enumerate() {
            let share = (tot_f + f) / (tot_m + tot_f + m + f);
            let gap = (share - target).abs();
            if best.map_or(true, |(_, b)| gap < b) {
                best = Some((i, gap));
            }
        }
        let (i, _) = best.expect("pool non-empty while picking");
        let (id, m, f) = pool.remove(i);
        tot_m += m;
        tot_f += f;
        picked.push(id);
    }

    let mut spec = SubsampleSpec::new(SubsampleName::Gender, n, seed);
    spec.gender_target = target;
    Ok(Subsample {
        spec,
        provenance: Provenance {
            pool_size,
            achieved_female_share: Some(tot_f / (tot_m + tot_f)),
        },
        segment_ids: picked,
    })
}

/// Duplicate `round(dup_fraction * n)` segments of `base` `dup_copies`
/// times each and randomly remove `(dup_copies - 1) * d` non-duplicated
/// segments, conserving total duration.
pub fn build_duplicates(
    base: &Subsample,
    dup_fraction: f64,
    dup_copies: usize,
    seed: u64,
) -> Result<Subsample, SubsampleError> {
    let n = base.segment_ids.len();
    if let Some(repeat) = first_repeat(&base.segment_ids) {
        return Err(SubsampleError::BaseNotUnique(repeat));
    }
    if !(0.0..1.0).contains(&dup_fraction) || dup_copies < 1 {
        return Err(SubsampleError::InvalidParams(format!(
            "dup_fraction {dup_fraction}, dup_copies {dup_copies}"
        )));
    }
    let d = (dup_fraction * n as f64).round() as usize;
    if d == 0 {
        return Err(SubsampleError::InvalidParams(format!(
            "dup_fraction {dup_fraction} of {n} segments rounds to zero duplicates"
        )));
    }
    let removals = (dup_copies - 1) * d;
    if removals > n - d {
        return Err(SubsampleError::InsufficientPool {
            name: "removable".into(),
            needed: removals,
            available: n - d,
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    partial_shuffle(&mut indices, d, &mut rng);
    let duplicated: Vec<usize> = indices[..d].to_vec();
    let mut rest: Vec<usize> = indices[d..].to_vec();
    rest.sort_unstable();
    partial_shuffle(&mut rest, removals, &mut rng);
    let removed: Vec<usize> = rest[..removals].to_vec();

    let is_dup = to_flags(n, &duplicated);
    let is_removed = to_flags(n, &removed);
    let mut out = Vec::with_capacity(n);
    for (i, id) in base.segment_ids.iter().enumerate() {
        if is_dup[i] {
            for _ in 0..dup_copies {
                out.push(id.clone());
            }
        } else if !is_removed[i] {
            out.push(id.clone());
        }
    }
    debug_assert_eq!(out.len(), n);

    let mut spec = SubsampleSpec::new(SubsampleName::Duplicates, n, seed);
    spec.dup_fraction = dup_fraction;
    spec.dup_copies = dup_copies;
    Ok(Subsample {
        spec,
        provenance: Provenance { pool_size: n, achieved_female_share: None },
        segment_ids: out,
    })
}

fn first_repeat(ids: &[String]) -> Option<String> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Some(id.clone());
        }
    }
    None
}

fn to_flags(n: usize, indices: &[usize]) -> Vec<bool> {
    let mut flags = vec![false; n];
    for &i in indices {
        flags[i] = true;
    }
    flags
}

/// Count occurrences of each id.
pub fn multiplicity(ids: &[String]) -> BTreeMap<&str, usize> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in ids {
        *counts.entry(id).or_default() += 1;
    }
    counts
}

/// Histogram of multiplicities: count -> how many distinct ids occur that
/// many times.
pub fn multiplicity_histogram(ids: &[String]) -> BTreeMap<usize, usize> {
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, c) in multiplicity(ids) {
        *hist.entry(c).or_default() += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            writeln!(out, "{}\t{}\t{}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)
                .unwrap();
        }
        out
    }
}

/// Re-check every constraint the spec imposes on a built subsample.
pub fn verify_subsample(
    sub: &Subsample,
    manifest: &ChunkManifest,
) -> Result<VerifyReport, SubsampleError> {
    let known: std::collections::BTreeSet<&str> =
        manifest.chunks.iter().map(|c| c.chunk_id.as_str()).collect();
    for id in &sub.segment_ids {
        if !known.contains(id.as_str()) {
            return Err(SubsampleError::UnknownSegmentId(id.clone()));
        }
    }

    let mut checks = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| {
        checks.push(VerifyCheck { name: name.into(), pass, detail });
    };

    let n = sub.segment_ids.len();
    push(
        "count",
        n == sub.spec.target_segments,
        format!("{n} segments, target {}", sub.spec.target_segments),
    );
    push(
        "duration",
        n == sub.spec.target_segments,
        format!("{} s total, target {} s", n as f64 * 30.0, sub.spec.target_segments as f64 * 30.0),
    );

    let hist = multiplicity_histogram(&sub.segment_ids);
    if sub.spec.name == SubsampleName::Duplicates {
        let d = (sub.spec.dup_fraction * sub.spec.target_segments as f64).round() as usize;
        let expected_once = sub.spec.target_segments - sub.spec.dup_copies * d;
        let mut expected = BTreeMap::new();
        if expected_once > 0 {
            expected.insert(1, expected_once);
        }
        *expected.entry(sub.spec.dup_copies).or_insert(0) += d;
        push(
            "multiplicity",
            hist == expected,
            format!("histogram {hist:?}, expected {expected:?}"),
        );
    } else {
        let repeats: usize = hist.iter().filter(|(&c, _)| c > 1).map(|(_, &ids)| ids).sum();
        push("multiplicity", repeats == 0, format!("{repeats} ids repeat"));
    }

    if let Some(predicate) = Predicate::for_name(sub.spec.name) {
        let mut violating = Vec::new();
        for id in &sub.segment_ids {
            match manifest.annotations.get(id) {
                Some(a) if predicate.eval(a) => {}
                Some(_) => violating.push(id.clone()),
                None => violating.push(format!("{id} (unannotated)")),
            }
        }
        push(
            "predicate",
            violating.is_empty(),
            if violating.is_empty() {
                "all members satisfy the predicate".into()
            } else {
                format!("violations: {}", violating.join(", "))
            },
        );
    }

    if sub.spec.name == SubsampleName::Gender {
        let (mut m, mut f) = (0.0, 0.0);
        for id in &sub.segment_ids {
            if let Some(a) = manifest.annotations.get(id) {
                let (cm, cf) = speaking_time(a);
                m += cm;
                f += cf;
            }
        }
        let share = if m + f > 0.0 { f / (m + f) } else { 0.0 };
        let consistent = sub
            .provenance
            .achieved_female_share
            .map_or(true, |rec| (rec - share).abs() < 1e-9);
        push(
            "gender_share_recorded",
            consistent,
            format!("recomputed {share:.4}, recorded {:?}", sub.provenance.achieved_female_share),
        );
        push(
            "gender_share_near_target",
            (share - sub.spec.gender_target).abs() <= 0.05,
            format!("share {share:.4}, target {}", sub.spec.gender_target),
        );
    }

    Ok(VerifyReport { checks })
}

// Subsample file: a `#subsample` header with key=value fields, then one
// segment id per line, repeats listed explicitly.
pub fn render_subsample(sub: &Subsample) -> String {
    let mut header = format!(
        "#subsample\tname={}\tn={}\tseed={}",
        sub.spec.name, sub.spec.target_segments, sub.spec.seed
    );
    match sub.spec.name {
        SubsampleName::Duplicates => {
            write!(
                header,
                "\tdup_fraction={}\tdup_copies={}",
                sub.spec.dup_fraction, sub.spec.dup_copies
            )
            .unwrap();
        }
        SubsampleName::Gender => {
            write!(header, "\tgender_target={}", sub.spec.gender_target).unwrap();
            if let Some(share) = sub.provenance.achieved_female_share {
                write!(header, "\tachieved_female_share={share}").unwrap();
            }
        }
        _ => {}
    }
    write!(header, "\tpool_size={}", sub.provenance.pool_size).unwrap();
    let mut out = header;
    out.push('\n');
    for id in &sub.segment_ids {
        out.push_str(id);
        out.push('\n');
    }
    out
}

pub fn write_subsample(path: &Path, sub: &Subsample) -> Result<(), SubsampleError> {
    fs::write(path, render_subsample(sub))?;
    Ok(())
}

pub fn read_subsample(path: &Path) -> Result<Subsample, SubsampleError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SubsampleError::MalformedFile("empty file".into()))?;
    let mut fields = header.split('\t');
    if fields.next() != Some("#subsample") {
        return Err(SubsampleError::MalformedFile("missing #subsample header".into()));
    }
    let mut kv = BTreeMap::new();
    for field in fields {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| SubsampleError::MalformedFile(format!("bad header field {field:?}")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        kv.get(k)
            .ok_or_else(|| SubsampleError::MalformedFile(format!("header missing {k}")))
    };
    let parse_num = |k: &str, v: &str| {
        v.parse::<f64>()
            .map_err(|_| SubsampleError::MalformedFile(format!("bad numeric {k}={v}")))
    };

    let name: SubsampleName = get("name")?.parse()?;
    let mut spec = SubsampleSpec::new(
        name,
        parse_num("n", get("n")?)? as usize,
        parse_num("seed", get("seed")?)? as u64,
    );
    if let Some(v) = kv.get("dup_fraction") {
        spec.dup_fraction = parse_num("dup_fraction", v)?;
    }
    if let Some(v) = kv.get("dup_copies") {
        spec.dup_copies = parse_num("dup_copies", v)? as usize;
    }
    if let Some(v) = kv.get("gender_target") {
        spec.gender_target = parse_num("gender_target", v)?;
    }
    let mut provenance = Provenance::default();
    if let Some(v) = kv.get("pool_size") {
        provenance.pool_size = parse_num("pool_size", v)? as usize;
    }
    if let Some(v) = kv.get("achieved_female_share") {
        provenance.achieved_female_share = Some(parse_num("achieved_female_share", v)?);
    }
    let segment_ids: Vec<String> =
        lines.filter(|l| !l.is_empty()).map(|l| l.to_string()).collect();
    Ok(Subsample { spec, segment_ids, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_date, ChunkRecord};
    use crate::describe::{Gender, MusicProps, SpeechSegment};

    fn chunk(id: &str) -> ChunkRecord {
        ChunkRecord {
            chunk_id: id.into(),
            source_id: id.into(),
            offset_s: 0.0,
            duration_s: 30.0,
            channel: "chan".into(),
            broadcast_date: parse_date("1985-05-05").unwrap(),
        }
    }

    fn annotation(language: &str, p_no: f64, male_s: f64, female_s: f64) -> Annotation {
        let mut segments = Vec::new();
        if male_s > 0.0 {
            segments.push(SpeechSegment { start: 0.0, end: male_s, gender: Gender::Male });
        }
        if female_s > 0.0 {
            segments.push(SpeechSegment {
                start: male_s,
                end: (male_s + female_s).min(30.0),
                gender: Gender::Female,
            });
        }
        Annotation {
            language: language.into(),
            transcript: String::new(),
            speech_segments: segments,
            music_props: MusicProps { no: p_no, bg: 1.0 - p_no, fg: 0.0 },
        }
        .validated()
        .unwrap()
    }

    fn manifest<S: AsRef<str>>(entries: Vec<(S, Annotation)>) -> ChunkManifest {
        let mut m = ChunkManifest::default();
        for (id, a) in entries {
            m.chunks.push(chunk(id.as_ref()));
            m.annotations.insert(id.as_ref().into(), a);
        }
        m
    }

    fn speech(id_seconds: f64) -> Annotation {
        annotation("fr", 1.0, id_seconds, 0.0)
    }

    #[test]
    fn base_is_deterministic_and_bounded() {
        let m = manifest((0..20).map(|i| (format!("c{i:02}"), speech(25.0))).collect());
        let a = build_base(&m, 7, 3).unwrap();
        let b = build_base(&m, 7, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.segment_ids.len(), 7);
        assert!(first_repeat(&a.segment_ids).is_none());

        let whole = build_base(&m, 20, 1).unwrap();
        let mut sorted = whole.segment_ids.clone();
        sorted.sort();
        let expected: Vec<String> = (0..20).map(|i| format!("c{i:02}")).collect();
        assert_eq!(sorted, expected);

        assert!(matches!(
            build_base(&m, 21, 1),
            Err(SubsampleError::InsufficientPool { needed: 21, available: 20, .. })
        ));
    }

    #[test]
    fn filtered_members_always_satisfy_predicate() {
        let m = manifest(vec![
            ("music1", annotation("fr", 0.2, 25.0, 0.0)),
            ("music2", annotation("en", 0.5, 0.0, 25.0)),
            ("clean1", annotation("fr", 1.0, 25.0, 0.0)),
            ("clean2", annotation("fr", 0.9, 0.0, 0.0)),
            ("clean3", annotation("en", 0.95, 21.0, 0.0)),
        ]);
        let sub = build_filtered(&m, Predicate::NotHasMusic, 3, 11).unwrap();
        assert_eq!(sub.segment_ids.len(), 3);
        for id in &sub.segment_ids {
            assert!(!label_heuristics(&m.annotations[id]).has_music, "{id}");
        }
        assert_eq!(sub.provenance.pool_size, 3);

        let report = verify_subsample(&sub, &m).unwrap();
        assert!(report.all_pass(), "{}", report.render());
    }

    #[test]
    fn only_fr_takes_exactly_the_french_half() {
        let mut entries = Vec::new();
        for i in 0..10 {
            entries.push((format!("fr{i}"), annotation("fr", 1.0, 25.0, 0.0)));
        }
        for i in 0..10 {
            entries.push((format!("en{i}"), annotation("en", 1.0, 25.0, 0.0)));
        }
        let m = manifest(entries);
        let sub = build_filtered(&m, Predicate::LanguageFr, 10, 2).unwrap();
        let mut got = sub.segment_ids.clone();
        got.sort();
        let expected: Vec<String> = (0..10).map(|i| format!("fr{i}")).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn empty_speech_pool_is_insufficient() {
        let m = manifest(vec![("silent", annotation("fr", 1.0, 0.0, 0.0))]);
        assert!(matches!(
            build_filtered(&m, Predicate::IsSpeech, 1, 0),
            Err(SubsampleError::InsufficientPool { available: 0, .. })
        ));
    }

    #[test]
    fn symmetric_pool_balances_exactly() {
        let mut entries = Vec::new();
        for i in 0..8 {
            entries.push((format!("m{i}"), annotation("fr", 1.0, 25.0, 0.0)));
        }
        for i in 0..8 {
            entries.push((format!("f{i}"), annotation("fr", 1.0, 0.0, 25.0)));
        }
        let m = manifest(entries);
        let sub = build_gender_balanced(&m, 10, 4, 0.5).unwrap();
        assert_eq!(sub.provenance.achieved_female_share, Some(0.5));
        let report = verify_subsample(&sub, &m).unwrap();
        assert!(report.all_pass(), "{}", report.render());
    }

    #[test]
    fn skewed_pool_still_lands_near_target() {
        // 70% male speaking time overall; a feasible balanced subset exists.
        let mut entries = Vec::new();
        for i in 0..28 {
            entries.push((format!("m{i:02}"), annotation("fr", 1.0, 25.0, 0.0)));
        }
        for i in 0..12 {
            entries.push((format!("f{i:02}"), annotation("fr", 1.0, 0.0, 25.0)));
        }
        let m = manifest(entries);
        let sub = build_gender_balanced(&m, 20, 4, 0.5).unwrap();
        let share = sub.provenance.achieved_female_share.unwrap();
        assert!(1.0 - share <= 0.56, "male share {}", 1.0 - share);
    }

    #[test]
    fn greedy_is_near_optimal_on_tiny_pools() {
        let seconds = [(18.0, 2.0), (5.0, 15.0), (22.0, 0.0), (0.0, 21.0), (12.0, 9.0), (25.0, 3.0)];
        let mut entries = Vec::new();
        for (i, &(m_s, f_s)) in seconds.iter().enumerate() {
            entries.push((format!("p{i}"), annotation("fr", 1.0, m_s, f_s)));
        }
        let m = manifest(entries);
        let target = 0.5;
        let sub = build_gender_balanced(&m, 3, 7, target).unwrap();
        let greedy_gap = (sub.provenance.achieved_female_share.unwrap() - target).abs();

        // Exhaustive optimum over all C(6,3) subsets.
        let mut best_gap = f64::INFINITY;
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    let (m_s, f_s) = [a, b, c]
                        .iter()
                        .fold((0.0, 0.0), |(am, af), &i| (am + seconds[i].0, af + seconds[i].1));
                    best_gap = best_gap.min((f_s / (m_s + f_s) - target).abs());
                }
            }
        }
        assert!(
            greedy_gap <= best_gap + 0.02,
            "greedy gap {greedy_gap}, optimal {best_gap}"
        );
    }

    #[test]
    fn duplicates_arithmetic_holds() {
        let m = manifest((0..100).map(|i| (format!("d{i:03}"), speech(25.0))).collect());
        let base = build_base(&m, 100, 1).unwrap();
        let dup = build_duplicates(&base, 0.01, 10, 2).unwrap();
        assert_eq!(dup.segment_ids.len(), 100);
        let hist = multiplicity_histogram(&dup.segment_ids);
        assert_eq!(hist, BTreeMap::from([(1, 90), (10, 1)]));
        let report = verify_subsample(&dup, &m).unwrap();
        assert!(report.all_pass(), "{}", report.render());
    }

    #[test]
    fn single_copy_duplicates_is_a_permutation() {
        let m = manifest((0..50).map(|i| (format!("d{i:03}"), speech(25.0))).collect());
        let base = build_base(&m, 50, 1).unwrap();
        let dup = build_duplicates(&base, 0.02, 1, 9).unwrap();
        let mut a = base.segment_ids.clone();
        let mut b = dup.segment_ids.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicates_with_repeated_base_is_rejected() {
        let m = manifest(vec![("x", speech(25.0)), ("y", speech(25.0))]);
        let bad = Subsample {
            spec: SubsampleSpec::new(SubsampleName::Base, 3, 0),
            segment_ids: vec!["x".into(), "y".into(), "x".into()],
            provenance: Provenance::default(),
        };
        assert!(matches!(
            build_duplicates(&bad, 0.34, 2, 0),
            Err(SubsampleError::BaseNotUnique(id)) if id == "x"
        ));
        let _ = m;
    }

    #[test]
    fn tampering_is_caught_by_verify() {
        let m = manifest(vec![
            ("clean1", annotation("fr", 1.0, 25.0, 0.0)),
            ("clean2", annotation("fr", 0.9, 25.0, 0.0)),
            ("music1", annotation("fr", 0.2, 25.0, 0.0)),
        ]);
        let mut sub = build_filtered(&m, Predicate::NotHasMusic, 2, 5).unwrap();
        sub.segment_ids[0] = "music1".into();
        let report = verify_subsample(&sub, &m).unwrap();
        assert!(!report.all_pass());
        let predicate_check = report.checks.iter().find(|c| c.name == "predicate").unwrap();
        assert!(!predicate_check.pass);
        assert!(predicate_check.detail.contains("music1"));

        sub.segment_ids[0] = "ghost".into();
        assert!(matches!(
            verify_subsample(&sub, &m),
            Err(SubsampleError::UnknownSegmentId(id)) if id == "ghost"
        ));
    }

    #[test]
    fn subsample_file_roundtrip_preserves_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest((0..100).map(|i| (format!("d{i:03}"), speech(25.0))).collect());
        let base = build_base(&m, 100, 1).unwrap();
        let dup = build_duplicates(&base, 0.01, 10, 3).unwrap();
        let path = dir.path().join("duplicates.ids");
        write_subsample(&path, &dup).unwrap();
        let back = read_subsample(&path).unwrap();
        assert_eq!(back.segment_ids, dup.segment_ids);
        assert_eq!(back.spec, dup.spec);

        let gender_m = manifest(vec![
            ("m0", annotation("fr", 1.0, 25.0, 0.0)),
            ("f0", annotation("fr", 1.0, 0.0, 25.0)),
        ]);
        let g = build_gender_balanced(&gender_m, 2, 0, 0.5).unwrap();
        let gpath = dir.path().join("gender.ids");
        write_subsample(&gpath, &g).unwrap();
        let gback = read_subsample(&gpath).unwrap();
        assert_eq!(gback.provenance.achieved_female_share, g.provenance.achieved_female_share);
    }
}
