//! Acceptance gates: one test per shipping criterion. Each test asserts its
//! numeric or behavioral contract against an independent oracle and enforces
//! a wall-clock budget. Run with `--nocapture` to see one PASS line per
//! criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use wavesift::audio::{lowpass, synth_signal, AudioBuffer, SynthSpec};
use wavesift::corpus::{ChunkManifest, ChunkRecord};
use wavesift::dedup::{
    build_index, dedup_corpus, find_spans, find_spans_bruteforce, DEFAULT_MIN_RUN,
};
use wavesift::describe::{label_heuristics, Annotation, Gender, MusicProps, SpeechSegment};
use wavesift::fingerprint::{extract, FingerprintTrack, DEFAULT_TOL};
use wavesift::frameseg::{
    grad_check, viterbi_smooth, GradCheckConfig, HeadModel, MlpConfig, TrainConfig,
};
use wavesift::metrics::{
    bootstrap_ci, delta_rel, eer, min_dcf, roc_auc, weighted_mean, wer, BootstrapConfig,
    DcfParams, Label, ScoreSet, Trial, WeightedItem,
};
use wavesift::mia::{
    build_splits, run_attack, synth_attack_features, train_probe, ProbeTrainConfig, SplitSizes,
    SyntheticFeatureConfig,
};
use wavesift::subsample::{
    build_duplicates, multiplicity_histogram, verify_subsample, Provenance, Subsample,
    SubsampleName, SubsampleSpec,
};

fn pass(criterion: u32, started: Instant, budget_s: f64, what: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_s,
        "criterion {criterion:02} took {elapsed:.1}s, budget {budget_s}s"
    );
    println!("ACCEPTANCE {criterion:02} PASS ({elapsed:.1}s) — {what}");
}

#[test]
fn acceptance_01_delta_rel_reference_cells() {
    let t = Instant::now();
    let cells = [
        (17.9, 18.8, -4.9),
        (18.2, 18.7, -2.7),
        (15.8, 14.0, 12.1),
        (15.2, 13.7, 10.4),
        (14.9, 16.2, -8.4),
        (14.7, 16.1, -9.1),
        (16.9, 16.4, 3.0),
        (16.5, 16.1, 2.5),
    ];
    for (f, m, expected) in cells {
        let got = delta_rel(f, m).unwrap();
        assert!(
            (got - expected).abs() < 0.05,
            "delta_rel({f}, {m}) = {got:.3}, reference {expected}"
        );
    }
    pass(1, t, 1.0, "relative WER gap matches all reference cells within ±0.05");
}

#[test]
fn acceptance_02_duplicates_arithmetic_at_scale() {
    let t = Instant::now();
    let n = 120_000;
    let ids: Vec<String> = (0..n).map(|i| format!("seg{i:06}+00000")).collect();
    let base = Subsample {
        spec: SubsampleSpec::new(SubsampleName::Base, n, 7),
        segment_ids: ids.clone(),
        provenance: Provenance { pool_size: n, achieved_female_share: None },
    };
    let dup = build_duplicates(&base, 0.01, 10, 7).unwrap();
    assert_eq!(dup.segment_ids.len(), n, "total segment count must be preserved");
    let hist = multiplicity_histogram(&dup.segment_ids);
    let mut expected = BTreeMap::new();
    expected.insert(1, 108_000);
    expected.insert(10, 1_200);
    assert_eq!(hist, expected, "multiplicity histogram");
    let distinct: BTreeSet<&String> = dup.segment_ids.iter().collect();
    assert_eq!(n - distinct.len(), 10_800, "ids removed to make room for the copies");

    let manifest = ChunkManifest {
        chunks: ids
            .iter()
            .map(|id| ChunkRecord {
                chunk_id: id.clone(),
                source_id: "synth".into(),
                offset_s: 0.0,
                duration_s: 30.0,
                channel: "radio".into(),
                broadcast_date: NaiveDate::from_ymd_opt(2013, 1, 1).unwrap(),
            })
            .collect(),
        annotations: BTreeMap::new(),
    };
    let report = verify_subsample(&dup, &manifest).unwrap();
    assert!(report.all_pass(), "{}", report.render());
    pass(2, t, 5.0, "1% x10 duplication of 120k segments: 1200 tenfold ids, 10800 removals");
}

fn annotation(no: f64, fg: f64, speech_s: f64) -> Annotation {
    Annotation {
        language: "fr".into(),
        transcript: String::new(),
        speech_segments: if speech_s > 0.0 {
            vec![SpeechSegment { start: 0.0, end: speech_s, gender: Gender::Female }]
        } else {
            Vec::new()
        },
        music_props: MusicProps { no, bg: 1.0 - no - fg, fg },
    }
}

#[test]
fn acceptance_03_heuristic_threshold_boundaries() {
    let t = Instant::now();
    // music flag: p_no strictly below 0.85
    assert!(label_heuristics(&annotation(0.849, 0.0, 0.0)).has_music);
    assert!(!label_heuristics(&annotation(0.85, 0.0, 0.0)).has_music);
    assert!(!label_heuristics(&annotation(0.851, 0.0, 0.0)).has_music);
    // speech flag: strictly more than 20 s of speech
    assert!(!label_heuristics(&annotation(1.0, 0.0, 20.0)).is_speech);
    assert!(label_heuristics(&annotation(1.0, 0.0, 20.1)).is_speech);
    // speech flag: foreground music strictly below 0.30, speech held above 20 s
    assert!(!label_heuristics(&annotation(0.70, 0.30, 25.0)).is_speech);
    assert!(label_heuristics(&annotation(0.701, 0.299, 25.0)).is_speech);
    pass(3, t, 1.0, "content heuristics flip exactly at p_no 0.85, 20 s speech, p_fg 0.30");
}

#[test]
fn acceptance_04_dedup_recall_on_planted_duplicates() {
    let t = Instant::now();
    // 200 distinct tracks: half seeded noise, half harmonic stacks over a
    // noise floor, 30-35 s each.
    let buffers: Vec<AudioBuffer> = (0..200)
        .map(|i| {
            let dur = 30.0 + (i % 6) as f64;
            let noise = synth_signal(&SynthSpec::white_noise(dur, 5_000 + i as u64)).unwrap();
            if i % 2 == 0 {
                noise
            } else {
                let tones = synth_signal(&SynthSpec::tone_mix(300.0 + 10.0 * i as f64, dur)).unwrap();
                tones.mix(&noise, 1.0, 0.2)
            }
        })
        .collect();
    let mut tracks: Vec<FingerprintTrack> = buffers
        .iter()
        .enumerate()
        .map(|(i, b)| extract(b, &format!("orig{i:03}")).unwrap())
        .collect();
    // 100 planted duplicates: 40 exact copies, 30 excerpts (24 s starting at
    // 3 s), 30 low-passed at 4 kHz.
    for j in 0..100usize {
        let src = &buffers[j * 2];
        let dup = match j % 10 {
            0..=3 => src.clone(),
            4..=6 => src.slice_seconds(3.0, 24.0),
            _ => lowpass(src, 4_000.0).unwrap(),
        };
        tracks.push(extract(&dup, &format!("dup{j:03}")).unwrap());
    }

    let report = dedup_corpus(&tracks, DEFAULT_MIN_RUN, DEFAULT_TOL).unwrap();
    let false_removals: Vec<&str> = report
        .removed
        .iter()
        .map(|r| r.source_id.as_str())
        .filter(|id| id.starts_with("orig"))
        .collect();
    assert!(false_removals.is_empty(), "distinct tracks removed: {false_removals:?}");
    let caught = report.removed.len();
    assert!(caught >= 95, "recall {caught}/100 below 95%");
    pass(4, t, 120.0, &format!("dedup caught {caught}/100 planted duplicates, zero false removals"));
}

#[test]
fn acceptance_05_span_search_matches_bruteforce() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    for corpus in 0..50 {
        let n_tracks = rng.gen_range(2usize..=20);
        let mut tracks: Vec<FingerprintTrack> = (0..n_tracks)
            .map(|k| {
                let len = rng.gen_range(8usize..=60);
                let bits: Vec<u32> = (0..len).map(|_| rng.gen()).collect();
                FingerprintTrack::from_codes(format!("c{corpus}t{k}"), 0.25, 1.0, bits)
            })
            .collect();
        let (min_run, tol) = if corpus % 2 == 0 {
            (DEFAULT_MIN_RUN, DEFAULT_TOL)
        } else {
            (rng.gen_range(4usize..=6), rng.gen_range(3u32..=8))
        };
        // Plant shared runs. At most 3 flips per code keeps one of the four
        // 8-bit index blocks intact, so retrieval is pigeonhole-guaranteed;
        // runs of >= 4 codes keep chance background spans out of reach.
        for _ in 0..rng.gen_range(1..=4) {
            let a = rng.gen_range(0..n_tracks);
            let b = rng.gen_range(0..n_tracks);
            let run = rng.gen_range(min_run..=min_run + 8);
            if tracks[a].codes.len() < run || tracks[b].codes.len() < run {
                continue;
            }
            let sa = rng.gen_range(0..=tracks[a].codes.len() - run);
            let sb = rng.gen_range(0..=tracks[b].codes.len() - run);
            for k in 0..run {
                let mut bits = tracks[a].codes[sa + k].bits;
                for _ in 0..rng.gen_range(0..=tol.min(3)) {
                    bits ^= 1u32 << rng.gen_range(0u32..32);
                }
                tracks[b].codes[sb + k].bits = bits;
            }
        }
        let idx = build_index(&tracks).unwrap();
        for q in &tracks {
            let fast = find_spans(&idx, q, min_run, tol);
            let slow = find_spans_bruteforce(&tracks, q, min_run, tol);
            assert_eq!(fast, slow, "corpus {corpus}, query {}", q.source_id);
        }
    }
    pass(5, t, 60.0, "indexed span search identical to the brute-force scanner on 50 corpora");
}

/// Score every one of the 2^T label paths directly: uniform start, symmetric
/// switch probability, emissions clamped to [1e-6, 1 - 1e-6].
fn best_path_exhaustive(posteriors: &[f64], p_switch: f64) -> Vec<bool> {
    let t_len = posteriors.len();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for path in 0..(1usize << t_len) {
        let bit = |t: usize| (path >> t) & 1;
        let mut score = 0.5f64.ln();
        for (t, &p) in posteriors.iter().enumerate() {
            let p = p.clamp(1e-6, 1.0 - 1e-6);
            score += if bit(t) == 1 { p.ln() } else { (1.0 - p).ln() };
            if t > 0 {
                score += if bit(t) == bit(t - 1) { (1.0 - p_switch).ln() } else { p_switch.ln() };
            }
        }
        if score > best.0 {
            best = (score, path);
        }
    }
    (0..t_len).map(|t| (best.1 >> t) & 1 == 1).collect()
}

#[test]
fn acceptance_06_viterbi_matches_exhaustive_paths() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    for case in 0..100 {
        let t_len = rng.gen_range(1..=12);
        let posts: Vec<f64> = (0..t_len).map(|_| rng.gen_range(0.01..0.99)).collect();
        let p_switch = if case % 2 == 0 { 0.01 } else { 0.05 };
        let got = viterbi_smooth(&posts, p_switch).unwrap();
        let want = best_path_exhaustive(&posts, p_switch);
        assert_eq!(got, want, "case {case}, p_switch {p_switch}, posteriors {posts:?}");
    }
    pass(6, t, 10.0, "Viterbi smoothing equals exhaustive 2^T maximization, p_switch 0.01 and 0.05");
}

/// Unit-cost edit distance by plain exponential recursion over all
/// alignments; independent of any dynamic-programming machinery.
fn edit_distance_recursive(r: &[String], h: &[String]) -> usize {
    if r.is_empty() {
        return h.len();
    }
    if h.is_empty() {
        return r.len();
    }
    let sub = edit_distance_recursive(&r[1..], &h[1..]) + usize::from(r[0] != h[0]);
    let del = edit_distance_recursive(&r[1..], h) + 1;
    let ins = edit_distance_recursive(r, &h[1..]) + 1;
    sub.min(del).min(ins)
}

fn score_set(pos: &[f64], neg: &[f64]) -> ScoreSet {
    let mut set = ScoreSet::new();
    for (i, &s) in pos.iter().enumerate() {
        set.trials.push(Trial { trial_id: format!("p{i}"), score: s, label: Label::Positive });
    }
    for (i, &s) in neg.iter().enumerate() {
        set.trials.push(Trial { trial_id: format!("n{i}"), score: s, label: Label::Negative });
    }
    set
}

/// FAR and FRR of the rule "accept iff score >= threshold" for every
/// distinct threshold (direct counting), plus the two degenerate rules.
fn operating_points(pos: &[f64], neg: &[f64]) -> Vec<(f64, f64)> {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut points = vec![(1.0, 0.0)];
    for &theta in &thresholds {
        let far = neg.iter().filter(|&&s| s >= theta).count() as f64 / neg.len() as f64;
        let frr = pos.iter().filter(|&&s| s < theta).count() as f64 / pos.len() as f64;
        points.push((far, frr));
    }
    points.push((0.0, 1.0));
    points
}

fn eer_by_enumeration(pos: &[f64], neg: &[f64]) -> f64 {
    let points = operating_points(pos, neg);
    for w in points.windows(2) {
        let (far1, frr1) = w[0];
        let (far2, frr2) = w[1];
        let d1 = far1 - frr1;
        let d2 = far2 - frr2;
        if d1 >= 0.0 && d2 <= 0.0 {
            if d1 == 0.0 {
                return 100.0 * frr1;
            }
            let alpha = d1 / (d1 - d2);
            return 100.0 * (frr1 + alpha * (frr2 - frr1));
        }
    }
    unreachable!("false-accept and false-reject curves always cross")
}

fn min_dcf_by_enumeration(pos: &[f64], neg: &[f64], params: &DcfParams) -> f64 {
    let miss_weight = params.c_miss * params.p_target;
    let fa_weight = params.c_fa * (1.0 - params.p_target);
    let raw = operating_points(pos, neg)
        .into_iter()
        .map(|(far, frr)| miss_weight * frr + fa_weight * far)
        .fold(f64::INFINITY, f64::min);
    raw / miss_weight.min(fa_weight)
}

#[test]
fn acceptance_07_metric_oracles() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(707);
    let vocab = ["a", "b", "c"];

    for case in 0..200 {
        let r: Vec<String> =
            (0..rng.gen_range(1..=6)).map(|_| vocab[rng.gen_range(0..3)].to_string()).collect();
        let h: Vec<String> =
            (0..rng.gen_range(0..=6)).map(|_| vocab[rng.gen_range(0..3)].to_string()).collect();
        let b = wer(&r, &h).unwrap();
        assert_eq!(
            b.errors(),
            edit_distance_recursive(&r, &h),
            "case {case}: ref {r:?}, hyp {h:?}"
        );
        assert_eq!(b.hits + b.substitutions + b.deletions, b.ref_len);
        assert_eq!(b.ref_len, r.len());
    }

    for case in 0..500 {
        // Integer-grid scores force ties in both directions.
        let pos: Vec<f64> =
            (0..rng.gen_range(1..=12)).map(|_| rng.gen_range(0..8) as f64).collect();
        let neg: Vec<f64> =
            (0..rng.gen_range(1..=12)).map(|_| rng.gen_range(0..8) as f64).collect();
        let (_, auc) = roc_auc(&score_set(&pos, &neg)).unwrap();
        let mut wins = 0.0;
        for &p in &pos {
            for &n in &neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let expected = wins / (pos.len() as f64 * neg.len() as f64);
        assert_eq!(auc, expected, "case {case}: pos {pos:?}, neg {neg:?}");
    }

    for case in 0..60 {
        let np = rng.gen_range(1usize..=25);
        let nn = rng.gen_range(1usize..=25);
        let grid = case % 2 == 0;
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| if grid { rng.gen_range(0..10) as f64 } else { rng.gen_range(-3.0..3.0) })
                .collect()
        };
        let pos = draw(np);
        let neg = draw(nn);
        let set = score_set(&pos, &neg);
        assert_eq!(eer(&set).unwrap(), eer_by_enumeration(&pos, &neg), "case {case}");
        for p_target in [0.01, 0.05, 0.5] {
            let params = DcfParams::with_p_target(p_target);
            assert_eq!(
                min_dcf(&set, &params).unwrap(),
                min_dcf_by_enumeration(&pos, &neg, &params),
                "case {case}, p_target {p_target}"
            );
        }
    }
    pass(7, t, 30.0, "WER, AUC, EER, minDCF agree exactly with exhaustive oracles");
}

#[test]
fn acceptance_08_gradient_check() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(808);
    for (dropout_p, model_seed) in [(0.0, 21u64), (0.25, 22)] {
        let model = HeadModel::new(MlpConfig { input_dim: 7, hidden: 10, dropout_p }, model_seed);
        let n = 12;
        let x: Vec<f64> = (0..n * 7).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let err = grad_check(&model, &x, &y, n, &GradCheckConfig::default()).unwrap();
        assert!(err <= 1e-4, "dropout {dropout_p}: max relative error {err:e}");
        let tampered = GradCheckConfig { tamper_bias_grad: true, ..GradCheckConfig::default() };
        let err = grad_check(&model, &x, &y, n, &tampered).unwrap();
        assert!(err > 1e-4, "dropout {dropout_p}: corrupted gradients slipped through ({err:e})");
    }
    pass(8, t, 30.0, "analytic gradients within 1e-4 of finite differences; fault injection caught");
}

#[test]
fn acceptance_09_bootstrap_determinism_and_degeneracy() {
    let t = Instant::now();
    let cfg = BootstrapConfig { n_resamples: 1000, confidence: 97.5, seed: 909 };

    let constant: Vec<WeightedItem> =
        (0..40).map(|i| WeightedItem::new(12.5, 1.0 + (i % 5) as f64)).collect();
    let (lo, hi) = bootstrap_ci(&constant, weighted_mean, &cfg).unwrap();
    assert_eq!((lo, hi), (12.5, 12.5), "constant items must give a zero-width interval");

    let mut rng = ChaCha20Rng::seed_from_u64(910);
    let items: Vec<WeightedItem> = (0..60)
        .map(|_| WeightedItem::new(rng.gen_range(5.0..40.0), rng.gen_range(1.0..30.0)))
        .collect();
    let first = bootstrap_ci(&items, weighted_mean, &cfg).unwrap();
    let second = bootstrap_ci(&items, weighted_mean, &cfg).unwrap();
    assert_eq!(first, second, "same seed must reproduce the interval bit-exactly");
    let reseeded =
        bootstrap_ci(&items, weighted_mean, &BootstrapConfig { seed: 911, ..cfg }).unwrap();
    assert_ne!(first, reseeded, "a different seed should move the resampled interval");
    let point = weighted_mean(&items);
    assert!(first.0 <= point && point <= first.1, "interval {first:?} misses point {point}");
    assert!(first.0 < first.1, "non-degenerate data should give a positive-width interval");
    pass(9, t, 10.0, "bootstrap: zero-width on constants, bit-exact at a fixed seed (n=1000)");
}

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:05}")).collect()
}

#[test]
fn acceptance_10_membership_inference_harness() {
    let t = Instant::now();

    // Split invariants at the default sizes.
    let once = pool("once", 2600);
    let dups = pool("dup", 1250);
    let fresh = pool("new", 2600);
    let mut base_ids = once.clone();
    base_ids.push("repeated".into());
    base_ids.push("repeated".into()); // multiplicity 2 in the base manifest
    let mut dup_ids = once.clone();
    dup_ids.push("repeated".into());
    for id in &dups {
        dup_ids.extend(std::iter::repeat(id.clone()).take(10));
    }
    dup_ids.extend(std::iter::repeat("thrice".to_string()).take(3)); // wrong multiplicity
    let mut candidates = fresh.clone();
    candidates.push(once[0].clone()); // already in the manifests
    candidates.push(fresh[0].clone()); // repeated candidate entry
    let sizes = SplitSizes::default();
    let splits = build_splits(&base_ids, &dup_ids, &candidates, &sizes, 10).unwrap();
    splits.check_disjoint().unwrap();
    assert_eq!(splits.train_members.len(), 1320);
    assert_eq!(splits.train_nonmembers.len(), 1320);
    assert_eq!(splits.test_once.len(), 1200);
    assert_eq!(splits.test_duplicated.len(), 1200);
    assert_eq!(splits.test_unseen.len(), 1200);
    assert_eq!(splits.train_hours(), 22.0);
    assert_eq!(splits.test_hours(), [10.0, 10.0, 10.0]);
    let once_set: BTreeSet<&str> = once.iter().map(String::as_str).collect();
    let dup_set: BTreeSet<&str> = dups.iter().map(String::as_str).collect();
    let fresh_set: BTreeSet<&str> = fresh.iter().map(String::as_str).collect();
    assert!(splits
        .train_members
        .iter()
        .chain(&splits.test_once)
        .all(|id| once_set.contains(id.as_str())));
    assert!(splits.test_duplicated.iter().all(|id| dup_set.contains(id.as_str())));
    assert!(splits
        .train_nonmembers
        .iter()
        .chain(&splits.test_unseen)
        .all(|id| fresh_set.contains(id.as_str())));
    for (name, ids) in splits.sets() {
        assert!(
            ids.iter().all(|id| id.as_str() != "repeated" && id.as_str() != "thrice"),
            "{name} leaked an ineligible id"
        );
    }

    // Planted-signal attack: strong shift for tenfold members, near-noise
    // shift for single-exposure members.
    let once_b = pool("bonce", 2500);
    let dups_b = pool("bdup", 450);
    let fresh_b = pool("bnew", 2500);
    let mut dup_ids_b = once_b.clone();
    for id in &dups_b {
        dup_ids_b.extend(std::iter::repeat(id.clone()).take(10));
    }
    let sizes_b = SplitSizes {
        train_members: 2000,
        train_nonmembers: 2000,
        test_each: 400,
        dup_multiplicity: 10,
    };
    let splits_b = build_splits(&once_b, &dup_ids_b, &fresh_b, &sizes_b, 17).unwrap();
    let features = synth_attack_features(&splits_b, &SyntheticFeatureConfig::default());
    let cfg = ProbeTrainConfig {
        mlp: TrainConfig {
            learning_rate: 3e-4,
            batch_size: 64,
            max_epochs: 150,
            dropout_p: 0.0,
            hidden: 16,
            seed: 6,
            patience: 150,
        },
        dev_fraction: 0.2,
    };
    let (probe, _) = train_probe(&features, &splits_b, &cfg).unwrap();
    let report = run_attack(&probe, &splits_b, &features).unwrap();
    assert!(
        report.auc_duplicated >= 0.60,
        "duplicated-member AUC {:.4} below 0.60",
        report.auc_duplicated
    );
    assert!(
        (0.45..=0.55).contains(&report.auc_once),
        "once-member AUC {:.4} outside [0.45, 0.55]",
        report.auc_once
    );
    assert!(report.auc_duplicated > report.auc_once);
    pass(
        10,
        t,
        180.0,
        &format!(
            "split invariants hold; attack AUC {:.3} (x10) vs {:.3} (x1)",
            report.auc_duplicated, report.auc_once
        ),
    );
}

fn run_ok(bin: &str, args: &[&str], what: &str) {
    let out = std::process::Command::new(bin).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tree(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                out.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn acceptance_11_pipeline_end_to_end_deterministic() {
    let t = Instant::now();
    let bin = env!("CARGO_BIN_EXE_wavesift");
    let root = tempfile::tempdir().unwrap();
    let corpus = root.path().join("corpus");
    run_ok(bin, &["synth-corpus", "--out", corpus.to_str().unwrap()], "synth-corpus");

    let config_body = format!(
        "[paths]\nwork = \"work\"\ncatalog = \"{}\"\neval_audio = \"{}\"\n\n\
         [dedup]\nmin_run = 4\ntol = 6\n\n\
         [chunk]\ncount = 56\nseed = 11\n\n\
         [describe]\nmode = \"synthetic\"\n\n\
         [subsample]\nsize = 12\nseed = 40\ndup_fraction = 0.25\ndup_copies = 3\ngender_target = 0.5\n",
        corpus.join("catalog.tsv").display(),
        corpus.join("eval").display(),
    );
    let mut works = Vec::new();
    for name in ["run1", "run2"] {
        let dir = root.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        let cfg_path = dir.join("pipeline.toml");
        std::fs::write(&cfg_path, &config_body).unwrap();
        let cfg = cfg_path.to_str().unwrap();
        run_ok(bin, &["pipeline", "--config", cfg], "pipeline");
        run_ok(bin, &["stats", "--config", cfg], "stats");
        works.push(dir.join("work"));
    }

    let ledger = std::fs::read_to_string(works[0].join("ledger.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = ledger.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 5, "ledger:\n{ledger}");
    assert!(rows.iter().all(|r| r.len() == 4), "ledger:\n{ledger}");
    let stages: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(stages, ["dedup", "blocklist", "chunk", "describe", "subsample"]);
    assert!(rows.iter().all(|r| r[1] == "ok"), "ledger not green:\n{ledger}");
    assert!(rows.iter().all(|r| r[2] == rows[0][2]), "config hash changed mid-run:\n{ledger}");

    let files1 = tree(&works[0]);
    let files2 = tree(&works[1]);
    assert_eq!(files1, files2, "the two runs wrote different file sets");
    assert!(!files1.is_empty());
    for rel in &files1 {
        let a = std::fs::read(works[0].join(rel)).unwrap();
        let b = std::fs::read(works[1].join(rel)).unwrap();
        assert_eq!(a, b, "outputs differ at {rel:?}");
    }
    for sub in ["base", "no_music", "only_speech", "only_fr", "gender", "duplicates"] {
        let path = works[0].join("subsamples").join(format!("{sub}.tsv"));
        assert!(path.is_file(), "missing subsample {sub}");
    }
    pass(11, t, 300.0, "full pipeline green twice with byte-identical outputs");
}
