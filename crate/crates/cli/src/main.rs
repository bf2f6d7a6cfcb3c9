//! wavesift: one binary driving the corpus pipeline (dedup → blocklist →
//! chunk → describe → subsample) and the evaluation tools around it
//! (segmentation heads, WER and detection metrics, membership-inference
//! probes), plus synthetic fixture generators for end-to-end dry runs.

mod config;
mod fixtures;
mod pipeline;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use wavesift::audio::decode_pcm;
use wavesift::corpus::read_manifest;
use wavesift::fingerprint::{extract, write_track};
use wavesift::frameseg::{
    predict_posteriors, read_feature_seq, read_label_file, read_model, train_head, viterbi_smooth,
    write_feature_seq, write_label_file, write_model, FeatureSeq, LabeledSeq, TrainConfig,
};
use wavesift::metrics::{
    bootstrap_ci, eer, frame_metrics, min_dcf, read_score_file, render_with_ci, roc_auc,
    weighted_mean, wer_strings, write_score_file, BootstrapConfig, DcfParams, GenderWerReport,
    WeightedItem, WerBreakdown,
};
use wavesift::mia::{
    build_splits, read_probe, read_splits, run_attack, synth_attack_features, train_probe,
    write_probe, write_splits, LayerStack, MiaSplits, ProbeTrainConfig, SplitSizes,
    SyntheticFeatureConfig,
};
use wavesift::subsample::read_subsample;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Stage(_) => 4,
        }
    }
}

fn stage(e: impl std::fmt::Display) -> CliError {
    CliError::Stage(e.to_string())
}

/// Corpus curation and evaluation toolkit for broadcast audio.
#[derive(Parser)]
#[command(name = "wavesift", version)]
struct Cli {
    /// Override the seeds from the pipeline config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for audio decoding and fingerprinting (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Pipeline configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fingerprint WAV files into .fpt tracks.
    Fingerprint {
        /// Directory for the .fpt files.
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// WAV files to fingerprint.
        #[arg(value_name = "WAV", required = true)]
        wavs: Vec<PathBuf>,
    },
    /// Drop rebroadcast copies from the source catalog.
    Dedup(StageArgs),
    /// Drop sources that match held-out evaluation audio.
    Blocklist(StageArgs),
    /// Sample non-overlapping 30 s chunks from the kept sources.
    Chunk(StageArgs),
    /// Annotate every chunk and write sidecar files.
    Describe(StageArgs),
    /// Build the six controlled pretraining subsamples.
    Subsample(StageArgs),
    /// Run the pipeline stages in order.
    Pipeline {
        /// Stop after this stage (default: run everything).
        #[arg(long, value_name = "STAGE")]
        stage: Option<String>,
    },
    /// Print corpus statistics over the annotated chunks.
    Stats,
    /// Train a frame segmentation head on labeled feature windows.
    FramesegTrain(FramesegTrainArgs),
    /// Run a trained head over feature windows, with Viterbi smoothing.
    FramesegEval(FramesegEvalArgs),
    /// Scalar evaluation metrics.
    Metrics {
        #[command(subcommand)]
        command: MetricsCommand,
    },
    /// Membership-inference analysis.
    Mia {
        #[command(subcommand)]
        command: MiaCommand,
    },
    /// Write a small synthetic corpus (audio, catalog, eval set, config).
    SynthCorpus {
        /// Corpus root to create.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Write synthetic feature windows with frame labels for head training.
    SynthFrameseg(SynthFramesegArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Run every earlier stage first instead of requiring their outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct FramesegTrainArgs {
    /// Directory of .fsq feature windows.
    #[arg(long, value_name = "DIR")]
    features: PathBuf,
    /// Directory of .lab files, one per feature window, same stem.
    #[arg(long, value_name = "DIR")]
    labels: PathBuf,
    /// Where to write the trained head (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Windows per optimizer step.
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Epochs without dev improvement before stopping.
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Fraction of windows held out for dev-best selection.
    #[arg(long, default_value_t = 0.2)]
    dev_fraction: f64,
}

#[derive(Args)]
struct FramesegEvalArgs {
    /// Trained head (JSON).
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Directory of .fsq feature windows to score.
    #[arg(long, value_name = "DIR")]
    features: PathBuf,
    /// Gold .lab files; when given, frame metrics are reported.
    #[arg(long, value_name = "DIR")]
    labels: Option<PathBuf>,
    /// Viterbi switch probability.
    #[arg(long, default_value_t = 0.05)]
    p_switch: f64,
    /// Write the smoothed predictions here as .lab files.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Gendered WER over a TSV of scored utterances.
    Wer(WerArgs),
    /// AUC, EER and minDCF over a score file.
    Detection(DetectionArgs),
    /// Frame metrics between predicted and gold .lab directories.
    Frames(FramesArgs),
}

#[derive(Args)]
struct WerArgs {
    /// TSV lines: utt_id, gender (F/M), reference, hypothesis.
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    /// Bootstrap resamples for the confidence intervals.
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Two-sided confidence level in percent.
    #[arg(long, default_value_t = 97.5)]
    confidence: f64,
}

#[derive(Args)]
struct DetectionArgs {
    /// Score file lines: trial_id, score, positive|negative.
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// Target prior for minDCF.
    #[arg(long, default_value_t = 0.01)]
    p_target: f64,
    /// Write the ROC sweep here as TSV.
    #[arg(long, value_name = "FILE")]
    roc_out: Option<PathBuf>,
}

#[derive(Args)]
struct FramesArgs {
    /// Directory of predicted .lab files.
    #[arg(long, value_name = "DIR")]
    pred: PathBuf,
    /// Directory of gold .lab files with matching names.
    #[arg(long, value_name = "DIR")]
    gold: PathBuf,
}

#[derive(Subcommand)]
enum MiaCommand {
    /// Carve the five membership splits from two pretraining subsamples.
    Split(SplitArgs),
    /// Generate planted-signal probe features for a splits file.
    SynthFeatures(SynthFeaturesArgs),
    /// Train the membership probe on the train splits.
    TrainProbe(TrainProbeArgs),
    /// Score the attack on the held-out test splits.
    Attack(AttackArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Base subsample file (every chunk pretrained on once).
    #[arg(long, value_name = "FILE")]
    base: PathBuf,
    /// Duplicates subsample file (some chunks repeated).
    #[arg(long, value_name = "FILE")]
    duplicates: PathBuf,
    /// Chunk manifest supplying the candidate pool.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Where to write the splits (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 1320)]
    train_members: usize,
    #[arg(long, default_value_t = 1320)]
    train_nonmembers: usize,
    /// Size of each of the three test sets.
    #[arg(long, default_value_t = 1200)]
    test_each: usize,
    /// Multiplicity that marks a chunk as duplicated.
    #[arg(long, default_value_t = 10)]
    dup_multiplicity: usize,
}

#[derive(Args)]
struct SynthFeaturesArgs {
    /// Splits file (JSON).
    #[arg(long, value_name = "FILE")]
    splits: PathBuf,
    /// Directory for the <chunk>.layer<N>.fsq files.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 25)]
    frames: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Feature shift of chunks seen once in pretraining.
    #[arg(long, default_value_t = 0.12)]
    member_shift: f64,
    /// Feature shift of duplicated chunks.
    #[arg(long, default_value_t = 1.6)]
    duplicated_shift: f64,
    /// Per-chunk offset noise the shifts compete against.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
}

#[derive(Args)]
struct TrainProbeArgs {
    /// Splits file (JSON).
    #[arg(long, value_name = "FILE")]
    splits: PathBuf,
    /// Directory of <chunk>.layer<N>.fsq feature files.
    #[arg(long, value_name = "DIR")]
    features: PathBuf,
    /// Where to write the trained probe (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Chunks per optimizer step.
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Epochs without dev improvement before stopping.
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Fraction of labeled chunks held out for dev-best selection.
    #[arg(long, default_value_t = 0.2)]
    dev_fraction: f64,
}

#[derive(Args)]
struct AttackArgs {
    /// Trained probe (JSON).
    #[arg(long, value_name = "FILE")]
    probe: PathBuf,
    /// Splits file (JSON).
    #[arg(long, value_name = "FILE")]
    splits: PathBuf,
    /// Directory of <chunk>.layer<N>.fsq feature files.
    #[arg(long, value_name = "DIR")]
    features: PathBuf,
    /// Write per-trial scores of the two comparisons here.
    #[arg(long, value_name = "DIR")]
    scores_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthFramesegArgs {
    /// Directory for the .fsq feature windows.
    #[arg(long, value_name = "DIR")]
    out_features: PathBuf,
    /// Directory for the matching .lab frame labels.
    #[arg(long, value_name = "DIR")]
    out_labels: PathBuf,
    #[arg(long, default_value_t = 24)]
    chunks: usize,
    /// Frames per window (1500 = 30 s at 50 Hz).
    #[arg(long, default_value_t = 1500)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Feature offset of active frames, in noise standard deviations.
    #[arg(long, default_value_t = 1.5)]
    shift: f64,
    /// Per-frame probability of switching state.
    #[arg(long, default_value_t = 0.02)]
    p_switch: f64,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            std::process::exit(4);
        }
    }
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fingerprint { out_dir, wavs } => cmd_fingerprint(out_dir, wavs),
        Command::Dedup(args) => cmd_stage(cli, "dedup", args.force),
        Command::Blocklist(args) => cmd_stage(cli, "blocklist", args.force),
        Command::Chunk(args) => cmd_stage(cli, "chunk", args.force),
        Command::Describe(args) => cmd_stage(cli, "describe", args.force),
        Command::Subsample(args) => cmd_stage(cli, "subsample", args.force),
        Command::Pipeline { stage } => {
            let target = stage.as_deref().unwrap_or("subsample");
            run_through_printed(cli, target)
        }
        Command::Stats => {
            let ws = workspace(cli)?;
            print!("{}", pipeline::write_stats(&ws)?);
            Ok(())
        }
        Command::FramesegTrain(args) => cmd_frameseg_train(cli, args),
        Command::FramesegEval(args) => cmd_frameseg_eval(args),
        Command::Metrics { command } => match command {
            MetricsCommand::Wer(args) => cmd_metrics_wer(cli, args),
            MetricsCommand::Detection(args) => cmd_metrics_detection(args),
            MetricsCommand::Frames(args) => cmd_metrics_frames(args),
        },
        Command::Mia { command } => match command {
            MiaCommand::Split(args) => cmd_mia_split(cli, args),
            MiaCommand::SynthFeatures(args) => cmd_mia_synth_features(cli, args),
            MiaCommand::TrainProbe(args) => cmd_mia_train_probe(cli, args),
            MiaCommand::Attack(args) => cmd_mia_attack(args),
        },
        Command::SynthCorpus { out } => {
            fixtures::synth_corpus(out)?;
            println!("synthetic corpus: {} sources under {}", fixtures::N_SOURCES, out.display());
            Ok(())
        }
        Command::SynthFrameseg(args) => cmd_synth_frameseg(cli, args),
    }
}

fn workspace(cli: &Cli) -> Result<pipeline::Workspace, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("a pipeline config is required (--config <path>)".into()))?;
    let (cfg, hash) = config::load(path)?;
    Ok(pipeline::Workspace::new(cfg, hash))
}

fn cmd_stage(cli: &Cli, name: &str, force: bool) -> Result<(), CliError> {
    if force {
        return run_through_printed(cli, name);
    }
    let ws = workspace(cli)?;
    let detail = pipeline::run_stage(&ws, name, cli.seed)?;
    println!("{name}\t{detail}");
    Ok(())
}

fn run_through_printed(cli: &Cli, target: &str) -> Result<(), CliError> {
    let ws = workspace(cli)?;
    let details = pipeline::run_through(&ws, target, cli.seed)?;
    for (name, detail) in pipeline::STAGE_ORDER.iter().zip(&details) {
        println!("{name}\t{detail}");
    }
    Ok(())
}

fn cmd_fingerprint(out_dir: &Path, wavs: &[PathBuf]) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(stage)?;
    for wav in wavs {
        if !wav.is_file() {
            return Err(CliError::MissingInput(format!("audio file {}", wav.display())));
        }
        let id = file_stem(wav)?.to_string();
        let buf = decode_pcm(wav).map_err(stage)?;
        let track = extract(&buf, &id).map_err(stage)?;
        write_track(&out_dir.join(format!("{id}.fpt")), &track).map_err(stage)?;
        println!("{id}\t{}\t{:.2}", track.codes.len(), track.duration_s());
    }
    Ok(())
}

fn file_stem(path: &Path) -> Result<&str, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Stage(format!("unusable file name {}", path.display())))
}

/// All files under `dir` with the given extension, sorted by name; the
/// directory must exist and contribute at least one.
fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingInput(format!("directory {}", dir.display())));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(stage)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::MissingInput(format!("*.{ext} files in {}", dir.display())));
    }
    Ok(paths)
}

fn cmd_frameseg_train(cli: &Cli, a: &FramesegTrainArgs) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    let mut seqs = Vec::new();
    for path in sorted_files(&a.features, "fsq")? {
        let seq = read_feature_seq(&path).map_err(stage)?;
        let lab_path = a.labels.join(format!("{}.lab", file_stem(&path)?));
        if !lab_path.is_file() {
            return Err(CliError::MissingInput(format!("label file {}", lab_path.display())));
        }
        let (chunk_id, labels) = read_label_file(&lab_path).map_err(stage)?;
        if chunk_id != seq.chunk_id {
            return Err(CliError::Stage(format!(
                "label file {} is for chunk {chunk_id}, features are for {}",
                lab_path.display(),
                seq.chunk_id
            )));
        }
        let labels: Vec<u8> = labels.iter().map(|&b| u8::from(b)).collect();
        seqs.push(LabeledSeq::new(seq, labels).map_err(stage)?);
    }
    if seqs.len() < 2 {
        return Err(CliError::Config(format!(
            "a train/dev split needs at least two labeled windows, found {}",
            seqs.len()
        )));
    }
    if !(0.0..1.0).contains(&a.dev_fraction) {
        return Err(CliError::Config(format!("dev fraction {} outside [0, 1)", a.dev_fraction)));
    }

    // Window-level dev split on its own RNG stream; training streams are 1/2.
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for i in 0..order.len() {
        let j = rng.gen_range(i..order.len());
        order.swap(i, j);
    }
    let dev_n =
        ((seqs.len() as f64 * a.dev_fraction).round() as usize).clamp(1, seqs.len() - 1);
    let dev: Vec<LabeledSeq> = order[..dev_n].iter().map(|&i| seqs[i].clone()).collect();
    let train: Vec<LabeledSeq> = order[dev_n..].iter().map(|&i| seqs[i].clone()).collect();

    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        dropout_p: a.dropout,
        hidden: a.hidden,
        seed,
        patience: a.patience,
    };
    let (model, log) = train_head(&train, &dev, &cfg).map_err(stage)?;
    write_model(&a.out, &model).map_err(stage)?;
    print!("{}", log.render());
    println!(
        "kept epoch {} over {} train / {} dev windows; wrote {}",
        log.best_epoch,
        train.len(),
        dev.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_frameseg_eval(a: &FramesegEvalArgs) -> Result<(), CliError> {
    if !a.model.is_file() {
        return Err(CliError::MissingInput(format!("model file {}", a.model.display())));
    }
    let model = read_model(&a.model).map_err(stage)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(stage)?;
    }
    let mut pooled_pred = Vec::new();
    let mut pooled_gold = Vec::new();
    for path in sorted_files(&a.features, "fsq")? {
        let seq = read_feature_seq(&path).map_err(stage)?;
        let posts = predict_posteriors(&model, &seq).map_err(stage)?;
        let pred = viterbi_smooth(&posts, a.p_switch).map_err(stage)?;
        if let Some(dir) = &a.out_dir {
            let out = dir.join(format!("{}.lab", file_stem(&path)?));
            write_label_file(&out, &seq.chunk_id, &pred).map_err(stage)?;
        }
        if let Some(gold_dir) = &a.labels {
            let gold_path = gold_dir.join(format!("{}.lab", file_stem(&path)?));
            if !gold_path.is_file() {
                return Err(CliError::MissingInput(format!("label file {}", gold_path.display())));
            }
            let (_, gold) = read_label_file(&gold_path).map_err(stage)?;
            let m = frame_metrics(&pred, &gold).map_err(stage)?;
            println!("{}\t{}", seq.chunk_id, m.render());
            pooled_pred.extend_from_slice(&pred);
            pooled_gold.extend(gold);
        } else {
            let active = pred.iter().filter(|&&b| b).count();
            println!("{}\t{} of {} frames active", seq.chunk_id, active, pred.len());
        }
    }
    if !pooled_gold.is_empty() {
        let m = frame_metrics(&pooled_pred, &pooled_gold).map_err(stage)?;
        println!("pooled\t{}", m.render());
    }
    Ok(())
}

fn cmd_metrics_wer(cli: &Cli, a: &WerArgs) -> Result<(), CliError> {
    if !a.pairs.is_file() {
        return Err(CliError::MissingInput(format!("utterance file {}", a.pairs.display())));
    }
    let text = fs::read_to_string(&a.pairs).map_err(stage)?;
    let zero = WerBreakdown { substitutions: 0, deletions: 0, insertions: 0, hits: 0, ref_len: 0 };
    // Index 0 female, 1 male.
    let mut pooled = [zero, zero];
    let mut items: [Vec<WeightedItem>; 2] = [Vec::new(), Vec::new()];
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| {
            CliError::Config(format!("{}:{}: {msg}", a.pairs.display(), lineno + 1))
        };
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let [utt_id, gender, reference, hypothesis] = fields[..] else {
            return Err(bad("expected utt_id, gender, reference, hypothesis".into()));
        };
        let g = match gender {
            "F" | "f" => 0,
            "M" | "m" => 1,
            other => return Err(bad(format!("gender {other:?} is not F or M"))),
        };
        let b = wer_strings(reference, hypothesis).map_err(|e| bad(format!("{utt_id}: {e}")))?;
        pooled[g].merge(&b);
        items[g].push(WeightedItem::new(100.0 * b.wer(), b.ref_len as f64));
    }
    for (g, name) in ["female", "male"].iter().enumerate() {
        if items[g].is_empty() {
            return Err(CliError::Config(format!(
                "no {name} utterances in {}",
                a.pairs.display()
            )));
        }
    }

    let report =
        GenderWerReport::new(100.0 * pooled[0].wer(), 100.0 * pooled[1].wer()).map_err(stage)?;
    let cfg = BootstrapConfig {
        n_resamples: a.resamples,
        confidence: a.confidence,
        seed: cli.seed.unwrap_or(0),
    };
    let ci_f = bootstrap_ci(&items[0], weighted_mean, &cfg).map_err(stage)?;
    let ci_m = bootstrap_ci(&items[1], weighted_mean, &cfg).map_err(stage)?;
    println!("wer_female_pct\t{}", render_with_ci(report.wer_female, ci_f));
    println!("wer_male_pct\t{}", render_with_ci(report.wer_male, ci_m));
    println!("delta_rel_pct\t{:.1}", report.delta_rel);
    Ok(())
}

fn cmd_metrics_detection(a: &DetectionArgs) -> Result<(), CliError> {
    if !a.scores.is_file() {
        return Err(CliError::MissingInput(format!("score file {}", a.scores.display())));
    }
    let set = read_score_file(&a.scores).map_err(stage)?;
    let (points, auc) = roc_auc(&set).map_err(stage)?;
    let eer_pct = eer(&set).map_err(stage)?;
    let dcf = min_dcf(&set, &DcfParams::with_p_target(a.p_target)).map_err(stage)?;
    if let Some(path) = &a.roc_out {
        let mut out = String::from("threshold\tfpr\ttpr\n");
        for p in &points {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\n", p.threshold, p.fpr, p.tpr));
        }
        fs::write(path, out).map_err(stage)?;
    }
    println!("auc\t{auc:.4}");
    println!("eer_pct\t{eer_pct:.2}");
    println!("min_dcf\t{dcf:.3}");
    Ok(())
}

fn cmd_metrics_frames(a: &FramesArgs) -> Result<(), CliError> {
    let mut pooled_pred = Vec::new();
    let mut pooled_gold = Vec::new();
    for path in sorted_files(&a.pred, "lab")? {
        let gold_path = a.gold.join(path.file_name().expect("listed file has a name"));
        if !gold_path.is_file() {
            return Err(CliError::MissingInput(format!("label file {}", gold_path.display())));
        }
        let (chunk_id, pred) = read_label_file(&path).map_err(stage)?;
        let (_, gold) = read_label_file(&gold_path).map_err(stage)?;
        let m = frame_metrics(&pred, &gold).map_err(stage)?;
        println!("{chunk_id}\t{}", m.render());
        pooled_pred.extend(pred);
        pooled_gold.extend(gold);
    }
    let m = frame_metrics(&pooled_pred, &pooled_gold).map_err(stage)?;
    println!("pooled\t{}", m.render());
    Ok(())
}

fn load_splits(path: &Path) -> Result<MiaSplits, CliError> {
    if !path.is_file() {
        return Err(CliError::MissingInput(format!("splits file {}", path.display())));
    }
    read_splits(path).map_err(stage)
}

/// Group a directory of `<chunk>.layer<N>.fsq` files into per-chunk stacks,
/// layers in index order.
fn load_layer_stacks(dir: &Path) -> Result<BTreeMap<String, LayerStack>, CliError> {
    let mut by_id: BTreeMap<String, Vec<(usize, FeatureSeq)>> = BTreeMap::new();
    for path in sorted_files(dir, "fsq")? {
        let stem = file_stem(&path)?;
        let parsed = stem
            .rsplit_once(".layer")
            .and_then(|(id, l)| l.parse::<usize>().ok().map(|l| (id, l)));
        let Some((id, layer)) = parsed else {
            return Err(CliError::Stage(format!(
                "feature file {} is not named <chunk>.layer<N>.fsq",
                path.display()
            )));
        };
        let seq = read_feature_seq(&path).map_err(stage)?;
        by_id.entry(id.to_string()).or_default().push((layer, seq));
    }
    let mut stacks = BTreeMap::new();
    for (id, mut layers) in by_id {
        layers.sort_by_key(|(l, _)| *l);
        stacks.insert(id, layers.into_iter().map(|(_, seq)| seq).collect());
    }
    Ok(stacks)
}

fn cmd_mia_split(cli: &Cli, a: &SplitArgs) -> Result<(), CliError> {
    for (path, what) in [
        (&a.base, "subsample file"),
        (&a.duplicates, "subsample file"),
        (&a.manifest, "chunk manifest"),
    ] {
        if !path.is_file() {
            return Err(CliError::MissingInput(format!("{what} {}", path.display())));
        }
    }
    let base = read_subsample(&a.base).map_err(stage)?;
    let duplicates = read_subsample(&a.duplicates).map_err(stage)?;
    let manifest = read_manifest(&a.manifest).map_err(stage)?;
    let candidates: Vec<String> = manifest.chunks.iter().map(|c| c.chunk_id.clone()).collect();
    let sizes = SplitSizes {
        train_members: a.train_members,
        train_nonmembers: a.train_nonmembers,
        test_each: a.test_each,
        dup_multiplicity: a.dup_multiplicity,
    };
    let splits = build_splits(
        &base.segment_ids,
        &duplicates.segment_ids,
        &candidates,
        &sizes,
        cli.seed.unwrap_or(0),
    )
    .map_err(stage)?;
    write_splits(&a.out, &splits).map_err(stage)?;
    let [unseen_h, once_h, dup_h] = splits.test_hours();
    println!(
        "train\t{} members + {} nonmembers ({:.1} h)",
        splits.train_members.len(),
        splits.train_nonmembers.len(),
        splits.train_hours()
    );
    println!(
        "test\t{} unseen / {} once / {} duplicated ({:.1} / {:.1} / {:.1} h)",
        splits.test_unseen.len(),
        splits.test_once.len(),
        splits.test_duplicated.len(),
        unseen_h,
        once_h,
        dup_h
    );
    Ok(())
}

fn cmd_mia_synth_features(cli: &Cli, a: &SynthFeaturesArgs) -> Result<(), CliError> {
    let splits = load_splits(&a.splits)?;
    let cfg = SyntheticFeatureConfig {
        n_layers: a.layers,
        frames: a.frames,
        dim: a.dim,
        member_shift: a.member_shift,
        duplicated_shift: a.duplicated_shift,
        chunk_noise: a.noise,
        seed: cli.seed.unwrap_or(0),
    };
    if cfg.n_layers == 0 || cfg.frames == 0 || cfg.dim == 0 {
        return Err(CliError::Config("layers, frames and dim must be positive".into()));
    }
    let features = synth_attack_features(&splits, &cfg);
    fs::create_dir_all(&a.out_dir).map_err(stage)?;
    for (id, stack) in &features {
        for (layer, seq) in stack.iter().enumerate() {
            let path = a.out_dir.join(format!("{id}.layer{layer}.fsq"));
            write_feature_seq(&path, seq).map_err(stage)?;
        }
    }
    println!(
        "wrote {} chunks × {} layers to {}",
        features.len(),
        a.layers,
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_mia_train_probe(cli: &Cli, a: &TrainProbeArgs) -> Result<(), CliError> {
    let splits = load_splits(&a.splits)?;
    let features = load_layer_stacks(&a.features)?;
    let cfg = ProbeTrainConfig {
        mlp: TrainConfig {
            learning_rate: a.learning_rate,
            batch_size: a.batch_size,
            max_epochs: a.max_epochs,
            dropout_p: a.dropout,
            hidden: a.hidden,
            seed: cli.seed.unwrap_or(0),
            patience: a.patience,
        },
        dev_fraction: a.dev_fraction,
    };
    let (probe, log) = train_probe(&features, &splits, &cfg).map_err(stage)?;
    write_probe(&a.out, &probe).map_err(stage)?;
    print!("{}", log.render());
    let weights: Vec<String> =
        probe.layer_weights().iter().map(|w| format!("{w:.3}")).collect();
    println!("layer weights\t{}", weights.join(" "));
    println!("kept epoch {}; wrote {}", log.best_epoch, a.out.display());
    Ok(())
}

fn cmd_mia_attack(a: &AttackArgs) -> Result<(), CliError> {
    if !a.probe.is_file() {
        return Err(CliError::MissingInput(format!("probe file {}", a.probe.display())));
    }
    let probe = read_probe(&a.probe).map_err(stage)?;
    let splits = load_splits(&a.splits)?;
    let features = load_layer_stacks(&a.features)?;
    let report = run_attack(&probe, &splits, &features).map_err(stage)?;
    if let Some(dir) = &a.scores_out {
        fs::create_dir_all(dir).map_err(stage)?;
        write_score_file(&dir.join("unseen_vs_once.scores"), &report.once).map_err(stage)?;
        write_score_file(&dir.join("unseen_vs_duplicated.scores"), &report.duplicated)
            .map_err(stage)?;
    }
    print!("{}", report.render());
    Ok(())
}

fn randn(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Feature windows with a planted class signal: active frames are offset by
/// `shift` along a random unit direction on top of unit Gaussian noise, and
/// the frame labels follow a two-state Markov chain. Raw posteriors stay
/// noisy at the default shift, so smoothing has something to clean up.
fn cmd_synth_frameseg(cli: &Cli, a: &SynthFramesegArgs) -> Result<(), CliError> {
    if a.chunks == 0 || a.frames == 0 || a.dim == 0 {
        return Err(CliError::Config("chunks, frames and dim must be positive".into()));
    }
    if !(0.0..1.0).contains(&a.p_switch) {
        return Err(CliError::Config(format!("switch probability {} outside [0, 1)", a.p_switch)));
    }
    fs::create_dir_all(&a.out_features).map_err(stage)?;
    fs::create_dir_all(&a.out_labels).map_err(stage)?;

    let mut rng = ChaCha20Rng::seed_from_u64(cli.seed.unwrap_or(0));
    let mut direction: Vec<f64> = (0..a.dim).map(|_| randn(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut direction {
        *v *= a.shift / norm;
    }

    for c in 0..a.chunks {
        let chunk_id = format!("synth{c:03}+00000");
        let mut labels = Vec::with_capacity(a.frames);
        let mut state = rng.gen_bool(0.5);
        for _ in 0..a.frames {
            labels.push(state);
            if rng.gen_bool(a.p_switch) {
                state = !state;
            }
        }
        let mut data = Vec::with_capacity(a.frames * a.dim);
        for &label in &labels {
            for &dir_k in &direction {
                data.push(randn(&mut rng) + if label { dir_k } else { 0.0 });
            }
        }
        let seq =
            FeatureSeq::new(chunk_id.clone(), a.frames, a.dim, data, "synthetic").map_err(stage)?;
        write_feature_seq(&a.out_features.join(format!("{chunk_id}.fsq")), &seq).map_err(stage)?;
        write_label_file(&a.out_labels.join(format!("{chunk_id}.lab")), &chunk_id, &labels)
            .map_err(stage)?;
    }
    println!(
        "wrote {} windows of {}×{} to {} and {}",
        a.chunks,
        a.frames,
        a.dim,
        a.out_features.display(),
        a.out_labels.display()
    );
    Ok(())
}
