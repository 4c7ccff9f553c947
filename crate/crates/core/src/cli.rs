//! `sgrpo` command line: `gen-data`, `train`, `score` and `eval-corr`.
//!
//! Relative default output locations live under the directory named by
//! `SGRPO_RUN_ROOT` (default `runs`). Every failure maps onto one exit code:
//! 2 for validation, 3 for runtime and 4 for data errors.

use crate::aspect::{SubScoreVector, NUM_ASPECTS};
use crate::config::{apply_config_text, render_config};
use crate::error::Error;
use crate::metrics::{correlation_report, CorrelationReport};
use crate::parser::{parse_completion, ParsedCompletion};
use crate::rewards::{final_reward_with, RewardBreakdown, RewardParams};
use crate::sdw::AspectWeights;
use crate::synth::{generate_corpus, read_corpus, write_corpus, CorpusSpec, FeatureSpec};
use crate::train::{greedy_predictions, sha256_hex, Checkpoint, MetricsRecord, TrainConfig, Trainer};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const RUN_ROOT_ENV: &str = "SGRPO_RUN_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
    Data,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Runtime => 3,
            ErrorKind::Data => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
            ErrorKind::Data => "data",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    /// Single line: `error kind=<kind> code=<n>: <message>`.
    pub fn line(&self) -> String {
        let msg = self.message.replace('\n', " ");
        format!("error kind={} code={}: {msg}", self.kind.as_str(), self.kind.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Config(_) | Error::Domain(_) => ErrorKind::Validation,
            Error::Data { .. } | Error::Alignment(_) | Error::LengthMismatch { .. } | Error::UndefinedStatistic(_) => {
                ErrorKind::Data
            }
            Error::State(_) | Error::NonFinite { .. } | Error::Io(_) => ErrorKind::Runtime,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            kind: ErrorKind::Runtime,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sgrpo", version, about = "Sub-score GRPO: synthetic data, training, scoring and correlation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic error-injection corpus.
    GenData(GenDataArgs),
    /// Train a policy on a corpus.
    Train(TrainArgs),
    /// Parse and reward completions against ground truth.
    Score(ScoreArgs),
    /// Per-aspect Kendall / Spearman report.
    EvalCorr(EvalCorrArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// High, medium and low tier proportions.
    #[arg(long, default_value = "0.33,0.33,0.34")]
    pub tiers: String,
    /// Comma-separated noise levels, assigned round-robin.
    #[arg(long, default_value = "0.0,0.3")]
    pub noise: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub count_max: u32,
    #[arg(long, value_enum, default_value_t = EncodingArg::OneHot)]
    pub encoding: EncodingArg,
    /// Feature dimension (default: signal channels plus six noise-only ones).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Signal amplitude (default 3 for one-hot, 1 for scalar).
    #[arg(long)]
    pub feature_scale: Option<f64>,
    /// Corpus path (default: $SGRPO_RUN_ROOT/corpus.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EncodingArg {
    OneHot,
    Scalar,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $SGRPO_RUN_ROOT/train).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Freeze every aspect weight at 1.
    #[arg(long)]
    pub no_sdw: bool,
    /// Freeze every advantage scale factor at 1.
    #[arg(long)]
    pub no_mgas: bool,
    /// Continue from a checkpoint; metrics are appended to the existing log.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write a checkpoint every N steps.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSON lines `{"id": ..., "text": ...}`.
    #[arg(long)]
    pub completions: PathBuf,
    /// JSON lines `{"id": ..., "counts": [6 integers]}`.
    #[arg(long, conflicts_with = "corpus")]
    pub truth: Option<PathBuf>,
    /// Take ground truth from a corpus file instead.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Six comma-separated aspect weights (default all 1).
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long)]
    pub sigma_total: Option<f64>,
    /// Output path (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCorrArgs {
    /// Predicted counts, JSON lines `{"id", "counts"}`.
    #[arg(long, requires = "annots")]
    pub preds: Option<PathBuf>,
    /// Annotated counts, same format.
    #[arg(long)]
    pub annots: Option<PathBuf>,
    /// Predict with this checkpoint (greedy decoding) instead of reading preds.
    #[arg(long, requires = "corpus", conflicts_with = "preds")]
    pub checkpoint: Option<PathBuf>,
    /// Corpus supplying features and annotations for `--checkpoint`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Keep only corpus cases with noise level at most this value.
    #[arg(long)]
    pub max_noise: Option<f64>,
    /// Machine-readable report path.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Plain-text table path (the table is always printed to stdout).
    #[arg(long)]
    pub out_table: Option<PathBuf>,
}

/// Provenance record written next to every artefact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub corpus_checksum: String,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
    pub artifacts: BTreeMap<String, String>,
    pub code_version: String,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, seed: u64, corpus_checksum: String) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            corpus_checksum,
            started_at_unix: now_unix(),
            finished_at_unix: None,
            artifacts: BTreeMap::new(),
            code_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    fn write(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::from(Error::Io(e.to_string())))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn file_checksum(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn parse_list(raw: &str, what: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::validation(format!("{what}: `{s}` is not a number")))
        })
        .collect()
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn manifest_path_for(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn feature_spec(args: &GenDataArgs) -> FeatureSpec {
    let mut spec = match args.encoding {
        EncodingArg::OneHot => FeatureSpec::one_hot(args.count_max),
        EncodingArg::Scalar => FeatureSpec::scalar(args.count_max),
    };
    if let Some(d) = args.dim {
        spec.dim = d;
    }
    if let Some(s) = args.feature_scale {
        spec.scale = s;
    }
    spec
}

pub fn cmd_gen_data(args: &GenDataArgs) -> CliResult<PathBuf> {
    let mix = parse_list(&args.tiers, "--tiers")?;
    let tier_mix: [f64; 3] = mix
        .try_into()
        .map_err(|_| CliError::validation("--tiers needs exactly three proportions"))?;
    let spec = CorpusSpec {
        n: args.n,
        tier_mix,
        noise_levels: parse_list(&args.noise, "--noise")?,
        features: feature_spec(args),
        seed: args.seed,
    };
    spec.validate()?;
    let out = args.out.clone().unwrap_or_else(|| run_root().join("corpus.jsonl"));
    ensure_parent(&out)?;

    let config = serde_json::to_value(&spec).map_err(|e| CliError::from(Error::Io(e.to_string())))?;
    let mut manifest = RunManifest::new("gen-data", config, args.seed, String::new());
    let cases = generate_corpus(&spec)?;
    write_corpus(&cases, &out)?;
    manifest.corpus_checksum = file_checksum(&out)?;
    manifest.artifacts.insert("corpus".into(), out.display().to_string());
    manifest.finished_at_unix = Some(now_unix());
    manifest.write(&manifest_path_for(&out))?;
    Ok(out)
}

/// Resolves the training configuration: defaults, then the config file, then
/// command-line overrides. All problems are reported together.
pub fn resolve_train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut problems = Vec::new();
    let text = match &args.config {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = String::new();
    if let Some(s) = args.steps {
        overrides.push_str(&format!("steps = {s}\n"));
    }
    if let Some(s) = args.seed {
        overrides.push_str(&format!("seed = {s}\n"));
    }
    if args.no_sdw {
        overrides.push_str("use_sdw = false\n");
    }
    if args.no_mgas {
        overrides.push_str("use_mgas = false\n");
    }
    let base = match apply_config_text(&TrainConfig::default(), &text) {
        Ok(c) => Some(c),
        Err(p) => {
            problems.extend(p);
            None
        }
    };
    let cfg = base.and_then(|b| match apply_config_text(&b, &overrides) {
        Ok(c) => Some(c),
        Err(p) => {
            problems.extend(p);
            None
        }
    });
    match cfg {
        Some(c) if problems.is_empty() => Ok(c),
        _ => Err(CliError::validation(problems.join("; "))),
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<PathBuf> {
    let out_dir = args.out_dir.clone().unwrap_or_else(|| run_root().join("train"));
    fs::create_dir_all(&out_dir)?;
    let corpus = read_corpus(&args.corpus)?;
    let corpus_sum = file_checksum(&args.corpus)?;
    let ck_path = out_dir.join("checkpoint.json");
    let log_path = out_dir.join("metrics.jsonl");

    let (mut trainer, log_file) = match &args.resume {
        Some(resume) => {
            let ck = Checkpoint::load(resume)?;
            let done = ck.step;
            let mut t = Trainer::from_checkpoint(ck, corpus)?;
            if let Some(s) = args.steps {
                t.set_total_steps(s);
            }
            // Drop any records written after the checkpoint was taken.
            let kept = read_log_prefix(&log_path, done)?;
            let mut f = File::create(&log_path)?;
            f.write_all(kept.as_bytes())?;
            (t, f)
        }
        None => {
            let cfg = resolve_train_config(args)?;
            let t = Trainer::new(cfg, corpus)?;
            (t, File::create(&log_path)?)
        }
    };

    let config_text = render_config(trainer.config());
    fs::write(out_dir.join("resolved.cfg"), &config_text)?;
    let mut manifest = RunManifest::new(
        "train",
        serde_json::to_value(trainer.config()).map_err(|e| CliError::from(Error::Io(e.to_string())))?,
        trainer.config().seed,
        corpus_sum,
    );
    manifest.artifacts.insert("corpus".into(), args.corpus.display().to_string());
    manifest.artifacts.insert("checkpoint".into(), ck_path.display().to_string());
    manifest.artifacts.insert("metrics".into(), log_path.display().to_string());
    manifest.artifacts.insert("config".into(), out_dir.join("resolved.cfg").display().to_string());
    if let Some(r) = &args.resume {
        manifest.artifacts.insert("resumed_from".into(), r.display().to_string());
    }
    let manifest_path = out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;

    let mut log = BufWriter::new(log_file);
    let every = args.checkpoint_every.filter(|n| *n > 0);
    while trainer.steps_done() < trainer.config().steps {
        for r in trainer.step()? {
            writeln!(log, "{}", r.to_line())?;
        }
        if every.is_some_and(|n| trainer.steps_done() % n == 0) {
            log.flush()?;
            trainer.checkpoint().save(&ck_path)?;
        }
    }
    log.flush()?;
    trainer.checkpoint().save(&ck_path)?;
    manifest.finished_at_unix = Some(now_unix());
    manifest.write(&manifest_path)?;
    Ok(out_dir)
}

/// Log lines belonging to steps `<= step`.
fn read_log_prefix(path: &Path, step: u64) -> CliResult<String> {
    if !path.exists() {
        return Ok(String::new());
    }
    let mut out = String::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let rec: MetricsRecord = serde_json::from_str(&line).map_err(|e| {
            CliError::from(Error::Data {
                line: i + 1,
                field: "record".into(),
                message: e.to_string(),
            })
        })?;
        let s = match &rec {
            MetricsRecord::Step(m) => m.step,
            MetricsRecord::Weights(w) => w.step,
        };
        if s <= step {
            out.push_str(&line);
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub counts: SubScoreVector,
}

/// One output line of `score`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub parsed: ParsedCompletion,
    pub reward: RewardBreakdown,
    /// Predicted counts, rounded; absent scores are written as 0.
    pub counts: SubScoreVector,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg_field = |e: serde_json::Error| {
            let msg = e.to_string();
            CliError::from(Error::Data {
                line: i + 1,
                field: crate::synth::field_from_json_error(&msg),
                message: format!("{}: {msg}", path.display()),
            })
        };
        out.push(serde_json::from_str(&line).map_err(msg_field)?);
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> CliResult<Vec<LabelRecord>> {
    read_jsonl(path)
}

pub fn write_labels<W: Write>(labels: &[LabelRecord], mut w: W) -> CliResult<()> {
    for l in labels {
        writeln!(w, "{}", serde_json::to_string(l).expect("labels serialize"))?;
    }
    Ok(())
}

fn parse_weights(raw: Option<&str>) -> CliResult<AspectWeights> {
    let Some(raw) = raw else {
        return Ok(AspectWeights::unit());
    };
    let v = parse_list(raw, "--weights")?;
    let w: [f64; NUM_ASPECTS] = v
        .try_into()
        .map_err(|_| CliError::validation(format!("--weights needs exactly {NUM_ASPECTS} values")))?;
    Ok(AspectWeights::from_weights(w))
}

fn rounded_counts(p: &ParsedCompletion) -> SubScoreVector {
    SubScoreVector(p.scores.map(|s| s.map_or(0, |v| v.round().max(0.0) as u32)))
}

/// Joins records by id, reporting orphans on either side.
fn align<'a, A, B>(
    left: &'a [A],
    left_id: impl Fn(&A) -> &str,
    right: &'a [B],
    right_id: impl Fn(&B) -> &str,
    names: (&str, &str),
) -> CliResult<Vec<(&'a A, &'a B)>> {
    let index: HashMap<&str, &B> = right.iter().map(|b| (right_id(b), b)).collect();
    let left_ids: std::collections::HashSet<&str> = left.iter().map(&left_id).collect();
    let orphans_left: Vec<&str> = left.iter().map(&left_id).filter(|id| !index.contains_key(id)).collect();
    let orphans_right: Vec<&str> = right.iter().map(&right_id).filter(|id| !left_ids.contains(id)).collect();
    if !orphans_left.is_empty() || !orphans_right.is_empty() {
        return Err(Error::Alignment(format!(
            "ids only in {}: [{}]; ids only in {}: [{}]",
            names.0,
            orphans_left.join(", "),
            names.1,
            orphans_right.join(", ")
        ))
        .into());
    }
    Ok(left.iter().map(|a| (a, index[left_id(a)])).collect())
}

pub fn score_records(
    completions: &[CompletionRecord],
    truth: &[LabelRecord],
    weights: &AspectWeights,
    params: &RewardParams,
) -> CliResult<Vec<ScoreRecord>> {
    let pairs = align(completions, |c| c.id.as_str(), truth, |t| t.id.as_str(), ("completions", "truth"))?;
    pairs
        .into_iter()
        .map(|(c, t)| {
            let parsed = parse_completion(&c.text);
            let reward = final_reward_with(&parsed, &t.counts, weights, params)?;
            Ok(ScoreRecord {
                id: c.id.clone(),
                counts: rounded_counts(&parsed),
                parsed,
                reward,
            })
        })
        .collect()
}

fn corpus_labels(path: &Path, max_noise: Option<f64>) -> CliResult<(Vec<crate::synth::SyntheticCase>, Vec<LabelRecord>)> {
    let cases: Vec<_> = read_corpus(path)?
        .into_iter()
        .filter(|c| max_noise.is_none_or(|m| c.noise_level <= m))
        .collect();
    let labels = cases
        .iter()
        .map(|c| LabelRecord {
            id: c.case_id.clone(),
            counts: c.gt_subscores,
        })
        .collect();
    Ok((cases, labels))
}

pub fn cmd_score(args: &ScoreArgs) -> CliResult<usize> {
    let params = RewardParams {
        sigma: args.sigma,
        sigma_total: args.sigma_total.unwrap_or(args.sigma),
    };
    params.validate()?;
    let weights = parse_weights(args.weights.as_deref())?;
    let completions: Vec<CompletionRecord> = read_jsonl(&args.completions)?;
    let truth = match (&args.truth, &args.corpus) {
        (Some(t), _) => read_labels(t)?,
        (None, Some(c)) => corpus_labels(c, None)?.1,
        (None, None) => return Err(CliError::validation("one of --truth or --corpus is required")),
    };
    let records = score_records(&completions, &truth, &weights, &params)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => {
            ensure_parent(p)?;
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(std::io::stdout().lock()),
    };
    for r in &records {
        writeln!(out, "{}", serde_json::to_string(r).expect("score records serialize"))?;
    }
    out.flush()?;
    Ok(records.len())
}

pub fn cmd_eval_corr(args: &EvalCorrArgs) -> CliResult<CorrelationReport> {
    let (preds, annots, corpus_id, checkpoint_id) = match (&args.checkpoint, &args.preds) {
        (Some(ck_path), _) => {
            let corpus = args.corpus.as_ref().expect("clap enforces --corpus");
            let ck = Checkpoint::load(ck_path)?;
            let (cases, labels) = corpus_labels(corpus, args.max_noise)?;
            if let Some(c) = cases.first() {
                ck.theta.check_features(&c.features)?;
            }
            let preds = greedy_predictions(&ck.theta, &cases);
            let annots: Vec<_> = labels.iter().map(|l| l.counts).collect();
            (preds, annots, Some(file_checksum(corpus)?), Some(file_checksum(ck_path)?))
        }
        (None, Some(p)) => {
            let a = args.annots.as_ref().expect("clap enforces --annots");
            let preds = read_labels(p)?;
            let annots = read_labels(a)?;
            let pairs = align(&preds, |l| l.id.as_str(), &annots, |l| l.id.as_str(), ("preds", "annots"))?;
            let (p, a): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(p, a)| (p.counts, a.counts)).unzip();
            (p, a, None, None)
        }
        (None, None) => {
            return Err(CliError::validation("either --preds/--annots or --checkpoint/--corpus is required"))
        }
    };
    let mut report = correlation_report(&preds, &annots)?;
    report.corpus_id = corpus_id;
    report.checkpoint_id = checkpoint_id;

    let table = report.render_table();
    print!("{table}");
    if let Some(p) = &args.out_table {
        ensure_parent(p)?;
        fs::write(p, &table)?;
    }
    if let Some(p) = &args.out_json {
        ensure_parent(p)?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(p, json + "\n")?;
    }
    Ok(report)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenData(a) => {
            let out = cmd_gen_data(a)?;
            println!("wrote {}", out.display());
        }
        Command::Train(a) => {
            let out = cmd_train(a)?;
            println!("wrote {}", out.display());
        }
        Command::Score(a) => {
            let n = cmd_score(a)?;
            if a.out.is_some() {
                println!("scored {n} completions");
            }
        }
        Command::EvalCorr(a) => {
            cmd_eval_corr(a)?;
        }
    }
    Ok(())
}

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            let first = first.trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::validation(first).line());
            return ErrorKind::Validation.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}
