//! Command-line front end: every subcommand wires library pipelines to
//! files on disk. Results go to the paths the user names, progress and
//! cache statistics go to stderr, and a machine-readable summary of each
//! command goes to stdout.
//!
//! Exit codes: 0 on success, 2 for usage problems (bad flags, unreadable
//! configs, missing inputs), 1 for runtime failures. Corpus files are
//! only ever read as bytes and compressed; nothing is executed or parsed.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

/// Classify binary files by compression distance: corpus management,
/// pairwise NCD matrices, random-forest experiments, clustering and
/// report scoring.
#[derive(Debug, Parser)]
#[command(name = "ncdforest", version, max_term_width = 100)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read corpora and write a normalized manifest.
    Ingest(IngestArgs),
    /// Drop byte-identical duplicates and write what was removed.
    Dedupe(DedupeArgs),
    /// Warm the size cache and export per-file compression stats.
    Compress(CompressArgs),
    /// Measure compressor axiom deviations on a small suite.
    Normality(NormalityArgs),
    /// Self-distance NCD(x,x) as a function of input size.
    Selfcurve(SelfcurveArgs),
    /// Full or pruned pairwise NCD matrix.
    Matrix(MatrixArgs),
    /// Predicted pruning savings per threshold, from single-file sizes.
    Savings(SavingsArgs),
    /// Repeated split/featurize/train/score rounds with aggregation.
    Experiment(ExperimentArgs),
    /// k-medoids clustering over a saved distance matrix.
    Cluster(ClusterArgs),
    /// Feature usage fractions of a saved forest model.
    Importance(ImportanceArgs),
    /// Score an external scan report against corpus labels.
    #[command(name = "compare-scans")]
    CompareScans(CompareScansArgs),
    /// Two-sided Mann-Whitney U test on two value lists.
    Mwu(MwuArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
}

/// Where samples come from. Sources combine; at least one is required.
#[derive(Debug, Args)]
struct CorpusArgs {
    /// Manifest CSV with `path,label[,sha256]` rows.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory tree of positive (malware-labeled) samples.
    #[arg(long)]
    dir_malware: Option<PathBuf>,
    /// Directory tree of negative (benign-labeled) samples.
    #[arg(long)]
    dir_benign: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompressorArgs {
    /// Compression backend: lzma, deflate or bzip2.
    #[arg(long)]
    backend: Option<String>,
    /// Backend preset level (lzma/deflate 0-9, bzip2 1-9).
    #[arg(long)]
    level: Option<u32>,
    /// Dictionary budget in bytes (lzma enforces input <= dictionary).
    #[arg(long)]
    dict_bytes: Option<u64>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Write the normalized manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DedupeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Write the deduplicated manifest here.
    #[arg(long)]
    out_manifest: Option<PathBuf>,
    /// Write the removed-duplicate report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompressArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    compressor: CompressorArgs,
    /// Persistent size cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Write per-file `id,raw_bytes,z_bytes,ratio` rows here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NormalityArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    compressor: CompressorArgs,
    /// Suite size cap; the suite costs m single plus m^2 pair
    /// compressions, so keep it small.
    #[arg(long, default_value_t = 12)]
    limit: usize,
    /// Write the JSON report here instead of stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelfcurveArgs {
    #[command(flatten)]
    compressor: CompressorArgs,
    /// Comma-separated input sizes in bytes.
    #[arg(long, default_value = "1024,2048,4096,8192,16384,32768,65536")]
    sizes: String,
    /// Seed for the synthetic probe files.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "selfcurve.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatrixArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    compressor: CompressorArgs,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Prune pairs whose lower bound reaches this threshold.
    #[arg(long)]
    prune: Option<f64>,
    /// Output matrix file.
    #[arg(long, default_value = "matrix.bin")]
    out: PathBuf,
    /// Also export the matrix as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SavingsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    compressor: CompressorArgs,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Comma-separated prune thresholds in [0, 1].
    #[arg(long, default_value = "0.8,0.85,0.9,0.95,0.99,1.0")]
    thresholds: String,
    /// Output CSV path.
    #[arg(long, default_value = "savings.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// TOML config file; flags override individual values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    compressor: CompressorArgs,
    /// Drop byte-identical duplicates before splitting.
    #[arg(long)]
    dedupe: bool,
    /// Reference samples per run (split evenly across labels).
    #[arg(long)]
    n_references: Option<usize>,
    /// Training samples per run.
    #[arg(long)]
    n_train: Option<usize>,
    /// Held-out test samples per run.
    #[arg(long)]
    n_test: Option<usize>,
    /// Independent repetitions, each with its own derived seed.
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed; every run seed is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Feature mask: combined, ncd_only or ratio_only.
    #[arg(long)]
    mask: Option<String>,
    /// Train on an imbalanced class mix (fraction of positives).
    #[arg(long)]
    train_positive_fraction: Option<f64>,
    /// Draw split-threshold candidates from test vectors.
    #[arg(long)]
    thresholds_from_test: bool,
    #[arg(long)]
    trees: Option<usize>,
    /// Candidate (feature, threshold) draws per branch.
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    min_gain: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Results directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Persistent size cache (default: <out-dir>/sizes.cache).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Distance matrix file produced by `matrix`.
    #[arg(long)]
    matrix: PathBuf,
    /// Manifest for labeling clusters by majority vote.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Write `sample_id,cluster_index,is_medoid` rows here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImportanceArgs {
    /// Forest model JSON produced by `experiment`.
    #[arg(long)]
    model: PathBuf,
    /// Write `feature,importance` rows here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareScansArgs {
    /// Scan report: JSON array of {sha256, engine, verdict}.
    #[arg(long)]
    report: PathBuf,
    /// Manifest providing ground-truth labels per digest.
    #[arg(long)]
    manifest: PathBuf,
    /// Write the comparison JSON here instead of stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MwuArgs {
    /// First sample: comma- or space-separated numbers.
    #[arg(long, conflicts_with = "a_file")]
    a: Option<String>,
    /// Second sample: comma- or space-separated numbers.
    #[arg(long, conflicts_with = "b_file")]
    b: Option<String>,
    /// First sample read from a whitespace-separated file.
    #[arg(long)]
    a_file: Option<PathBuf>,
    /// Second sample read from a whitespace-separated file.
    #[arg(long)]
    b_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory to create the corpus in.
    #[arg(long)]
    out: PathBuf,
    /// Family spec TOML (see README for the schema).
    #[arg(long, conflicts_with_all = ["preset", "count", "size"])]
    spec: Option<PathBuf>,
    /// Built-in corpus shape: two-family or ratio-split.
    #[arg(long)]
    preset: Option<String>,
    /// Files per family for presets.
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// File size in bytes for presets.
    #[arg(long, default_value_t = 8192)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Failures split by exit code: usage errors (2) for anything the caller
/// can fix on the command line, runtime errors (1) for everything else.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError::Usage(message.into())
    }

    pub fn usage_from(err: impl std::fmt::Display) -> CliError {
        CliError::Usage(err.to_string())
    }

    pub fn runtime(err: impl std::fmt::Display) -> CliError {
        CliError::Runtime(err.to_string())
    }
}

impl From<ncdforest::Error> for CliError {
    fn from(err: ncdforest::Error) -> CliError {
        CliError::Runtime(err.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            emit_error("usage", &format!("cannot configure {threads} threads: {e}"));
            std::process::exit(2);
        }
    }
    let outcome = match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Dedupe(args) => commands::dedupe(args),
        Command::Compress(args) => commands::compress(args),
        Command::Normality(args) => commands::normality(args),
        Command::Selfcurve(args) => commands::selfcurve(args),
        Command::Matrix(args) => commands::matrix(args),
        Command::Savings(args) => commands::savings(args),
        Command::Experiment(args) => commands::experiment(args),
        Command::Cluster(args) => commands::cluster(args),
        Command::Importance(args) => commands::importance(args),
        Command::CompareScans(args) => commands::compare_scans(args),
        Command::Mwu(args) => commands::mwu(args),
        Command::Synth(args) => commands::synth(args),
    };
    match outcome {
        Ok(()) => {}
        Err(CliError::Usage(message)) => {
            emit_error("usage", &message);
            std::process::exit(2);
        }
        Err(CliError::Runtime(message)) => {
            emit_error("runtime", &message);
            std::process::exit(1);
        }
    }
}

/// One structured diagnostic line on stderr.
fn emit_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": { "kind": kind, "message": message } })
    );
}
