use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Corpus pipeline and code language-model evaluation.
///
/// Every global flag may also be set through the environment with the
/// `CODECORPUS_` prefix (CODECORPUS_CONFIG, CODECORPUS_JOBS, CODECORPUS_SEED,
/// CODECORPUS_OUT).
#[derive(Debug, Parser)]
#[command(name = "codecorpus", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true, env = "CODECORPUS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "CODECORPUS_JOBS")]
    pub jobs: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, env = "CODECORPUS_SEED")]
    pub seed: Option<u64>,
    /// Output directory (default: `out`).
    #[arg(long, global = true, env = "CODECORPUS_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clone manifest repositories and extract majority-language files.
    Ingest(IngestArgs),
    /// Apply size and length filters to a record file.
    Filter(InputArgs),
    /// Drop exact duplicate files, keeping first occurrences.
    Dedup(InputArgs),
    /// Per-language corpus statistics.
    Stats(StatsArgs),
    /// Train a byte-level BPE vocabulary (and optionally an n-gram model).
    TrainTokenizer(TrainArgs),
    /// Dump the reference lexer's token stream as JSONL.
    Lex(LexArgs),
    /// Lexer-normalized perplexity over an eval set.
    EvalPpl(EvalPplArgs),
    /// Functional-correctness evaluation with pass@k.
    EvalHumaneval(HumanEvalArgs),
    /// Emit report tables (CSV) and optional SVG charts.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Manifest (JSONL: url, stars, language?, retrieved_at).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for clones.
    #[arg(long)]
    pub dest: PathBuf,
    #[arg(long)]
    pub min_stars: Option<u64>,
    #[arg(long)]
    pub per_language_cap: Option<usize>,
    /// Repository exclusion list for the eval set (one url per line).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Also build an eval set with this many files per language.
    #[arg(long)]
    pub eval_per_language: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Record file (JSONL) to read.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Tsv,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Final record file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Record file before filtering (default: the same as --in).
    #[arg(long)]
    pub before: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Record file to sample training files from.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Pre-seed merges for runs of spaces up to this length.
    #[arg(long)]
    pub multi_whitespace: Option<usize>,
    /// Also fit an n-gram model of this order on the sample.
    #[arg(long)]
    pub ngram_order: Option<usize>,
    #[arg(long)]
    pub ngram_alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LexArgs {
    /// Language name or slug (e.g. python, c++, csharp).
    #[arg(long)]
    pub lang: String,
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalPplArgs {
    /// Backend: an http(s) URL or an n-gram model file (default: config).
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub eval_set: PathBuf,
}

#[derive(Debug, Args)]
pub struct HumanEvalArgs {
    #[arg(long)]
    pub backend: Option<String>,
    /// Problems (JSONL: task_id, prompt, entry_point, canonical_solution, test).
    #[arg(long)]
    pub problems: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated temperatures.
    #[arg(long, value_delimiter = ',')]
    pub temps: Option<Vec<f64>>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Per-job execution timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Recorded verdicts (JSONL) used instead of executing programs.
    #[arg(long, conflicts_with = "runner")]
    pub verdicts: Option<PathBuf>,
    /// Sandbox runner command line, split on whitespace.
    #[arg(long)]
    pub runner: Option<String>,
    #[arg(long)]
    pub runner_workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Stats,
    Passk,
    Perplexity,
    TemperatureSweep,
    Scaling,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Input file or directory; perplexity accepts several.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Plot-only cap for perplexity charts.
    #[arg(long)]
    pub cap: Option<f64>,
    /// Also render an SVG chart.
    #[arg(long)]
    pub svg: bool,
}
