use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clir_core::corpus::Granularity;

#[derive(Debug, Parser)]
#[command(name = "clir", version, about = "Cross-lingual retrieval workbench")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file; its entries act as flags placed before the ones given
    /// on the command line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random choice; echoed in report headers.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn an orthogonal projection from a seed dictionary.
    Align(AlignArgs),
    /// Rank documents for every query and write a run file.
    Rank(RankArgs),
    /// Re-order the head of a run file by external scores.
    Rerank(RerankArgs),
    /// MAP per run and paired significance tests against the first run.
    Eval(EvalArgs),
    /// Cross-validated adapter training with a merged test run.
    Finetune(FinetuneArgs),
    /// Position analysis of top-ranked parts.
    Analyze(AnalyzeArgs),
    /// Document and part counts per granularity.
    Stats(StatsArgs),
    /// Convert embedding containers between text and binary.
    Convert(ConvertArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Align(_) => "align",
            Command::Rank(_) => "rank",
            Command::Rerank(_) => "rerank",
            Command::Eval(_) => "eval",
            Command::Finetune(_) => "finetune",
            Command::Analyze(_) => "analyze",
            Command::Stats(_) => "stats",
            Command::Convert(_) => "convert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignMethod {
    Procrustes,
    ProcB,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long, value_enum, default_value_t = AlignMethod::Procrustes)]
    pub method: AlignMethod,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Augmentation rounds for proc-b.
    #[arg(long, default_value_t = 2)]
    pub iterations: usize,
    /// Only read the first N vectors of each space.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the final (possibly augmented) dictionary.
    #[arg(long)]
    pub dict_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Encoding {
    Iso,
    Aoc,
    Semb,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankMethod {
    Dense,
    Qlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Document,
    Segment,
    Sentence,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Document => Granularity::Document,
            GranularityArg::Segment => Granularity::Segment,
            GranularityArg::Sentence => Granularity::Sentence,
        }
    }
}

/// Inputs shared by every command that encodes queries and documents.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// `<query_id>\t<text>` lines.
    #[arg(long)]
    pub queries: PathBuf,
    /// `<doc_id>\t<text>` lines.
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long, value_enum, ignore_case = true, default_value_t = Encoding::Static)]
    pub encoding: Encoding,
    /// Query-language term vectors.
    #[arg(long)]
    pub src_emb: Option<PathBuf>,
    /// Document-language term vectors.
    #[arg(long)]
    pub tgt_emb: Option<PathBuf>,
    /// Vectors for terms missing from --src-emb (ISO vectors under AOC).
    #[arg(long)]
    pub src_fallback: Option<PathBuf>,
    /// Vectors for terms missing from --tgt-emb.
    #[arg(long)]
    pub tgt_fallback: Option<PathBuf>,
    /// Part-keyed container with query vectors (position 1).
    #[arg(long)]
    pub query_parts: Option<PathBuf>,
    /// Part-keyed container with document part vectors.
    #[arg(long)]
    pub doc_parts: Option<PathBuf>,
    /// Projection applied to query-side vectors.
    #[arg(long)]
    pub projection: Option<PathBuf>,
    /// Adapter applied to both sides.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GranularityArg::Document)]
    pub granularity: GranularityArg,
    /// Pooling depth for segment and sentence matching.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 128)]
    pub window: usize,
    #[arg(long, default_value_t = 42)]
    pub stride: usize,
    /// Context cap the AOC vectors were built with (recorded only).
    #[arg(long)]
    pub tau: Option<usize>,
    /// Encoder layer the vectors were taken from (recorded only).
    #[arg(long)]
    pub layer: Option<usize>,
    /// Subword limit the parts were encoded with.
    #[arg(long, default_value_t = 128)]
    pub max_seq_len: usize,
    /// Only read the first N vectors of each term space.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[arg(long, value_enum, default_value_t = RankMethod::Dense)]
    pub method: RankMethod,
    /// Dirichlet prior for --method qlm.
    #[arg(long, default_value_t = 1000.0)]
    pub mu: f64,
    /// Documents kept per query.
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    #[arg(long, default_value = "clir")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    /// Base run file.
    #[arg(long)]
    pub run: PathBuf,
    /// `<query_id>\t<doc_id>\t<score>` lines.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub top_n: usize,
    #[arg(long, default_value = "rerank")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run files; every run after the first is tested against the first.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of comparisons for the Bonferroni correction.
    #[arg(long, default_value_t = 9)]
    pub bonferroni_m: usize,
    /// Aligned table (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One JSON record per line.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// `<query_id>\t<doc_id>` positive pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    /// Softmax temperature of the ranking loss.
    #[arg(long, default_value_t = 20.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    #[arg(long, default_value = "finetuned")]
    pub tag: String,
    /// Directory for the per-fold adapters, the merged run and the report.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    Positions,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub what: Analysis,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Top parts per query that enter the histogram.
    #[arg(long, default_value_t = 100)]
    pub top: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long, value_enum, num_args = 1.., default_values_t = [GranularityArg::Segment, GranularityArg::Sentence])]
    pub granularity: Vec<GranularityArg>,
    #[arg(long, default_value_t = 128)]
    pub window: usize,
    #[arg(long, default_value_t = 42)]
    pub stride: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Container {
    Text,
    Binary,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub to: Container,
    #[arg(long)]
    pub limit: Option<usize>,
}
