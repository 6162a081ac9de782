//! `artrec`: offline pipelines (preprocessing, LDA, c-TF-IDF topics,
//! similarity caches, recommendations, overlap reports) and the study server.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or runtime error.

mod commands;
mod config;
mod ratings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "artrec", version, about = "Painting recommender pipelines and study server")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the corpus, preprocess text and write tokens and vocabulary.
    Ingest(CorpusArgs),
    /// Train LDA and write the model, document embeddings and topic words.
    TrainLda(TrainLdaArgs),
    /// Print topic words for an engine.
    Topics(TopicsArgs),
    /// Mean topic coherence for a range of topic counts.
    CoherenceSweep(SweepArgs),
    /// Build a similarity-matrix cache file from embeddings.
    BuildSim(BuildSimArgs),
    /// Rank paintings for a ratings file with one engine.
    Recommend(RecommendArgs),
    /// Fuse two base engines' rankings for a ratings file.
    Fuse(FuseArgs),
    /// IoU and RBO overlap across users from study data.
    OverlapReport(OverlapArgs),
    /// Run the study server.
    Serve(ServeArgs),
    /// Write feedback and rankings tables from a study data directory.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus JSONL; defaults to the config's.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Stopword list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Drop words seen fewer times than this.
    #[arg(long)]
    min_count: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainLdaArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    k: Option<usize>,
    /// Document-topic prior; 50/k when omitted.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Words per topic in the listing and in coherence.
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TopicEngine {
    Lda,
    Bert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NModeArg {
    Average,
    PerClassTotal,
}

#[derive(Debug, Args)]
struct TopicsArgs {
    #[arg(long, value_enum)]
    engine: TopicEngine,
    #[arg(long)]
    top_n: Option<usize>,
    /// LDA model file (lda); defaults to <out>/lda_model.json.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Embeddings TSV (bert); defaults to the config's.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    target_dim: Option<usize>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Linkage cutoff as a quantile of pairwise distances.
    #[arg(long)]
    cutoff_quantile: Option<f64>,
    #[arg(long, value_enum)]
    n_mode: Option<NModeArg>,
    /// Logarithm base; natural log when omitted.
    #[arg(long)]
    log_base: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 20)]
    k_max: usize,
    #[arg(long)]
    n_top: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Use the configured alpha for every k instead of 50/k.
    #[arg(long)]
    keep_alpha: bool,
}

#[derive(Debug, Args)]
struct BuildSimArgs {
    /// lda, bert or resnet.
    #[arg(long)]
    engine: String,
    /// Embeddings TSV; defaults to the config's path for the engine.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lda: Option<PathBuf>,
    #[arg(long)]
    bert: Option<PathBuf>,
    #[arg(long)]
    resnet: Option<PathBuf>,
    /// Similarity cache directory; defaults to the config's.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long)]
    ratings: PathBuf,
    /// lda, bert, resnet, lda+resnet or bert+resnet.
    #[arg(long)]
    engine: String,
    #[arg(long)]
    r: Option<usize>,
    /// Fusion mode for the fused engines: sum or product.
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    sources: EmbeddingArgs,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long, default_value_t = 0.5)]
    wa: f64,
    #[arg(long, default_value_t = 0.5)]
    wb: f64,
    /// sum or product.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    r: Option<usize>,
    #[command(flatten)]
    sources: EmbeddingArgs,
}

#[derive(Debug, Args)]
struct OverlapArgs {
    /// Directory holding rankings.csv or an event log.
    #[arg(long)]
    sessions: PathBuf,
    /// RBO persistence.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Study data directory; defaults to the config's.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

/// An error the user can fix by changing the command line.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
