//! `traco` command-line interface.

mod commands;
mod config;
mod error;

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliError;

/// Hierarchical topic modeling: preprocess a corpus, train, evaluate, export.
///
/// Settings come from built-in defaults, then the --config file, then flags.
/// TRACO_THREADS caps the worker threads used by matrix kernels.
#[derive(Parser)]
#[command(name = "traco", version)]
struct Cli {
    /// Run configuration in TOML [default: none, built-in defaults apply]
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Training seed [default: train.seed from the config, else 0]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving every output [default: output_dir from the config, else traco_out]
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Switch off a model component; repeatable [default: none]
    #[arg(long, global = true, value_enum)]
    ablation: Vec<Ablation>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Ablation {
    /// drop the transport-plan dependency loss
    DisableTpd,
    /// drop the contextual topical bias from decoding
    DisableCdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    /// topic tree with top words, parent links and dependency weights
    HierarchyJson,
    /// per-level document-topic features, one TSV per level
    FeaturesTsv,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a raw corpus and write vocab.txt, bow.txt and labels.txt
    Preprocess {
        /// Raw corpus, JSON lines or one document per line [default: corpus.raw from the config]
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// Stopword list, one word per line [default: built-in English list]
        #[arg(long, value_name = "PATH")]
        stopwords: Option<PathBuf>,
        /// Drop words found in fewer documents [default: corpus.min_doc_freq from the config, else 5]
        #[arg(long)]
        min_doc_freq: Option<usize>,
        /// Drop words found in a larger fraction of documents [default: corpus.max_doc_frac from the config, else 0.8]
        #[arg(long)]
        max_doc_frac: Option<f64>,
    },
    /// Train a model and write model.ckpt, loss.csv and config.toml
    Train {
        /// Preprocessed corpus directory [default: corpus.prepared from the config, else <output-dir>/corpus]
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        /// Training epochs [default: train.epochs from the config, else 200]
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint against a corpus and write metrics.json
    Eval {
        /// Checkpoint to evaluate [default: <output-dir>/model.ckpt]
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Preprocessed corpus directory [default: corpus.prepared from the config, else <output-dir>/corpus]
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        /// Top words per topic [default: eval.top_n from the config, else 15]
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Export the topic hierarchy or document features
    Export {
        /// Output format
        #[arg(long, value_enum)]
        format: ExportFormat,
        /// Top words per topic in hierarchy-json
        #[arg(long, default_value_t = 15)]
        n_top: usize,
        /// Checkpoint to export [default: <output-dir>/model.ckpt]
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Preprocessed corpus for features-tsv [default: corpus.prepared from the config, else <output-dir>/corpus]
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
    },
    /// Print a summary of a checkpoint
    Inspect {
        /// Checkpoint to describe [default: <output-dir>/model.ckpt]
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = env::var("TRACO_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("TRACO_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    for a in &cli.ablation {
        match a {
            Ablation::DisableTpd => cfg.train.disable_tpd = true,
            Ablation::DisableCdd => cfg.train.disable_cdd = true,
        }
    }
    match &cli.command {
        Command::Preprocess {
            input,
            stopwords,
            min_doc_freq,
            max_doc_frac,
        } => {
            if input.is_some() {
                cfg.corpus.raw = input.clone();
            }
            if stopwords.is_some() {
                cfg.corpus.stopwords = stopwords.clone();
            }
            if let Some(n) = min_doc_freq {
                cfg.corpus.min_doc_freq = *n;
            }
            if let Some(f) = max_doc_frac {
                cfg.corpus.max_doc_frac = *f;
            }
        }
        Command::Train { corpus, epochs } => {
            if corpus.is_some() {
                cfg.corpus.prepared = corpus.clone();
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Command::Eval { corpus, top_n, .. } => {
            if corpus.is_some() {
                cfg.corpus.prepared = corpus.clone();
            }
            if let Some(n) = top_n {
                cfg.eval.top_n = *n;
            }
        }
        Command::Export { corpus, .. } => {
            if corpus.is_some() {
                cfg.corpus.prepared = corpus.clone();
            }
        }
        Command::Inspect { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = resolve(&cli)?;
    let checkpoint = |given: &Option<PathBuf>| given.clone().unwrap_or_else(|| cfg.checkpoint_path());
    match &cli.command {
        Command::Preprocess { .. } => commands::preprocess(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Eval { checkpoint: c, .. } => commands::eval(&cfg, &checkpoint(c)),
        Command::Export {
            format,
            n_top,
            checkpoint: c,
            ..
        } => match format {
            ExportFormat::HierarchyJson => commands::export_hierarchy(&cfg, &checkpoint(c), *n_top),
            ExportFormat::FeaturesTsv => commands::export_tsv(&cfg, &checkpoint(c)),
        },
        Command::Inspect { checkpoint: c } => commands::inspect(&checkpoint(c)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
