//! Command-line front end for the re-ranking pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use richrank::pipeline::BackendKind;

#[derive(Parser, Debug)]
#[command(name = "richrank", version, about = "Listwise re-ranking pipeline toolkit")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured backend.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,
    /// Replay store to read from (replay backend).
    #[arg(long, global = true)]
    pub replay_store: Option<PathBuf>,
    /// Append every backend response to this replay store.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Stub,
    Replay,
    Live,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Stub => BackendKind::Stub,
            BackendArg::Replay => BackendKind::Replay,
            BackendArg::Live => BackendKind::Live,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Relevance,
    Quality,
    Rerank,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParseKind {
    Grading,
    Rerank,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Plan, retrieve, grade covers and re-rank one query.
    Run {
        #[arg(long)]
        query: String,
        /// Earlier session query, oldest first; repeatable.
        #[arg(long)]
        session: Vec<String>,
        /// JSONL candidate corpus; defaults to the bundled corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Score predictions against a labelled dataset.
    Eval {
        /// JSONL labelled dataset; defaults to the bundled 50-query set.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// JSONL file with one id list per record. Without it the backend re-ranks each set.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Reward of one raw model response.
    Reward {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Raw response text.
        #[arg(long)]
        response: String,
        /// True grade for relevance and quality tasks.
        #[arg(long)]
        truth: Option<i64>,
        /// Dataset holding the labelled set for re-rank tasks.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Record index in the dataset.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Parse a raw model response.
    Parse {
        #[arg(long, value_enum)]
        kind: ParseKind,
        #[arg(long)]
        text: String,
        /// Candidate ids the re-rank answer must cover, e.g. "[a, b, c]".
        #[arg(long)]
        ids: Option<String>,
    },
    /// Ranking metrics for a prediction against a label, both written as "[a, b, c]".
    Metrics {
        #[arg(long)]
        pred: String,
        #[arg(long)]
        label: String,
    },
    /// Train the toy policy with group-relative optimisation on synthetic data.
    GrpoDemo {
        #[arg(long, default_value_t = 20)]
        queries: usize,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Label candidate sets with the backend re-ranker, keeping consistent answers.
    Synth {
        /// JSONL labelled dataset whose sets are relabelled; defaults to the bundled set.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Check a labelled dataset for data errors.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write the bundled demo dataset and corpus to a directory.
    DemoData {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
