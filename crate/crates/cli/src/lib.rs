//! Command-line driver: one subcommand per pipeline stage, all configured from
//! a single TOML file.

pub mod commands;
pub mod config;
pub mod meta;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hieeg::metalearn::Mode;
use hieeg::sampler::Split;
use hieeg::{Error, ErrorKind};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "hieeg",
    version,
    about = "Hierarchy-aware episodic evaluation for EEG decoding"
)]
pub struct Cli {
    /// TOML run configuration; defaults are used for anything not set.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed` (and `synth.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; overrides `run.out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "meta-train" => Ok(Split::MetaTrain),
        "meta-validation" => Ok(Split::MetaValidation),
        "meta-test" => Ok(Split::MetaTest),
        _ => Err(format!("unknown split `{s}`")),
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Concept DAG from hypernym paths, minus the discarded synsets.
    BuildDag {
        #[arg(long)]
        hypernyms: Option<PathBuf>,
        /// Restrict to the words of this manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Removes overly broad leaf words.
    FilterDag {
        #[arg(long)]
        dag: Option<PathBuf>,
    },
    /// Aligns target electrode layouts to a reference layout.
    AlignMontage {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long = "target")]
        targets: Vec<PathBuf>,
    },
    /// Conditions recordings and cuts one window per manifest row.
    Preprocess {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        alignment: Option<PathBuf>,
    },
    /// Meta-train / meta-validation / meta-test splits with their own DAGs.
    MakeSplits {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        hypernyms: Option<PathBuf>,
        #[arg(long)]
        dag: Option<PathBuf>,
    },
    /// Evaluation suite for a split, or training episodes for meta-train.
    SampleEpisodes {
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, value_parser = parse_split, default_value = "meta-test")]
        split: Split,
        /// Number of training episodes (meta-train only).
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Trains an embedder with the given mode on the meta-train split.
    Train {
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Scores a checkpoint on an episode suite.
    Evaluate {
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, value_parser = parse_split, default_value = "meta-test")]
        split: Split,
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Span-bin table and word-cloud rows from evaluation records.
    AnalyzeSpan {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Prunes both splits to coarser label spaces, retrains and evaluates.
    AnalyzeAbstraction {
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long, value_parser = parse_mode, value_delimiter = ',')]
        modes: Option<Vec<Mode>>,
        #[arg(long)]
        hypernyms: Option<PathBuf>,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Hierarchical-Gaussian data in the pipeline's file formats.
    SynthGen,
    /// Bayes-classifier accuracy on synthetic episodes per abstraction level.
    Oracle {
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BuildDag { .. } => "build-dag",
            Command::FilterDag { .. } => "filter-dag",
            Command::AlignMontage { .. } => "align-montage",
            Command::Preprocess { .. } => "preprocess",
            Command::MakeSplits { .. } => "make-splits",
            Command::SampleEpisodes { .. } => "sample-episodes",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::AnalyzeSpan { .. } => "analyze-span",
            Command::AnalyzeAbstraction { .. } => "analyze-abstraction",
            Command::SynthGen => "synth-gen",
            Command::Oracle { .. } => "oracle",
        }
    }
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    kind: &'a str,
    exit_code: i32,
}

/// Machine-readable error line for stderr.
pub fn error_json(kind: ErrorKind, message: &str) -> String {
    let name = match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Data => "data",
        ErrorKind::Numeric => "numeric",
    };
    serde_json::to_string(&ErrorReport {
        error: message,
        kind: name,
        exit_code: exit_code(kind),
    })
    .unwrap_or_default()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json(ErrorKind::Validation, e.to_string().trim()));
            return exit_code(ErrorKind::Validation);
        }
    };
    match commands::run(&cli, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            exit_code(e.kind())
        }
    }
}
