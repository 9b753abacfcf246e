//! Command-line pipeline for crash-session fingerprinting.
//!
//! The three deployment phases map onto subcommands: `preprocess` +
//! `train` (training), `calibrate` (cluster instantiation on held-out
//! data), and `assign` / `detect` / `explain` / `viz` (production).
//! `gen-synthetic` emits labeled synthetic corpora for evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crashprint_core::embed::Variant;
use crashprint_core::error::Error;
use crashprint_core::ingest::Split;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "crashprint", version, about = "Fingerprint, cluster and explain crashing-session telemetry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Inclusive `LO..HI` cluster-count range.
#[derive(Debug, Clone, Copy)]
pub struct KRange {
    pub lo: usize,
    pub hi: usize,
}

impl std::str::FromStr for KRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once("..")
            .ok_or_else(|| format!("expected LO..HI, got '{s}'"))?;
        let lo = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
        let hi = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
        Ok(KRange { lo, hi })
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "validation" => Ok(Split::Validation),
        "production" => Ok(Split::Production),
        other => Err(format!("unknown split '{other}'")),
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Overrides shared by the commands that consume a pipeline config.
#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// JSON pipeline configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedder variant: ae or vae.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Enable or disable cluster fine-tuning after embedding training.
    #[arg(long)]
    pub dec: Option<bool>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Timesteps per session tensor.
    #[arg(long)]
    pub t: Option<usize>,
    /// Vocabulary presence threshold.
    #[arg(long)]
    pub presence_threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Homogenize raw JSONL traces into a tensor bundle.
    Preprocess {
        /// JSON-lines traces, one session per line.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse the vocabulary of an existing tensor or model bundle
        /// instead of building one from the input.
        #[arg(long)]
        vocab_from: Option<PathBuf>,
        #[arg(long, value_parser = parse_split, default_value = "train")]
        split: Split,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the embedder (and fine-tune centroids) on a tensor bundle.
    Train {
        #[arg(long)]
        tensors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Application version tag recorded into the bundle.
        #[arg(long, default_value = "unversioned")]
        app_version: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Pick the cluster count by elbow analysis on validation tensors and
    /// record the calibrated cluster model into the bundle.
    Calibrate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        tensors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Inclusive cluster-count range, e.g. 2..10.
        #[arg(long)]
        k_range: Option<KRange>,
        /// Distance percentile defining the emerging threshold.
        #[arg(long)]
        percentile: Option<f64>,
        /// Where to write the per-k validity-index curve.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Assign raw traces to calibrated clusters.
    Assign {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// JSON-lines output: {"session_id", "cluster"}.
        #[arg(long)]
        out: PathBuf,
    },
    /// Flag traces whose embeddings sit far from every centroid.
    Detect {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// JSON-lines output: {"session_id", "cluster", "distance", "flagged"}.
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrastive per-cluster explanation tables.
    Explain {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        tensors: PathBuf,
        /// Labels produced by `assign` for the same sessions.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 3)]
        top_n: usize,
        /// Also compute the lack-of-presence table.
        #[arg(long)]
        absence: bool,
        /// Also compute the average-value comparison table.
        #[arg(long)]
        average: bool,
        /// Also run mutation tests (re-embeds every session once per object).
        #[arg(long)]
        mutation: bool,
        /// Minimum in-cluster presence for the average-value table.
        #[arg(long, default_value_t = 0.05)]
        min_presence: f64,
        /// Directory for CSV outputs; stdout shows the presence table.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// 2-D projection of embeddings for visual inspection.
    Viz {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        tensors: PathBuf,
        /// Optional labels to carry into the CSV.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Optional JSONL tags: {"session_id", "tag"}.
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a labeled synthetic corpus of crashing sessions.
    GenSynthetic {
        /// JSON-lines traces output.
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines ground-truth labels: {"session_id", "archetype"}.
        #[arg(long)]
        labels_out: PathBuf,
        /// Full generator spec as JSON; flags below override nothing when
        /// this is given.
        #[arg(long)]
        spec_file: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        archetypes: usize,
        #[arg(long, default_value_t = 100)]
        sessions_per_archetype: usize,
        #[arg(long, default_value_t = 40)]
        metrics: usize,
        #[arg(long, default_value_t = 1)]
        defining_per_archetype: usize,
        #[arg(long, default_value_t = 80)]
        len_min: usize,
        #[arg(long, default_value_t = 120)]
        len_max: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0.3)]
        sparsity: f64,
        #[arg(long, default_value_t = 0.08)]
        faint_presence: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
