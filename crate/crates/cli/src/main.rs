//! `topodigit` — run the topological digit-classification pipeline end to
//! end: extract persistence diagrams from MNIST images, vectorize them,
//! cross-validate small dense networks, and consolidate report tables.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "topodigit",
    version,
    about = "Topological feature pipeline for MNIST digit classification",
    after_help = "The dataset directory can also be set with the TOPODIGIT_DATA \
                  environment variable, which overrides the config file."
)]
struct Cli {
    /// TOML pipeline configuration (defaults are used when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed: overrides both the subset seed and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for extraction and vectorization (default: CPU count).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Subset sizes as TRAIN:TEST, e.g. 500:125.
    #[arg(long, global = true, value_name = "TRAIN:TEST")]
    subset: Option<String>,

    /// Output directory for caches, reports, and the manifest.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and cache persistence diagrams for the configured subset.
    Extract,
    /// Vectorize cached diagrams into a feature matrix file.
    Vectorize {
        /// betti | landscape | silhouette | persistence-image | heat-kernel
        #[arg(long)]
        vectorizer: String,
        /// h0 | h1 | fused | concat
        #[arg(long)]
        strategy: String,
    },
    /// Cross-validate an architecture and write report files.
    Evaluate {
        /// mlp-i | mlp-t | mlp-t+mlp-i | mlp-t+mlp-t
        #[arg(long)]
        arch: String,
        /// Vectorizer kind (comma-separated pair for two topological streams).
        #[arg(long)]
        vectorizer: Option<String>,
        /// Strategy (comma-separated pair for two topological streams).
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Consolidate all evaluation reports into one comparison table.
    Report,
    /// Run fast built-in correctness checks (no dataset required).
    Selftest,
}

fn parse_subset(raw: &str) -> Result<(usize, usize)> {
    let (train, test) = raw
        .split_once(':')
        .with_context(|| format!("--subset expects TRAIN:TEST, got '{raw}'"))?;
    let train: usize = train
        .parse()
        .with_context(|| format!("--subset train count '{train}'"))?;
    let test: usize = test
        .parse()
        .with_context(|| format!("--subset test count '{test}'"))?;
    if train == 0 {
        bail!("--subset train count must be positive");
    }
    Ok((train, test))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.subset_seed = seed;
        cfg.train_config.seed = seed;
    }
    if let Some(raw) = &cli.subset {
        let (train, test) = parse_subset(raw)?;
        cfg.train = train;
        cfg.test = test;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    let out = cfg.out_dir.clone();

    match &cli.command {
        Command::Extract => commands::cmd_extract(&cfg, &out, cli.workers),
        Command::Vectorize {
            vectorizer,
            strategy,
        } => commands::cmd_vectorize(&cfg, &out, cli.workers, vectorizer, strategy),
        Command::Evaluate {
            arch,
            vectorizer,
            strategy,
        } => commands::cmd_evaluate(
            &cfg,
            &out,
            cli.workers,
            arch,
            vectorizer.as_deref(),
            strategy.as_deref(),
        ),
        Command::Report => commands::cmd_report(&out),
        Command::Selftest => commands::cmd_selftest(),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
