//! `flowmoods`: pipeline stages, simulator, report and HTTP service.
//!
//! All stages share one work directory. Configuration is layered: built-in
//! defaults, then the `--config` TOML file, then `--set key=value`, then
//! `--seed` and `--model-version`.

mod config;
mod manifest;
mod stages;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use flowmoods_service::{ServiceConfig, ServiceState};

use crate::config::Overrides;
use crate::stages::{Ctx, IngestSource};

#[derive(Debug, Parser)]
#[command(name = "flowmoods", version, about = "Mood-conditioned personalized radio")]
struct Cli {
    /// Directory holding inputs, artifacts, logs and manifest.json.
    #[arg(long, global = true, env = "FLOWMOODS_WORKDIR", default_value = ".")]
    workdir: PathBuf,
    /// TOML file with [sim], [pipeline] and [serve] sections.
    #[arg(long, global = true, env = "FLOWMOODS_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for world generation, training, indexing and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Version stamp for newly trained artifacts.
    #[arg(long, global = true)]
    model_version: Option<String>,
    /// Override any config value, e.g. `--set pipeline.forest.n_trees=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and copy catalog, interactions and labels into the work directory.
    Ingest(IngestArgs),
    /// Train user and song vectors from interactions.
    TrainEmbeddings,
    /// Train one forest per mood from the labels.
    TrainMoods,
    /// Score every song for every mood.
    ScoreCatalog,
    /// Build the nearest-neighbor index over song vectors.
    BuildIndex,
    /// Build the per-mood fallback pools.
    BuildFallback,
    /// Run train-embeddings through build-fallback.
    Pipeline,
    /// Print holdout AUC per mood.
    Eval,
    /// Simulate days of listening against the trained artifacts.
    Simulate,
    /// Per-day mood distribution of the simulated log and its weekly shape.
    Report {
        /// Exit non-zero when a shape check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Generate a synthetic world from the [sim] config instead of reading files.
    #[arg(long, conflicts_with_all = ["catalog", "interactions", "labels"])]
    synthetic: bool,
    /// Catalog JSONL (artist, song and user records).
    #[arg(long, required_unless_present = "synthetic")]
    catalog: Option<PathBuf>,
    /// CSV `user_id,song_id,weight,timestamp`.
    #[arg(long, required_unless_present = "synthetic")]
    interactions: Option<PathBuf>,
    /// CSV `song_id,mood,label` with label 0 or 1.
    #[arg(long, required_unless_present = "synthetic")]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "FLOWMOODS_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Snapshot directory to serve and reload from; defaults to the work directory.
    #[arg(long, env = "FLOWMOODS_SNAPSHOT_DIR")]
    snapshot_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        model_version: cli.model_version,
        assignments: cli.set,
    };
    let config = config::load(cli.config.as_deref(), &overrides)?;
    let mut ctx = Ctx::new(cli.workdir, config, overrides.describe())?;
    match cli.command {
        Command::Ingest(args) => {
            let source = match (args.catalog, args.interactions, args.labels) {
                (Some(catalog), Some(interactions), Some(labels)) => Some(IngestSource {
                    catalog,
                    interactions,
                    labels,
                }),
                _ => None,
            };
            stages::ingest(&mut ctx, source.as_ref())
        }
        Command::TrainEmbeddings => stages::train_embeddings_stage(&mut ctx),
        Command::TrainMoods => stages::train_moods(&mut ctx),
        Command::ScoreCatalog => stages::score(&mut ctx),
        Command::BuildIndex => stages::build_index(&mut ctx),
        Command::BuildFallback => stages::build_fallback(&mut ctx),
        Command::Pipeline => stages::pipeline(&mut ctx),
        Command::Eval => stages::eval(&mut ctx),
        Command::Simulate => stages::simulate(&mut ctx),
        Command::Report { strict } => {
            if !stages::report(&mut ctx)? && strict {
                bail!("weekly shape checks failed");
            }
            Ok(())
        }
        Command::Serve(args) => {
            let dir = args.snapshot_dir.unwrap_or_else(|| ctx.workdir.clone());
            stages::require_snapshot(&ctx, &dir)?;
            let service = ServiceConfig {
                session: ctx.config.pipeline.session.clone(),
                idle_timeout: config::idle_timeout(&ctx.config),
                snapshot_dir: Some(dir.clone()),
            };
            let state = Arc::new(ServiceState::from_dir(&dir, service)?);
            tracing::info!(model_version = %state.model_version(), snapshot = %dir.display(), "loaded artifacts");
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(flowmoods_service::serve(args.listen, state))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
