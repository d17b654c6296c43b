//! One function per subcommand. Every stage reads its inputs from the work
//! directory, writes its outputs there and records them in the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use flowmoods::catalog::{load_catalog, load_interactions, load_labels, write_interactions, write_labels};
use flowmoods::cf_embedding::train_embeddings;
use flowmoods::mood_classifier::score_catalog;
use flowmoods::pipeline::{
    build_index_for, evaluate_models, train_mood_models, Artifacts, CATALOG_FILE, EMBEDDINGS_FILE, FALLBACK_FILE,
    FORESTS_FILE, INDEX_FILE, SCORES_FILE,
};
use flowmoods::session::{build_fallback_pools, FallbackPool};
use flowmoods::simulator::{
    distribution_csv, generate_world, mood_distribution, popularity, simulate_days, weekly_shape, StreamLog,
};
use flowmoods::{Catalog, EmbeddingSpace, Mood, MoodModels, MoodScoreTable, Real};

use crate::config::Config;
use crate::manifest::PipelineManifest;

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const STREAMS_FILE: &str = "streams.csv";
pub const DISTRIBUTION_FILE: &str = "distribution.csv";

/// Subcommand that writes `file`.
pub fn producer(file: &str) -> &'static str {
    match file {
        CATALOG_FILE | INTERACTIONS_FILE | LABELS_FILE => "ingest",
        EMBEDDINGS_FILE => "train-embeddings",
        FORESTS_FILE => "train-moods",
        SCORES_FILE => "score-catalog",
        INDEX_FILE => "build-index",
        FALLBACK_FILE => "build-fallback",
        STREAMS_FILE => "simulate",
        DISTRIBUTION_FILE => "report",
        _ => "ingest",
    }
}

pub struct Ctx {
    pub workdir: PathBuf,
    pub config: Config,
    pub manifest: PipelineManifest,
    pub overrides: Vec<String>,
}

pub struct IngestSource {
    pub catalog: PathBuf,
    pub interactions: PathBuf,
    pub labels: PathBuf,
}

impl Ctx {
    pub fn new(workdir: PathBuf, config: Config, overrides: Vec<String>) -> Result<Self> {
        std::fs::create_dir_all(&workdir).with_context(|| format!("creating {}", workdir.display()))?;
        let manifest = PipelineManifest::load_or_default(&workdir)?;
        Ok(Ctx {
            workdir,
            config,
            manifest,
            overrides,
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.workdir.join(file)
    }

    /// Path of an artifact an earlier subcommand must have produced.
    fn require(&self, file: &str) -> Result<PathBuf> {
        let p = self.path(file);
        if !p.is_file() {
            bail!(
                "{} not found: run `flowmoods {}` first",
                p.display(),
                producer(file)
            );
        }
        Ok(p)
    }

    fn record(&mut self, file: &str, command: &str, version: Option<&str>, inputs: &[&str]) -> Result<()> {
        let inputs = inputs.iter().map(PathBuf::from).collect();
        self.manifest.record(&self.workdir, file, command, version, inputs)
    }

    fn finish(&mut self, command: &str) -> Result<()> {
        self.manifest
            .overrides
            .insert(command.to_string(), self.overrides.clone());
        self.manifest.save(&self.workdir)
    }

    fn catalog(&self) -> Result<Catalog> {
        Ok(load_catalog(&self.require(CATALOG_FILE)?)?)
    }
}

pub fn ingest(ctx: &mut Ctx, source: Option<&IngestSource>) -> Result<()> {
    let (catalog, events, labels, inputs) = match source {
        None => {
            let world = generate_world(&ctx.config.sim)?;
            (world.catalog, world.interactions, world.labels, vec![])
        }
        Some(src) => {
            let catalog = load_catalog(&src.catalog)?;
            let load = load_interactions(&src.interactions, &catalog)?;
            for w in &load.warnings {
                tracing::warn!(line = w.line, "{}: dropped row: {}", src.interactions.display(), w.reason);
            }
            let labels = load_labels(&src.labels, &catalog)?;
            let inputs = vec![src.catalog.clone(), src.interactions.clone(), src.labels.clone()];
            (catalog, load.events, labels, inputs)
        }
    };
    catalog.write_jsonl(&ctx.path(CATALOG_FILE))?;
    write_interactions(&ctx.path(INTERACTIONS_FILE), &events)?;
    write_labels(&ctx.path(LABELS_FILE), &labels)?;
    let (songs, artists, users) = catalog.counts();
    for (file, input) in [CATALOG_FILE, INTERACTIONS_FILE, LABELS_FILE].into_iter().zip(0..) {
        let inputs: Vec<PathBuf> = inputs.get(input).cloned().into_iter().collect();
        ctx.manifest.record(&ctx.workdir, file, "ingest", None, inputs)?;
    }
    println!(
        "ingested {songs} songs, {artists} artists, {users} users, {} interactions, {} labels",
        events.len(),
        labels.len()
    );
    ctx.finish("ingest")
}

pub fn train_embeddings_stage(ctx: &mut Ctx) -> Result<()> {
    let catalog = ctx.catalog()?;
    let events = load_interactions(&ctx.require(INTERACTIONS_FILE)?, &catalog)?.events;
    let started = Instant::now();
    let (mut space, report) = train_embeddings::<Real>(&events, &catalog, &ctx.config.pipeline.embedding)?;
    let version = ctx.config.pipeline.model_version.clone();
    space.model_version = version.clone();
    space.save(&ctx.path(EMBEDDINGS_FILE))?;
    for w in &report.warnings {
        tracing::warn!("{w}");
    }
    println!(
        "trained {} user and {} song vectors (d={}) in {:.1}s; objective {:.4e} -> {:.4e}",
        space.users.len(),
        space.songs.len(),
        space.songs.dimension(),
        started.elapsed().as_secs_f64(),
        report.objective_history.first().copied().unwrap_or(f64::NAN),
        report.objective_history.last().copied().unwrap_or(f64::NAN),
    );
    ctx.record(EMBEDDINGS_FILE, "train-embeddings", Some(&version), &[CATALOG_FILE, INTERACTIONS_FILE])?;
    ctx.manifest.model_version = Some(version);
    ctx.finish("train-embeddings")
}

pub fn train_moods(ctx: &mut Ctx) -> Result<()> {
    let catalog = ctx.catalog()?;
    let labels = load_labels(&ctx.require(LABELS_FILE)?, &catalog)?;
    let p = &ctx.config.pipeline;
    let started = Instant::now();
    let models = train_mood_models(&catalog, &labels, &p.forest, p.holdout_fraction, p.seed, &p.model_version)?;
    models.save(&ctx.path(FORESTS_FILE))?;
    println!(
        "trained {} forests of {} trees in {:.1}s",
        models.forests.len(),
        p.forest.n_trees,
        started.elapsed().as_secs_f64()
    );
    let version = models.model_version.clone();
    ctx.record(FORESTS_FILE, "train-moods", Some(&version), &[CATALOG_FILE, LABELS_FILE])?;
    ctx.manifest.model_version = Some(version);
    ctx.finish("train-moods")
}

pub fn score(ctx: &mut Ctx) -> Result<()> {
    let models = MoodModels::load(&ctx.require(FORESTS_FILE)?)?;
    let catalog = ctx.catalog()?;
    let (table, report) = score_catalog(&models.forests, &catalog, &models.model_version)?;
    table.write_csv(&ctx.path(SCORES_FILE))?;
    if !report.skipped.is_empty() {
        tracing::warn!(count = report.skipped.len(), "songs without an audio embedding were not scored");
    }
    println!("scored {} songs for {} moods", table.len(), Mood::COUNT);
    ctx.record(SCORES_FILE, "score-catalog", Some(&models.model_version), &[FORESTS_FILE, CATALOG_FILE])?;
    ctx.finish("score-catalog")
}

pub fn build_index(ctx: &mut Ctx) -> Result<()> {
    let space = EmbeddingSpace::load(&ctx.require(EMBEDDINGS_FILE)?)?;
    let index = build_index_for(&space, ctx.config.pipeline.index, &space.model_version)?;
    index.save(&ctx.path(INDEX_FILE))?;
    println!("indexed {} songs in {} cells", index.len(), index.n_cells());
    ctx.record(INDEX_FILE, "build-index", Some(&space.model_version), &[EMBEDDINGS_FILE])?;
    ctx.finish("build-index")
}

pub fn build_fallback(ctx: &mut Ctx) -> Result<()> {
    let scores = MoodScoreTable::read_csv(&ctx.require(SCORES_FILE)?)?;
    let catalog = ctx.catalog()?;
    let events = load_interactions(&ctx.require(INTERACTIONS_FILE)?, &catalog)?.events;
    let p = &ctx.config.pipeline;
    let pool: FallbackPool =
        build_fallback_pools(&scores, &popularity(&events), p.fallback_size, &p.session.thresholds)?;
    pool.save(&ctx.path(FALLBACK_FILE))?;
    let sizes: Vec<String> = Mood::ALL
        .iter()
        .map(|&m| format!("{}={}", m.id(), pool.pool(m).len()))
        .collect();
    println!("fallback pools: {}", sizes.join(" "));
    ctx.record(
        FALLBACK_FILE,
        "build-fallback",
        Some(&scores.model_version),
        &[SCORES_FILE, INTERACTIONS_FILE],
    )?;
    ctx.finish("build-fallback")
}

/// Every training stage after `ingest`, in dependency order.
pub fn pipeline(ctx: &mut Ctx) -> Result<()> {
    train_embeddings_stage(ctx)?;
    train_moods(ctx)?;
    score(ctx)?;
    build_index(ctx)?;
    build_fallback(ctx)
}

pub fn eval(ctx: &mut Ctx) -> Result<()> {
    let models = MoodModels::load(&ctx.require(FORESTS_FILE)?)?;
    let catalog = ctx.catalog()?;
    let labels = load_labels(&ctx.require(LABELS_FILE)?, &catalog)?;
    let metrics = evaluate_models(&models, &catalog, &labels)?;
    println!("mood         auc     accuracy  holdout");
    for (mood, m) in metrics.iter() {
        let n = m.true_positive + m.false_positive + m.true_negative + m.false_negative;
        println!("{:<12} {:.4}  {:.4}    {n}", mood.id(), m.auc, m.accuracy_at_half);
    }
    Ok(())
}

/// In the work directory a missing artifact names the subcommand that
/// makes it; elsewhere the snapshot loader reports it.
pub fn require_snapshot(ctx: &Ctx, dir: &Path) -> Result<()> {
    if dir == ctx.workdir {
        for file in [CATALOG_FILE, EMBEDDINGS_FILE, FORESTS_FILE, SCORES_FILE, INDEX_FILE, FALLBACK_FILE] {
            ctx.require(file)?;
        }
    }
    Ok(())
}

pub fn simulate(ctx: &mut Ctx) -> Result<()> {
    require_snapshot(ctx, &ctx.workdir)?;
    let artifacts = Artifacts::load_dir(&ctx.workdir)?;
    let deps = artifacts.deps(ctx.config.pipeline.session.clone());
    let started = Instant::now();
    let (log, stats) = simulate_days(&artifacts.catalog, &deps, &ctx.config.sim)?;
    log.write_csv(&ctx.path(STREAMS_FILE))?;
    println!(
        "simulated {} days: {} streams, {} sessions ({} failed, {} exhausted, {} on fallback), \
         {} skips, {} likes in {:.1}s",
        ctx.config.sim.n_days,
        log.streams.len(),
        stats.sessions_started,
        stats.sessions_failed,
        stats.sessions_exhausted,
        stats.fallback_sessions,
        stats.skips,
        stats.likes,
        started.elapsed().as_secs_f64()
    );
    let version = artifacts.model_version().to_string();
    ctx.record(
        STREAMS_FILE,
        "simulate",
        Some(&version),
        &[CATALOG_FILE, EMBEDDINGS_FILE, SCORES_FILE, INDEX_FILE, FALLBACK_FILE],
    )?;
    ctx.finish("simulate")
}

/// Writes the per-day mood distribution and checks the weekly shape.
/// Returns whether every shape check held.
pub fn report(ctx: &mut Ctx) -> Result<bool> {
    let log = StreamLog::read_csv(&ctx.require(STREAMS_FILE)?)?;
    let dist = mood_distribution(&log)?;
    std::fs::write(ctx.path(DISTRIBUTION_FILE), distribution_csv(&dist))?;
    let shape = weekly_shape(&dist);
    let per_day: Vec<usize> = dist.iter().map(|d| d.total_streams).collect();
    println!(
        "{} days, {}..{} streams per day",
        dist.len(),
        per_day.iter().min().unwrap_or(&0),
        per_day.iter().max().unwrap_or(&0)
    );
    let checks = [
        (
            "motivation has the largest share every day",
            shape.motivation_top_every_day(),
            format!("{}/{} days", shape.motivation_top_days, shape.days),
        ),
        (
            "party share Fri-Sun exceeds Mon-Thu",
            shape.party_weekend_spike(),
            format!("{:.4} vs {:.4}", shape.party_fri_sun, shape.party_mon_thu),
        ),
        (
            "focus share Mon-Fri exceeds Sat-Sun",
            shape.focus_on_weekdays(),
            format!("{:.4} vs {:.4}", shape.focus_mon_fri, shape.focus_weekend),
        ),
        (
            "chill share on Sunday at least its weekly mean",
            shape.chill_sunday_uptick(),
            format!("{:.4} vs {:.4}", shape.chill_sunday, shape.chill_mean),
        ),
    ];
    for (name, ok, detail) in &checks {
        println!("{} {name} ({detail})", if *ok { "ok  " } else { "FAIL" });
    }
    ctx.record(DISTRIBUTION_FILE, "report", None, &[STREAMS_FILE])?;
    ctx.finish("report")?;
    Ok(checks.iter().all(|c| c.1))
}
