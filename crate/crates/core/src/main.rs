use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use reident::cluster::{cluster_gallery, relabel_gallery, ClusterParams, DEFAULT_CLUSTER_THRESHOLD, DEFAULT_MIN_CLUSTER_SIZE};
use reident::eval::{
    best_shot_accuracy, best_shots, emit_densities, emit_error_rates, error_rates, pick_threshold,
    rank1_accuracy, rank1_densities, score_densities, Granularity, Pairing, Rank1Report, ThresholdPolicy,
    DEFAULT_GRID_SIZE,
};
use reident::format::{load_gallery_auto, save_gallery_auto};
use reident::head::{load_head, reinit_classification_layer, save_head, train_head, TrainConfig, Variant};
use reident::ingest::{cleanse, filter_quality, CleansingOptions};
use reident::reid::{build_index, save_index, serve, IndexStore, ServiceConfig};
use reident::synth::ModeFixture;
use reident::{EmbeddingRecord, Gallery};

#[derive(Debug, Parser)]
#[command(name = "reident", version, about = "Embedding-gallery toolkit: cleanse, cluster, train, evaluate, index and serve")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 7, env = "REIDENT_SEED")]
    seed: u64,
    /// Worker threads for parallel kernels (default: all cores). Results do
    /// not depend on it.
    #[arg(long, global = true, env = "REIDENT_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info", env = "REIDENT_LOG")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove exact and near duplicates and low-quality records.
    Ingest(IngestArgs),
    /// Split every make/model into density-peak clusters and relabel.
    Cluster(ClusterArgs),
    /// Train a classification head.
    TrainHead(TrainArgs),
    /// Score densities, FAR/FRR curves, threshold choice and rank-1 accuracy.
    Eval(EvalArgs),
    /// Classify the best shot of every track.
    BestShots(BestShotArgs),
    /// Build the re-identification index of a video gallery.
    BuildIndex(BuildIndexArgs),
    /// Serve search over an index.
    Serve(ServeArgs),
    /// Generate a synthetic fixture and run the whole pipeline on it.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Near-duplicate score threshold.
    #[arg(long, default_value_t = 0.995)]
    dedup_near: f64,
    /// Skip near-duplicate removal.
    #[arg(long)]
    no_dedup_near: bool,
    #[arg(long)]
    min_quality: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CLUSTER_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_CLUSTER_SIZE)]
    min_size: usize,
    /// Keep records of discarded clusters under their original label.
    #[arg(long)]
    keep_discarded: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "prior-free")]
    variant: Variant,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Start from this head; its classification layer is re-initialized for
    /// the gallery's labels.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    head: PathBuf,
    /// FAR/FRR curve CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Score density CSV.
    #[arg(long)]
    densities: Option<PathBuf>,
    #[arg(long, default_value = "eer")]
    policy: ThresholdPolicy,
    #[arg(long, default_value = "make-model")]
    granularity: Granularity,
    /// Build densities from gallery pairs (model or cluster) instead of the
    /// head's rank-1 scores.
    #[arg(long)]
    pairing: Option<Pairing>,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid_size: usize,
    /// Evaluate only records with at least this quality.
    #[arg(long)]
    min_quality: Option<f64>,
    /// JSON report (default: standard output).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BestShotArgs {
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "REIDENT_INDEX")]
    index: PathBuf,
    #[arg(long, default_value = "127.0.0.1", env = "REIDENT_HOST")]
    host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080, env = "REIDENT_PORT")]
    port: u16,
    #[arg(long, default_value_t = 0.0, env = "REIDENT_DEFAULT_MIN_SCORE")]
    default_min_score: f64,
    /// Directory of static UI assets served at `/`.
    #[arg(long, env = "REIDENT_STATIC_DIR")]
    static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value = "demo-out")]
    out_dir: PathBuf,
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<Gallery> {
    Ok(load_gallery_auto(path)?)
}

fn run_ingest(a: &IngestArgs) -> Result<reident::ingest::CleansingReport> {
    let gallery = load(&a.input)?;
    let opts = CleansingOptions {
        near_threshold: (!a.no_dedup_near).then_some(a.dedup_near),
        min_quality: a.min_quality,
    };
    let (clean, report) = cleanse(gallery, opts)?;
    save_gallery_auto(&clean, &a.out)?;
    log::info!(
        "ingest: {} in, {} out ({} exact, {} near duplicates, {} low quality)",
        report.input_count,
        report.output_count,
        report.exact_duplicates_removed,
        report.near_duplicates_removed,
        report.low_quality_removed
    );
    if let Some(p) = &a.report {
        write_json(&report, Some(p))?;
    }
    Ok(report)
}

fn run_cluster(a: &ClusterArgs) -> Result<reident::cluster::ClusteringResult> {
    let gallery = load(&a.input)?;
    let params = ClusterParams::new(a.threshold, a.min_size)?;
    let result = cluster_gallery(&gallery, params)?;
    let refined = relabel_gallery(&gallery, &result, !a.keep_discarded)?;
    save_gallery_auto(&refined, &a.out)?;
    log::info!(
        "cluster: {} classes -> {} refined classes, {} records discarded",
        result.class_count_before,
        result.class_count_after,
        result.discarded_count
    );
    if let Some(p) = &a.report {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Report<'a> {
            params: ClusterParams,
            class_count_before: usize,
            class_count_after: usize,
            cluster_count: usize,
            discarded_count: usize,
            groups: &'a [reident::cluster::GroupSummary],
        }
        write_json(
            &Report {
                params,
                class_count_before: result.class_count_before,
                class_count_after: result.class_count_after,
                cluster_count: result.cluster_count,
                discarded_count: result.discarded_count,
                groups: &result.groups,
            },
            Some(p),
        )?;
    }
    Ok(result)
}

fn run_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let gallery = load(&a.input)?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        l2: a.l2,
        seed,
    };
    let init = match &a.init {
        Some(p) => {
            let old = load_head(p)?;
            let labels: BTreeSet<String> = gallery.records().iter().map(EmbeddingRecord::class_label).collect();
            Some(reinit_classification_layer(&old, labels.into_iter().collect(), seed)?)
        }
        None => None,
    };
    let head = train_head(&gallery, a.variant, &cfg, init.as_ref())?;
    save_head(&head, &a.out)?;
    log::info!("train-head: {} classes, variant {}", head.class_count(), head.variant());
    Ok(())
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct EvalReport {
    score_source: String,
    policy: String,
    threshold: f64,
    eer: f64,
    eer_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_quality: Option<f64>,
    client_count: u64,
    impostor_count: u64,
    rank1: Rank1Report,
    rank1_at_threshold: Rank1Report,
}

fn run_eval(a: &EvalArgs) -> Result<EvalReport> {
    let mut gallery = load(&a.gallery)?;
    if let Some(q) = a.min_quality {
        let (kept, report) = filter_quality(gallery, q);
        if kept.is_empty() {
            bail!("no records with quality >= {q} in {}", a.gallery.display());
        }
        log::info!("eval: {} records below quality {q} skipped", report.low_quality_removed);
        gallery = kept;
    }
    let head = load_head(&a.head)?;
    let (densities, source) = match a.pairing {
        Some(p) => (
            score_densities(&gallery, p)?,
            match p {
                Pairing::Model => "pairs-model",
                Pairing::RefinedCluster => "pairs-cluster",
            },
        ),
        None => (rank1_densities(&head, &gallery, a.granularity)?, "rank1"),
    };
    let rates = error_rates(&densities, a.grid_size)?;
    let threshold = pick_threshold(&rates, a.policy)?;
    if let Some(p) = &a.curves {
        emit_error_rates(&rates, p)?;
    }
    if let Some(p) = &a.densities {
        emit_densities(&densities, p)?;
    }
    let report = EvalReport {
        score_source: source.to_string(),
        min_quality: a.min_quality,
        policy: a.policy.to_string(),
        threshold,
        eer: rates.eer,
        eer_threshold: rates.eer_threshold,
        client_count: densities.client_total,
        impostor_count: densities.impostor_total,
        rank1: rank1_accuracy(&head, &gallery, None, a.granularity)?,
        rank1_at_threshold: rank1_accuracy(&head, &gallery, Some(threshold), a.granularity)?,
    };
    log::info!(
        "eval: threshold {:.4} ({}), rank-1 {:.4}",
        report.threshold,
        report.policy,
        report.rank1.accuracy
    );
    write_json(&report, a.report.as_deref())?;
    Ok(report)
}

fn run_best_shots(a: &BestShotArgs) -> Result<()> {
    let gallery = load(&a.gallery)?;
    let head = load_head(&a.head)?;
    let shots = best_shots(&gallery, &head)?;
    log::info!(
        "best-shots: {} tracks, make/model accuracy {:.4}",
        shots.len(),
        best_shot_accuracy(&gallery, &shots, Granularity::MakeModel)
    );
    write_json(&shots, a.out.as_deref())
}

fn run_build_index(a: &BuildIndexArgs) -> Result<()> {
    let gallery = load(&a.gallery)?;
    let head = load_head(&a.head)?;
    let index = build_index(&gallery, &head)?;
    save_index(&index, &a.out)?;
    log::info!("build-index: {} tracks -> {}", index.meta.track_count, a.out.display());
    Ok(())
}

fn run_serve(a: &ServeArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.default_min_score) {
        bail!("--default-min-score must be in [0, 1]");
    }
    let store = Arc::new(IndexStore::open(&a.index)?);
    let config = ServiceConfig {
        default_min_score: a.default_min_score,
        static_dir: a.static_dir.clone(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(serve(SocketAddr::new(a.host, a.port), store, config))
}

/// Training gallery with imbalanced class sizes, a few exact copies and
/// junk low-quality detections for the ingest stage to remove.
fn demo_training_gallery(fixture: &ModeFixture, seed: u64) -> Result<Gallery> {
    let base = fixture.sample(|c| 25 + 10 * (c % 4), 0.3, seed ^ 0x7261, "tr-")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a75);
    let mut records = Vec::with_capacity(base.len() + 40);
    for r in base.into_records() {
        let mut r = r;
        r.quality = Some((rng.random_range(0.5..1.0f64) * 1000.0).round() / 1000.0);
        if rng.random_bool(0.03) {
            let mut copy = r.clone();
            copy.id = format!("{}-copy", r.id);
            records.push(copy);
        }
        records.push(r);
    }
    for i in 0..24 {
        let class = &fixture.classes[i % fixture.classes.len()];
        let v: Vec<f32> = (0..fixture.dimension).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let mut r = EmbeddingRecord::new(format!("junk-{i}"), class.make.clone(), class.model.clone(), v);
        r.quality = Some((rng.random_range(0.0..0.2f64) * 1000.0).round() / 1000.0);
        records.push(r);
    }
    Ok(Gallery::new(records)?)
}

fn mass_below_p99(d: &reident::eval::ScoreDensities) -> f64 {
    d.impostor_percentile(99.0).map_or(0.0, |t| d.client_mass_below(t))
}

fn run_demo(a: &DemoArgs, seed: u64) -> Result<()> {
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let p = |name: &str| a.out_dir.join(name);
    let fixture = ModeFixture::generate(8, 2, 16, false, seed);

    save_gallery_auto(&demo_training_gallery(&fixture, seed)?, &p("raw.jsonl"))?;
    save_gallery_auto(&fixture.sample(|_| 20, 0.3, seed ^ 0x7465, "te-")?, &p("test.jsonl"))?;
    save_gallery_auto(&fixture.sample_tracks(6, 8, 0.3, 2.5, seed ^ 0x7669, "v-")?, &p("video.jsonl"))?;

    let ingest = run_ingest(&IngestArgs {
        input: p("raw.jsonl"),
        out: p("clean.jsonl"),
        dedup_near: 0.995,
        no_dedup_near: false,
        min_quality: Some(0.3),
        report: Some(p("ingest-report.json")),
    })?;
    let clusters = run_cluster(&ClusterArgs {
        input: p("clean.jsonl"),
        out: p("refined.jsonl"),
        threshold: DEFAULT_CLUSTER_THRESHOLD,
        min_size: DEFAULT_MIN_CLUSTER_SIZE,
        keep_discarded: false,
        report: Some(p("clusters.json")),
    })?;
    for (input, out) in [("clean.jsonl", "head-raw.ehed"), ("refined.jsonl", "head-refined.ehed")] {
        run_train(
            &TrainArgs {
                input: p(input),
                out: p(out),
                variant: Variant::PriorFree,
                epochs: 30,
                lr: 0.1,
                batch_size: 32,
                l2: 0.0,
                init: None,
            },
            seed,
        )?;
    }
    let eval = |head: &str, tag: &str| {
        run_eval(&EvalArgs {
            gallery: p("test.jsonl"),
            head: p(head),
            curves: Some(p(&format!("rates-{tag}.csv"))),
            densities: Some(p(&format!("densities-{tag}.csv"))),
            policy: ThresholdPolicy::Eer,
            granularity: Granularity::MakeModel,
            pairing: None,
            grid_size: DEFAULT_GRID_SIZE,
            min_quality: None,
            report: Some(p(&format!("eval-{tag}.json"))),
        })
    };
    let raw_eval = eval("head-raw.ehed", "raw")?;
    let refined_eval = eval("head-refined.ehed", "refined")?;

    let clean = load(&p("clean.jsonl"))?;
    let refined = relabel_gallery(&clean, &clusters, false)?;
    let by_model = score_densities(&clean, Pairing::Model)?;
    let by_cluster = score_densities(&refined, Pairing::RefinedCluster)?;
    emit_densities(&by_model, &p("pairs-model.csv"))?;
    emit_densities(&by_cluster, &p("pairs-cluster.csv"))?;
    let (mass_model, mass_cluster) = (mass_below_p99(&by_model), mass_below_p99(&by_cluster));

    run_best_shots(&BestShotArgs {
        gallery: p("video.jsonl"),
        head: p("head-refined.ehed"),
        out: Some(p("best-shots.json")),
    })?;
    run_build_index(&BuildIndexArgs {
        gallery: p("video.jsonl"),
        head: p("head-refined.ehed"),
        out: p("index.json"),
    })?;
    let video = load(&p("video.jsonl"))?;
    let head = load_head(&p("head-refined.ehed"))?;
    let per_detection = rank1_accuracy(&head, &video, None, Granularity::MakeModel)?.accuracy;
    let best = best_shot_accuracy(&video, &best_shots(&video, &head)?, Granularity::MakeModel);

    let drop = if mass_model > 0.0 { 100.0 * (1.0 - mass_cluster / mass_model) } else { 0.0 };
    println!("demo (seed {seed}) -> {}", a.out_dir.display());
    println!(
        "  ingest:     {} records in, {} kept ({} exact, {} near duplicates, {} low quality removed)",
        ingest.input_count,
        ingest.output_count,
        ingest.exact_duplicates_removed,
        ingest.near_duplicates_removed,
        ingest.low_quality_removed
    );
    println!(
        "  clustering: {} classes -> {} refined classes, {} records discarded",
        clusters.class_count_before, clusters.class_count_after, clusters.discarded_count
    );
    println!(
        "  client mass below impostor p99: by model {:.4}, by cluster {:.4} ({drop:.1}% lower)",
        mass_model, mass_cluster
    );
    println!(
        "  held-out rank-1 make/model: raw labels {:.4}, refined labels {:.4}",
        raw_eval.rank1.accuracy, refined_eval.rank1.accuracy
    );
    println!(
        "  EER threshold (refined head): {:.4}, EER {:.4}",
        refined_eval.eer_threshold, refined_eval.eer
    );
    println!("  video: best-shot accuracy {best:.4} vs per-detection {per_detection:.4}");
    println!(
        "  serve with: reident serve --index {} --default-min-score {:.4}",
        p("index.json").display(),
        refined_eval.eer_threshold
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    log::info!("config: {cli:?}");
    match &cli.command {
        Command::Ingest(a) => run_ingest(a).map(drop),
        Command::Cluster(a) => run_cluster(a).map(drop),
        Command::TrainHead(a) => run_train(a, cli.seed),
        Command::Eval(a) => run_eval(a).map(drop),
        Command::BestShots(a) => run_best_shots(a),
        Command::BuildIndex(a) => run_build_index(a),
        Command::Serve(a) => run_serve(a),
        Command::Demo(a) => run_demo(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
