use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use biaskit::annotate::{write_annotations, AnnotationCache, Task};
use biaskit::faces::{read_embeddings, write_embeddings, AreaMode, FaceRecord};
use biaskit::ingest::{self, CorpusStore, Fetcher, IngestConfig, RetryPolicy};
use biaskit::labels::RaceLabel7;
use biaskit::pipeline::analysis::StatsKind;
use biaskit::pipeline::files::{self, read_training_labels};
use biaskit::pipeline::report::{emit_report, write_tables, OutputFormat};
use biaskit::pipeline::synthetic::{write_planted_inputs, write_synthetic_run};
use biaskit::pipeline::validation::{read_predictions, validate_task, validation_table, ValidationTask};
use biaskit::pipeline::{
    annotate_articles, build_provider, classify_faces, load_stats_inputs, run_pipeline, stats_tables, train_space,
    EmbeddingSpace, PipelineError, ProviderConfig, RunConfig, Stage,
};
use biaskit::stats::Chi2Mode;
use biaskit::svm::{MergeMode, SvmEnsemble, SvmModel};
use biaskit::synth::synthetic_corpus_sized;
use biaskit::types::VenueId;

#[derive(Parser)]
#[command(name = "biaskit", version, about = "Measure racial and gender representation in news coverage")]
struct Cli {
    /// Run configuration (TOML); command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Minimum log level written to stderr.
    #[arg(long, global = true, default_value = "info")]
    log_level: tracing::Level,
    #[command(subcommand)]
    command: Command,
}

/// Parses a flag through the serde spelling of its type.
fn serde_arg<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Crawl archived section pages into a corpus directory.
    Ingest(IngestArgs),
    /// Keep detections above the confidence threshold.
    Faces(FacesArgs),
    /// Train one embedding space's race classifier.
    TrainSvm(TrainArgs),
    /// Classify faces with the two-model ensemble.
    Classify(ClassifyArgs),
    /// Label article texts with a provider.
    Annotate(AnnotateArgs),
    /// Score predictions against human codes.
    Validate(ValidateArgs),
    /// Compute the tables of one analysis.
    Stats(StatsArgs),
    /// Build the report bundle from statistics tables.
    Report(ReportArgs),
    /// Run pipeline stages as configured.
    Run(RunArgs),
    /// Write synthetic inputs for offline runs.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_parser = serde_arg::<VenueId>)]
    venue: Option<VenueId>,
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Comma-separated section names or URLs.
    #[arg(long)]
    sections: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Serve pages from a fixture directory with an index.json.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Requests per second per host.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct FacesArgs {
    /// Extractor manifest (the blob sits beside it).
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// CSV with face_id,label columns.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    space: EmbeddingSpace,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model_a: Option<PathBuf>,
    #[arg(long)]
    model_b: Option<PathBuf>,
    /// Filtered face records.
    #[arg(long)]
    faces: Option<PathBuf>,
    #[arg(long, value_parser = serde_arg::<MergeMode>)]
    merge_mode: Option<MergeMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma-separated subset of emotion,sentiment,topic,race,vp.
    #[arg(long, value_delimiter = ',', value_parser = serde_arg::<Task>)]
    tasks: Option<Vec<Task>>,
    /// `stub`, or `http` with the endpoint taken from the config file.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Answer cache; reruns only call the provider for missing answers.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    chunk_limit: Option<usize>,
    #[arg(long)]
    min_race_conf: Option<f64>,
    /// Timestamp stamped on fresh answers (RFC 3339).
    #[arg(long)]
    timestamp: Option<DateTime<Utc>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Prediction lines, classified faces or annotations (JSONL).
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    task: ValidationTask,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
    /// Output directory; the table goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    kind: StatsKind,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Classified faces.
    #[arg(long)]
    faces: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
    /// Also write long-format records for plotting.
    #[arg(long)]
    plot_data: bool,
    #[arg(long, value_parser = serde_arg::<AreaMode>)]
    area_mode: Option<AreaMode>,
    #[arg(long, value_parser = serde_arg::<Chi2Mode>)]
    chi2_mode: Option<Chi2Mode>,
    /// Pooled-variance t-tests instead of Welch.
    #[arg(long)]
    pooled: bool,
    /// Keep the Unspecified perpetrator column.
    #[arg(long)]
    include_unspecified: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directories holding table JSON files.
    #[arg(long = "tables", required = true, num_args = 1..)]
    tables: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated stages; all of them when absent.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = serde_arg::<MergeMode>)]
    merge_mode: Option<MergeMode>,
    #[arg(long, value_parser = serde_arg::<AreaMode>)]
    area_mode: Option<AreaMode>,
    #[arg(long, value_parser = serde_arg::<Chi2Mode>)]
    chi2_mode: Option<Chi2Mode>,
    #[arg(long)]
    pooled: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a planted corpus as stage outputs instead of a crawlable site.
    #[arg(long)]
    planted: bool,
    #[arg(long, default_value_t = biaskit::synth::TEXT_RECORDS)]
    text_records: usize,
    #[arg(long, default_value_t = biaskit::synth::FACE_RECORDS)]
    face_records: usize,
}

type Result<T> = std::result::Result<T, PipelineError>;

fn need<T: Clone>(flag: Option<T>, config: Option<&T>, what: &str) -> Result<T> {
    flag.or_else(|| config.cloned()).ok_or_else(|| PipelineError::Validation(format!("{what} is required")))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn ingest_cmd(cfg: &RunConfig, a: IngestArgs) -> Result<()> {
    let c = &cfg.corpus;
    let (venue, sections) = match (a.venue, a.sections) {
        (Some(v), Some(s)) => (v, s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()),
        (Some(v), None) => {
            let src = c.sources.iter().find(|s| s.venue == v);
            (v, src.map(|s| s.sections.clone()).ok_or_else(|| PipelineError::Validation("--sections is required".into()))?)
        }
        (None, s) => match (c.sources.as_slice(), s) {
            ([only], None) => (only.venue, only.sections.clone()),
            _ => return Err(PipelineError::Validation("--venue is required".into())),
        },
    };
    let from = need(a.from, c.from.as_ref(), "--from")?;
    let to = need(a.to, c.to.as_ref(), "--to")?;
    let out = need(a.out, Some(&cfg.out_dir.join("corpus")), "--out")?;
    let mut ic = IngestConfig::new(venue, from, to, sections, out);
    ic.fixtures = a.fixtures.or_else(|| c.fixtures.clone());
    ic.archive_host = c.archive_host.clone();
    ic.parallelism = a.parallelism.unwrap_or(c.parallelism);
    ic.retry = RetryPolicy { rate_per_host: a.rate.unwrap_or(c.rate), ..RetryPolicy::default() };
    let fetcher = Fetcher::new(ic.transport()?, ic.retry);
    let fetcher = if ic.fixtures.is_some() { fetcher.with_sleeper(|_| {}) } else { fetcher };
    print_json(&ingest::ingest(&ic, &fetcher)?);
    Ok(())
}

fn faces_cmd(cfg: &RunConfig, a: FacesArgs) -> Result<()> {
    let detections = need(a.detections, cfg.faces.detections.as_ref(), "--detections")?;
    let min = a.min_confidence.unwrap_or(cfg.faces.min_confidence);
    let all = read_embeddings(&detections)?;
    let kept: Vec<FaceRecord> = all.iter().filter(|r| r.detection.confidence > min).cloned().collect();
    write_embeddings(&a.out, &kept)?;
    print_json(&serde_json::json!({ "detected": all.len(), "kept": kept.len() }));
    Ok(())
}

fn train_cmd(cfg: &RunConfig, a: TrainArgs) -> Result<()> {
    let embeddings = need(a.embeddings, cfg.train.embeddings.as_ref(), "--embeddings")?;
    let labels = need(a.labels, cfg.train.labels.as_ref(), "--labels")?;
    let records = read_embeddings(&embeddings)?;
    let labels: std::collections::HashMap<String, RaceLabel7> =
        read_training_labels(&labels)?.into_iter().map(|l| (l.face_id, l.label)).collect();
    let (model, choice) = train_space(
        &records,
        &labels,
        a.space,
        a.c.or(cfg.train.c),
        a.gamma.or(cfg.train.gamma),
        a.seed.unwrap_or(cfg.seed),
    )?;
    model.save(&a.out)?;
    print_json(&serde_json::json!({ "c": choice.c, "gamma": choice.gamma, "support_vectors": model.support_vectors.len() }));
    Ok(())
}

fn classify_cmd(cfg: &RunConfig, a: ClassifyArgs) -> Result<()> {
    let i = &cfg.inputs;
    let dep = |p: Option<PathBuf>, what: &str| {
        p.ok_or_else(|| PipelineError::StageDependency { stage: Stage::Classify, missing: what.to_string() })
    };
    let ma = dep(a.model_a.or_else(|| i.model_a.clone()), "model A (--model-a)")?;
    let mb = dep(a.model_b.or_else(|| i.model_b.clone()), "model B (--model-b)")?;
    let faces = need(a.faces, i.faces.as_ref(), "--faces")?;
    for (p, what) in [(&ma, "model A"), (&mb, "model B")] {
        if !p.exists() {
            return Err(PipelineError::StageDependency { stage: Stage::Classify, missing: format!("{what} at {}", p.display()) });
        }
    }
    let ens = SvmEnsemble::new(SvmModel::load(&ma)?, SvmModel::load(&mb)?, a.merge_mode.unwrap_or(cfg.merge_mode))?;
    let records = read_embeddings(&faces)?;
    let out = classify_faces(&ens, &records)?;
    files::write_jsonl(&a.out, &out)?;
    print_json(&serde_json::json!({ "faces": records.len(), "classified": out.len() }));
    Ok(())
}

fn annotate_cmd(cfg: &RunConfig, a: AnnotateArgs) -> Result<()> {
    let corpus = need(a.corpus, cfg.inputs.corpus.as_ref(), "--corpus")?;
    let mut ac = cfg.annotate.clone();
    if let Some(t) = a.tasks {
        ac.tasks = t;
    }
    match a.provider.as_deref() {
        None => {}
        Some("stub") => ac.provider = ProviderConfig::Stub { seed: a.seed.unwrap_or(cfg.seed) },
        Some("http") if matches!(ac.provider, ProviderConfig::Http(_)) => {}
        Some(other) => {
            return Err(PipelineError::Validation(format!(
                "provider `{other}` is not configured (use stub, or http with [annotate.provider] in the config)"
            )))
        }
    }
    ac.budget = a.budget.unwrap_or(ac.budget);
    ac.chunk_limit = a.chunk_limit.or(ac.chunk_limit);
    ac.min_race_conf = a.min_race_conf.or(ac.min_race_conf);
    ac.fixed_timestamp = a.timestamp.or(ac.fixed_timestamp);
    let provider = build_provider(&ac.provider)?;
    let cache_path = a.cache.unwrap_or_else(|| a.out.with_extension("cache.jsonl"));
    let cache = AnnotationCache::open(&cache_path)?;
    let articles = CorpusStore::open(&corpus)?.load_articles()?;
    let (records, failures) = annotate_articles(&articles, provider.as_ref(), &cache, &ac);
    let tmp = a.out.with_extension("tmp");
    write_annotations(fs::File::create(&tmp)?, &records)?;
    fs::rename(&tmp, &a.out)?;
    print_json(&serde_json::json!({ "articles": articles.len(), "annotated": records.len(), "task_failures": failures }));
    Ok(())
}

fn validate_cmd(cfg: &RunConfig, a: ValidateArgs) -> Result<()> {
    let ratings_path = need(a.ratings, cfg.validate.ratings.as_ref(), "--ratings")?;
    let ratings: Vec<files::RatingsLine> = files::read_jsonl(&ratings_path)?;
    let preds = read_predictions(a.task, &a.preds)?;
    let row = validate_task(a.task, &preds, &ratings)?;
    let table = validation_table(&[row]);
    match a.out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            for p in write_tables(&dir, std::slice::from_ref(&table), a.format, false)? {
                tracing::info!(path = %p.display(), "wrote");
            }
        }
        None => {
            let bytes = match a.format {
                OutputFormat::Csv => table.to_csv(),
                OutputFormat::Json => table.to_json(),
            };
            print!("{}", String::from_utf8_lossy(&bytes));
        }
    }
    Ok(())
}

fn stats_cmd(cfg: &RunConfig, a: StatsArgs) -> Result<()> {
    let i = &cfg.inputs;
    let corpus = need(a.corpus, i.corpus.as_ref(), "--corpus")?;
    let annotations = a.annotations.or_else(|| i.annotations.clone());
    let faces = a.faces.or_else(|| i.classified.clone());
    let mut opts = cfg.stats;
    opts.area_mode = a.area_mode.unwrap_or(opts.area_mode);
    opts.chi2_mode = a.chi2_mode.unwrap_or(opts.chi2_mode);
    opts.pooled |= a.pooled;
    opts.include_unspecified |= a.include_unspecified;
    // Only the input the analysis needs is read.
    let (ann, cls) = if a.kind.uses_faces() { (None, faces.as_deref()) } else { (annotations.as_deref(), None) };
    let inputs = load_stats_inputs(&corpus, ann, cls)?;
    let tables = stats_tables(&[a.kind], &inputs, &opts)?;
    fs::create_dir_all(&a.out)?;
    let written = write_tables(&a.out, &tables, a.format, a.plot_data)?;
    print_json(&written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let dirs: Vec<&Path> = a.tables.iter().map(PathBuf::as_path).collect();
    fs::create_dir_all(&a.out)?;
    print_json(&emit_report(&dirs, &a.out)?);
    Ok(())
}

fn run_cmd(mut cfg: RunConfig, a: RunArgs) -> Result<()> {
    if let Some(out) = a.out {
        cfg.out_dir = out;
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.merge_mode = a.merge_mode.unwrap_or(cfg.merge_mode);
    cfg.stats.area_mode = a.area_mode.unwrap_or(cfg.stats.area_mode);
    cfg.stats.chi2_mode = a.chi2_mode.unwrap_or(cfg.stats.chi2_mode);
    cfg.stats.pooled |= a.pooled;
    let stages: BTreeSet<Stage> = a.stages.unwrap_or_else(|| Stage::ALL.to_vec()).into_iter().collect();
    let manifest = run_pipeline(&cfg, &stages.into_iter().collect::<Vec<_>>())?;
    print_json(&manifest);
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    if a.planted {
        let corpus = synthetic_corpus_sized(a.seed, a.text_records, a.face_records);
        let inputs = write_planted_inputs(&a.out, &corpus)?;
        let cfg = RunConfig { out_dir: PathBuf::from("out"), seed: a.seed, inputs, ..RunConfig::default() };
        let mut relative = cfg.clone();
        for p in [&mut relative.inputs.corpus, &mut relative.inputs.annotations, &mut relative.inputs.classified]
            .into_iter()
            .flatten()
        {
            if let Ok(r) = p.strip_prefix(&a.out) {
                *p = r.to_path_buf();
            }
        }
        let path = a.out.join("run.toml");
        fs::write(&path, relative.to_toml())?;
        print_json(&serde_json::json!({ "config": path, "text_records": corpus.text.len(), "face_records": corpus.faces.len() }));
    } else {
        let run = write_synthetic_run(&a.out, a.seed)?;
        print_json(&serde_json::json!({
            "config": run.config_path,
            "articles": run.articles,
            "detections": run.detections,
            "kept_faces": run.kept_faces,
        }));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    match cli.command {
        Command::Ingest(a) => ingest_cmd(&cfg, a),
        Command::Faces(a) => faces_cmd(&cfg, a),
        Command::TrainSvm(a) => train_cmd(&cfg, a),
        Command::Classify(a) => classify_cmd(&cfg, a),
        Command::Annotate(a) => annotate_cmd(&cfg, a),
        Command::Validate(a) => validate_cmd(&cfg, a),
        Command::Stats(a) => stats_cmd(&cfg, a),
        Command::Report(a) => report_cmd(a),
        Command::Run(a) => run_cmd(cfg, a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .json()
        .with_max_level(cli.log_level)
        .with_writer(std::io::stderr)
        .with_current_span(false)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(error = %e, exit_code = e.exit_code(), "command failed");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
