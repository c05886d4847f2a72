use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{face_observations, tables_for, text_observations, StatsKind, StatsOptions};
use super::config::{AnnotateConfig, ProviderConfig, RunConfig};
use super::files::{self, ClassifiedFace, PredictionLine, RatingsLine};
use super::report::{self, ReportTable};
use super::validation::{annotation_predictions, face_predictions, validate_task, validation_table, ValidationTask};
use super::{PipelineError, RunLayout, Stage, StageRecord};
use crate::annotate::{AnnotationCache, AnnotationRecord, Annotator, HttpProvider, Provider, StubProvider};
use crate::faces::{read_embeddings, write_embeddings, FaceRecord};
use crate::ingest::{self, ArticleRecord, CorpusStore, Fetcher, IngestConfig, RetryPolicy};
use crate::labels::{AgeBracket, RaceLabel7};
use crate::svm::{age_bracket, default_grid, grid_search, train_svm, GridChoice, SvmEnsemble, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSpace {
    A,
    B,
}

impl FromStr for EmbeddingSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            other => Err(format!("unknown embedding space `{other}` (expected a or b)")),
        }
    }
}

/// Trains one space's model; `(C, gamma)` come from a grid search when either is missing.
pub fn train_space(
    records: &[FaceRecord],
    labels: &HashMap<String, RaceLabel7>,
    space: EmbeddingSpace,
    c: Option<f64>,
    gamma: Option<f64>,
    seed: u64,
) -> Result<(SvmModel, GridChoice), PipelineError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in records {
        let Some(&label) = labels.get(&r.face_id) else { continue };
        xs.push(match space {
            EmbeddingSpace::A => r.emb_a.clone(),
            EmbeddingSpace::B => r.emb_b.clone(),
        });
        ys.push(label);
    }
    if xs.is_empty() {
        return Err(PipelineError::Validation("no training face has a label".into()));
    }
    let choice = match (c, gamma) {
        (Some(c), Some(gamma)) => GridChoice { c, gamma, validation_accuracy: f64::NAN },
        _ => grid_search(&xs, &ys, &default_grid(xs[0].len()), seed)?,
    };
    Ok((train_svm(&xs, &ys, choice.c, choice.gamma, seed)?, choice))
}

/// Classifies faces in parallel; output order follows input order.
pub fn classify_faces(ens: &SvmEnsemble, faces: &[FaceRecord]) -> Result<Vec<ClassifiedFace>, PipelineError> {
    faces
        .par_iter()
        .map(|f| {
            let p = ens.predict(&f.emb_a, &f.emb_b)?;
            let (race, confidence) = ens.decide(&p);
            let age: Option<AgeBracket> = f.age_probs.as_deref().map(age_bracket).transpose()?;
            Ok(ClassifiedFace {
                face_id: f.face_id.clone(),
                image_id: f.detection.image_id.clone(),
                race,
                confidence,
                probs: p.probs,
                gender: f.gender_pred,
                age,
                bbox: f.detection.bbox,
                image_width: f.image_width_px,
                image_height: f.image_height_px,
            })
        })
        .collect()
}

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn Provider>, PipelineError> {
    Ok(match cfg {
        ProviderConfig::Stub { seed } => Box::new(StubProvider::new(*seed)),
        ProviderConfig::Http(h) => Box::new(
            HttpProvider::from_config(h).map_err(|e| PipelineError::Validation(format!("provider: {e}")))?,
        ),
    })
}

/// Annotates articles in input order; returns the records and the number of failed tasks.
pub fn annotate_articles(
    articles: &[ArticleRecord],
    provider: &dyn Provider,
    cache: &AnnotationCache,
    cfg: &AnnotateConfig,
) -> (Vec<AnnotationRecord>, usize) {
    let mut annotator = Annotator::new(provider, cache);
    annotator.chunk_limit = cfg.chunk_limit;
    annotator.min_race_conf = cfg.min_race_conf;
    let tasks: BTreeSet<_> = cfg.tasks.iter().copied().collect();
    let now: DateTime<Utc> = cfg.fixed_timestamp.unwrap_or_else(Utc::now);
    let mut failures = 0;
    let records = annotator
        .annotate_all(articles, &tasks, now, cfg.budget)
        .into_iter()
        .map(|a| {
            for (task, e) in &a.failures {
                tracing::warn!(article = %a.record.article_id, %task, error = %e, "annotation failed");
            }
            failures += a.failures.len();
            a.record
        })
        .collect();
    (records, failures)
}

/// Everything the statistics read.
pub struct StatsInputs {
    pub articles: Vec<ArticleRecord>,
    pub annotations: Option<Vec<AnnotationRecord>>,
    pub classified: Option<Vec<ClassifiedFace>>,
}

pub fn load_stats_inputs(
    corpus: &Path,
    annotations: Option<&Path>,
    classified: Option<&Path>,
) -> Result<StatsInputs, PipelineError> {
    Ok(StatsInputs {
        articles: CorpusStore::open(corpus)?.load_articles()?,
        annotations: annotations.map(crate::annotate::read_annotations).transpose()?,
        classified: classified.map(files::read_jsonl).transpose()?,
    })
}

/// Tables of the requested kinds. Kinds whose input is missing are an error.
pub fn stats_tables(kinds: &[StatsKind], inputs: &StatsInputs, opts: &StatsOptions) -> Result<Vec<ReportTable>, PipelineError> {
    let faces = match &inputs.classified {
        Some(c) => face_observations(c, &inputs.articles, opts.area_mode),
        None => Vec::new(),
    };
    let text = match &inputs.annotations {
        Some(a) => text_observations(a, &inputs.articles),
        None => Vec::new(),
    };
    let mut out = Vec::new();
    for &k in kinds {
        let missing = if k.uses_faces() { inputs.classified.is_none() } else { inputs.annotations.is_none() };
        if missing {
            return Err(PipelineError::StageDependency {
                stage: Stage::Stats,
                missing: if k.uses_faces() { "classified faces".into() } else { "annotations".into() },
            });
        }
        out.extend(tables_for(k, &faces, &text, opts));
    }
    Ok(out)
}

fn exists(p: &Path) -> bool {
    p.exists()
}

/// Picks this run's artifact when its stage ran, else a configured input,
/// else a leftover artifact from an earlier run.
fn resolve(
    stage: Stage,
    producer: Stage,
    done: &[Stage],
    produced: PathBuf,
    configured: &Option<PathBuf>,
    what: &str,
) -> Result<PathBuf, PipelineError> {
    if done.contains(&producer) && exists(&produced) {
        return Ok(produced);
    }
    if let Some(p) = configured {
        if exists(p) {
            return Ok(p.clone());
        }
        return Err(PipelineError::StageDependency { stage, missing: format!("{what} at {}", p.display()) });
    }
    if exists(&produced) {
        return Ok(produced);
    }
    Err(PipelineError::StageDependency { stage, missing: format!("{what} (run the {producer} stage first)") })
}

fn corpus_dir(stage: Stage, cfg: &RunConfig, layout: &RunLayout, done: &[Stage]) -> Result<PathBuf, PipelineError> {
    let produced = layout.dir(Stage::Ingest);
    let p = resolve(stage, Stage::Ingest, done, produced.clone(), &cfg.inputs.corpus, "corpus")?;
    if !p.join("corpus").is_dir() {
        return Err(PipelineError::StageDependency { stage, missing: format!("corpus at {}", p.display()) });
    }
    Ok(p)
}

fn required(stage: Stage, p: &Option<PathBuf>, what: &str) -> Result<PathBuf, PipelineError> {
    match p {
        Some(p) if p.exists() => Ok(p.clone()),
        Some(p) => Err(PipelineError::StageDependency { stage, missing: format!("{what} at {}", p.display()) }),
        None => Err(PipelineError::StageDependency { stage, missing: format!("{what} (not configured)") }),
    }
}

type Counts = BTreeMap<String, u64>;

fn counts<const N: usize>(items: [(&str, usize); N]) -> Counts {
    items.into_iter().map(|(k, v)| (k.to_string(), v as u64)).collect()
}

fn record(stage: Stage, layout: &RunLayout, counts: Counts) -> Result<StageRecord, PipelineError> {
    let outputs = files::hash_tree(&layout.dir(stage))?
        .into_iter()
        .map(|(k, v)| (format!("{}/{k}", stage.dir()), v))
        .collect();
    Ok(StageRecord { stage, counts, outputs })
}

/// Runs `body` against an empty staging directory and moves it into place on success.
fn staged(
    stage: Stage,
    layout: &RunLayout,
    body: impl FnOnce(&Path) -> Result<Counts, PipelineError>,
) -> Result<StageRecord, PipelineError> {
    let tmp = layout.staging(stage);
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    match body(&tmp) {
        Ok(c) => {
            let dest = layout.dir(stage);
            if dest.exists() {
                fs::remove_dir_all(&dest)?;
            }
            fs::rename(&tmp, &dest)?;
            record(stage, layout, c)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

fn run_ingest(cfg: &RunConfig, layout: &RunLayout) -> Result<StageRecord, PipelineError> {
    let c = &cfg.corpus;
    let missing = |m: &str| PipelineError::StageDependency { stage: Stage::Ingest, missing: m.to_string() };
    let (from, to) = (c.from.ok_or_else(|| missing("corpus.from"))?, c.to.ok_or_else(|| missing("corpus.to"))?);
    if c.sources.is_empty() {
        return Err(missing("corpus.sources"));
    }
    let out = layout.dir(Stage::Ingest);
    let mut total = ingest::IngestReport::default();
    for src in &c.sources {
        let mut ic = IngestConfig::new(src.venue, from, to, src.sections.clone(), out.clone());
        ic.fixtures = c.fixtures.clone();
        ic.archive_host = c.archive_host.clone();
        ic.parallelism = c.parallelism;
        ic.retry = RetryPolicy { rate_per_host: c.rate, ..RetryPolicy::default() };
        let fetcher = Fetcher::new(ic.transport()?, ic.retry);
        let fetcher = if c.fixtures.is_some() { fetcher.with_sleeper(|_| {}) } else { fetcher };
        let r = ingest::ingest(&ic, &fetcher)?;
        total.snapshots += r.snapshots;
        total.snapshot_failures += r.snapshot_failures;
        total.links += r.links;
        total.duplicates_dropped += r.duplicates_dropped;
        total.article_failures += r.article_failures;
        total.articles_written += r.articles_written;
        total.images += r.images;
        total.images_unfetched += r.images_unfetched;
    }
    record(
        Stage::Ingest,
        layout,
        counts([
            ("snapshots", total.snapshots),
            ("snapshot_failures", total.snapshot_failures),
            ("links", total.links),
            ("duplicates_dropped", total.duplicates_dropped),
            ("article_failures", total.article_failures),
            ("articles", total.articles_written),
            ("images", total.images),
            ("images_unfetched", total.images_unfetched),
        ]),
    )
}

fn run_faces(cfg: &RunConfig, layout: &RunLayout) -> Result<StageRecord, PipelineError> {
    let detections = required(Stage::Faces, &cfg.faces.detections, "face detections")?;
    let min = cfg.faces.min_confidence;
    staged(Stage::Faces, layout, |tmp| {
        let all = read_embeddings(&detections)?;
        let kept: Vec<FaceRecord> = all.iter().filter(|r| r.detection.confidence > min).cloned().collect();
        write_embeddings(&tmp.join("faces.jsonl"), &kept)?;
        Ok(counts([("detected", all.len()), ("kept", kept.len())]))
    })
}

#[derive(Serialize)]
struct TrainingSummary {
    model_a: GridChoice,
    model_b: GridChoice,
    grid_searched: bool,
}

fn run_train(cfg: &RunConfig, layout: &RunLayout) -> Result<StageRecord, PipelineError> {
    let emb = required(Stage::Train, &cfg.train.embeddings, "training embeddings")?;
    let labels = required(Stage::Train, &cfg.train.labels, "training labels")?;
    staged(Stage::Train, layout, |tmp| {
        let records = read_embeddings(&emb)?;
        let labels: HashMap<String, RaceLabel7> =
            files::read_training_labels(&labels)?.into_iter().map(|l| (l.face_id, l.label)).collect();
        let t = &cfg.train;
        let (a, ca) = train_space(&records, &labels, EmbeddingSpace::A, t.c, t.gamma, cfg.seed)?;
        let (b, cb) = train_space(&records, &labels, EmbeddingSpace::B, t.c, t.gamma, cfg.seed)?;
        a.save(&tmp.join("model_a.svm"))?;
        b.save(&tmp.join("model_b.svm"))?;
        let summary = TrainingSummary { model_a: ca, model_b: cb, grid_searched: t.c.is_none() || t.gamma.is_none() };
        files::write_json(&tmp.join("training.json"), &summary)?;
        Ok(counts([
            ("records", labels.len().min(records.len())),
            ("support_vectors_a", a.support_vectors.len()),
            ("support_vectors_b", b.support_vectors.len()),
        ]))
    })
}

fn run_classify(cfg: &RunConfig, layout: &RunLayout, done: &[Stage]) -> Result<StageRecord, PipelineError> {
    let st = Stage::Classify;
    let ma = resolve(st, Stage::Train, done, layout.model_a(), &cfg.inputs.model_a, "model A")?;
    let mb = resolve(st, Stage::Train, done, layout.model_b(), &cfg.inputs.model_b, "model B")?;
    let faces = resolve(st, Stage::Faces, done, layout.faces(), &cfg.inputs.faces, "filtered faces")?;
    staged(st, layout, |tmp| {
        let ens = SvmEnsemble::new(SvmModel::load(&ma)?, SvmModel::load(&mb)?, cfg.merge_mode)?;
        let records = read_embeddings(&faces)?;
        let out = classify_faces(&ens, &records)?;
        files::write_jsonl(&tmp.join("faces.jsonl"), &out)?;
        Ok(counts([("faces", records.len()), ("classified", out.len())]))
    })
}

fn run_annotate(cfg: &RunConfig, layout: &RunLayout, done: &[Stage]) -> Result<StageRecord, PipelineError> {
    let corpus = corpus_dir(Stage::Annotate, cfg, layout, done)?;
    let provider = build_provider(&cfg.annotate.provider)?;
    let cache_path = layout.cache();
    if let Some(dir) = cache_path.parent() {
        fs::create_dir_all(dir)?;
    }
    let cache = AnnotationCache::open(&cache_path)?;
    staged(Stage::Annotate, layout, |tmp| {
        let articles = CorpusStore::open(&corpus)?.load_articles()?;
        let (records, failures) = annotate_articles(&articles, provider.as_ref(), &cache, &cfg.annotate);
        crate::annotate::write_annotations(fs::File::create(tmp.join("annotations.jsonl"))?, &records)?;
        Ok(counts([("articles", articles.len()), ("annotated", records.len()), ("task_failures", failures)]))
    })
}

fn run_validate(cfg: &RunConfig, layout: &RunLayout, done: &[Stage]) -> Result<StageRecord, PipelineError> {
    let st = Stage::Validate;
    let ratings_path = required(st, &cfg.validate.ratings, "validation ratings")?;
    let ratings: Vec<RatingsLine> = files::read_jsonl(&ratings_path)?;
    let mut tasks = BTreeSet::new();
    for r in &ratings {
        tasks.insert(ValidationTask::from_str(&r.task).map_err(PipelineError::Validation)?);
    }
    let needs_faces = tasks.iter().any(|t| t.on_faces());
    let needs_text = tasks.iter().any(|t| !t.on_faces() || *t == ValidationTask::Race);
    let classified: Vec<ClassifiedFace> = if needs_faces {
        files::read_jsonl(&resolve(st, Stage::Classify, done, layout.classified(), &cfg.inputs.classified, "classified faces")?)?
    } else {
        Vec::new()
    };
    let annotations = if needs_text {
        let p = resolve(st, Stage::Annotate, done, layout.annotations(), &cfg.inputs.annotations, "annotations");
        match (p, tasks.iter().all(|t| t.on_faces())) {
            (Ok(p), _) => crate::annotate::read_annotations(&p)?,
            (Err(_), true) => Vec::new(),
            (Err(e), false) => return Err(e),
        }
    } else {
        Vec::new()
    };
    staged(st, layout, |tmp| {
        let mut rows = Vec::new();
        let mut items = 0;
        for &task in &tasks {
            let mut preds: Vec<PredictionLine> = Vec::new();
            if task.on_faces() {
                preds.extend(face_predictions(task, &classified));
            }
            if !task.on_faces() || task == ValidationTask::Race {
                preds.extend(annotation_predictions(task, &annotations));
            }
            let row = validate_task(task, &preds, &ratings)?;
            items += row.items;
            rows.push(row);
        }
        fs::write(tmp.join("table6_validation.json"), validation_table(&rows).to_json())?;
        Ok(counts([("tasks", rows.len()), ("items", items)]))
    })
}

fn run_stats(cfg: &RunConfig, layout: &RunLayout, done: &[Stage]) -> Result<StageRecord, PipelineError> {
    let st = Stage::Stats;
    let corpus = corpus_dir(st, cfg, layout, done)?;
    let ann = resolve(st, Stage::Annotate, done, layout.annotations(), &cfg.inputs.annotations, "annotations")?;
    let cls = resolve(st, Stage::Classify, done, layout.classified(), &cfg.inputs.classified, "classified faces")?;
    staged(st, layout, |tmp| {
        let inputs = load_stats_inputs(&corpus, Some(&ann), Some(&cls))?;
        let tables = stats_tables(&StatsKind::ALL, &inputs, &cfg.stats)?;
        for t in &tables {
            fs::write(tmp.join(format!("{}.json", t.name)), t.to_json())?;
        }
        let faces = face_observations(inputs.classified.as_deref().unwrap_or(&[]), &inputs.articles, cfg.stats.area_mode);
        let text = text_observations(inputs.annotations.as_deref().unwrap_or(&[]), &inputs.articles);
        Ok(counts([("tables", tables.len()), ("face_observations", faces.len()), ("text_observations", text.len())]))
    })
}

fn run_report(layout: &RunLayout) -> Result<StageRecord, PipelineError> {
    let stats = layout.dir(Stage::Stats);
    if !stats.is_dir() {
        return Err(PipelineError::StageDependency { stage: Stage::Report, missing: "statistics (run the stats stage first)".into() });
    }
    let validation = layout.dir(Stage::Validate);
    staged(Stage::Report, layout, |tmp| {
        let index = report::emit_report(&[&stats, &validation], tmp)?;
        Ok(counts([("tables", index.len())]))
    })
}

pub(super) fn run_stage(stage: Stage, cfg: &RunConfig, layout: &RunLayout, done: &[Stage]) -> Result<StageRecord, PipelineError> {
    match stage {
        Stage::Ingest => run_ingest(cfg, layout),
        Stage::Faces => run_faces(cfg, layout),
        Stage::Train => run_train(cfg, layout),
        Stage::Classify => run_classify(cfg, layout, done),
        Stage::Annotate => run_annotate(cfg, layout, done),
        Stage::Validate => run_validate(cfg, layout, done),
        Stage::Stats => run_stats(cfg, layout, done),
        Stage::Report => run_report(layout),
    }
}

/// Hashes of the external inputs the planned stages read.
pub(super) fn input_hashes(cfg: &RunConfig, stages: &[Stage]) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    let mut add = |key: &str, p: &Option<PathBuf>| -> Result<(), PipelineError> {
        if let Some(p) = p {
            if p.is_dir() {
                out.insert(key.to_string(), files::tree_digest(p)?);
            } else if p.is_file() {
                out.insert(key.to_string(), files::sha256_file(p)?);
                let blob = crate::faces::blob_path_for(p);
                if p.extension().is_some_and(|e| e == "jsonl") && blob.is_file() {
                    out.insert(format!("{key}.bin"), files::sha256_file(&blob)?);
                }
            }
        }
        Ok(())
    };
    if stages.contains(&Stage::Ingest) {
        add("corpus.fixtures", &cfg.corpus.fixtures)?;
    }
    if stages.contains(&Stage::Faces) {
        add("faces.detections", &cfg.faces.detections)?;
    }
    if stages.contains(&Stage::Train) {
        add("train.embeddings", &cfg.train.embeddings)?;
        add("train.labels", &cfg.train.labels)?;
    }
    if stages.contains(&Stage::Validate) {
        add("validate.ratings", &cfg.validate.ratings)?;
    }
    let i = &cfg.inputs;
    for (k, p) in [
        ("inputs.corpus", &i.corpus),
        ("inputs.faces", &i.faces),
        ("inputs.model_a", &i.model_a),
        ("inputs.model_b", &i.model_b),
        ("inputs.classified", &i.classified),
        ("inputs.annotations", &i.annotations),
    ] {
        add(k, p)?;
    }
    Ok(out)
}

