//! Self-contained inputs for offline runs: an archived site, extractor output,
//! a labelled training set, human ratings and a config tying them together.
//! Also materialises a planted corpus as stage outputs for statistics-only runs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{CorpusConfig, FacesConfig, InputsConfig, ProviderConfig, RunConfig, SourceConfig, TrainConfig};
use super::files::{self, ClassifiedFace, RatingsLine, TrainingLabel};
use super::validation::ValidationTask;
use super::PipelineError;
use crate::annotate::{write_annotations, AnnotationRecord, ProviderMeta};
use crate::faces::{write_embeddings, BBox, FaceDetection, FaceRecord, AGE_DIM, EMB_A_DIM, EMB_B_DIM};
use crate::ingest::canon::{canonical_url, stable_hash, DEFAULT_STRIPPED_PARAMS};
use crate::ingest::{build_snapshot_urls, ArticleRecord, CorpusStore, ImageRef, DEFAULT_ARCHIVE_HOST};
use crate::labels::{AgeBracket, EmotionLabel, PerpetratorLabel, RaceLabel6, RaceLabel7, SentimentLabel, TopicLabel, VictimLabel};
use crate::synth::SyntheticCorpus;
use crate::types::{CategoryLabel, Gender, VenueId};

/// Distance of each race centre from the origin in embedding space.
pub const SEPARATION: f64 = 20.0;
const RATERS: usize = 5;
const ARTICLES_PER_PAGE: usize = 4;
const TRAIN_PER_CLASS: usize = 30;

fn sections(venue: VenueId) -> &'static [&'static str] {
    match venue {
        VenueId::Nyt => &["sports", "arts", "food", "world"],
        VenueId::Fox => &["sports", "entertainment", "travel", "politics"],
    }
}

const WORDS: &[&str] = &[
    "city", "council", "season", "coach", "museum", "festival", "market", "river", "players", "election",
    "school", "record", "chef", "harbor", "court", "police", "gallery", "senate", "team", "kitchen",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(6..12);
    let mut words: Vec<&str> = (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
    words[0] = "The";
    format!("{}.", words.join(" "))
}

/// PNG signature and header chunk; enough for dimension sniffing.
pub fn png_header(width: u32, height: u32) -> Vec<u8> {
    let mut png = vec![0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0, 0, 0, 13, b'I', b'H', b'D', b'R'];
    png.extend_from_slice(&width.to_be_bytes());
    png.extend_from_slice(&height.to_be_bytes());
    png.extend_from_slice(&[8, 2, 0, 0, 0, 0, 0, 0, 0]);
    png
}

/// A point of race `k`'s Gaussian blob.
pub fn blob_point(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Vec<f32> {
    let mut x: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    x[k] += SEPARATION as f32;
    x
}

fn race7_for(venue: VenueId, rng: &mut ChaCha8Rng) -> RaceLabel7 {
    // Indexes RaceLabel7::ALL; the last entry is the majority group.
    let weights: [f64; 7] = match venue {
        VenueId::Nyt => [0.14, 0.08, 0.08, 0.06, 0.08, 0.08, 0.48],
        VenueId::Fox => [0.16, 0.05, 0.05, 0.04, 0.06, 0.06, 0.58],
    };
    let mut u: f64 = rng.gen();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return RaceLabel7::ALL[i];
        }
        u -= w;
    }
    RaceLabel7::ALL[6]
}

fn face_record(
    rng: &mut ChaCha8Rng,
    face_id: String,
    image_id: String,
    race: RaceLabel7,
    dims: (u32, u32),
    confidence: f64,
) -> FaceRecord {
    let k = RaceLabel7::ALL.iter().position(|r| *r == race).expect("known label");
    let (w, h) = dims;
    let bw = rng.gen_range(w / 8..=w / 3).max(1);
    let bh = rng.gen_range(h / 8..=h / 3).max(1);
    let bbox = BBox::new(rng.gen_range(0..=w - bw), rng.gen_range(0..=h - bh), bw, bh);
    let age = rng.gen_range(0..AGE_DIM);
    let mut age_probs: Vec<f64> = (0..AGE_DIM).map(|i| if i == age { 4.0 } else { rng.gen_range(0.0..1.0) }).collect();
    let total: f64 = age_probs.iter().sum();
    age_probs.iter_mut().for_each(|p| *p /= total);
    FaceRecord {
        face_id,
        detection: FaceDetection { image_id, bbox, confidence },
        emb_a: blob_point(rng, k, EMB_A_DIM),
        emb_b: blob_point(rng, k, EMB_B_DIM),
        image_width_px: Some(w),
        image_height_px: Some(h),
        gender_pred: Some(if rng.gen_bool(0.6) { Gender::Male } else { Gender::Female }),
        age_probs: Some(age_probs),
    }
}

/// Ratings where each coder gives `truth` with probability 0.8, another
/// label otherwise, and occasionally skips the item.
fn ratings_for(rng: &mut ChaCha8Rng, item_id: &str, task: ValidationTask, truth: &str, labels: &[String]) -> RatingsLine {
    let ratings = (0..RATERS)
        .map(|_| {
            if rng.gen_bool(0.05) {
                None
            } else if rng.gen_bool(0.8) {
                Some(truth.to_string())
            } else {
                Some(labels[rng.gen_range(0..labels.len())].clone())
            }
        })
        .collect();
    RatingsLine { item_id: item_id.to_string(), task: task.as_str().to_string(), ratings }
}

fn label_strings<T: ToString>(all: &[T]) -> Vec<String> {
    all.iter().map(|l| l.to_string()).collect()
}

/// Paths of a materialised synthetic run, relative to its directory.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub config_path: PathBuf,
    pub articles: usize,
    pub detections: usize,
    pub kept_faces: usize,
}

pub const SYNTHETIC_FROM: (i32, u32, u32) = (2015, 3, 2);
pub const SYNTHETIC_DAYS: u32 = 3;

/// Writes a complete offline run under `dir` and returns its config path.
///
/// Each day's section page lists fresh articles plus one article from the
/// previous day, so the crawl exercises deduplication. Article pages carry
/// content images and a masthead logo.
pub fn write_synthetic_run(dir: &Path, seed: u64) -> Result<SyntheticRun, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let site = dir.join("site");
    fs::create_dir_all(site.join("pages"))?;
    fs::create_dir_all(site.join("images"))?;
    let (y, m, d) = SYNTHETIC_FROM;
    let from = NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
    let to = from + chrono::Duration::days(SYNTHETIC_DAYS as i64 - 1);

    let mut index: BTreeMap<String, String> = BTreeMap::new();
    let mut detections: Vec<FaceRecord> = Vec::new();
    let mut article_ids: Vec<String> = Vec::new();
    let mut truth: HashMap<String, RaceLabel7> = HashMap::new();
    let mut sources = Vec::new();
    let mut n = 0usize;
    for venue in VenueId::ALL {
        let secs: Vec<String> = sections(venue).iter().map(|s| s.to_string()).collect();
        sources.push(SourceConfig { venue, sections: secs.clone() });
        let snaps = build_snapshot_urls(venue, from, to, &secs, DEFAULT_ARCHIVE_HOST)?;
        let mut previous: BTreeMap<String, String> = BTreeMap::new();
        for snap in snaps {
            let mut links: Vec<String> = Vec::new();
            if let Some(prev) = previous.get(&snap.section) {
                links.push(prev.clone());
            }
            for i in 0..ARTICLES_PER_PAGE {
                let slug = format!("synthetic-{}-{}-{i}", snap.section, snap.date.format("%d"));
                let url = match venue {
                    VenueId::Nyt => format!("https://{}/{}/{}/{slug}.html", venue.host(), snap.date.format("%Y/%m/%d"), snap.section),
                    VenueId::Fox => format!("https://{}/{}/{slug}", venue.host(), snap.section),
                };
                let url = canonical_url(&url, DEFAULT_STRIPPED_PARAMS).expect("valid url");
                n += 1;
                let file = format!("pages/article-{n:04}.html");
                let mut images = String::new();
                for j in 0..rng.gen_range(1..=3) {
                    let (w, h) = (rng.gen_range(400..=1600u32), rng.gen_range(300..=1000u32));
                    let src = format!("https://images.synthetic.test/{}/{slug}-{j}.png", venue.as_str());
                    let src = canonical_url(&src, DEFAULT_STRIPPED_PARAMS).expect("valid url");
                    let image_id = stable_hash(&src);
                    let img_file = format!("images/{image_id}.png");
                    fs::write(site.join(&img_file), png_header(w, h))?;
                    index.insert(src.clone(), img_file);
                    images.push_str(&format!("<figure><img src=\"{src}\" width=\"{w}\" height=\"{h}\"></figure>\n"));
                    for k in 0..rng.gen_range(0..=3) {
                        let confidence = if rng.gen_bool(0.8) { rng.gen_range(0.905..0.999) } else { rng.gen_range(0.5..=0.9) };
                        let race = race7_for(venue, &mut rng);
                        let id = format!("{image_id}-{k}");
                        truth.insert(id.clone(), race);
                        detections.push(face_record(&mut rng, id, image_id.clone(), race, (w, h), confidence));
                    }
                }
                let paragraphs: String =
                    (0..3).map(|_| format!("<p>{}</p>\n", sentence(&mut rng))).collect::<Vec<_>>().concat();
                let body_open = match venue {
                    VenueId::Nyt => "<section name=\"articleBody\">",
                    VenueId::Fox => "<div class=\"article-body\">",
                };
                let body_close = if venue == VenueId::Nyt { "</section>" } else { "</div>" };
                let html = format!(
                    "<html><head><meta property=\"article:published_time\" content=\"{date}T08:00:00Z\"></head>\n\
                     <body><header><img src=\"https://images.synthetic.test/{v}/logo.png\" width=\"120\" height=\"40\"></header>\n\
                     <article><h1>{title}</h1>\n{images}{body_open}\n{paragraphs}{body_close}</article></body></html>\n",
                    date = snap.date,
                    v = venue.as_str(),
                    title = sentence(&mut rng).trim_end_matches('.'),
                );
                fs::write(site.join(&file), html)?;
                index.insert(url.clone(), file);
                article_ids.push(stable_hash(&url));
                links.push(url);
            }
            previous.insert(snap.section.clone(), links.last().expect("page has links").clone());
            let anchors: String = links.iter().map(|l| format!("<li><a href=\"{l}\">story</a></li>\n")).collect();
            let page = match venue {
                VenueId::Nyt => format!("<html><body><div id=\"stream-panel\"><ol>\n{anchors}</ol></div></body></html>\n"),
                VenueId::Fox => format!("<html><body><div class=\"collection-article-list\"><ul>\n{anchors}</ul></div></body></html>\n"),
            };
            n += 1;
            let file = format!("pages/section-{n:04}.html");
            fs::write(site.join(&file), page)?;
            index.insert(snap.archive_url.clone(), file);
        }
    }
    files::write_json(&site.join("index.json"), &index)?;
    write_embeddings(&dir.join("detections.jsonl"), &detections)?;

    let mut training = Vec::new();
    let mut labels = Vec::new();
    for i in 0..TRAIN_PER_CLASS {
        for race in RaceLabel7::ALL {
            let id = format!("train-{}-{i:03}", race.to_string().to_ascii_lowercase().replace(' ', "-"));
            training.push(face_record(&mut rng, id.clone(), "training".into(), *race, (640, 480), 0.99));
            labels.push(TrainingLabel { face_id: id, label: *race });
        }
    }
    write_embeddings(&dir.join("training.jsonl"), &training)?;
    files::write_training_labels(&dir.join("training_labels.csv"), &labels)?;

    // Human codes: faces against their generating labels, articles against
    // uniformly drawn "true" labels (the stub annotator knows nothing).
    let kept: Vec<&FaceRecord> = detections.iter().filter(|f| f.detection.confidence > 0.9).collect();
    let mut ratings = Vec::new();
    let races6 = label_strings(RaceLabel6::ALL);
    for f in kept.iter().take(40) {
        let race = truth[&f.face_id].merge_to_six().to_string();
        ratings.push(ratings_for(&mut rng, &f.face_id, ValidationTask::Race, &race, &races6));
        let ages = label_strings(AgeBracket::ALL);
        let age = crate::svm::age_bracket(f.age_probs.as_deref().unwrap_or(&[])).map(|a| a.to_string())?;
        ratings.push(ratings_for(&mut rng, &f.face_id, ValidationTask::Age, &age, &ages));
        let genders = label_strings(&Gender::ALL);
        let g = f.gender_pred.map(|g| g.to_string()).unwrap_or_else(|| genders[0].clone());
        ratings.push(ratings_for(&mut rng, &f.face_id, ValidationTask::Gender, &g, &genders));
    }
    let text_tasks: [(ValidationTask, Vec<String>); 5] = [
        (ValidationTask::Emotion, label_strings(EmotionLabel::ALL)),
        (ValidationTask::Sentiment, label_strings(SentimentLabel::ALL)),
        (ValidationTask::Category, label_strings(TopicLabel::ALL)),
        (ValidationTask::Victim, label_strings(VictimLabel::ALL)),
        (ValidationTask::Perpetrator, label_strings(PerpetratorLabel::ALL)),
    ];
    for id in article_ids.iter().take(30) {
        for (task, labels) in &text_tasks {
            let truth = labels[rng.gen_range(0..labels.len())].clone();
            ratings.push(ratings_for(&mut rng, id, *task, &truth, labels));
        }
    }
    files::write_jsonl(&dir.join("ratings.jsonl"), &ratings)?;

    let config = RunConfig {
        out_dir: PathBuf::from("out"),
        seed,
        corpus: CorpusConfig {
            sources,
            from: Some(from),
            to: Some(to),
            fixtures: Some(PathBuf::from("site")),
            rate: 0.0,
            ..CorpusConfig::default()
        },
        faces: FacesConfig { detections: Some(PathBuf::from("detections.jsonl")), ..FacesConfig::default() },
        train: TrainConfig {
            embeddings: Some(PathBuf::from("training.jsonl")),
            labels: Some(PathBuf::from("training_labels.csv")),
            c: None,
            gamma: None,
        },
        annotate: super::config::AnnotateConfig {
            provider: ProviderConfig::Stub { seed },
            fixed_timestamp: Some(fixed_timestamp()),
            ..Default::default()
        },
        validate: super::config::ValidateConfig { ratings: Some(PathBuf::from("ratings.jsonl")) },
        ..RunConfig::default()
    };
    let config_path = dir.join("run.toml");
    fs::write(&config_path, config.to_toml())?;
    Ok(SyntheticRun { config_path, articles: article_ids.len(), detections: detections.len(), kept_faces: kept.len() })
}

fn fixed_timestamp() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").expect("valid timestamp").with_timezone(&Utc)
}

fn year_date(year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, 6, 1).expect("valid date")
}

const FACES_PER_ARTICLE: usize = 10;

/// Writes a planted corpus as stage outputs (corpus store, annotations and
/// classified faces) under `dir`; the returned inputs point at them.
///
/// Text observations become articles in a non-image category; faces are
/// grouped into image-category articles, one image per face.
pub fn write_planted_inputs(dir: &Path, corpus: &SyntheticCorpus) -> Result<InputsConfig, PipelineError> {
    let store_root = dir.join("corpus");
    let store = CorpusStore::create(&store_root)?;
    let meta = ProviderMeta { provider_id: "planted".into(), model_version: "synthetic".into(), timestamp: fixed_timestamp() };
    let mut annotations = Vec::with_capacity(corpus.text.len());
    for t in &corpus.text {
        store.write_article(&ArticleRecord {
            article_id: t.article_id.clone(),
            url: format!("https://{}/synthetic/{}", t.venue.host(), t.article_id),
            venue: t.venue,
            category: CategoryLabel::World,
            publish_date: year_date(t.year),
            title: t.article_id.clone(),
            body: "synthetic".into(),
            image_refs: Vec::new(),
        })?;
        annotations.push(AnnotationRecord {
            article_id: t.article_id.clone(),
            emotion: t.emotion,
            sentiment: t.sentiment,
            topic: t.topic,
            race: t.race,
            race_confidence: None,
            vp: t.vp,
            provider_meta: meta.clone(),
        });
    }

    let mut groups: BTreeMap<(VenueId, CategoryLabel), Vec<usize>> = BTreeMap::new();
    for (j, f) in corpus.faces.iter().enumerate() {
        groups.entry((f.venue, f.category)).or_default().push(j);
    }
    let mut classified = Vec::with_capacity(corpus.faces.len());
    for ((venue, category), members) in &groups {
        for (a, chunk) in members.chunks(FACES_PER_ARTICLE).enumerate() {
            let article_id = format!("syn-img-{}-{}-{a:04}", venue.as_str(), category.as_str().to_ascii_lowercase());
            let mut refs = Vec::new();
            for &j in chunk {
                let f = &corpus.faces[j];
                let (w, h) = corpus.image_dims[j];
                let image_id = format!("img-{}", f.face_id);
                refs.push(ImageRef {
                    image_id: image_id.clone(),
                    source_url: format!("https://images.synthetic.test/{image_id}.png"),
                    width_px: Some(w),
                    height_px: Some(h),
                    bytes_path: format!("images/{image_id}"),
                    fetched: true,
                });
                let race7 = RaceLabel7::ALL.iter().position(|r| r.merge_to_six() == f.race).expect("every race has a source");
                let mut probs = vec![0.0; RaceLabel7::ALL.len()];
                probs[race7] = 1.0;
                classified.push(ClassifiedFace {
                    face_id: f.face_id.clone(),
                    image_id,
                    race: f.race,
                    confidence: 1.0,
                    probs,
                    gender: f.gender,
                    age: f.age,
                    bbox: BBox::new(0, 0, w / 4, h / 4),
                    image_width: Some(w),
                    image_height: Some(h),
                });
            }
            store.write_article(&ArticleRecord {
                article_id: article_id.clone(),
                url: format!("https://{}/synthetic/{article_id}", venue.host()),
                venue: *venue,
                category: *category,
                publish_date: year_date(2016),
                title: article_id.clone(),
                body: "synthetic".into(),
                image_refs: refs,
            })?;
        }
    }
    store.write_manifest()?;
    let ann_path = dir.join("annotations.jsonl");
    write_annotations(fs::File::create(&ann_path)?, &annotations)?;
    let cls_path = dir.join("classified.jsonl");
    files::write_jsonl(&cls_path, &classified)?;
    Ok(InputsConfig {
        corpus: Some(store_root),
        annotations: Some(ann_path),
        classified: Some(cls_path),
        ..InputsConfig::default()
    })
}
