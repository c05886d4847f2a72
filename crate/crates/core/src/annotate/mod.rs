//! Text annotation: label taxonomies, the victim/perpetrator prompt,
//! provider orchestration and the annotation store.

mod cache;
mod chunk;
mod prompt;
mod provider;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{AnnotationCache, CachedAnswer};
pub use chunk::{aggregate_labels, text_chunk};
pub use prompt::{build_vp_prompt, parse_vp_response, serialize_vp, ARTICLE_HEADER};
pub use provider::{
    HttpProvider, HttpProviderConfig, Provider, ProviderError, ProviderRequest, ProviderResponse, StubProvider,
};

pub use crate::labels::{EmotionLabel, PerpetratorLabel, RaceMention, SentimentLabel, TopicLabel, VictimLabel};
use crate::ingest::ArticleRecord;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("malformed annotation ({reason}): {raw:?}")]
    MalformedAnnotation { reason: String, raw: String },
    #[error("annotation unavailable: {0}")]
    AnnotationUnavailable(#[from] ProviderError),
    #[error("annotation cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Emotion,
    Sentiment,
    Topic,
    Race,
    Vp,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Emotion, Task::Sentiment, Task::Topic, Task::Race, Task::Vp];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Emotion => "emotion",
            Task::Sentiment => "sentiment",
            Task::Topic => "topic",
            Task::Race => "race",
            Task::Vp => "vp",
        }
    }

    /// Closed label set sent to the provider.
    pub fn label_set(self) -> Vec<String> {
        fn strs<T: fmt::Display>(all: &[T]) -> Vec<String> {
            all.iter().map(ToString::to_string).collect()
        }
        match self {
            Task::Emotion => strs(EmotionLabel::ALL),
            Task::Sentiment => strs(SentimentLabel::ALL),
            Task::Topic => strs(TopicLabel::ALL),
            Task::Race => strs(RaceMention::ALL),
            Task::Vp => strs(VictimLabel::ALL),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VictimPerpRecord {
    pub victim: VictimLabel,
    pub perpetrator: PerpetratorLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderMeta {
    pub provider_id: String,
    pub model_version: String,
    pub timestamp: DateTime<Utc>,
}

/// Per-article text labels. Fields are absent when their task was not run
/// or failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub article_id: String,
    pub emotion: Option<EmotionLabel>,
    pub sentiment: Option<SentimentLabel>,
    pub topic: Option<TopicLabel>,
    pub race: Option<RaceMention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub race_confidence: Option<f64>,
    pub vp: Option<VictimPerpRecord>,
    pub provider_meta: ProviderMeta,
}

/// An annotation plus the tasks that could not be completed.
#[derive(Debug)]
pub struct Annotation {
    pub record: AnnotationRecord,
    pub failures: Vec<(Task, AnnotateError)>,
}

/// Orchestrates one provider over a set of tasks with caching.
pub struct Annotator<'a> {
    pub provider: &'a dyn Provider,
    pub cache: &'a AnnotationCache,
    /// Word limit per provider call; longer bodies are chunked.
    pub chunk_limit: Option<usize>,
    /// Drop race mentions below this provider confidence.
    pub min_race_conf: Option<f64>,
}

fn parse_closed<T: FromStr>(raw: &str) -> Result<T, AnnotateError> {
    raw.trim().parse().map_err(|_| AnnotateError::MalformedAnnotation {
        reason: "label outside closed set".into(),
        raw: raw.to_string(),
    })
}

impl<'a> Annotator<'a> {
    pub fn new(provider: &'a dyn Provider, cache: &'a AnnotationCache) -> Self {
        Self { provider, cache, chunk_limit: None, min_race_conf: None }
    }

    fn ask(&self, article_id: &str, task: Task, text: &str, now: DateTime<Utc>) -> Result<CachedAnswer, AnnotateError> {
        if let Some(hit) = self.cache.get(article_id, task, self.provider.id()) {
            return Ok(hit);
        }
        let (text, label_set) = match task {
            Task::Vp => (build_vp_prompt(text), Vec::new()),
            _ => (text.to_string(), task.label_set()),
        };
        let answer = match (task, self.chunk_limit) {
            (Task::Vp, _) | (_, None) => {
                self.provider.complete(&ProviderRequest { task, text, label_set })?
            }
            (_, Some(limit)) => {
                let mut answers = Vec::new();
                for chunk in text_chunk(&text, limit) {
                    let req = ProviderRequest { task, text: chunk, label_set: label_set.clone() };
                    answers.push(self.provider.complete(&req)?);
                }
                let labels: Vec<String> = answers.iter().map(|a| a.label.trim().to_string()).collect();
                let winner = aggregate_labels(&labels).unwrap_or_default();
                let confidence = answers.iter().find(|a| a.label.trim() == winner).and_then(|a| a.confidence);
                let raw = serde_json::to_string(&answers.iter().map(|a| &a.raw).collect::<Vec<_>>())
                    .expect("strings serialize");
                ProviderResponse { label: winner, confidence, raw }
            }
        };
        let entry = CachedAnswer {
            article_id: article_id.to_string(),
            task,
            provider_id: self.provider.id().to_string(),
            model_version: self.provider.model_version().to_string(),
            timestamp: now,
            label: answer.label,
            confidence: answer.confidence,
            raw: answer.raw,
        };
        Ok(self.cache.insert(entry)?)
    }

    /// Runs `tasks` on one article. Each task fails independently.
    pub fn annotate(&self, article: &ArticleRecord, tasks: &BTreeSet<Task>, now: DateTime<Utc>) -> Annotation {
        let mut record = AnnotationRecord {
            article_id: article.article_id.clone(),
            emotion: None,
            sentiment: None,
            topic: None,
            race: None,
            race_confidence: None,
            vp: None,
            provider_meta: ProviderMeta {
                provider_id: self.provider.id().to_string(),
                model_version: self.provider.model_version().to_string(),
                timestamp: now,
            },
        };
        let mut failures = Vec::new();
        let mut earliest: Option<DateTime<Utc>> = None;
        for &task in tasks {
            let outcome = self.ask(&article.article_id, task, &article.body, now).and_then(|a| {
                earliest = Some(earliest.map_or(a.timestamp, |t| t.min(a.timestamp)));
                match task {
                    Task::Emotion => record.emotion = Some(parse_closed(&a.label)?),
                    Task::Sentiment => record.sentiment = Some(parse_closed(&a.label)?),
                    Task::Topic => record.topic = Some(parse_closed(&a.label)?),
                    Task::Race => {
                        let race: RaceMention = parse_closed(&a.label)?;
                        let keep = match (self.min_race_conf, a.confidence) {
                            (Some(min), Some(c)) => c >= min,
                            _ => true,
                        };
                        if keep {
                            record.race = Some(race);
                            record.race_confidence = a.confidence;
                        }
                    }
                    Task::Vp => record.vp = Some(parse_vp_response(&a.raw)?),
                }
                Ok(())
            });
            if let Err(e) = outcome {
                failures.push((task, e));
            }
        }
        // Cached answers keep their original timestamp so reruns are stable.
        if let Some(t) = earliest {
            record.provider_meta.timestamp = t;
        }
        Annotation { record, failures }
    }

    /// Annotates many articles with at most `budget` concurrent provider calls.
    /// Output order follows input order.
    pub fn annotate_all(
        &self,
        articles: &[ArticleRecord],
        tasks: &BTreeSet<Task>,
        now: DateTime<Utc>,
        budget: usize,
    ) -> Vec<Annotation> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(budget.max(1)).build().expect("thread pool");
        pool.install(|| articles.par_iter().map(|a| self.annotate(a, tasks, now)).collect())
    }
}

/// Keeps records whose emotion is set and not `Neutral`.
pub fn filter_non_neutral(records: &[AnnotationRecord]) -> Vec<AnnotationRecord> {
    records
        .iter()
        .filter(|r| matches!(r.emotion, Some(e) if e != EmotionLabel::Neutral))
        .cloned()
        .collect()
}

/// Appends records to a JSONL annotation store.
pub fn write_annotations<W: Write>(mut w: W, records: &[AnnotationRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_annotations(path: &Path) -> std::io::Result<Vec<AnnotationRecord>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
