//! Run configuration: one TOML file, every field overridable from the command line.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::analysis::StatsOptions;
use super::PipelineError;
use crate::annotate::{HttpProviderConfig, Task};
use crate::faces::DEFAULT_MIN_CONFIDENCE;
use crate::ingest::DEFAULT_ARCHIVE_HOST;
use crate::svm::MergeMode;
use crate::types::VenueId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub merge_mode: MergeMode,
    pub corpus: CorpusConfig,
    pub faces: FacesConfig,
    pub train: TrainConfig,
    pub annotate: AnnotateConfig,
    pub validate: ValidateConfig,
    pub stats: StatsOptions,
    /// Pre-existing artifacts used when the producing stage is not part of the run.
    pub inputs: InputsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("run"),
            seed: 0,
            merge_mode: MergeMode::default(),
            corpus: CorpusConfig::default(),
            faces: FacesConfig::default(),
            train: TrainConfig::default(),
            annotate: AnnotateConfig::default(),
            validate: ValidateConfig::default(),
            stats: StatsOptions::default(),
            inputs: InputsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub venue: VenueId,
    pub sections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub sources: Vec<SourceConfig>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    /// Serve the crawl from a fixture directory instead of the network.
    pub fixtures: Option<PathBuf>,
    pub archive_host: String,
    /// Requests per second per host.
    pub rate: f64,
    pub parallelism: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            from: None,
            to: None,
            fixtures: None,
            archive_host: DEFAULT_ARCHIVE_HOST.to_string(),
            rate: 1.0,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacesConfig {
    /// Extractor output (manifest path; the blob sits beside it).
    pub detections: Option<PathBuf>,
    pub min_confidence: f64,
}

impl Default for FacesConfig {
    fn default() -> Self {
        Self { detections: None, min_confidence: DEFAULT_MIN_CONFIDENCE }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub embeddings: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Grid search runs when either is missing.
    pub c: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    Stub { seed: u64 },
    Http(HttpProviderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub provider: ProviderConfig,
    pub tasks: Vec<Task>,
    pub chunk_limit: Option<usize>,
    pub min_race_conf: Option<f64>,
    /// Maximum concurrent provider calls.
    pub budget: usize,
    /// Timestamp stamped on fresh answers; the wall clock when unset.
    pub fixed_timestamp: Option<DateTime<Utc>>,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self {
            provider: ProviderConfig::Stub { seed: 0 },
            tasks: Task::ALL.to_vec(),
            chunk_limit: None,
            min_race_conf: None,
            budget: 4,
            fixed_timestamp: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub ratings: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    pub corpus: Option<PathBuf>,
    pub faces: Option<PathBuf>,
    pub model_a: Option<PathBuf>,
    pub model_b: Option<PathBuf>,
    pub classified: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Validation(format!("config: {e}")))
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
        rebase(base, &mut self.corpus.fixtures);
        rebase(base, &mut self.faces.detections);
        rebase(base, &mut self.train.embeddings);
        rebase(base, &mut self.train.labels);
        rebase(base, &mut self.validate.ratings);
        let i = &mut self.inputs;
        for p in [&mut i.corpus, &mut i.faces, &mut i.model_a, &mut i.model_b, &mut i.classified, &mut i.annotations] {
            rebase(base, p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Validation(m.to_string()));
        if !(0.0..=1.0).contains(&self.faces.min_confidence) {
            return bad("faces.min_confidence must lie in [0, 1]");
        }
        if self.annotate.budget == 0 {
            return bad("annotate.budget must be at least 1");
        }
        if let Some(c) = self.annotate.min_race_conf {
            if !(0.0..=1.0).contains(&c) {
                return bad("annotate.min_race_conf must lie in [0, 1]");
            }
        }
        if self.train.c.is_some_and(|c| !(c > 0.0)) || self.train.gamma.is_some_and(|g| !(g > 0.0)) {
            return bad("train.c and train.gamma must be positive");
        }
        if self.corpus.rate < 0.0 || !self.corpus.rate.is_finite() {
            return bad("corpus.rate must be a non-negative number");
        }
        Ok(())
    }
}
