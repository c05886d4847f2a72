//! Reproducible runs: stages that talk only through files, a run lock,
//! staged atomic outputs and a manifest of hashes and counts.

pub mod analysis;
mod config;
pub mod files;
pub mod report;
mod stages;
pub mod synthetic;
pub mod validation;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    AnnotateConfig, CorpusConfig, FacesConfig, InputsConfig, ProviderConfig, RunConfig, SourceConfig, TrainConfig,
    ValidateConfig,
};
pub use stages::{
    annotate_articles, build_provider, classify_faces, load_stats_inputs, stats_tables, train_space, EmbeddingSpace,
    StatsInputs,
};

use crate::annotate::AnnotateError;
use crate::faces::FaceError;
use crate::ingest::IngestError;
use crate::svm::SvmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Faces,
    Train,
    Classify,
    Annotate,
    Validate,
    Stats,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Faces,
        Stage::Train,
        Stage::Classify,
        Stage::Annotate,
        Stage::Validate,
        Stage::Stats,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Faces => "faces",
            Stage::Train => "train",
            Stage::Classify => "classify",
            Stage::Annotate => "annotate",
            Stage::Validate => "validate",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }

    /// Directory under the run root that the stage owns.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Ingest => "corpus",
            Stage::Faces => "faces",
            Stage::Train => "models",
            Stage::Classify => "classified",
            Stage::Annotate => "annotations",
            Stage::Validate => "validation",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.iter().copied().find(|st| st.as_str() == s.trim()).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage} cannot run: missing {missing}")]
    StageDependency { stage: Stage, missing: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("output directory {} is locked by another run", .0.display())]
    Locked(PathBuf),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Faces(#[from] FaceError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit status for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::StageDependency { .. } => 3,
            PipelineError::Validation(_) => 2,
            PipelineError::Ingest(IngestError::Config(_)) => 2,
            _ => 1,
        }
    }
}

/// Exclusive ownership of a run directory for the lifetime of the guard.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(out_dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(out_dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub counts: BTreeMap<String, u64>,
    /// Output file → sha256, relative to the run root.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    /// External input → sha256 (directories hash their file list and contents).
    pub input_hashes: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Every output hash of the run, keyed by path.
    pub fn output_hashes(&self) -> BTreeMap<String, String> {
        self.stages.iter().flat_map(|s| s.outputs.clone()).collect()
    }
}

/// Paths of one run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir())
    }

    pub fn faces(&self) -> PathBuf {
        self.dir(Stage::Faces).join("faces.jsonl")
    }

    pub fn model_a(&self) -> PathBuf {
        self.dir(Stage::Train).join("model_a.svm")
    }

    pub fn model_b(&self) -> PathBuf {
        self.dir(Stage::Train).join("model_b.svm")
    }

    pub fn classified(&self) -> PathBuf {
        self.dir(Stage::Classify).join("faces.jsonl")
    }

    pub fn annotations(&self) -> PathBuf {
        self.dir(Stage::Annotate).join("annotations.jsonl")
    }

    pub fn cache(&self) -> PathBuf {
        self.root.join("cache").join("annotations.jsonl")
    }

    pub fn staging(&self, stage: Stage) -> PathBuf {
        self.root.join(".staging").join(stage.dir())
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("run_manifest.json")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("run_config.json")
    }
}

/// Runs `stages` (in canonical order, whatever order they are given in)
/// and writes the manifest. Each stage fills a staging directory that is
/// renamed into place only on success.
pub fn run_pipeline(config: &RunConfig, stages: &[Stage]) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let started = Instant::now();
    let layout = RunLayout::new(&config.out_dir);
    let _lock = RunLock::acquire(&layout.root)?;
    let mut ordered: Vec<Stage> = stages.to_vec();
    ordered.sort();
    ordered.dedup();

    files::write_json(&layout.config(), config)?;
    let config_hash = files::sha256_bytes(&serde_json::to_vec(config).expect("config serializes"));
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        input_hashes: stages::input_hashes(config, &ordered)?,
        stages: Vec::new(),
        wall_time_secs: 0.0,
    };
    let _ = fs::remove_dir_all(layout.root.join(".staging"));
    let mut done = Vec::new();
    for stage in ordered {
        tracing::info!(%stage, "stage start");
        let record = stages::run_stage(stage, config, &layout, &done)?;
        done.push(stage);
        tracing::info!(%stage, counts = ?record.counts, "stage done");
        manifest.stages.push(record);
    }
    let _ = fs::remove_dir_all(layout.root.join(".staging"));
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    files::write_json(&layout.manifest(), &manifest)?;
    Ok(manifest)
}
