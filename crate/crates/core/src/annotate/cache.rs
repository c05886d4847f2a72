//! Append-only cache of provider answers keyed by (article, task, provider).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedAnswer {
    pub article_id: String,
    pub task: Task,
    pub provider_id: String,
    pub model_version: String,
    pub timestamp: DateTime<Utc>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Verbatim provider reply.
    pub raw: String,
}

type Key = (String, Task, String);

/// In-memory index over a JSONL log. Only committed entries are visible.
#[derive(Default)]
pub struct AnnotationCache {
    entries: Mutex<HashMap<Key, CachedAnswer>>,
    log: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl AnnotationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a log file and replays it.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for (lineno, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CachedAnswer>(&line) {
                    Ok(a) => {
                        entries.entry((a.article_id.clone(), a.task, a.provider_id.clone())).or_insert(a);
                    }
                    // A torn final line from an interrupted writer is ignored.
                    Err(e) => tracing::warn!(line = lineno + 1, error = %e, "skipping unreadable cache entry"),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: Mutex::new(entries),
            log: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, article_id: &str, task: Task, provider_id: &str) -> Option<CachedAnswer> {
        let key = (article_id.to_string(), task, provider_id.to_string());
        self.entries.lock().expect("cache lock").get(&key).cloned()
    }

    /// Records an answer; the first answer for a key wins.
    pub fn insert(&self, answer: CachedAnswer) -> std::io::Result<CachedAnswer> {
        let key = (answer.article_id.clone(), answer.task, answer.provider_id.clone());
        let mut entries = self.entries.lock().expect("cache lock");
        if let Some(existing) = entries.get(&key) {
            return Ok(existing.clone());
        }
        if let Some(log) = &self.log {
            let mut w = log.lock().expect("log lock");
            serde_json::to_writer(&mut *w, &answer)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        entries.insert(key, answer.clone());
        Ok(answer)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
