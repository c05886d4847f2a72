//! Directory-backed corpus store.
//!
//! Layout: `corpus/{venue}/{year}/{article_id}.json`, `images/{image_id}`
//! and `manifest.json`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::{ArticleRecord, IngestError};
use crate::types::VenueId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub article_id: String,
    pub venue: VenueId,
    pub category: String,
    pub year: i32,
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub records: Vec<ManifestEntry>,
    /// venue → category → year → article count.
    pub counts: BTreeMap<String, BTreeMap<String, BTreeMap<i32, u64>>>,
    pub images: usize,
}

pub struct CorpusStore {
    root: PathBuf,
}

/// Writes through a temporary sibling and renames, so readers never see torn files.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("part")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl CorpusStore {
    pub fn create(root: &Path) -> Result<Self, IngestError> {
        fs::create_dir_all(root.join("corpus"))?;
        fs::create_dir_all(root.join("images"))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> Result<Self, IngestError> {
        if !root.join("corpus").is_dir() {
            return Err(IngestError::Config(format!("{} is not a corpus directory", root.display())));
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn article_rel_path(record: &ArticleRecord) -> String {
        format!("corpus/{}/{}/{}.json", record.venue, record.publish_date.year(), record.article_id)
    }

    pub fn write_article(&self, record: &ArticleRecord) -> Result<(), IngestError> {
        let path = self.root.join(Self::article_rel_path(record));
        write_atomic(&path, &serde_json::to_vec_pretty(record)?)?;
        Ok(())
    }

    pub fn write_image(&self, image_id: &str, bytes: &[u8]) -> Result<(), IngestError> {
        write_atomic(&self.root.join("images").join(image_id), bytes)?;
        Ok(())
    }

    fn article_paths(&self) -> Result<Vec<PathBuf>, IngestError> {
        let mut paths = Vec::new();
        let corpus = self.root.join("corpus");
        for venue in sorted_dir(&corpus)? {
            if !venue.is_dir() {
                continue;
            }
            for year in sorted_dir(&venue)? {
                if !year.is_dir() {
                    continue;
                }
                paths.extend(sorted_dir(&year)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")));
            }
        }
        Ok(paths)
    }

    pub fn article_ids(&self) -> Result<HashSet<String>, IngestError> {
        Ok(self
            .article_paths()?
            .iter()
            .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
            .collect())
    }

    /// Every stored article, ordered by venue, year and id.
    pub fn load_articles(&self) -> Result<Vec<ArticleRecord>, IngestError> {
        self.article_paths()?
            .iter()
            .map(|p| Ok(serde_json::from_slice(&fs::read(p)?)?))
            .collect()
    }

    pub fn write_manifest(&self) -> Result<CorpusManifest, IngestError> {
        let articles = self.load_articles()?;
        let mut manifest = CorpusManifest::default();
        let mut images = HashSet::new();
        for a in &articles {
            manifest.records.push(ManifestEntry {
                article_id: a.article_id.clone(),
                venue: a.venue,
                category: a.category.to_string(),
                year: a.publish_date.year(),
                path: Self::article_rel_path(a),
            });
            *manifest
                .counts
                .entry(a.venue.to_string())
                .or_default()
                .entry(a.category.to_string())
                .or_default()
                .entry(a.publish_date.year())
                .or_default() += 1;
            images.extend(a.image_refs.iter().map(|i| i.image_id.clone()));
        }
        manifest.images = images.len();
        write_atomic(&self.root.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    Ok(entries)
}
