//! Corpus ingestion from web-archive snapshots of venue section pages.

pub mod canon;
mod fetch;
mod parse;
mod snapshot;
pub mod store;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fetch::{
    FetchedDocument, Fetcher, FixtureTransport, HttpResponse, HttpTransport, RateLimiter, RetryPolicy, Transport,
    TransportError,
};
pub use parse::{
    extract_images, layout_fingerprint, parse_article, parse_category_page, ImageDenyList, ParsedArticle,
};
pub use snapshot::{
    archive_url, build_snapshot_urls, corpus_end, corpus_start, normalize_category, section_url, SnapshotRef,
    DEFAULT_ARCHIVE_HOST,
};
pub use store::{CorpusManifest, CorpusStore, ManifestEntry};

use crate::types::{CategoryLabel, VenueId};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("snapshot unavailable: {url} (last status {status:?})")]
    SnapshotUnavailable { url: String, status: Option<u16> },
    #[error("unrecognised {venue} page layout (fingerprint {fingerprint})")]
    ParseFailure { venue: VenueId, fingerprint: String },
    #[error("section `{section}` of {venue} has no category mapping")]
    UnmappedCategory { venue: VenueId, section: String },
    #[error("corpus store: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus record: {0}")]
    Json(#[from] serde_json::Error),
}

/// An image embedded in one or more articles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    pub source_url: String,
    pub width_px: Option<u32>,
    pub height_px: Option<u32>,
    /// Storage key relative to the corpus root.
    pub bytes_path: String,
    /// False when the download failed; such images are excluded from area statistics.
    pub fetched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub url: String,
    pub venue: VenueId,
    pub category: CategoryLabel,
    pub publish_date: NaiveDate,
    pub title: String,
    pub body: String,
    pub image_refs: Vec<ImageRef>,
}

/// Keeps the first record per `article_id`; returns survivors and the drop count.
pub fn dedup_articles<I: IntoIterator<Item = ArticleRecord>>(records: I) -> (Vec<ArticleRecord>, usize) {
    let mut seen = HashSet::new();
    let mut dropped = 0;
    let mut kept = Vec::new();
    for r in records {
        if seen.insert(r.article_id.clone()) {
            kept.push(r);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

/// Reads pixel dimensions from encoded image bytes.
pub fn image_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    let size = imagesize::blob_size(bytes).ok()?;
    let (w, h) = (u32::try_from(size.width).ok()?, u32::try_from(size.height).ok()?);
    (w > 0 && h > 0).then_some((w, h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub venue: VenueId,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub sections: Vec<String>,
    pub out: PathBuf,
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    #[serde(default = "default_archive_host")]
    pub archive_host: String,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_stripped")]
    pub stripped_params: Vec<String>,
}

fn default_archive_host() -> String {
    DEFAULT_ARCHIVE_HOST.to_string()
}

fn default_parallelism() -> usize {
    4
}

fn default_stripped() -> Vec<String> {
    canon::DEFAULT_STRIPPED_PARAMS.iter().map(|s| s.to_string()).collect()
}

impl IngestConfig {
    pub fn new(venue: VenueId, from: NaiveDate, to: NaiveDate, sections: Vec<String>, out: PathBuf) -> Self {
        Self {
            venue,
            from,
            to,
            sections,
            out,
            fixtures: None,
            archive_host: default_archive_host(),
            retry: RetryPolicy::default(),
            parallelism: default_parallelism(),
            stripped_params: default_stripped(),
        }
    }

    /// Fixture transport when `fixtures` is set, live HTTP otherwise.
    pub fn transport(&self) -> Result<Arc<dyn Transport>, IngestError> {
        Ok(match &self.fixtures {
            Some(dir) => Arc::new(FixtureTransport::open(dir)?),
            None => Arc::new(HttpTransport::new(std::time::Duration::from_secs(30))?),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub snapshots: usize,
    pub snapshot_failures: usize,
    pub parse_failures: Vec<String>,
    pub links: usize,
    pub duplicates_dropped: usize,
    pub article_failures: usize,
    pub out_of_range: usize,
    pub empty_body: usize,
    pub articles_written: usize,
    pub images: usize,
    pub images_unfetched: usize,
}

/// Crawls the configured snapshots into the corpus store at `config.out`.
///
/// Fetches run concurrently; every decision (dedup, ordering, writes) is made
/// on a single thread in snapshot order, so output is independent of
/// network timing.
pub fn ingest(config: &IngestConfig, fetcher: &Fetcher) -> Result<IngestReport, IngestError> {
    let params: Vec<&str> = config.stripped_params.iter().map(String::as_str).collect();
    let store = CorpusStore::create(&config.out)?;
    let deny = ImageDenyList::bundled(config.venue);
    let snapshots = build_snapshot_urls(config.venue, config.from, config.to, &config.sections, &config.archive_host)?;
    let mut report = IngestReport { snapshots: snapshots.len(), ..Default::default() };

    let pages = fetcher.fetch_many(&snapshots.iter().map(|s| s.archive_url.clone()).collect::<Vec<_>>(), config.parallelism);
    let mut known: HashSet<String> = store.article_ids()?;
    let mut queue: Vec<(String, String, CategoryLabel, NaiveDate)> = Vec::new();
    for (snap, page) in snapshots.iter().zip(pages) {
        let page = match page {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(url = %snap.archive_url, error = %e, "snapshot skipped");
                report.snapshot_failures += 1;
                continue;
            }
        };
        let category = normalize_category(&snap.section, snap.venue)?;
        let links = match parse_category_page(&String::from_utf8_lossy(&page.body), snap.venue, &params) {
            Ok(l) => l,
            Err(IngestError::ParseFailure { fingerprint, .. }) => {
                tracing::warn!(url = %snap.archive_url, %fingerprint, "unrecognised layout");
                report.parse_failures.push(format!("{} {fingerprint}", snap.archive_url));
                continue;
            }
            Err(e) => return Err(e),
        };
        report.links += links.len();
        for link in links {
            let id = canon::stable_hash(&link);
            if known.insert(id.clone()) {
                queue.push((id, link, category, snap.date));
            } else {
                report.duplicates_dropped += 1;
            }
        }
    }

    let article_urls: Vec<String> =
        queue.iter().map(|(_, link, _, date)| archive_url(&config.archive_host, *date, link)).collect();
    let article_pages = fetcher.fetch_many(&article_urls, config.parallelism);

    let mut images: BTreeMap<String, ImageRef> = BTreeMap::new();
    for ((id, link, category, snap_date), page) in queue.into_iter().zip(article_pages) {
        let page = match page {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(%link, error = %e, "article skipped");
                report.article_failures += 1;
                continue;
            }
        };
        let html = String::from_utf8_lossy(&page.body);
        let parsed = parse_article(&html, &link, config.venue);
        let date = parsed.publish_date.unwrap_or(snap_date);
        if date < config.from || date > config.to {
            report.out_of_range += 1;
            continue;
        }
        if parsed.body.trim().is_empty() {
            report.empty_body += 1;
            continue;
        }
        let mut refs = extract_images(&html, &link, &deny, &params);
        for r in &mut refs {
            if let Some(done) = images.get(&r.image_id) {
                *r = done.clone();
                continue;
            }
            match fetcher.fetch(&archive_url(&config.archive_host, snap_date, &r.source_url)) {
                Ok(doc) => {
                    if r.width_px.is_none() || r.height_px.is_none() {
                        if let Some((w, h)) = image_dimensions(&doc.body) {
                            r.width_px = Some(w);
                            r.height_px = Some(h);
                        }
                    }
                    store.write_image(&r.image_id, &doc.body)?;
                    r.fetched = true;
                }
                Err(e) => {
                    tracing::warn!(url = %r.source_url, error = %e, "image unfetched");
                    report.images_unfetched += 1;
                }
            }
            images.insert(r.image_id.clone(), r.clone());
        }
        let record = ArticleRecord {
            article_id: id,
            url: link,
            venue: config.venue,
            category,
            publish_date: date,
            title: parsed.title,
            body: parsed.body,
            image_refs: refs,
        };
        store.write_article(&record)?;
        report.articles_written += 1;
    }
    report.images = images.len();
    store.write_manifest()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(url: &str, title: &str) -> ArticleRecord {
        ArticleRecord {
            article_id: canon::article_id(url, canon::DEFAULT_STRIPPED_PARAMS).unwrap(),
            url: url.into(),
            venue: VenueId::Nyt,
            category: CategoryLabel::Sport,
            publish_date: NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
            title: title.into(),
            body: "b".into(),
            image_refs: vec![],
        }
    }

    #[test]
    fn dedup_examples() {
        let (kept, dropped) = dedup_articles(vec![record("https://a.com/x", "t"), record("https://a.com/x", "t")]);
        assert_eq!((kept.len(), dropped), (1, 1));
        let (kept, _) = dedup_articles(vec![record("https://a.com/x", "t"), record("https://a.com/x?utm_source=x", "t")]);
        assert_eq!(kept.len(), 1);
        let (kept, _) = dedup_articles(vec![record("https://a.com/x", "same"), record("https://a.com/y", "same")]);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn png_dimensions_from_bytes() {
        // Minimal PNG header with a 3x2 IHDR chunk.
        let mut png = vec![0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0, 0, 0, 13, b'I', b'H', b'D', b'R'];
        png.extend_from_slice(&3u32.to_be_bytes());
        png.extend_from_slice(&2u32.to_be_bytes());
        png.extend_from_slice(&[8, 2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(image_dimensions(&png), Some((3, 2)));
        assert_eq!(image_dimensions(b"not an image"), None);
    }
}
