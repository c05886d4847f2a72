use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use url::Url;

use super::IngestError;
use crate::types::{CategoryLabel, VenueId};

pub const DEFAULT_ARCHIVE_HOST: &str = "https://web.archive.org";

/// One dated capture of a venue section page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub venue: VenueId,
    pub section: String,
    pub date: NaiveDate,
    pub source_url: String,
    pub archive_url: String,
}

pub fn corpus_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date")
}

pub fn corpus_end() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 12, 31).expect("valid date")
}

/// Live URL of a section landing page. Absolute URLs pass through unchanged.
pub fn section_url(venue: VenueId, section: &str) -> Result<String, IngestError> {
    let section = section.trim();
    if section.contains("://") {
        let url = Url::parse(section).map_err(|e| IngestError::Config(format!("bad section URL `{section}`: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
            return Err(IngestError::Config(format!("bad section URL `{section}`")));
        }
        return Ok(url.to_string());
    }
    let valid = !section.is_empty()
        && section.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '/'))
        && !section.starts_with('/');
    if !valid {
        return Err(IngestError::Config(format!("malformed section name `{section}`")));
    }
    let lower = section.to_ascii_lowercase();
    Ok(match venue {
        VenueId::Nyt => format!("https://{}/section/{lower}", venue.host()),
        VenueId::Fox => format!("https://{}/{lower}", venue.host()),
    })
}

/// Archive URL of `source_url` as captured on `date`.
pub fn archive_url(archive_host: &str, date: NaiveDate, source_url: &str) -> String {
    format!("{}/web/{}/{}", archive_host.trim_end_matches('/'), date.format("%Y%m%d"), source_url)
}

/// One snapshot per (day, section) over the inclusive date range, days outermost.
pub fn build_snapshot_urls(
    venue: VenueId,
    from: NaiveDate,
    to: NaiveDate,
    sections: &[String],
    archive_host: &str,
) -> Result<Vec<SnapshotRef>, IngestError> {
    if sections.is_empty() {
        return Err(IngestError::Config("no sections configured".into()));
    }
    let urls: Vec<(String, String)> =
        sections.iter().map(|s| Ok((s.clone(), section_url(venue, s)?))).collect::<Result<_, IngestError>>()?;
    if from > to {
        return Ok(Vec::new());
    }
    if from < corpus_start() || to > corpus_end() {
        return Err(IngestError::Config(format!(
            "date range {from}..{to} outside {}..{}",
            corpus_start(),
            corpus_end()
        )));
    }
    let mut out = Vec::new();
    for date in from.iter_days().take_while(|d| *d <= to) {
        for (section, source_url) in &urls {
            out.push(SnapshotRef {
                venue,
                section: section.clone(),
                date,
                archive_url: archive_url(archive_host, date, source_url),
                source_url: source_url.clone(),
            });
        }
    }
    Ok(out)
}

/// Maps a raw venue section onto the canonical category set.
pub fn normalize_category(raw_section: &str, venue: VenueId) -> Result<CategoryLabel, IngestError> {
    let key = raw_section.trim().trim_matches('/').to_ascii_lowercase();
    let key = key.rsplit('/').next().unwrap_or(&key).to_string();
    let shared = match key.as_str() {
        "lifestyle" => Some(CategoryLabel::Art),
        "travel" => Some(CategoryLabel::Travel),
        "opinion" => Some(CategoryLabel::Opinion),
        "politics" => Some(CategoryLabel::Politics),
        "science" => Some(CategoryLabel::Science),
        "technology" | "tech" => Some(CategoryLabel::Technology),
        "us" | "u.s." => Some(CategoryLabel::US),
        "world" => Some(CategoryLabel::World),
        "food" => Some(CategoryLabel::Food),
        "sport" | "sports" => Some(CategoryLabel::Sport),
        _ => None,
    };
    let venue_specific = match (venue, key.as_str()) {
        (VenueId::Nyt, "arts") => Some(CategoryLabel::Art),
        (VenueId::Fox, "entertainment") => Some(CategoryLabel::Art),
        (VenueId::Fox, "food-drink") => Some(CategoryLabel::Food),
        _ => None,
    };
    shared.or(venue_specific).ok_or_else(|| IngestError::UnmappedCategory { venue, section: raw_section.to_string() })
}
