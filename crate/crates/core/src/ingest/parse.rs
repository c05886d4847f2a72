//! Venue-specific HTML parsing for section pages and articles.

use std::collections::HashSet;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use super::canon::{canonical_url, stable_hash, strip_archive_prefix};
use super::{ImageRef, IngestError};
use crate::types::VenueId;

fn sel(s: &str) -> Selector {
    Selector::parse(s).unwrap_or_else(|e| panic!("static selector `{s}`: {e:?}"))
}

/// Containers that identify a recognised section-page layout.
fn layout_markers(venue: VenueId) -> &'static [&'static str] {
    match venue {
        VenueId::Nyt => &["#stream-panel", "#collection-highlights-container", "#latest-panel", "div.story-menu"],
        VenueId::Fox => &["div.collection-article-list", "section.collection-article-list", "div.content.article-list", "ul.article-list"],
    }
}

static NYT_ARTICLE_PATH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^/(\d{4})/(\d{2})/(\d{2})/[a-z0-9\-/]+").expect("static regex"));

const FOX_NON_ARTICLE_ROOTS: &[&str] = &["video", "category", "person", "shows", "about", "apps-products", "newsletters"];

fn is_article_url(canonical: &str, venue: VenueId) -> bool {
    let Ok(url) = Url::parse(canonical) else { return false };
    let host = url.host_str().unwrap_or_default();
    match venue {
        VenueId::Nyt => host.ends_with("nytimes.com") && NYT_ARTICLE_PATH.is_match(url.path()),
        VenueId::Fox => {
            let segments: Vec<&str> = url.path().split('/').filter(|s| !s.is_empty()).collect();
            host.ends_with("foxnews.com") && segments.len() >= 2 && !FOX_NON_ARTICLE_ROOTS.contains(&segments[0])
        }
    }
}

/// Short digest of the element structure, used to triage unknown layouts.
pub fn layout_fingerprint(doc: &Html) -> String {
    let mut h = Sha256::new();
    for node in doc.root_element().descendants().filter_map(ElementRef::wrap).take(256) {
        let el = node.value();
        h.update(el.name().as_bytes());
        let mut classes: Vec<&str> = el.classes().collect();
        classes.sort_unstable();
        for c in classes {
            h.update(b".");
            h.update(c.as_bytes());
        }
        h.update(b"|");
    }
    hex::encode(&h.finalize()[..6])
}

fn is_blank(doc: &Html) -> bool {
    let body = sel("body");
    match doc.select(&body).next() {
        Some(b) => b.children().filter_map(ElementRef::wrap).next().is_none() && b.text().all(|t| t.trim().is_empty()),
        None => true,
    }
}

fn resolve(href: &str, base: &Url) -> Option<String> {
    let href = href.trim();
    if href.is_empty() || href.starts_with('#') || href.starts_with("javascript:") || href.starts_with("data:") {
        return None;
    }
    let stripped = strip_archive_prefix(href);
    if stripped.len() != href.len() {
        return Some(stripped.to_string());
    }
    base.join(href).ok().map(|u| strip_archive_prefix(u.as_str()).to_string())
}

/// Canonical article URLs linked from a section landing page, in page order,
/// each appearing once.
pub fn parse_category_page(html: &str, venue: VenueId, stripped_params: &[&str]) -> Result<Vec<String>, IngestError> {
    let doc = Html::parse_document(html);
    if is_blank(&doc) {
        return Ok(Vec::new());
    }
    let containers: Vec<ElementRef> =
        layout_markers(venue).iter().flat_map(|m| doc.select(&sel(m)).collect::<Vec<_>>()).collect();
    if containers.is_empty() {
        return Err(IngestError::ParseFailure { venue, fingerprint: layout_fingerprint(&doc) });
    }
    let base = Url::parse(&format!("https://{}/", venue.host())).expect("venue host is valid");
    let anchor = sel("a[href]");
    let mut seen_nodes = HashSet::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    // Walk in document order so nested or repeated containers do not reorder links.
    let mut anchors: Vec<ElementRef> = containers
        .iter()
        .flat_map(|c| c.select(&anchor))
        .filter(|a| seen_nodes.insert(a.id()))
        .collect();
    let order: Vec<_> = doc.root_element().descendants().map(|n| n.id()).collect();
    let position: std::collections::HashMap<_, _> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    anchors.sort_by_key(|a| position[&a.id()]);
    for a in anchors {
        let Some(abs) = a.value().attr("href").and_then(|h| resolve(h, &base)) else { continue };
        let Some(canon) = canonical_url(&abs, stripped_params) else { continue };
        if is_article_url(&canon, venue) && seen.insert(canon.clone()) {
            out.push(canon);
        }
    }
    Ok(out)
}

/// Text content extracted from an article page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedArticle {
    pub title: String,
    pub body: String,
    pub publish_date: Option<NaiveDate>,
}

fn body_selectors(venue: VenueId) -> &'static [&'static str] {
    match venue {
        VenueId::Nyt => &["section[name='articleBody'] p", "div.story-body p", "p.story-body-text"],
        VenueId::Fox => &["div.article-body p", "div.article-text p"],
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if s.len() >= 10 {
        if let Ok(d) = NaiveDate::parse_from_str(&s[..10], "%Y-%m-%d") {
            return Some(d);
        }
    }
    if s.len() == 8 {
        return NaiveDate::parse_from_str(s, "%Y%m%d").ok();
    }
    None
}

fn date_from_url(url: &str) -> Option<NaiveDate> {
    let u = Url::parse(url).ok()?;
    let caps = NYT_ARTICLE_PATH.captures(u.path())?;
    NaiveDate::from_ymd_opt(caps[1].parse().ok()?, caps[2].parse().ok()?, caps[3].parse().ok()?)
}

/// Extracts title, paragraph text and publication date from an article page.
pub fn parse_article(html: &str, page_url: &str, venue: VenueId) -> ParsedArticle {
    let doc = Html::parse_document(html);
    let meta = |selector: &str| doc.select(&sel(selector)).next().and_then(|e| e.value().attr("content").map(str::to_string));
    let title = doc
        .select(&sel("h1"))
        .next()
        .map(|h| h.text().collect::<String>())
        .or_else(|| meta("meta[property='og:title']"))
        .map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "))
        .unwrap_or_default();

    let mut paragraphs: Vec<String> = Vec::new();
    for s in body_selectors(venue).iter().chain(&["article p"]) {
        paragraphs = doc
            .select(&sel(s))
            .map(|p| p.text().collect::<String>().split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|p| !p.is_empty())
            .collect();
        if !paragraphs.is_empty() {
            break;
        }
    }

    let publish_date = meta("meta[property='article:published_time']")
        .and_then(|d| parse_date(&d))
        .or_else(|| meta("meta[name='pdate']").and_then(|d| parse_date(&d)))
        .or_else(|| {
            doc.select(&sel("time[datetime]")).next().and_then(|t| t.value().attr("datetime").and_then(parse_date))
        })
        .or_else(|| date_from_url(strip_archive_prefix(page_url)));

    ParsedArticle { title, body: paragraphs.join("\n\n"), publish_date }
}

/// Versioned per-venue rules that separate editorial images from page chrome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDenyList {
    pub version: u32,
    pub venue: VenueId,
    /// CSS selectors; an image matching one, or inside a match, is chrome.
    pub selectors: Vec<String>,
    /// Case-insensitive substrings of the image URL marking chrome.
    pub url_patterns: Vec<String>,
    /// Images whose markup size is below this in either dimension are chrome.
    pub min_dimension: u32,
}

impl ImageDenyList {
    pub fn bundled(venue: VenueId) -> Self {
        let text = match venue {
            VenueId::Nyt => include_str!("../../config/deny_nyt.json"),
            VenueId::Fox => include_str!("../../config/deny_fox.json"),
        };
        serde_json::from_str(text).expect("bundled deny list is valid")
    }
}

fn dimension(attr: Option<&str>) -> Option<u32> {
    attr.and_then(|v| v.trim().trim_end_matches("px").parse::<u32>().ok()).filter(|&v| v > 0)
}

/// Content images embedded in an article page, deduplicated by image id.
///
/// Dimensions come from markup when present; the others are filled in after
/// download.
pub fn extract_images(html: &str, page_url: &str, deny: &ImageDenyList, stripped_params: &[&str]) -> Vec<ImageRef> {
    let doc = Html::parse_document(html);
    let base = Url::parse(strip_archive_prefix(page_url))
        .unwrap_or_else(|_| Url::parse(&format!("https://{}/", deny.venue.host())).expect("venue host is valid"));
    let mut denied = HashSet::new();
    for s in &deny.selectors {
        match Selector::parse(s) {
            Ok(selector) => denied.extend(doc.select(&selector).map(|e| e.id())),
            Err(e) => tracing::warn!(selector = %s, error = ?e, "ignoring invalid deny selector"),
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for img in doc.select(&sel("img")) {
        if denied.contains(&img.id()) || img.ancestors().any(|a| denied.contains(&a.id())) {
            continue;
        }
        let el = img.value();
        let src = el
            .attr("src")
            .filter(|s| !s.starts_with("data:"))
            .or_else(|| el.attr("data-src"))
            .or_else(|| el.attr("srcset").and_then(|s| s.split(',').next()).and_then(|s| s.split_whitespace().next()));
        let Some(abs) = src.and_then(|s| resolve(s, &base)) else { continue };
        let lower = abs.to_ascii_lowercase();
        if deny.url_patterns.iter().any(|p| lower.contains(&p.to_ascii_lowercase())) {
            continue;
        }
        let (width, height) = (dimension(el.attr("width")), dimension(el.attr("height")));
        if width.is_some_and(|w| w < deny.min_dimension) || height.is_some_and(|h| h < deny.min_dimension) {
            continue;
        }
        let Some(canon) = canonical_url(&abs, stripped_params) else { continue };
        let image_id = stable_hash(&canon);
        if !seen.insert(image_id.clone()) {
            continue;
        }
        out.push(ImageRef {
            bytes_path: format!("images/{image_id}"),
            image_id,
            source_url: canon,
            width_px: width,
            height_px: height,
            fetched: false,
        });
    }
    out
}
