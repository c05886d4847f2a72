//! URL canonicalisation and stable identifiers.

use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use url::Url;

/// Query parameters removed during canonicalisation unless overridden.
pub const DEFAULT_STRIPPED_PARAMS: &[&str] = &[
    "utm_source",
    "utm_medium",
    "utm_campaign",
    "utm_term",
    "utm_content",
    "smid",
    "smtyp",
    "partner",
    "ref",
    "action",
    "module",
    "region",
    "pgtype",
    "cmpid",
    "intcmp",
];

static ARCHIVE_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:https?://[^/]+)?/web/\d{1,14}(?:[a-z]{2}_)?/").expect("static regex"));

/// Removes a web-archive prefix such as `https://web.archive.org/web/20150301000000/`
/// or `/web/20150301im_/`, returning the original URL.
pub fn strip_archive_prefix(url: &str) -> &str {
    match ARCHIVE_PREFIX.find(url) {
        Some(m) => &url[m.end()..],
        None => url,
    }
}

/// Canonical form: archive prefix removed, scheme forced to https, host
/// lowercased, fragment dropped, denied query parameters stripped (remaining
/// ones sorted) and trailing slash removed.
pub fn canonical_url(raw: &str, stripped_params: &[&str]) -> Option<String> {
    let raw = strip_archive_prefix(raw.trim());
    let mut url = Url::parse(raw).ok()?;
    if !matches!(url.scheme(), "http" | "https") {
        return None;
    }
    let host = url.host_str()?.to_ascii_lowercase();
    let mut kept: Vec<(String, String)> = url
        .query_pairs()
        .filter(|(k, _)| !stripped_params.iter().any(|p| p.eq_ignore_ascii_case(k)))
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    kept.sort();
    let mut path = url.path().to_string();
    while path.len() > 1 && path.ends_with('/') {
        path.pop();
    }
    url.set_fragment(None);
    let mut out = format!("https://{host}{}", if path == "/" { "" } else { path.as_str() });
    if !kept.is_empty() {
        let q: Vec<String> = kept.iter().map(|(k, v)| if v.is_empty() { k.clone() } else { format!("{k}={v}") }).collect();
        out.push('?');
        out.push_str(&q.join("&"));
    }
    Some(out)
}

/// 128-bit hex digest of a string.
pub fn stable_hash(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    hex::encode(&digest[..16])
}

/// Article identifier derived from the canonical URL.
pub fn article_id(raw_url: &str, stripped_params: &[&str]) -> Option<String> {
    canonical_url(raw_url, stripped_params).map(|c| stable_hash(&c))
}
