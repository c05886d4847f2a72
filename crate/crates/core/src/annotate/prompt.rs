//! Victim/perpetrator prompt construction and response parsing.

use std::sync::LazyLock;

use regex::Regex;

use super::{AnnotateError, VictimPerpRecord};
use crate::labels::{PerpetratorLabel, VictimLabel};

const RACE_OPTIONS: &str = "['Asian', 'Middle Eastern', 'Black', 'White', 'Indian', 'Latinx', 'Unspecified']";

/// Header that precedes the article body in the prompt.
pub const ARTICLE_HEADER: &str = "ARTICLE";

/// Builds the one-word victim/perpetrator prompt followed by the article text.
pub fn build_vp_prompt(article_text: &str) -> String {
    let mut p = String::with_capacity(article_text.len() + 1024);
    p.push_str("Using the following article, answer each of the following questions using only one word.\n\n");
    p.push_str("Q1) Does the article contain a victim? If so, what racial group does the victim belong to? ");
    p.push_str("Pick one of the following: ");
    p.push_str(RACE_OPTIONS);
    p.push_str(".\n");
    p.push_str("If the article does not contain a victim, answer with 'No victim'.\n\n");
    p.push_str("Q2) Does the article contain a perpetrator? If so, what racial group does the perpetrator belong to? ");
    p.push_str("Pick one of the following: ");
    p.push_str(RACE_OPTIONS);
    p.push_str(".\n");
    p.push_str("If the article does not contain a perpetrator, answer with 'No perpetrator'.\n\n");
    p.push_str(
        "Do not add any additional information from your end, answer each of the questions using only one word.\n\n",
    );
    p.push_str("Return your response in the following JSON format:\n");
    p.push_str("{\n    'victim' : [Your response],\n    'perpetrator' : [Your response]\n}\n\n");
    p.push_str(ARTICLE_HEADER);
    p.push('\n');
    p.push_str(article_text);
    p
}

static FIELD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)["']?\b(victim|perpetrator)\b["']?\s*:\s*\[?\s*(?:"([^"\[\]{}]*)"|'([^'\[\]{}]*)'|([A-Za-z][A-Za-z \-]*?))\s*\]?\s*(?:,|\})"#)
        .expect("static regex")
});

/// Extracts the victim/perpetrator pair from an annotator reply.
///
/// Accepts single or double quotes, an optional `[...]` wrapper around values
/// and arbitrary prose around the JSON object.
pub fn parse_vp_response(raw: &str) -> Result<VictimPerpRecord, AnnotateError> {
    let malformed = |why: &str| AnnotateError::MalformedAnnotation { reason: why.to_string(), raw: raw.to_string() };
    let open = raw.find('{').ok_or_else(|| malformed("no JSON object"))?;
    let close = raw[open..].rfind('}').ok_or_else(|| malformed("unterminated JSON object"))? + open;
    let body = &raw[open..=close];
    if body[1..].contains('{') {
        return Err(malformed("nested object"));
    }

    let mut victim: Option<VictimLabel> = None;
    let mut perpetrator: Option<PerpetratorLabel> = None;
    for cap in FIELD.captures_iter(body) {
        let key = cap[1].to_ascii_lowercase();
        let value = cap.get(2).or(cap.get(3)).or(cap.get(4)).map(|m| m.as_str().trim()).unwrap_or("");
        match key.as_str() {
            "victim" => {
                if victim.is_some() {
                    return Err(malformed("duplicate victim key"));
                }
                victim = Some(value.parse().map_err(|_| malformed("victim value outside option list"))?);
            }
            _ => {
                if perpetrator.is_some() {
                    return Err(malformed("duplicate perpetrator key"));
                }
                perpetrator = Some(value.parse().map_err(|_| malformed("perpetrator value outside option list"))?);
            }
        }
    }
    match (victim, perpetrator) {
        (Some(victim), Some(perpetrator)) => Ok(VictimPerpRecord { victim, perpetrator }),
        (None, _) => Err(malformed("missing victim key")),
        (_, None) => Err(malformed("missing perpetrator key")),
    }
}

/// Canonical JSON serialisation, the inverse of [`parse_vp_response`].
pub fn serialize_vp(record: &VictimPerpRecord) -> String {
    serde_json::json!({ "victim": record.victim.as_str(), "perpetrator": record.perpetrator.as_str() }).to_string()
}
