//! Joins stage outputs into observations and turns estimators into report tables.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::files::ClassifiedFace;
use super::report::{Cell, ReportTable};
use crate::annotate::AnnotationRecord;
use crate::faces::AreaMode;
use crate::ingest::ArticleRecord;
use crate::labels::{AgeBracket, EmotionLabel, RaceLabel6, TopicLabel};
use crate::stats::{
    area_tests, emotion_shares, emotion_tests, group_proportions, mean_abs_balance, mean_age,
    normalized_areas, representation_tests, sentiment_by_race, temporal_topic_series, topic_columns,
    topic_race_shares, vp_matrix, Chi2Mode, FaceObservation, StatResult, TextObservation, YEARS,
};
use crate::types::{CategoryLabel, Gender, VenueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatsKind {
    Repr,
    Area,
    Emotion,
    Sentiment,
    Topics,
    Temporal,
    Vp,
    Age,
}

impl StatsKind {
    pub const ALL: [StatsKind; 8] = [
        StatsKind::Repr,
        StatsKind::Area,
        StatsKind::Emotion,
        StatsKind::Sentiment,
        StatsKind::Topics,
        StatsKind::Temporal,
        StatsKind::Vp,
        StatsKind::Age,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StatsKind::Repr => "repr",
            StatsKind::Area => "area",
            StatsKind::Emotion => "emotion",
            StatsKind::Sentiment => "sentiment",
            StatsKind::Topics => "topics",
            StatsKind::Temporal => "temporal",
            StatsKind::Vp => "vp",
            StatsKind::Age => "age",
        }
    }

    /// Whether the kind reads faces (otherwise annotations).
    pub fn uses_faces(self) -> bool {
        matches!(self, StatsKind::Repr | StatsKind::Area | StatsKind::Age)
    }
}

impl FromStr for StatsKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StatsKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown statistics kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsOptions {
    pub area_mode: AreaMode,
    pub chi2_mode: Chi2Mode,
    /// Pooled-variance t-tests instead of Welch.
    pub pooled: bool,
    /// Adds an Unspecified perpetrator column to the victim matrices.
    pub include_unspecified: bool,
}

/// Faces joined to the venue and category of the articles that embed their image.
///
/// Only articles in the image categories count. A face appears once per venue;
/// when several articles of one venue share the image, the article with the
/// smallest id supplies the category.
pub fn face_observations(faces: &[ClassifiedFace], articles: &[ArticleRecord], mode: AreaMode) -> Vec<FaceObservation> {
    let mut by_image: HashMap<&str, BTreeMap<VenueId, (&str, CategoryLabel, Option<(u32, u32)>)>> = HashMap::new();
    for a in articles.iter().filter(|a| CategoryLabel::IMAGE_CATEGORIES.contains(&a.category)) {
        for img in &a.image_refs {
            let dims = img.width_px.zip(img.height_px);
            let slot = by_image.entry(img.image_id.as_str()).or_default();
            match slot.get(&a.venue) {
                Some((id, _, _)) if *id <= a.article_id.as_str() => {}
                _ => {
                    slot.insert(a.venue, (a.article_id.as_str(), a.category, dims));
                }
            }
        }
    }
    let mut out = Vec::new();
    for f in faces {
        let Some(venues) = by_image.get(f.image_id.as_str()) else { continue };
        for (&venue, &(_, category, dims)) in venues {
            let area = match mode {
                AreaMode::FaceBbox => Some(f.bbox.area()),
                AreaMode::Image => f.image_width.zip(f.image_height).or(dims).map(|(w, h)| w as u64 * h as u64),
            };
            out.push(FaceObservation {
                face_id: f.face_id.clone(),
                venue,
                category,
                race: f.race,
                gender: f.gender,
                age: f.age,
                area,
            });
        }
    }
    out
}

/// Annotations joined to their article's venue and year. Annotations of
/// unknown articles are dropped.
pub fn text_observations(annotations: &[AnnotationRecord], articles: &[ArticleRecord]) -> Vec<TextObservation> {
    let index: HashMap<&str, &ArticleRecord> = articles.iter().map(|a| (a.article_id.as_str(), a)).collect();
    let mut dropped = 0usize;
    let out = annotations
        .iter()
        .filter_map(|r| {
            let Some(a) = index.get(r.article_id.as_str()) else {
                dropped += 1;
                return None;
            };
            Some(TextObservation {
                article_id: r.article_id.clone(),
                venue: a.venue,
                year: a.publish_date.year(),
                emotion: r.emotion,
                sentiment: r.sentiment,
                topic: r.topic,
                race: r.race,
                vp: r.vp,
            })
        })
        .collect();
    if dropped > 0 {
        tracing::warn!(dropped, "annotations without a matching article");
    }
    out
}

fn stat_cells(r: &StatResult) -> Vec<Cell> {
    vec![
        Cell::num(r.estimate[0]),
        Cell::num(r.estimate[1]),
        Cell::num(r.statistic),
        Cell::num(r.dof),
        Cell::num(r.p_value),
        Cell::text(r.stars.as_str()),
    ]
}

fn share_rows<G: Ord + Copy + std::fmt::Display>(
    t: &mut ReportTable,
    attribute: &str,
    groups: &[G],
    obs: &[(VenueId, CategoryLabel, G)],
) {
    for ((venue, cat), shares) in group_proportions(obs) {
        for &g in groups {
            t.push(vec![
                Cell::text(attribute),
                Cell::text(venue),
                Cell::text(cat),
                Cell::text(g),
                Cell::int(shares.count(g)),
                Cell::int(shares.total),
                Cell::num(shares.share(g)),
            ]);
        }
    }
}

fn race_obs(faces: &[FaceObservation]) -> Vec<(VenueId, CategoryLabel, RaceLabel6)> {
    faces.iter().map(|f| (f.venue, f.category, f.race)).collect()
}

fn gender_obs(faces: &[FaceObservation]) -> Vec<(VenueId, CategoryLabel, Gender)> {
    faces.iter().filter_map(|f| f.gender.map(|g| (f.venue, f.category, g))).collect()
}

pub fn representation_tables(faces: &[FaceObservation], mode: Chi2Mode) -> Vec<ReportTable> {
    let mut fig = ReportTable::new(
        "fig2a_representation",
        &["attribute", "venue", "category", "group", "count", "total", "share"],
    );
    share_rows(&mut fig, "race", RaceLabel6::ALL, &race_obs(faces));
    share_rows(&mut fig, "gender", &Gender::ALL, &gender_obs(faces));

    let mut table = ReportTable::new(
        "table7_chi2_representation",
        &["attribute", "category", "group", "nyt_share", "fox_share", "chi2", "dof", "p_value", "stars"],
    );
    let tests = representation_tests(&race_obs(faces), RaceLabel6::ALL, mode)
        .into_iter()
        .map(|r| ("race", r))
        .chain(representation_tests(&gender_obs(faces), &Gender::ALL, mode).into_iter().map(|r| ("gender", r)));
    for (attribute, r) in tests {
        let mut row = vec![
            Cell::text(attribute),
            Cell::text(r.keys.category.as_deref().unwrap_or("")),
            Cell::text(&r.keys.group),
        ];
        row.extend(stat_cells(&r));
        table.push(row);
    }
    vec![fig, table]
}

pub fn area_table(faces: &[FaceObservation], pooled: bool) -> Vec<ReportTable> {
    let z = normalized_areas(faces);
    let mut race = Vec::new();
    let mut gender = Vec::new();
    for (f, z) in faces.iter().zip(z) {
        let Some(z) = z else { continue };
        race.push((f.venue, f.category, f.race, z));
        if let Some(g) = f.gender {
            gender.push((f.venue, f.category, g, z));
        }
    }
    let mut t = ReportTable::new(
        "fig2b_area",
        &["attribute", "category", "group", "nyt_mean_z", "fox_mean_z", "t", "dof", "p_value", "stars", "test"],
    );
    let test = if pooled { "pooled" } else { "welch" };
    let tests = area_tests(&race, pooled)
        .into_iter()
        .map(|r| ("race", r))
        .chain(area_tests(&gender, pooled).into_iter().map(|r| ("gender", r)));
    for (attribute, r) in tests {
        let mut row = vec![
            Cell::text(attribute),
            Cell::text(r.keys.category.as_deref().unwrap_or("")),
            Cell::text(&r.keys.group),
        ];
        row.extend(stat_cells(&r));
        row.push(Cell::text(test));
        t.push(row);
    }
    vec![t]
}

pub fn emotion_tables(text: &[TextObservation]) -> Vec<ReportTable> {
    let mut fig = ReportTable::new("fig3_emotion_shares", &["venue", "race", "emotion", "count", "total", "share"]);
    for ((venue, race), shares) in emotion_shares(text) {
        for e in EmotionLabel::non_neutral() {
            fig.push(vec![
                Cell::text(venue),
                Cell::text(race),
                Cell::text(e),
                Cell::int(shares.count(e)),
                Cell::int(shares.total),
                Cell::num(shares.share(e)),
            ]);
        }
    }

    let mut counts: BTreeMap<(VenueId, RaceLabel6, EmotionLabel), u64> = BTreeMap::new();
    for r in text {
        if let (Some(race), Some(e)) = (r.race, r.emotion) {
            *counts.entry((r.venue, race, e)).or_default() += 1;
        }
    }
    let mut table8 = ReportTable::new("table8_emotion_counts", &["venue", "race", "emotion", "count"]);
    for venue in VenueId::ALL {
        for &race in RaceLabel6::ALL {
            for &e in EmotionLabel::ALL {
                let n = counts.get(&(venue, race, e)).copied().unwrap_or(0);
                table8.push(vec![Cell::text(venue), Cell::text(race), Cell::text(e), Cell::int(n)]);
            }
        }
    }

    let mut table9 = ReportTable::new(
        "table9_chi2_emotion",
        &["race", "emotion", "nyt_share", "fox_share", "chi2", "dof", "p_value", "stars"],
    );
    for r in emotion_tests(text) {
        let mut row = vec![Cell::text(&r.keys.group), Cell::text(r.keys.category.as_deref().unwrap_or(""))];
        row.extend(stat_cells(&r));
        table9.push(row);
    }
    vec![fig, table8, table9]
}

pub const MEAN_ABS_ROW: &str = "mean |balance|";

pub fn sentiment_table(text: &[TextObservation]) -> Vec<ReportTable> {
    let cells = sentiment_by_race(text);
    let mut t = ReportTable::new("fig4_sentiment_balance", &["venue", "race", "positive", "negative", "balance"]);
    for ((venue, race), c) in &cells {
        t.push(vec![
            Cell::text(venue),
            Cell::text(race),
            Cell::int(c.positive),
            Cell::int(c.negative),
            Cell::num(c.balance),
        ]);
    }
    for (venue, m) in mean_abs_balance(&cells) {
        t.push(vec![Cell::text(venue), Cell::text(MEAN_ABS_ROW), Cell::Empty, Cell::Empty, Cell::num(m)]);
    }
    vec![t]
}

fn topic_table(name: &str, text: &[TextObservation], venue: VenueId) -> ReportTable {
    let mut columns = vec!["topic"];
    columns.extend(RaceLabel6::ALL.iter().map(|r| r.as_str()));
    let mut t = ReportTable::new(name, &columns);
    let cols = topic_columns(text, venue);
    for &topic in TopicLabel::ALL {
        let mut row = vec![Cell::text(topic)];
        for race in RaceLabel6::ALL {
            row.push(match cols.get(race) {
                Some(s) => Cell::num(100.0 * s.share(topic)),
                None => Cell::Empty,
            });
        }
        t.push(row);
    }
    t
}

pub fn topic_tables(text: &[TextObservation]) -> Vec<ReportTable> {
    let shares = topic_race_shares(text);
    let mut fig = ReportTable::new("fig5_topic_top_race", &["venue", "race", "topic", "share", "topic_articles"]);
    for ((venue, race), top) in &shares.top {
        fig.push(vec![
            Cell::text(venue),
            Cell::text(race),
            Cell::text(top.topic),
            Cell::num(top.share),
            Cell::int(top.articles),
        ]);
    }
    vec![
        fig,
        topic_table("table10_nyt_topics", text, VenueId::Nyt),
        topic_table("table11_fox_topics", text, VenueId::Fox),
    ]
}

/// For each minority race, the topic where it holds its largest share in either venue.
pub fn temporal_targets(text: &[TextObservation]) -> Vec<(RaceLabel6, TopicLabel)> {
    let shares = topic_race_shares(text);
    let mut best: BTreeMap<RaceLabel6, (TopicLabel, f64)> = BTreeMap::new();
    for ((_, race), top) in &shares.top {
        match best.get(race) {
            Some((_, s)) if *s >= top.share => {}
            _ => {
                best.insert(*race, (top.topic, top.share));
            }
        }
    }
    best.into_iter().map(|(r, (t, _))| (r, t)).collect()
}

pub fn temporal_table(text: &[TextObservation]) -> Vec<ReportTable> {
    let mut t = ReportTable::new("fig6_temporal", &["venue", "race", "topic", "year", "share"]);
    for (race, topic) in temporal_targets(text) {
        let series = temporal_topic_series(text, topic, race);
        for venue in VenueId::ALL {
            for year in YEARS {
                let share = series.get(&(venue, year)).copied().flatten();
                t.push(vec![
                    Cell::text(venue),
                    Cell::text(race),
                    Cell::text(topic),
                    Cell::Int(year as i64),
                    Cell::opt(share),
                ]);
            }
        }
    }
    vec![t]
}

pub fn vp_table(text: &[TextObservation], include_unspecified: bool) -> Vec<ReportTable> {
    let records: Vec<(VenueId, _)> = text.iter().filter_map(|r| r.vp.map(|vp| (r.venue, vp))).collect();
    let mut t = ReportTable::new("fig7_vp_matrix", &["venue", "victim", "perpetrator", "share", "victim_articles"]);
    for (venue, m) in vp_matrix(&records, include_unspecified) {
        for (victim, row) in &m.rows {
            for (j, perp) in m.columns.iter().enumerate() {
                t.push(vec![
                    Cell::text(venue),
                    Cell::text(victim),
                    Cell::text(perp),
                    Cell::opt(row.as_ref().map(|r| r[j])),
                    Cell::int(m.row_counts[victim]),
                ]);
            }
        }
    }
    vec![t]
}

pub const ALL_CATEGORIES: &str = "All";

pub fn age_table(faces: &[FaceObservation]) -> Vec<ReportTable> {
    let mut cells: BTreeMap<(VenueId, String), BTreeMap<AgeBracket, u64>> = BTreeMap::new();
    for f in faces {
        let Some(age) = f.age else { continue };
        for cat in [f.category.to_string(), ALL_CATEGORIES.to_string()] {
            *cells.entry((f.venue, cat)).or_default().entry(age).or_default() += 1;
        }
    }
    let mut t = ReportTable::new(
        "fig10_age_representation",
        &["venue", "category", "age", "count", "total", "share", "mean_age"],
    );
    for ((venue, cat), counts) in &cells {
        let total: u64 = counts.values().sum();
        let mean = mean_age(counts).ok();
        for &b in AgeBracket::ALL {
            let n = counts.get(&b).copied().unwrap_or(0);
            t.push(vec![
                Cell::text(venue),
                Cell::text(cat),
                Cell::text(b),
                Cell::int(n),
                Cell::int(total),
                Cell::num(n as f64 / total as f64),
                Cell::opt(mean),
            ]);
        }
    }
    vec![t]
}

pub fn tables_for(
    kind: StatsKind,
    faces: &[FaceObservation],
    text: &[TextObservation],
    opts: &StatsOptions,
) -> Vec<ReportTable> {
    match kind {
        StatsKind::Repr => representation_tables(faces, opts.chi2_mode),
        StatsKind::Area => area_table(faces, opts.pooled),
        StatsKind::Emotion => emotion_tables(text),
        StatsKind::Sentiment => sentiment_table(text),
        StatsKind::Topics => topic_tables(text),
        StatsKind::Temporal => temporal_table(text),
        StatsKind::Vp => vp_table(text, opts.include_unspecified),
        StatsKind::Age => age_table(faces),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synthetic_corpus_sized;

    #[test]
    fn every_kind_produces_named_tables() {
        let c = synthetic_corpus_sized(1, 2000, 800);
        let mut names = Vec::new();
        for k in StatsKind::ALL {
            for t in tables_for(k, &c.faces, &c.text, &StatsOptions::default()) {
                assert!(!t.artifact.is_empty(), "{}", t.name);
                assert!(!t.rows.is_empty(), "{}", t.name);
                names.push(t.name);
            }
        }
        assert_eq!(names.len(), 13);
    }

    #[test]
    fn topic_columns_sum_to_hundred() {
        let c = synthetic_corpus_sized(2, 3000, 0);
        for t in &topic_tables(&c.text)[1..] {
            for j in 1..t.columns.len() {
                let s: f64 = t.rows.iter().filter_map(|r| r[j].as_f64()).sum();
                assert!((s - 100.0).abs() < 0.1, "{} {}", t.name, t.columns[j]);
            }
        }
    }
}
