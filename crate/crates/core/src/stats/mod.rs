//! Representation statistics over classified faces and annotated articles.
//!
//! Every estimator is a pure reduction over immutable observations and
//! returns ordered maps, so outputs never depend on input order.

mod significance;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use significance::{
    chi2_2x2, chi2_table, pooled_t, star_format, welch_t, Chi2Result, ContingencyTable, Stars, TTestResult,
};

use crate::annotate::VictimPerpRecord;
use crate::labels::{AgeBracket, EmotionLabel, PerpetratorLabel, RaceLabel6, SentimentLabel, TopicLabel};
use crate::types::{CategoryLabel, Gender, VenueId};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("test undefined: {0}")]
    TestUndefined(String),
    #[error("estimate undefined: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// First and last year covered by the corpus.
pub const YEARS: std::ops::RangeInclusive<i32> = 2012..=2022;

/// Counts and shares of groups within one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShares<G: Ord> {
    pub total: u64,
    pub counts: BTreeMap<G, u64>,
}

impl<G: Ord + Copy> GroupShares<G> {
    fn from_iter(groups: impl IntoIterator<Item = G>) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for g in groups {
            *counts.entry(g).or_insert(0) += 1;
            total += 1;
        }
        Self { total, counts }
    }

    pub fn count(&self, g: G) -> u64 {
        self.counts.get(&g).copied().unwrap_or(0)
    }

    pub fn share(&self, g: G) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(g) as f64 / self.total as f64
        }
    }

    pub fn shares(&self) -> BTreeMap<G, f64> {
        self.counts.keys().map(|&g| (g, self.share(g))).collect()
    }
}

/// Keys identifying one statistical finding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatKeys {
    pub group: String,
    pub category: Option<String>,
    pub detail: Option<String>,
}

/// One comparison between the venues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub keys: StatKeys,
    /// Venue-specific estimates, NYT first.
    pub estimate: Vec<f64>,
    pub statistic: f64,
    /// Degrees of freedom of the reference distribution.
    pub dof: f64,
    pub p_value: f64,
    pub stars: Stars,
}

impl StatResult {
    fn new(keys: StatKeys, estimate: Vec<f64>, statistic: f64, dof: f64, p_value: f64) -> Self {
        Self { keys, estimate, statistic, dof, p_value, stars: star_format(p_value) }
    }
}

/// How venue differences are tested in a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chi2Mode {
    /// One 2×2 venue × (group, rest) table per group.
    #[default]
    GroupVsRest,
    /// One 2×k venue × group table per category; every group row inherits its p-value.
    Full,
}

/// Proportion of each group among observations of a (venue, category) cell.
pub fn group_proportions<G: Ord + Copy>(
    observations: &[(VenueId, CategoryLabel, G)],
) -> BTreeMap<(VenueId, CategoryLabel), GroupShares<G>> {
    let mut cells: BTreeMap<(VenueId, CategoryLabel), Vec<G>> = BTreeMap::new();
    for &(v, c, g) in observations {
        cells.entry((v, c)).or_default().push(g);
    }
    cells.into_iter().map(|(k, gs)| (k, GroupShares::from_iter(gs))).collect()
}

/// Venue comparison of group representation for every (category, group).
pub fn representation_tests<G: Ord + Copy + std::fmt::Display>(
    observations: &[(VenueId, CategoryLabel, G)],
    groups: &[G],
    mode: Chi2Mode,
) -> Vec<StatResult> {
    let props = group_proportions(observations);
    let mut categories: Vec<CategoryLabel> = props.keys().map(|(_, c)| *c).collect();
    categories.sort();
    categories.dedup();
    let empty = GroupShares { total: 0, counts: BTreeMap::new() };
    let mut out = Vec::new();
    for cat in categories {
        let nyt = props.get(&(VenueId::Nyt, cat)).unwrap_or(&empty);
        let fox = props.get(&(VenueId::Fox, cat)).unwrap_or(&empty);
        let full = match mode {
            Chi2Mode::Full => chi2_table(&[
                groups.iter().map(|&g| nyt.count(g)).collect(),
                groups.iter().map(|&g| fox.count(g)).collect(),
            ])
            .ok(),
            Chi2Mode::GroupVsRest => None,
        };
        for &g in groups {
            let keys = StatKeys { group: g.to_string(), category: Some(cat.to_string()), detail: None };
            let estimate = vec![nyt.share(g), fox.share(g)];
            let tested = match mode {
                Chi2Mode::GroupVsRest => {
                    chi2_2x2(&ContingencyTable::group_vs_rest(nyt.count(g), nyt.total, fox.count(g), fox.total))
                        .ok()
                        .map(|(s, p)| (s, 1.0, p))
                }
                Chi2Mode::Full => full.map(|r| (r.statistic, r.dof, r.p_value)),
            };
            if let Some((stat, dof, p)) = tested {
                out.push(StatResult::new(keys, estimate, stat, dof, p));
            }
        }
    }
    out
}

/// Per-venue standardisation of areas, sample standard deviation.
///
/// A venue with fewer than two observations or zero variance maps to `None`.
pub fn zscore_by_venue(areas: &BTreeMap<VenueId, Vec<f64>>) -> BTreeMap<VenueId, Option<Vec<f64>>> {
    areas.iter().map(|(&venue, xs)| (venue, zscores(xs))).collect()
}

/// Sample z-scores of one population, `None` when undefined.
pub fn zscores(xs: &[f64]) -> Option<Vec<f64>> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return None;
    }
    Some(xs.iter().map(|x| (x - mean) / sd).collect())
}

/// Venue comparison of normalised areas for every (category, group).
///
/// Observations carry an already venue-normalised area.
pub fn area_tests<G: Ord + Copy + std::fmt::Display>(
    observations: &[(VenueId, CategoryLabel, G, f64)],
    pooled: bool,
) -> Vec<StatResult> {
    let mut cells: BTreeMap<(CategoryLabel, G), [Vec<f64>; 2]> = BTreeMap::new();
    for &(v, c, g, z) in observations {
        let slot = cells.entry((c, g)).or_default();
        slot[if v == VenueId::Nyt { 0 } else { 1 }].push(z);
    }
    let mean = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    cells
        .into_iter()
        .filter_map(|((cat, g), [nyt, fox])| {
            let test = if pooled { pooled_t(&nyt, &fox) } else { welch_t(&nyt, &fox) };
            let r = test.ok()?;
            let keys = StatKeys { group: g.to_string(), category: Some(cat.to_string()), detail: None };
            Some(StatResult::new(keys, vec![mean(&nyt), mean(&fox)], r.t, r.dof, r.p_value))
        })
        .collect()
}

/// One classified face joined with the venue and category of its article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceObservation {
    pub face_id: String,
    pub venue: VenueId,
    pub category: CategoryLabel,
    pub race: RaceLabel6,
    pub gender: Option<Gender>,
    pub age: Option<AgeBracket>,
    /// Area under the configured mode, in pixels.
    pub area: Option<u64>,
}

/// Venue-normalised area of each observation, aligned with the input.
/// Observations without an area, or in a venue whose z-scores are undefined, get `None`.
pub fn normalized_areas(faces: &[FaceObservation]) -> Vec<Option<f64>> {
    let mut by_venue: BTreeMap<VenueId, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for (i, f) in faces.iter().enumerate() {
        if let Some(a) = f.area {
            let slot = by_venue.entry(f.venue).or_default();
            slot.0.push(i);
            slot.1.push(a as f64);
        }
    }
    let mut out = vec![None; faces.len()];
    for (_, (idx, areas)) in by_venue {
        if let Some(z) = zscores(&areas) {
            for (i, z) in idx.into_iter().zip(z) {
                out[i] = Some(z);
            }
        }
    }
    out
}

/// One annotated article joined with its venue and year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextObservation {
    pub article_id: String,
    pub venue: VenueId,
    pub year: i32,
    pub emotion: Option<EmotionLabel>,
    pub sentiment: Option<SentimentLabel>,
    pub topic: Option<TopicLabel>,
    pub race: Option<RaceLabel6>,
    pub vp: Option<VictimPerpRecord>,
}

/// Emotion distribution over non-neutral articles that mention each race.
pub fn emotion_shares(records: &[TextObservation]) -> BTreeMap<(VenueId, RaceLabel6), GroupShares<EmotionLabel>> {
    let mut cells: BTreeMap<(VenueId, RaceLabel6), Vec<EmotionLabel>> = BTreeMap::new();
    for r in records {
        if let (Some(race), Some(e)) = (r.race, r.emotion) {
            if e != EmotionLabel::Neutral {
                cells.entry((r.venue, race)).or_default().push(e);
            }
        }
    }
    cells.into_iter().map(|(k, es)| (k, GroupShares::from_iter(es))).collect()
}

/// Venue comparison per (race, emotion) of non-neutral articles.
pub fn emotion_tests(records: &[TextObservation]) -> Vec<StatResult> {
    let shares = emotion_shares(records);
    let empty = GroupShares { total: 0, counts: BTreeMap::new() };
    let mut out = Vec::new();
    for race in RaceLabel6::ALL.iter().copied() {
        let nyt = shares.get(&(VenueId::Nyt, race)).unwrap_or(&empty);
        let fox = shares.get(&(VenueId::Fox, race)).unwrap_or(&empty);
        for e in EmotionLabel::non_neutral() {
            let t = ContingencyTable::group_vs_rest(nyt.count(e), nyt.total, fox.count(e), fox.total);
            if let Ok((stat, p)) = chi2_2x2(&t) {
                let keys = StatKeys { group: race.to_string(), category: Some(e.to_string()), detail: None };
                out.push(StatResult::new(keys, vec![nyt.share(e), fox.share(e)], stat, 1.0, p));
            }
        }
    }
    out
}

/// Percentage balance of positive over negative coverage, in [-100, 100].
pub fn sentiment_balance(pos: u64, neg: u64) -> Result<f64> {
    let total = pos + neg;
    if total == 0 {
        return Err(StatsError::Undefined("no sentiment observations".into()));
    }
    Ok(100.0 * (pos as f64 - neg as f64) / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentCell {
    pub positive: u64,
    pub negative: u64,
    pub balance: f64,
}

/// Sentiment balance per (venue, race) over articles mentioning that race.
pub fn sentiment_by_race(records: &[TextObservation]) -> BTreeMap<(VenueId, RaceLabel6), SentimentCell> {
    let mut counts: BTreeMap<(VenueId, RaceLabel6), (u64, u64)> = BTreeMap::new();
    for r in records {
        if let (Some(race), Some(s)) = (r.race, r.sentiment) {
            let c = counts.entry((r.venue, race)).or_default();
            match s {
                SentimentLabel::Positive => c.0 += 1,
                SentimentLabel::Negative => c.1 += 1,
            }
        }
    }
    counts
        .into_iter()
        .filter_map(|(k, (p, n))| {
            let balance = sentiment_balance(p, n).ok()?;
            Some((k, SentimentCell { positive: p, negative: n, balance }))
        })
        .collect()
}

/// Mean absolute sentiment balance across races, per venue.
pub fn mean_abs_balance(cells: &BTreeMap<(VenueId, RaceLabel6), SentimentCell>) -> BTreeMap<VenueId, f64> {
    let mut acc: BTreeMap<VenueId, (f64, usize)> = BTreeMap::new();
    for ((v, _), c) in cells {
        let e = acc.entry(*v).or_default();
        e.0 += c.balance.abs();
        e.1 += 1;
    }
    acc.into_iter().map(|(v, (s, n))| (v, s / n as f64)).collect()
}

/// Strongest topic association of a race within a venue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopAssociation {
    pub topic: TopicLabel,
    pub share: f64,
    pub articles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRaceShares {
    /// Race composition of each topic's race-tagged articles.
    pub by_topic: BTreeMap<(VenueId, TopicLabel), GroupShares<RaceLabel6>>,
    /// For every minority race, the topic where it holds the largest share.
    pub top: BTreeMap<(VenueId, RaceLabel6), TopAssociation>,
}

pub fn topic_race_shares(records: &[TextObservation]) -> TopicRaceShares {
    let mut cells: BTreeMap<(VenueId, TopicLabel), Vec<RaceLabel6>> = BTreeMap::new();
    for r in records {
        if let (Some(t), Some(race)) = (r.topic, r.race) {
            cells.entry((r.venue, t)).or_default().push(race);
        }
    }
    let by_topic: BTreeMap<_, _> = cells.into_iter().map(|(k, rs)| (k, GroupShares::from_iter(rs))).collect();
    let mut top: BTreeMap<(VenueId, RaceLabel6), TopAssociation> = BTreeMap::new();
    for ((venue, topic), shares) in &by_topic {
        for race in RaceLabel6::minorities() {
            let share = shares.share(race);
            if shares.count(race) == 0 {
                continue;
            }
            let candidate = TopAssociation { topic: *topic, share, articles: shares.total };
            // BTreeMap iterates topics in fixed order; strict > keeps the first on ties.
            top.entry((*venue, race))
                .and_modify(|cur| {
                    if share > cur.share {
                        *cur = candidate;
                    }
                })
                .or_insert(candidate);
        }
    }
    TopicRaceShares { by_topic, top }
}

/// Topic distribution (percent) of each race's articles within one venue.
pub fn topic_columns(records: &[TextObservation], venue: VenueId) -> BTreeMap<RaceLabel6, GroupShares<TopicLabel>> {
    let mut cells: BTreeMap<RaceLabel6, Vec<TopicLabel>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.venue == venue) {
        if let (Some(t), Some(race)) = (r.topic, r.race) {
            cells.entry(race).or_default().push(t);
        }
    }
    cells.into_iter().map(|(k, ts)| (k, GroupShares::from_iter(ts))).collect()
}

/// Yearly share of a topic's race-tagged articles assigned to `race`.
///
/// Years without any article on the topic are `None` (a gap, not zero).
pub fn temporal_topic_series(
    records: &[TextObservation],
    topic: TopicLabel,
    race: RaceLabel6,
) -> BTreeMap<(VenueId, i32), Option<f64>> {
    let mut counts: BTreeMap<(VenueId, i32), (u64, u64)> = BTreeMap::new();
    for r in records {
        if r.topic == Some(topic) {
            if let Some(rr) = r.race {
                let c = counts.entry((r.venue, r.year)).or_default();
                c.1 += 1;
                if rr == race {
                    c.0 += 1;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for venue in VenueId::ALL {
        for year in YEARS {
            let share = counts.get(&(venue, year)).map(|&(hit, n)| hit as f64 / n as f64);
            out.insert((venue, year), share);
        }
    }
    out
}

/// Row-normalised victim × perpetrator distribution for one venue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpMatrix {
    pub columns: Vec<PerpetratorLabel>,
    /// One row per victim race; `None` when no article has that victim.
    pub rows: BTreeMap<RaceLabel6, Option<Vec<f64>>>,
    pub row_counts: BTreeMap<RaceLabel6, u64>,
}

impl VpMatrix {
    pub fn cell(&self, victim: RaceLabel6, perp: PerpetratorLabel) -> Option<f64> {
        let j = self.columns.iter().position(|c| *c == perp)?;
        self.rows.get(&victim)?.as_ref().map(|r| r[j])
    }
}

/// Victim/perpetrator matrices per venue.
///
/// Only articles whose victim is a race and whose perpetrator is a race
/// (or `Unspecified` when `include_unspecified`) enter the matrix.
pub fn vp_matrix(records: &[(VenueId, VictimPerpRecord)], include_unspecified: bool) -> BTreeMap<VenueId, VpMatrix> {
    let mut columns: Vec<PerpetratorLabel> = RaceLabel6::ALL.iter().map(|&r| PerpetratorLabel::from(r)).collect();
    if include_unspecified {
        columns.push(PerpetratorLabel::Unspecified);
    }
    let mut out = BTreeMap::new();
    for venue in VenueId::ALL {
        let mut counts: BTreeMap<RaceLabel6, Vec<u64>> =
            RaceLabel6::ALL.iter().map(|&r| (r, vec![0; columns.len()])).collect();
        for (v, rec) in records.iter().filter(|(v, _)| *v == venue) {
            debug_assert_eq!(*v, venue);
            let Some(victim) = rec.victim.race() else { continue };
            let Some(j) = columns.iter().position(|c| *c == rec.perpetrator) else { continue };
            counts.get_mut(&victim).expect("all races present")[j] += 1;
        }
        let row_counts: BTreeMap<RaceLabel6, u64> = counts.iter().map(|(r, c)| (*r, c.iter().sum())).collect();
        let rows = counts
            .into_iter()
            .map(|(r, c)| {
                let n = row_counts[&r];
                let row = (n > 0).then(|| c.iter().map(|&x| x as f64 / n as f64).collect());
                (r, row)
            })
            .collect();
        out.insert(venue, VpMatrix { columns: columns.clone(), rows, row_counts });
    }
    out
}

/// Count-weighted mean of bracket midpoints.
pub fn mean_age(bracket_counts: &BTreeMap<AgeBracket, u64>) -> Result<f64> {
    let total: u64 = bracket_counts.values().sum();
    if total == 0 {
        return Err(StatsError::Undefined("no age observations".into()));
    }
    let weighted: f64 = bracket_counts.iter().map(|(b, &n)| b.midpoint() * n as f64).sum();
    Ok(weighted / total as f64)
}
