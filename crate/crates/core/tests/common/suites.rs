//! Randomised comparisons against the oracles, returning the worst error seen.

use biaskit::metrics::{class_report, cohens_kappa, confusion, krippendorff_alpha, RaterTable};
use biaskit::stats::{chi2_2x2, chi2_table, pooled_t, welch_t, ContingencyTable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::oracles;

fn labels(rng: &mut ChaCha8Rng, n: usize, k: u8) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}

/// Largest absolute gap between library metrics and the enumeration oracles.
pub fn metrics_max_error(seed: u64, instances: usize) -> f64 {
    let mut rng = super::rng(seed);
    let mut worst = 0.0f64;
    let mut gap = |a: f64, b: f64| worst = worst.max((a - b).abs());
    for _ in 0..instances {
        let n = rng.gen_range(1..=12);
        let k = rng.gen_range(1..=4);
        let (t, p) = (labels(&mut rng, n, k), labels(&mut rng, n, k));

        let report = class_report(&confusion(&t, &p).unwrap()).unwrap();
        let naive = oracles::class_report(&t, &p);
        for (i, (_, s)) in report.per_class.iter().enumerate() {
            gap(s.precision, naive.precision[i]);
            gap(s.recall, naive.recall[i]);
            gap(s.f1, naive.f1[i]);
        }
        gap(report.macro_avg.f1, naive.macro_f1);
        gap(report.weighted_avg.f1, naive.weighted_f1);
        gap(report.accuracy, naive.accuracy);

        gap(cohens_kappa(&t, &p).unwrap(), oracles::kappa(&t, &p));

        let raters = rng.gen_range(2..=5);
        let units: Vec<Vec<Option<u8>>> = (0..n)
            .map(|_| (0..raters).map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..k)) }).collect())
            .collect();
        match (krippendorff_alpha(&RaterTable::new(units.clone())), oracles::alpha(&units)) {
            (Ok(a), Some(b)) => gap(a, b),
            (Err(_), None) => {}
            (a, b) => panic!("alpha disagreement on {units:?}: {a:?} vs {b:?}"),
        }
    }
    worst
}

fn sample(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(2..=15);
    let mean = rng.gen_range(-3.0..3.0);
    let spread = rng.gen_range(0.2..4.0);
    (0..n).map(|_| mean + spread * rng.gen_range(-1.0..1.0)).collect()
}

/// Largest absolute gap between library p-values and numerically integrated
/// tail probabilities, split evenly over chi-squared and t-tests.
pub fn pvalue_max_error(seed: u64, inputs: usize) -> f64 {
    let mut rng = super::rng(seed);
    let mut worst = 0.0f64;
    for i in 0..inputs {
        let err = match i % 4 {
            0 => {
                let c = [[rng.gen_range(1..60), rng.gen_range(1..60)], [rng.gen_range(1..60), rng.gen_range(1..60)]];
                let (stat, p) = chi2_2x2(&ContingencyTable::new(c)).unwrap();
                (p - oracles::chi2_sf(stat, 1)).abs()
            }
            1 => {
                let rows = rng.gen_range(2..=4);
                let cols = rng.gen_range(2..=4);
                let t: Vec<Vec<u64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(1..40)).collect()).collect();
                let r = chi2_table(&t).unwrap();
                (r.p_value - oracles::chi2_sf(r.statistic, r.dof as u32)).abs()
            }
            2 => {
                let r = welch_t(&sample(&mut rng), &sample(&mut rng)).unwrap();
                (r.p_value - oracles::t_two_sided(r.t, r.dof)).abs()
            }
            _ => {
                let r = pooled_t(&sample(&mut rng), &sample(&mut rng)).unwrap();
                (r.p_value - oracles::t_two_sided(r.t, r.dof)).abs()
            }
        };
        worst = worst.max(err);
    }
    worst
}

/// Outcome of checking every estimator against the generating tables.
#[derive(Debug, Default)]
pub struct Recovery {
    pub cells: usize,
    pub within: usize,
    /// Worst deviation of a share vector or matrix row from summing to 1.
    pub invariant_error: f64,
    pub misses: Vec<String>,
}

impl Recovery {
    fn check(&mut self, what: String, observed: f64, expected: f64, se: f64) {
        self.cells += 1;
        if (observed - expected).abs() <= 3.0 * se + 1e-12 {
            self.within += 1;
        } else {
            self.misses.push(format!("{what}: observed {observed:.4}, planted {expected:.4}, se {se:.4}"));
        }
    }

    fn proportion(&mut self, what: String, observed: f64, p: f64, n: u64) {
        let se = if n == 0 { f64::INFINITY } else { (p * (1.0 - p) / n as f64).sqrt() };
        self.check(what, observed, p, se);
    }

    fn sums_to_one(&mut self, values: impl IntoIterator<Item = f64>) {
        let s: f64 = values.into_iter().sum();
        self.invariant_error = self.invariant_error.max((s - 1.0).abs());
    }

    pub fn share(&self) -> f64 {
        self.within as f64 / self.cells as f64
    }
}

pub fn planted_recovery(corpus: &biaskit::synth::SyntheticCorpus) -> Recovery {
    use biaskit::labels::{AgeBracket, EmotionLabel, RaceLabel6, TopicLabel};
    use biaskit::stats::{
        emotion_shares, group_proportions, mean_age, sentiment_by_race, temporal_topic_series, topic_columns,
        topic_race_shares, vp_matrix, YEARS,
    };
    use biaskit::synth::planted;
    use biaskit::types::{Gender, VenueId};
    use std::collections::BTreeMap;

    let mut r = Recovery::default();

    let races: Vec<_> = corpus.faces.iter().map(|f| (f.venue, f.category, f.race)).collect();
    for ((v, c), shares) in group_proportions(&races) {
        r.sums_to_one(shares.shares().into_values());
        for race in RaceLabel6::ALL.iter().copied() {
            let p = planted::face_race(v, c)[race.index()];
            r.proportion(format!("face race {v:?} {c:?} {race}"), shares.share(race), p, shares.total);
        }
    }
    let genders: Vec<_> = corpus.faces.iter().filter_map(|f| Some((f.venue, f.category, f.gender?))).collect();
    for ((v, c), shares) in group_proportions(&genders) {
        r.sums_to_one(shares.shares().into_values());
        r.proportion(format!("male {v:?} {c:?}"), shares.share(Gender::Male), planted::male_share(v, c), shares.total);
    }

    for ((v, race), shares) in emotion_shares(&corpus.text) {
        r.sums_to_one(shares.shares().into_values());
        for (i, e) in EmotionLabel::non_neutral().enumerate() {
            r.proportion(format!("emotion {v:?} {race} {e}"), shares.share(e), planted::emotion(v, race)[i], shares.total);
        }
    }

    for ((v, race), cell) in sentiment_by_race(&corpus.text) {
        let n = cell.positive + cell.negative;
        let p = planted::positive(v, race);
        let se = 200.0 * (p * (1.0 - p) / n as f64).sqrt();
        r.check(format!("balance {v:?} {race}"), cell.balance, planted::balance(v, race), se);
    }

    let topics = topic_race_shares(&corpus.text);
    for ((v, t), shares) in &topics.by_topic {
        r.sums_to_one(shares.shares().into_values());
        for race in RaceLabel6::ALL.iter().copied() {
            let p = planted::race_given_topic_avg(*v, *t)[race.index()];
            r.proportion(format!("topic race {v:?} {t} {race}"), shares.share(race), p, shares.total);
        }
    }
    for v in VenueId::ALL {
        for (_, col) in topic_columns(&corpus.text, v) {
            r.sums_to_one(col.shares().into_values());
        }
    }

    for (topic, race) in [(TopicLabel::War, RaceLabel6::MiddleEastern), (TopicLabel::Terrorism, RaceLabel6::MiddleEastern)] {
        let series = temporal_topic_series(&corpus.text, topic, race);
        let mut n: BTreeMap<(VenueId, i32), u64> = BTreeMap::new();
        for t in corpus.text.iter().filter(|t| t.topic == Some(topic) && t.race.is_some()) {
            *n.entry((t.venue, t.year)).or_default() += 1;
        }
        for v in VenueId::ALL {
            for y in YEARS {
                let p = planted::race_given_topic(v, topic, y)[race.index()];
                let count = n.get(&(v, y)).copied().unwrap_or(0);
                match series[&(v, y)] {
                    Some(s) => r.proportion(format!("series {topic} {v:?} {y}"), s, p, count),
                    None => r.check(format!("series {topic} {v:?} {y} empty"), f64::NAN, p, 0.0),
                }
            }
        }
    }

    let vp: Vec<_> = corpus.text.iter().filter_map(|t| Some((t.venue, t.vp?))).collect();
    for (v, m) in vp_matrix(&vp, false) {
        for (victim, row) in &m.rows {
            let Some(row) = row else { continue };
            r.sums_to_one(row.iter().copied());
            let n = m.row_counts[victim];
            for (j, perp) in m.columns.iter().enumerate() {
                let Some(pr) = perp.race() else { continue };
                let p = planted::vp_row(v, *victim)[pr.index()];
                r.proportion(format!("vp {v:?} {victim} {perp}"), row[j], p, n);
            }
        }
    }

    for v in VenueId::ALL {
        let mut counts: BTreeMap<AgeBracket, u64> = BTreeMap::new();
        for f in corpus.faces.iter().filter(|f| f.venue == v) {
            *counts.entry(f.age.expect("synthetic faces carry ages")).or_default() += 1;
        }
        let n: u64 = counts.values().sum();
        let mu = planted::mean_age(v);
        let var: f64 = planted::age(v).iter().zip(AgeBracket::ALL).map(|(p, b)| p * (b.midpoint() - mu).powi(2)).sum();
        r.check(format!("mean age {v:?}"), mean_age(&counts).unwrap(), mu, (var / n as f64).sqrt());
    }
    r
}

/// Fragments of the published victim/perpetrator prompt that must appear verbatim.
pub const VP_PROMPT_FRAGMENTS: &[&str] = &[
    "Using the following article, answer each of the following questions using only one word.",
    "Q1) Does the article contain a victim? If so, what racial group does the victim belong to? Pick one of the following: ['Asian', 'Middle Eastern', 'Black', 'White', 'Indian', 'Latinx', 'Unspecified'].",
    "If the article does not contain a victim, answer with 'No victim'.",
    "Q2) Does the article contain a perpetrator? If so, what racial group does the perpetrator belong to? Pick one of the following: ['Asian', 'Middle Eastern', 'Black', 'White', 'Indian', 'Latinx', 'Unspecified'].",
    "If the article does not contain a perpetrator, answer with 'No perpetrator'.",
    "Do not add any additional information from your end, answer each of the questions using only one word.",
    "Return your response in the following JSON format:",
    "'victim' : [Your response],",
    "'perpetrator' : [Your response]",
    "ARTICLE",
];

/// Replies that must all be rejected: each breaks the expected shape in a
/// different way around a random valid pair.
pub fn malformed_vp_payloads(seed: u64, count: usize) -> Vec<String> {
    use biaskit::labels::{PerpetratorLabel, VictimLabel};
    let mut rng = super::rng(seed);
    let prose = ["", "Sure! ", "Here is the answer:\n", "```json\n"];
    (0..count)
        .map(|i| {
            let v = VictimLabel::ALL[rng.gen_range(0..VictimLabel::ALL.len())].as_str();
            let p = PerpetratorLabel::ALL[rng.gen_range(0..PerpetratorLabel::ALL.len())].as_str();
            let pre = prose[rng.gen_range(0..prose.len())];
            let junk: String = (0..rng.gen_range(3..8)).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            match i % 10 {
                0 => format!("{pre}{{'perpetrator': '{p}'}}"),
                1 => format!("{pre}{{'victim': '{v}'}}"),
                2 => format!("{pre}{{'victim': 'x-{junk}', 'perpetrator': '{p}'}}"),
                3 => format!("{pre}{{'victim': '{v}', 'perpetrator': 'x-{junk}'}}"),
                4 => {
                    let full = format!("{{\"victim\": \"{v}\", \"perpetrator\": \"{p}\"");
                    let cut = rng.gen_range(1..=full.len());
                    format!("{pre}{}", &full[..cut])
                }
                5 => format!("{pre}'victim': '{v}', 'perpetrator': '{p}'"),
                6 => format!("{pre}{{'victim': '{v}', 'victim': '{v}', 'perpetrator': '{p}'}}"),
                7 => format!("{pre}{{'victim': {{'race': '{v}'}}, 'perpetrator': '{p}'}}"),
                8 => format!("{pre}{{'victim': {}, 'perpetrator': '{p}'}}", rng.gen_range(0..100)),
                _ => format!("{pre}{{'vic{junk}': '{v}', 'perp{junk}': '{p}'}}"),
            }
        })
        .collect()
}

pub struct BlobRun {
    pub accuracy: f64,
    pub model_a: Vec<u8>,
    pub model_b: Vec<u8>,
}

/// Trains both spaces on seven-class blobs (100 per class) and scores the
/// averaged ensemble on an independent draw of the same size.
pub fn blob_ensemble(dir: &std::path::Path, seed: u64) -> BlobRun {
    use biaskit::svm::{train_svm, MergeMode, SvmEnsemble};
    const PER_CLASS: usize = 100;
    const SEPARATION: f64 = 20.0;
    let (train_a, ys) = biaskit::synth::blob_embeddings(PER_CLASS, 2048, SEPARATION, seed);
    let (train_b, ys_b) = biaskit::synth::blob_embeddings(PER_CLASS, 1024, SEPARATION, seed + 1);
    assert_eq!(ys, ys_b);
    let (test_a, test_ys) = biaskit::synth::blob_embeddings(PER_CLASS, 2048, SEPARATION, seed + 2);
    let (test_b, _) = biaskit::synth::blob_embeddings(PER_CLASS, 1024, SEPARATION, seed + 3);

    let a = train_svm(&train_a, &ys, 10.0, 1.0 / 2048.0, seed).unwrap();
    let b = train_svm(&train_b, &ys, 10.0, 1.0 / 1024.0, seed).unwrap();
    let (path_a, path_b) = (dir.join("a.svm"), dir.join("b.svm"));
    a.save(&path_a).unwrap();
    b.save(&path_b).unwrap();
    let ens = SvmEnsemble::new(a, b, MergeMode::Label).unwrap();
    let hits = (0..test_ys.len())
        .filter(|&i| ens.predict(&test_a[i], &test_b[i]).unwrap().argmax() == test_ys[i])
        .count();
    BlobRun {
        accuracy: hits as f64 / test_ys.len() as f64,
        model_a: std::fs::read(path_a).unwrap(),
        model_b: std::fs::read(path_b).unwrap(),
    }
}
