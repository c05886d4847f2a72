//! Seeded synthetic data with known generative proportions.
//!
//! The text and face generators draw every label from the tables in
//! [`planted`], so estimators can be checked against exact expectations.
//! [`blob_embeddings`] produces separable seven-class embeddings for
//! classifier training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::annotate::VictimPerpRecord;
use crate::labels::{
    AgeBracket, EmotionLabel, PerpetratorLabel, RaceLabel6, RaceLabel7, SentimentLabel, TopicLabel, VictimLabel,
};
use crate::stats::{FaceObservation, TextObservation, YEARS};
use crate::types::{CategoryLabel, Gender, VenueId};

pub const TEXT_RECORDS: usize = 10_000;
pub const FACE_RECORDS: usize = 5_000;

/// The generative tables. Race vectors follow `RaceLabel6::ALL` order,
/// emotion vectors follow `EmotionLabel::non_neutral()` order.
pub mod planted {
    use super::*;

    const BASE_RACE: [f64; 6] = [0.08, 0.12, 0.04, 0.08, 0.08, 0.60];
    const WHITE: usize = 5;

    fn idx(r: RaceLabel6) -> usize {
        r.index()
    }

    /// Adds `deltas` and takes the balance from White.
    fn shifted(deltas: &[(RaceLabel6, f64)]) -> [f64; 6] {
        let mut p = BASE_RACE;
        for &(r, d) in deltas {
            p[idx(r)] += d;
            p[WHITE] -= d;
        }
        p
    }

    /// Pins one race at `share` and rescales the others to fill the rest.
    fn pinned(race: RaceLabel6, share: f64) -> [f64; 6] {
        let k = idx(race);
        let rest = 1.0 - BASE_RACE[k];
        let mut p = [0.0; 6];
        for i in 0..6 {
            p[i] = if i == k { share } else { BASE_RACE[i] / rest * (1.0 - share) };
        }
        p
    }

    pub fn face_race(venue: VenueId, category: CategoryLabel) -> [f64; 6] {
        use RaceLabel6::*;
        let fox = venue == VenueId::Fox;
        match category {
            CategoryLabel::Sport => shifted(&[(Black, if fox { 0.20 } else { 0.15 }), (Latinx, 0.03)]),
            CategoryLabel::Food => shifted(&[(Asian, 0.06), (Indian, 0.03)]),
            CategoryLabel::Travel => shifted(&[(Latinx, 0.04), (MiddleEastern, if fox { 0.0 } else { 0.02 })]),
            _ => shifted(&[(Black, if fox { 0.0 } else { 0.04 })]),
        }
    }

    pub fn male_share(venue: VenueId, category: CategoryLabel) -> f64 {
        let fox = venue == VenueId::Fox;
        match category {
            CategoryLabel::Sport => if fox { 0.89 } else { 0.75 },
            CategoryLabel::Food => if fox { 0.50 } else { 0.48 },
            CategoryLabel::Travel => if fox { 0.56 } else { 0.50 },
            _ => if fox { 0.55 } else { 0.52 },
        }
    }

    /// Follows `AgeBracket::ALL` order.
    pub fn age(venue: VenueId) -> [f64; 5] {
        match venue {
            VenueId::Nyt => [0.04, 0.07, 0.48, 0.30, 0.11],
            VenueId::Fox => [0.03, 0.05, 0.44, 0.33, 0.15],
        }
    }

    pub fn mean_age(venue: VenueId) -> f64 {
        age(venue).iter().zip(AgeBracket::ALL).map(|(p, b)| p * b.midpoint()).sum()
    }

    /// Follows `TopicLabel::ALL` order.
    pub fn topic(venue: VenueId) -> Vec<f64> {
        let mut w: Vec<f64> = (0..TopicLabel::ALL.len()).map(|i| 1.0 + ((i * 7) % 5) as f64).collect();
        w[TopicLabel::Politics.index()] *= 3.0;
        match venue {
            VenueId::Fox => {
                w[TopicLabel::Immigration.index()] *= 2.0;
                w[TopicLabel::Terrorism.index()] *= 2.0;
            }
            VenueId::Nyt => {
                w[TopicLabel::Science.index()] *= 2.0;
                w[TopicLabel::Entertainment.index()] *= 2.0;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }

    pub fn race_given_topic(venue: VenueId, topic: TopicLabel, year: i32) -> [f64; 6] {
        use RaceLabel6::*;
        let fox = venue == VenueId::Fox;
        match topic {
            TopicLabel::Terrorism => pinned(MiddleEastern, if fox { 0.954 } else { 0.80 }),
            // Drifts linearly from 0.2 to 0.8 over the decade.
            TopicLabel::War => pinned(MiddleEastern, 0.2 + 0.6 * (year - YEARS.start()) as f64 / 10.0),
            TopicLabel::Immigration => pinned(Latinx, if fox { 0.55 } else { 0.45 }),
            TopicLabel::Disease => pinned(Asian, 0.35),
            TopicLabel::Poverty => pinned(Black, 0.30),
            _ => BASE_RACE,
        }
    }

    /// Expectation over uniformly drawn years.
    pub fn race_given_topic_avg(venue: VenueId, topic: TopicLabel) -> [f64; 6] {
        let mut p = [0.0; 6];
        let years = YEARS.count() as f64;
        for y in YEARS {
            for (acc, v) in p.iter_mut().zip(race_given_topic(venue, topic, y)) {
                *acc += v / years;
            }
        }
        p
    }

    pub const NEUTRAL_SHARE: f64 = 0.35;

    pub fn emotion(venue: VenueId, race: RaceLabel6) -> [f64; 6] {
        use RaceLabel6::*;
        // Disgust, Fear, Joy, Anger, Sadness, Surprise
        let mut p = [0.08, 0.22, 0.20, 0.20, 0.20, 0.10];
        match (venue, race) {
            (VenueId::Fox, Black | MiddleEastern | Latinx) => {
                p[3] += 0.08;
                p[1] += 0.04;
                p[2] -= 0.12;
            }
            (VenueId::Nyt, White) => {
                p[2] += 0.05;
                p[4] -= 0.05;
            }
            _ => {}
        }
        p
    }

    pub fn positive(venue: VenueId, race: RaceLabel6) -> f64 {
        let nyt = [0.52, 0.49, 0.53, 0.48, 0.47, 0.51];
        let fox = [0.56, 0.44, 0.55, 0.43, 0.40, 0.57];
        match venue {
            VenueId::Nyt => nyt[idx(race)],
            VenueId::Fox => fox[idx(race)],
        }
    }

    pub fn balance(venue: VenueId, race: RaceLabel6) -> f64 {
        100.0 * (2.0 * positive(venue, race) - 1.0)
    }

    pub const VP_SHARE: f64 = 0.4;

    pub fn victim() -> [f64; 6] {
        BASE_RACE
    }

    /// Perpetrator distribution for a victim race.
    pub fn vp_row(venue: VenueId, victim: RaceLabel6) -> [f64; 6] {
        if venue == VenueId::Nyt && victim == RaceLabel6::Black {
            let mut p = [0.01; 6];
            p[WHITE] = 0.92;
            p[idx(RaceLabel6::Black)] = 0.04;
            return p;
        }
        if victim == RaceLabel6::White {
            let mut p = [0.05; 6];
            p[WHITE] = 0.75;
            return p;
        }
        let mut p = [0.25 / 4.0; 6];
        p[idx(victim)] = 0.45;
        p[WHITE] = 0.30;
        p
    }
}

fn draw(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A generated corpus: text observations, face observations and the
/// image dimensions behind each face's area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub text: Vec<TextObservation>,
    pub faces: Vec<FaceObservation>,
    pub image_dims: Vec<(u32, u32)>,
}

pub fn synthetic_corpus(seed: u64) -> SyntheticCorpus {
    synthetic_corpus_sized(seed, TEXT_RECORDS, FACE_RECORDS)
}

pub fn synthetic_corpus_sized(seed: u64, text_records: usize, face_records: usize) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let years: Vec<i32> = YEARS.collect();
    let mut text = Vec::with_capacity(text_records);
    for i in 0..text_records {
        let venue = VenueId::ALL[i % 2];
        let year = years[rng.gen_range(0..years.len())];
        let topic = TopicLabel::ALL[draw(&mut rng, &planted::topic(venue))];
        let race = RaceLabel6::ALL[draw(&mut rng, &planted::race_given_topic(venue, topic, year))];
        let emotion = if rng.gen_bool(planted::NEUTRAL_SHARE) {
            EmotionLabel::Neutral
        } else {
            let non_neutral: Vec<EmotionLabel> = EmotionLabel::non_neutral().collect();
            non_neutral[draw(&mut rng, &planted::emotion(venue, race))]
        };
        let sentiment = if rng.gen_bool(planted::positive(venue, race)) {
            SentimentLabel::Positive
        } else {
            SentimentLabel::Negative
        };
        let vp = if rng.gen_bool(planted::VP_SHARE) {
            let u: f64 = rng.gen();
            if u < 0.9 {
                let victim = RaceLabel6::ALL[draw(&mut rng, &planted::victim())];
                let perpetrator = if rng.gen_bool(0.9) {
                    PerpetratorLabel::from(RaceLabel6::ALL[draw(&mut rng, &planted::vp_row(venue, victim))])
                } else {
                    PerpetratorLabel::Unspecified
                };
                VictimPerpRecord { victim: VictimLabel::from(victim), perpetrator }
            } else {
                VictimPerpRecord { victim: VictimLabel::Unspecified, perpetrator: PerpetratorLabel::Unspecified }
            }
        } else {
            VictimPerpRecord { victim: VictimLabel::NoVictim, perpetrator: PerpetratorLabel::NoPerpetrator }
        };
        text.push(TextObservation {
            article_id: format!("syn-text-{i:05}"),
            venue,
            year,
            emotion: Some(emotion),
            sentiment: Some(sentiment),
            topic: Some(topic),
            race: Some(race),
            vp: Some(vp),
        });
    }

    let mut faces = Vec::with_capacity(face_records);
    let mut image_dims = Vec::with_capacity(face_records);
    for j in 0..face_records {
        let venue = VenueId::ALL[j % 2];
        let category = CategoryLabel::IMAGE_CATEGORIES[(j / 2) % 4];
        let race = RaceLabel6::ALL[draw(&mut rng, &planted::face_race(venue, category))];
        let gender = if rng.gen_bool(planted::male_share(venue, category)) { Gender::Male } else { Gender::Female };
        let age = AgeBracket::ALL[draw(&mut rng, &planted::age(venue))];
        let w: u32 = rng.gen_range(300..=1600);
        let h: u32 = (w as f64 * rng.gen_range(0.5..1.0)).round() as u32;
        faces.push(FaceObservation {
            face_id: format!("syn-face-{j:05}"),
            venue,
            category,
            race,
            gender: Some(gender),
            age: Some(age),
            area: Some(w as u64 * h as u64),
        });
        image_dims.push((w, h));
    }
    SyntheticCorpus { seed, text, faces, image_dims }
}

/// Seven Gaussian classes in `dim` dimensions with unit noise; class `k`
/// is centred at `separation * e_k`. Rows are interleaved by class.
pub fn blob_embeddings(n_per_class: usize, dim: usize, separation: f64, seed: u64) -> (Vec<Vec<f32>>, Vec<RaceLabel7>) {
    assert!(dim >= RaceLabel7::ALL.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n_per_class * 7);
    let mut ys = Vec::with_capacity(n_per_class * 7);
    for _ in 0..n_per_class {
        for (k, &label) in RaceLabel7::ALL.iter().enumerate() {
            let mut x: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            x[k] += separation as f32;
            xs.push(x);
            ys.push(label);
        }
    }
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_vectors_are_distributions() {
        for v in VenueId::ALL {
            for c in CategoryLabel::IMAGE_CATEGORIES {
                assert!((planted::face_race(v, c).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert!((planted::age(v).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((planted::topic(v).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for t in TopicLabel::ALL {
                for y in YEARS {
                    let p = planted::race_given_topic(v, *t, y);
                    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12 && p.iter().all(|x| *x >= 0.0));
                }
            }
            for r in RaceLabel6::ALL {
                assert!((planted::emotion(v, *r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!((planted::vp_row(v, *r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = synthetic_corpus_sized(5, 200, 100);
        assert_eq!(a, synthetic_corpus_sized(5, 200, 100));
        assert_ne!(a, synthetic_corpus_sized(6, 200, 100));
        assert_eq!(blob_embeddings(2, 8, 3.0, 1), blob_embeddings(2, 8, 3.0, 1));
    }
}
