mod common;

use std::collections::BTreeMap;

use biaskit::special::{chi2_sf, student_t_two_sided};
use biaskit::stats::{
    chi2_2x2, chi2_table, normalized_areas, pooled_t, sentiment_balance, welch_t, zscore_by_venue, zscores,
    ContingencyTable, StatsError,
};
use biaskit::synth::{synthetic_corpus, synthetic_corpus_sized};
use biaskit::types::VenueId;
use common::{oracles, suites};
use proptest::prelude::*;

#[test]
fn chi2_worked_example() {
    let (stat, p) = chi2_2x2(&ContingencyTable::new([[20, 10], [10, 20]])).unwrap();
    assert!((stat - 20.0 / 3.0).abs() < 1e-12);
    assert!((p - 0.009823).abs() < 1e-5, "{p}");
    let full = chi2_table(&[vec![20, 10], vec![10, 20]]).unwrap();
    assert!((full.statistic - stat).abs() < 1e-12 && (full.p_value - p).abs() < 1e-12);
    assert!(matches!(chi2_2x2(&ContingencyTable::new([[0, 10], [0, 20]])), Err(StatsError::TestUndefined(_))));
}

#[test]
fn welch_worked_example() {
    let r = welch_t(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]).unwrap();
    // Means 2.5 and 4.5, both variances 5/3: t = -2 / sqrt(5/6).
    assert!((r.t + 2.0 / (5.0f64 / 6.0).sqrt()).abs() < 1e-12, "{}", r.t);
    assert!((r.dof - 6.0).abs() < 1e-12);
    assert!((r.p_value - oracles::t_two_sided(r.t, r.dof)).abs() < 1e-9);
    let pooled = pooled_t(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]).unwrap();
    assert!((pooled.t - r.t).abs() < 1e-12);
    assert!(matches!(welch_t(&[1.0, 1.0], &[2.0, 2.0]), Err(StatsError::TestUndefined(_))));
    assert!(matches!(welch_t(&[1.0], &[2.0, 3.0]), Err(StatsError::InvalidInput(_))));
}

#[test]
fn pvalues_match_numeric_integration() {
    let worst = suites::pvalue_max_error(17, 500);
    assert!(worst <= 1e-6, "max error {worst}");
}

#[test]
fn tail_functions_at_known_points() {
    assert!((chi2_sf(3.841458820694124, 1.0) - 0.05).abs() < 1e-12);
    assert!((chi2_sf(5.991464547107979, 2.0) - 0.05).abs() < 1e-12);
    assert!((student_t_two_sided(2.0, 1.0) - (1.0 - 2.0 * 2.0f64.atan() / std::f64::consts::PI)).abs() < 1e-12);
    assert_eq!(chi2_sf(0.0, 3.0), 1.0);
}

#[test]
fn zscore_examples() {
    assert_eq!(zscores(&[1.0, 2.0, 3.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
    assert_eq!(zscores(&[4.0]), None);
    assert_eq!(zscores(&[2.0, 2.0, 2.0]), None);

    let corpus = synthetic_corpus_sized(2, 0, 2000);
    let z = normalized_areas(&corpus.faces);
    let mut by_venue: BTreeMap<VenueId, Vec<f64>> = BTreeMap::new();
    for (f, z) in corpus.faces.iter().zip(&z) {
        by_venue.entry(f.venue).or_default().push(z.unwrap());
    }
    for zs in by_venue.values() {
        let n = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / n;
        let sd = (zs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9, "{mean} {sd}");
    }
}

#[test]
fn sentiment_balance_examples() {
    assert_eq!(sentiment_balance(60, 40).unwrap(), 20.0);
    assert_eq!(sentiment_balance(0, 5).unwrap(), -100.0);
    assert!(sentiment_balance(0, 0).is_err());
}

#[test]
fn planted_proportions_are_recovered() {
    let r = suites::planted_recovery(&synthetic_corpus(7));
    assert!(r.cells > 500, "{} cells", r.cells);
    assert!(r.share() >= 0.99, "{}/{} within 3 SE; misses: {:#?}", r.within, r.cells, r.misses);
    assert!(r.invariant_error <= 1e-9, "{}", r.invariant_error);
}

proptest! {
    #[test]
    fn zscores_are_standardised_and_scale_free(
        xs in prop::collection::vec(-1e3f64..1e3, 2..60),
        scale in 1e-3f64..1e3,
        shift in -1e3f64..1e3,
    ) {
        let Some(z) = zscores(&xs) else { return Ok(()) };
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((sd - 1.0).abs() < 1e-9);
        let moved: Vec<f64> = xs.iter().map(|x| x * scale + shift).collect();
        let z2 = zscores(&moved).unwrap();
        for (a, b) in z.iter().zip(&z2) {
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn venues_are_standardised_separately(a in prop::collection::vec(0f64..1e6, 3..20), b in prop::collection::vec(0f64..1e6, 3..20)) {
        let z = zscore_by_venue(&BTreeMap::from([(VenueId::Nyt, a.clone()), (VenueId::Fox, b)]));
        prop_assert_eq!(z[&VenueId::Nyt].clone(), zscores(&a));
    }
}
