mod common;

use biaskit::metrics::{
    agreement_accuracy, class_report, cohens_kappa, confusion, krippendorff_alpha, majority_vote, ConfusionMatrix,
    MetricsError, RaterTable, Vote,
};
use common::{oracles, suites};
use proptest::prelude::*;

#[test]
fn library_matches_enumeration_oracles() {
    let worst = suites::metrics_max_error(11, 1000);
    assert!(worst <= 1e-9, "max error {worst}");
}

#[test]
fn kappa_hand_examples() {
    assert_eq!(cohens_kappa(&["A", "A", "B", "B"], &["A", "B", "A", "B"]).unwrap(), 0.0);
    assert_eq!(cohens_kappa(&["A", "A", "A", "B"], &["A", "A", "B", "B"]).unwrap(), 0.5);
    assert_eq!(cohens_kappa(&["A", "B", "C", "A"], &["A", "B", "C", "A"]).unwrap(), 1.0);
    assert_eq!(cohens_kappa(&["A", "A"], &["A", "A"]).unwrap(), 1.0);
    assert!(matches!(cohens_kappa(&["A"], &["A", "B"]), Err(MetricsError::InvalidInput(_))));
}

#[test]
fn alpha_hand_example() {
    let t = RaterTable::new(vec![
        vec![Some('A'), Some('A')],
        vec![Some('A'), Some('A')],
        vec![Some('B'), Some('B')],
        vec![Some('A'), Some('B')],
        vec![Some('B'), None],
    ]);
    // Five A and three B values are pairable; one A-B unit disagrees.
    let a = krippendorff_alpha(&t).unwrap();
    assert!((a - 16.0 / 30.0).abs() < 1e-12, "{a}");
    let as_u8: Vec<Vec<Option<u8>>> = t.ratings.iter().map(|u| u.iter().map(|v| v.map(|c| c as u8)).collect()).collect();
    assert!((a - oracles::alpha(&as_u8).unwrap()).abs() < 1e-12);

    assert_eq!(krippendorff_alpha(&RaterTable::new(vec![vec![Some(1), Some(1)], vec![Some(2), Some(2)]])).unwrap(), 1.0);
    assert!(matches!(krippendorff_alpha(&RaterTable::new(vec![vec![Some(1), None]])), Err(MetricsError::Undefined(_))));
}

#[test]
fn class_report_hand_example() {
    let cm = ConfusionMatrix { label_order: vec!['A', 'B'], counts: vec![vec![8, 2], vec![4, 6]] };
    let r = class_report(&cm).unwrap();
    assert!((r.per_class[0].1.precision - 8.0 / 12.0).abs() < 1e-12);
    assert_eq!(r.per_class[0].1.recall, 0.8);
    assert_eq!(r.accuracy, 0.7);
    let never_predicted = ConfusionMatrix { label_order: vec!['A', 'B'], counts: vec![vec![3, 0], vec![1, 0]] };
    let r = class_report(&never_predicted).unwrap();
    assert_eq!(r.per_class[1].1.precision, 0.0);
    assert_eq!(r.macro_avg.recall, 0.5);
}

#[test]
fn macro_f1_ignores_support_but_weighted_does_not() {
    // Growing the perfectly classified class keeps every per-class precision and recall.
    let small = ConfusionMatrix { label_order: vec![0, 1, 2], counts: vec![vec![3, 1, 0], vec![1, 3, 0], vec![0, 0, 2]] };
    let large = ConfusionMatrix { label_order: vec![0, 1, 2], counts: vec![vec![3, 1, 0], vec![1, 3, 0], vec![0, 0, 20]] };
    let (a, b) = (class_report(&small).unwrap(), class_report(&large).unwrap());
    for ((_, x), (_, y)) in a.per_class.iter().zip(&b.per_class) {
        assert_eq!((x.precision, x.recall), (y.precision, y.recall));
    }
    assert!((a.macro_avg.f1 - b.macro_avg.f1).abs() < 1e-12);
    assert!((a.weighted_avg.f1 - 0.8).abs() < 1e-12);
    assert!((b.weighted_avg.f1 - 26.0 / 28.0).abs() < 1e-12);
}

#[test]
fn votes_and_accuracy() {
    assert_eq!(majority_vote(&["A", "A", "A", "B", "B"]).unwrap(), Vote::Majority("A"));
    assert_eq!(majority_vote(&["A", "A", "B", "B"]).unwrap(), Vote::NoMajority);
    assert_eq!(majority_vote(&["A"]).unwrap(), Vote::Majority("A"));
    assert!(majority_vote::<&str>(&[]).is_err());

    let votes: Vec<Vote<u8>> = (0..200).map(|_| Vote::Majority(1)).chain([Vote::NoMajority]).collect();
    let preds: Vec<u8> = (0..201).map(|i| if i < 140 { 1 } else { 0 }).collect();
    assert!((agreement_accuracy(&votes, &preds).unwrap() - 0.7).abs() < 1e-12);
    assert!(matches!(agreement_accuracy(&[Vote::<u8>::NoMajority], &[1]), Err(MetricsError::Undefined(_))));
}

fn seq(k: u8) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..30).prop_flat_map(move |n| (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)))
}

proptest! {
    #[test]
    fn perfect_predictions_score_one(y in prop::collection::vec(0u8..5, 1..40)) {
        let r = class_report(&confusion(&y, &y).unwrap()).unwrap();
        prop_assert_eq!(r.accuracy, 1.0);
        prop_assert!(r.per_class.iter().all(|(_, s)| s.f1 == 1.0));
    }

    #[test]
    fn kappa_is_symmetric((a, b) in seq(4)) {
        let (ab, ba) = (cohens_kappa(&a, &b), cohens_kappa(&b, &a));
        if let (Ok(x), Ok(y)) = (ab, ba) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_of_self_is_one(y in prop::collection::vec(0u8..4, 2..30)) {
        prop_assume!(y.iter().any(|v| *v != y[0]));
        prop_assert!((cohens_kappa(&y, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_ignores_label_names(units in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.8, 0u8..4), 2..5), 1..12)) {
        let renamed: Vec<Vec<Option<char>>> =
            units.iter().map(|u| u.iter().map(|v| v.map(|x| ['z', 'a', 'm', 'q'][x as usize])).collect()).collect();
        match (krippendorff_alpha(&RaterTable::new(units)), krippendorff_alpha(&RaterTable::new(renamed))) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn confusion_conserves_mass((a, b) in seq(6)) {
        prop_assert_eq!(confusion(&a, &b).unwrap().total(), a.len() as u64);
    }
}
