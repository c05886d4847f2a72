//! Classification quality and inter-rater agreement metrics.
//!
//! Labels are generic: anything `Ord + Clone` works, so the same routines
//! score race, age, emotion, sentiment, topic and victim/perpetrator tasks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Square count matrix, rows = true label, columns = predicted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix<L> {
    pub label_order: Vec<L>,
    pub counts: Vec<Vec<u64>>,
}

impl<L: Ord + Clone> ConfusionMatrix<L> {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, truth: &L, pred: &L) -> u64 {
        let i = self.label_order.iter().position(|l| l == truth);
        let j = self.label_order.iter().position(|l| l == pred);
        match (i, j) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }
}

/// Builds the confusion matrix over the sorted union of observed labels.
pub fn confusion<L: Ord + Clone>(y_true: &[L], y_pred: &[L]) -> Result<ConfusionMatrix<L>> {
    let labels: BTreeSet<L> = y_true.iter().chain(y_pred).cloned().collect();
    confusion_with_labels(y_true, y_pred, labels.into_iter().collect())
}

/// Builds the confusion matrix over an explicit label order.
pub fn confusion_with_labels<L: Ord + Clone>(
    y_true: &[L],
    y_pred: &[L],
    label_order: Vec<L>,
) -> Result<ConfusionMatrix<L>> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::InvalidInput(format!(
            "length mismatch: {} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    let index: BTreeMap<&L, usize> = label_order.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let k = label_order.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in y_true.iter().zip(y_pred) {
        let (Some(&i), Some(&j)) = (index.get(t), index.get(p)) else {
            return Err(MetricsError::InvalidInput("label outside label order".into()));
        };
        counts[i][j] += 1;
    }
    Ok(ConfusionMatrix { label_order, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvgScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport<L> {
    pub per_class: Vec<(L, ClassScores)>,
    pub macro_avg: AvgScores,
    pub weighted_avg: AvgScores,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision/recall/F1 with macro and support-weighted averages.
///
/// Undefined ratios are reported as 0 and still participate in the macro mean.
pub fn class_report<L: Ord + Clone>(cm: &ConfusionMatrix<L>) -> Result<ClassReport<L>> {
    let k = cm.label_order.len();
    let total = cm.total();
    if k == 0 || total == 0 {
        return Err(MetricsError::InvalidInput("empty confusion matrix".into()));
    }
    let row_sum: Vec<u64> = cm.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sum: Vec<u64> = (0..k).map(|j| cm.counts.iter().map(|r| r[j]).sum()).collect();

    let per_class: Vec<(L, ClassScores)> = cm
        .label_order
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let tp = cm.counts[j][j];
            let precision = ratio(tp, col_sum[j]);
            let recall = ratio(tp, row_sum[j]);
            let scores = ClassScores { precision, recall, f1: harmonic(precision, recall), support: row_sum[j] };
            (label.clone(), scores)
        })
        .collect();

    let kf = k as f64;
    let macro_avg = AvgScores {
        precision: per_class.iter().map(|(_, s)| s.precision).sum::<f64>() / kf,
        recall: per_class.iter().map(|(_, s)| s.recall).sum::<f64>() / kf,
        f1: per_class.iter().map(|(_, s)| s.f1).sum::<f64>() / kf,
    };
    let tf = total as f64;
    let weighted = |f: fn(&ClassScores) -> f64| per_class.iter().map(|(_, s)| f(s) * s.support as f64).sum::<f64>() / tf;
    let weighted_avg = AvgScores {
        precision: weighted(|s| s.precision),
        recall: weighted(|s| s.recall),
        f1: weighted(|s| s.f1),
    };
    let trace: u64 = (0..k).map(|i| cm.counts[i][i]).sum();
    Ok(ClassReport { per_class, macro_avg, weighted_avg, accuracy: trace as f64 / tf })
}

/// Cohen's kappa between two aligned label sequences.
pub fn cohens_kappa<L: Ord + Clone>(y1: &[L], y2: &[L]) -> Result<f64> {
    if y1.len() != y2.len() {
        return Err(MetricsError::InvalidInput("length mismatch".into()));
    }
    if y1.is_empty() {
        return Err(MetricsError::InvalidInput("kappa needs at least one pair".into()));
    }
    let cm = confusion(y1, y2)?;
    let n = y1.len() as f64;
    let k = cm.label_order.len();
    let observed = (0..k).map(|i| cm.counts[i][i]).sum::<u64>() as f64 / n;
    let expected: f64 = (0..k)
        .map(|i| {
            let row: u64 = cm.counts[i].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if (1.0 - expected).abs() < f64::EPSILON {
        return if (1.0 - observed).abs() < f64::EPSILON {
            Ok(1.0)
        } else {
            Err(MetricsError::Undefined("chance agreement is 1".into()))
        };
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Items × raters table of optional nominal ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterTable<L> {
    pub ratings: Vec<Vec<Option<L>>>,
}

impl<L: Ord + Clone> RaterTable<L> {
    pub fn new(ratings: Vec<Vec<Option<L>>>) -> Self {
        Self { ratings }
    }

    pub fn items(&self) -> usize {
        self.ratings.len()
    }
}

/// Krippendorff's alpha with the nominal distance metric.
///
/// Units with fewer than two ratings are not pairable and are skipped.
pub fn krippendorff_alpha<L: Ord + Clone>(table: &RaterTable<L>) -> Result<f64> {
    // Coincidence matrix o[c][k] = Σ_u n_uc (n_uk - δ_ck) / (m_u - 1).
    let mut values: BTreeMap<L, usize> = BTreeMap::new();
    for row in &table.ratings {
        for v in row.iter().flatten() {
            let next = values.len();
            values.entry(v.clone()).or_insert(next);
        }
    }
    let v = values.len();
    let mut coincidence = vec![vec![0.0f64; v]; v];
    for row in &table.ratings {
        let mut counts = vec![0usize; v];
        let mut m = 0usize;
        for val in row.iter().flatten() {
            counts[values[val]] += 1;
            m += 1;
        }
        if m < 2 {
            continue;
        }
        let denom = (m - 1) as f64;
        for c in 0..v {
            if counts[c] == 0 {
                continue;
            }
            for k in 0..v {
                let pairs = if c == k { counts[c] * (counts[c] - 1) } else { counts[c] * counts[k] };
                coincidence[c][k] += pairs as f64 / denom;
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n <= 1.0 {
        return Err(MetricsError::Undefined("no pairable ratings".into()));
    }
    let observed_disagreement: f64 = (0..v)
        .flat_map(|c| (0..v).filter(move |&k| k != c).map(move |k| (c, k)))
        .map(|(c, k)| coincidence[c][k])
        .sum::<f64>();
    let expected_disagreement: f64 = (0..v)
        .flat_map(|c| (0..v).filter(move |&k| k != c).map(move |k| (c, k)))
        .map(|(c, k)| marginals[c] * marginals[k])
        .sum::<f64>()
        / (n - 1.0);
    if expected_disagreement == 0.0 {
        // Every pairable rating carries the same value.
        return Ok(1.0);
    }
    Ok(1.0 - observed_disagreement / expected_disagreement)
}

/// Outcome of a plurality vote over one item's ratings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vote<L> {
    Majority(L),
    NoMajority,
}

impl<L> Vote<L> {
    pub fn label(&self) -> Option<&L> {
        match self {
            Vote::Majority(l) => Some(l),
            Vote::NoMajority => None,
        }
    }
}

/// Most frequent label; a tie for the top count yields `NoMajority`.
pub fn majority_vote<L: Ord + Clone>(labels: &[L]) -> Result<Vote<L>> {
    if labels.is_empty() {
        return Err(MetricsError::InvalidInput("no labels to vote on".into()));
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let mut winners = counts.iter().filter(|(_, &c)| c == top);
    let first = winners.next().map(|(l, _)| (*l).clone());
    match (first, winners.next()) {
        (Some(l), None) => Ok(Vote::Majority(l)),
        _ => Ok(Vote::NoMajority),
    }
}

/// Share of items whose coder majority matches the model prediction.
/// Items without a majority are dropped from numerator and denominator.
pub fn agreement_accuracy<L: PartialEq>(votes: &[Vote<L>], preds: &[L]) -> Result<f64> {
    if votes.len() != preds.len() {
        return Err(MetricsError::InvalidInput("votes and predictions are not aligned".into()));
    }
    let (matches, total) = votes
        .iter()
        .zip(preds)
        .filter_map(|(v, p)| v.label().map(|l| l == p))
        .fold((0usize, 0usize), |(m, t), hit| (m + hit as usize, t + 1));
    if total == 0 {
        return Err(MetricsError::Undefined("no items with a majority vote".into()));
    }
    Ok(matches as f64 / total as f64)
}

/// One row of the human-validation table: α among coders, then F1, κ and
/// accuracy of the model against the coder majority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub task: String,
    pub alpha: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub kappa: f64,
    pub accuracy: f64,
    pub items: usize,
    pub items_with_majority: usize,
}

/// Scores model predictions against a coder table.
pub fn validation_row<L: Ord + Clone>(task: &str, ratings: &RaterTable<L>, preds: &[L]) -> Result<ValidationRow> {
    if ratings.items() != preds.len() {
        return Err(MetricsError::InvalidInput("ratings and predictions are not aligned".into()));
    }
    let alpha = krippendorff_alpha(ratings)?;
    let votes = ratings
        .ratings
        .iter()
        .map(|row| {
            let present: Vec<L> = row.iter().flatten().cloned().collect();
            if present.is_empty() {
                Ok(Vote::NoMajority)
            } else {
                majority_vote(&present)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracy = agreement_accuracy(&votes, preds)?;
    let (maj, pred): (Vec<L>, Vec<L>) = votes
        .iter()
        .zip(preds)
        .filter_map(|(v, p)| v.label().map(|l| (l.clone(), p.clone())))
        .unzip();
    let kappa = cohens_kappa(&maj, &pred)?;
    let report = class_report(&confusion(&maj, &pred)?)?;
    Ok(ValidationRow {
        task: task.to_string(),
        alpha,
        f1_macro: report.macro_avg.f1,
        f1_weighted: report.weighted_avg.f1,
        kappa,
        accuracy,
        items: preds.len(),
        items_with_majority: maj.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_diagonal_and_offdiagonal() {
        let cm = confusion(&["A", "B", "A"], &["A", "B", "A"]).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 0], vec![0, 1]]);
        let cm = confusion(&["A", "A"], &["B", "B"]).unwrap();
        assert_eq!(cm.get(&"A", &"B"), 2);
        assert!(matches!(confusion(&["A"], &["A", "B"]), Err(MetricsError::InvalidInput(_))));
    }

    #[test]
    fn report_two_class_hand_example() {
        let cm = ConfusionMatrix { label_order: vec!["A", "B"], counts: vec![vec![8, 2], vec![4, 6]] };
        let r = class_report(&cm).unwrap();
        assert!((r.per_class[0].1.precision - 8.0 / 12.0).abs() < 1e-12);
        assert!((r.per_class[0].1.recall - 0.8).abs() < 1e-12);
        assert!((r.accuracy - 0.7).abs() < 1e-12);
    }

    #[test]
    fn report_zero_column_precision_is_zero() {
        let cm = ConfusionMatrix { label_order: vec!["A", "B"], counts: vec![vec![3, 0], vec![2, 0]] };
        let r = class_report(&cm).unwrap();
        assert_eq!(r.per_class[1].1.precision, 0.0);
        assert_eq!(r.per_class[1].1.f1, 0.0);
        // Still counted in the macro mean.
        assert!((r.macro_avg.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_rejects_empty() {
        let cm: ConfusionMatrix<&str> = ConfusionMatrix { label_order: vec!["A"], counts: vec![vec![0]] };
        assert!(class_report(&cm).is_err());
    }

    #[test]
    fn kappa_hand_examples() {
        assert_eq!(cohens_kappa(&["A", "B", "A"], &["A", "B", "A"]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&["A", "A", "B", "B"], &["A", "B", "A", "B"]).unwrap(), 0.0);
        assert_eq!(cohens_kappa(&["A", "A", "A", "B"], &["A", "A", "B", "B"]).unwrap(), 0.5);
        assert_eq!(cohens_kappa(&["A", "A"], &["A", "A"]).unwrap(), 1.0);
    }

    #[test]
    fn alpha_unanimous_and_exclusion() {
        let t = RaterTable::new(vec![vec![Some("A"), Some("A")], vec![Some("B"), Some("B")]]);
        assert_eq!(krippendorff_alpha(&t).unwrap(), 1.0);
        let with_single = RaterTable::new(vec![
            vec![Some("A"), Some("A")],
            vec![Some("B"), Some("B")],
            vec![Some("A"), Some("B")],
            vec![Some("B"), None],
        ]);
        let without = RaterTable::new(with_single.ratings[..3].to_vec());
        assert_eq!(krippendorff_alpha(&with_single).unwrap(), krippendorff_alpha(&without).unwrap());
        let none = RaterTable::new(vec![vec![Some("A"), None]]);
        assert!(matches!(krippendorff_alpha(&none), Err(MetricsError::Undefined(_))));
    }

    #[test]
    fn majority_rules() {
        assert_eq!(majority_vote(&["A", "A", "A", "B", "B"]).unwrap(), Vote::Majority("A"));
        assert_eq!(majority_vote(&["A", "A", "B", "B"]).unwrap(), Vote::NoMajority);
        assert_eq!(majority_vote(&["A", "A", "B", "B", "C"]).unwrap(), Vote::NoMajority);
        assert_eq!(majority_vote(&["A"]).unwrap(), Vote::Majority("A"));
        assert!(majority_vote::<&str>(&[]).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let votes: Vec<Vote<u8>> = (0..200).map(|_| Vote::Majority(1)).collect();
        let preds: Vec<u8> = (0..200).map(|i| if i < 140 { 1 } else { 0 }).collect();
        assert!((agreement_accuracy(&votes, &preds).unwrap() - 0.70).abs() < 1e-12);
        let votes = vec![Vote::Majority(1), Vote::NoMajority, Vote::Majority(0)];
        assert_eq!(agreement_accuracy(&votes, &[1, 5, 1]).unwrap(), 0.5);
        assert!(agreement_accuracy(&[Vote::<u8>::NoMajority], &[1]).is_err());
    }
}
