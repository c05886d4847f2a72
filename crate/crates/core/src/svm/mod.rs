//! Race classification: two calibrated RBF SVMs over the two embedding
//! spaces, averaged, then merged to six labels. Age brackets pass through.

pub mod kernel;
mod ensemble;
mod model;
pub mod platt;
pub mod smo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ensemble::{age_bracket, classify_face, ensemble_average, MergeMode, SvmEnsemble};
pub use model::{
    audit_kkt, default_grid, grid_search, train_svm, BinaryMachine, GridChoice, Kernel, Platt, SvmModel,
    TrainingMeta, KKT_TOLERANCE, MODEL_FORMAT, MODEL_VERSION,
};

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("invalid feature: {0}")]
    InvalidFeature(String),
    #[error("invalid ensemble input: {0}")]
    InvalidEnsembleInput(String),
    #[error("incomplete face record {0}")]
    IncompleteRecord(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
}

/// A probability distribution over an ordered label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector<L> {
    pub labels: Vec<L>,
    pub probs: Vec<f64>,
}

impl<L: Copy + PartialEq> ProbVector<L> {
    /// Validates non-negativity and unit sum (±1e-6).
    pub fn new(labels: Vec<L>, probs: Vec<f64>) -> Result<Self, SvmError> {
        if labels.len() != probs.len() || labels.is_empty() {
            return Err(SvmError::InvalidFeature(format!(
                "{} labels for {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SvmError::InvalidFeature("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(SvmError::InvalidFeature(format!("probabilities sum to {sum}")));
        }
        Ok(Self { labels, probs })
    }

    /// Index of the largest entry; ties keep the earliest.
    pub fn argmax_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmax(&self) -> L {
        self.labels[self.argmax_index()]
    }

    pub fn get(&self, label: L) -> Option<f64> {
        self.labels.iter().position(|&l| l == label).map(|i| self.probs[i])
    }
}
