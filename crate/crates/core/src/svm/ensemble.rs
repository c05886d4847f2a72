use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ProbVector, SvmError, SvmModel};
use crate::faces::{FaceRecord, AGE_DIM, EMB_A_DIM, EMB_B_DIM};
use crate::labels::{AgeBracket, RaceLabel6, RaceLabel7};

/// How the seven-way vector becomes a six-way label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// Argmax over seven labels, then merge the winner.
    #[default]
    Label,
    /// Sum merged probabilities first, then argmax over six labels.
    Probs,
}

impl FromStr for MergeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label" => Ok(Self::Label),
            "probs" => Ok(Self::Probs),
            other => Err(format!("unknown merge mode `{other}` (expected label or probs)")),
        }
    }
}

pub struct SvmEnsemble {
    pub model_a: SvmModel,
    pub model_b: SvmModel,
    pub merge_map: BTreeMap<RaceLabel7, RaceLabel6>,
    pub merge_mode: MergeMode,
}

impl SvmEnsemble {
    pub fn new(model_a: SvmModel, model_b: SvmModel, merge_mode: MergeMode) -> Result<Self, SvmError> {
        if model_a.feature_dim() != EMB_A_DIM || model_b.feature_dim() != EMB_B_DIM {
            return Err(SvmError::InvalidEnsembleInput(format!(
                "models expect {}/{} dims, embeddings have {EMB_A_DIM}/{EMB_B_DIM}",
                model_a.feature_dim(),
                model_b.feature_dim()
            )));
        }
        Self::new_unchecked_dims(model_a, model_b, merge_mode)
    }

    /// Same as [`SvmEnsemble::new`] without the embedding-size check; for toy models.
    pub fn new_unchecked_dims(model_a: SvmModel, model_b: SvmModel, merge_mode: MergeMode) -> Result<Self, SvmError> {
        if model_a.label_order != model_b.label_order {
            return Err(SvmError::InvalidEnsembleInput("models were trained on different label sets".into()));
        }
        let merge_map = RaceLabel7::ALL.iter().map(|&l| (l, l.merge_to_six())).collect();
        Ok(Self { model_a, model_b, merge_map, merge_mode })
    }

    pub fn predict(&self, emb_a: &[f32], emb_b: &[f32]) -> Result<ProbVector<RaceLabel7>, SvmError> {
        ensemble_average(&self.model_a.predict_probs(emb_a)?, &self.model_b.predict_probs(emb_b)?)
    }

    /// Six-way decision from an averaged seven-way vector.
    pub fn decide(&self, p: &ProbVector<RaceLabel7>) -> (RaceLabel6, f64) {
        match self.merge_mode {
            MergeMode::Label => {
                let i = p.argmax_index();
                (self.merge_map[&p.labels[i]], p.probs[i])
            }
            MergeMode::Probs => {
                let mut merged = [0.0f64; 6];
                for (l, &v) in p.labels.iter().zip(&p.probs) {
                    merged[self.merge_map[l].index()] += v;
                }
                let mut best = 0;
                for i in 1..merged.len() {
                    if merged[i] > merged[best] {
                        best = i;
                    }
                }
                (RaceLabel6::ALL[best], merged[best])
            }
        }
    }
}

/// Element-wise mean of two distributions over the same label order.
pub fn ensemble_average<L: Copy + PartialEq>(p_a: &ProbVector<L>, p_b: &ProbVector<L>) -> Result<ProbVector<L>, SvmError> {
    if p_a.labels != p_b.labels {
        return Err(SvmError::InvalidEnsembleInput("label orders differ".into()));
    }
    let probs = p_a.probs.iter().zip(&p_b.probs).map(|(a, b)| (a + b) / 2.0).collect();
    ProbVector::new(p_a.labels.clone(), probs)
}

pub fn classify_face(rec: &FaceRecord, ens: &SvmEnsemble) -> Result<(RaceLabel6, f64), SvmError> {
    if rec.emb_a.is_empty() || rec.emb_b.is_empty() {
        return Err(SvmError::IncompleteRecord(rec.face_id.clone()));
    }
    let p = ens.predict(&rec.emb_a, &rec.emb_b)?;
    Ok(ens.decide(&p))
}

/// Most probable age bracket; ties go to the younger bracket.
pub fn age_bracket(age_probs: &[f64]) -> Result<AgeBracket, SvmError> {
    if age_probs.len() != AGE_DIM {
        return Err(SvmError::InvalidFeature(format!("age vector has {} entries", age_probs.len())));
    }
    Ok(ProbVector::new(AgeBracket::ALL.to_vec(), age_probs.to_vec())?.argmax())
}
