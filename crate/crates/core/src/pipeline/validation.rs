//! Scoring model output against human codes.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::files::{ClassifiedFace, PredictionLine, RatingsLine};
use super::report::{Cell, ReportTable};
use super::PipelineError;
use crate::annotate::AnnotationRecord;
use crate::labels::{AgeBracket, EmotionLabel, PerpetratorLabel, RaceLabel6, SentimentLabel, TopicLabel, VictimLabel};
use crate::metrics::{validation_row, RaterTable, ValidationRow};
use crate::types::Gender;

/// Tasks of the validation table. `Category` is the article topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationTask {
    Race,
    Age,
    Gender,
    Emotion,
    Sentiment,
    Category,
    Victim,
    Perpetrator,
}

impl ValidationTask {
    pub const ALL: [ValidationTask; 8] = [
        ValidationTask::Race,
        ValidationTask::Age,
        ValidationTask::Gender,
        ValidationTask::Emotion,
        ValidationTask::Sentiment,
        ValidationTask::Category,
        ValidationTask::Victim,
        ValidationTask::Perpetrator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValidationTask::Race => "race",
            ValidationTask::Age => "age",
            ValidationTask::Gender => "gender",
            ValidationTask::Emotion => "emotion",
            ValidationTask::Sentiment => "sentiment",
            ValidationTask::Category => "category",
            ValidationTask::Victim => "victim",
            ValidationTask::Perpetrator => "perpetrator",
        }
    }

    /// Canonical spelling of a label, or an error when it is outside the task's set.
    pub fn canonical(self, label: &str) -> Result<String, String> {
        fn canon<T: FromStr + ToString>(s: &str) -> Option<String> {
            s.parse::<T>().ok().map(|v| v.to_string())
        }
        let out = match self {
            ValidationTask::Race => canon::<RaceLabel6>(label),
            ValidationTask::Age => canon::<AgeBracket>(label),
            ValidationTask::Gender => canon::<Gender>(label),
            ValidationTask::Emotion => canon::<EmotionLabel>(label),
            ValidationTask::Sentiment => canon::<SentimentLabel>(label),
            ValidationTask::Category => canon::<TopicLabel>(label),
            ValidationTask::Victim => canon::<VictimLabel>(label),
            ValidationTask::Perpetrator => canon::<PerpetratorLabel>(label),
        };
        out.ok_or_else(|| format!("`{label}` is not a {} label", self.as_str()))
    }

    /// Whether predictions come from classified faces (otherwise annotations).
    pub fn on_faces(self) -> bool {
        matches!(self, ValidationTask::Race | ValidationTask::Age | ValidationTask::Gender)
    }
}

impl FromStr for ValidationTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ValidationTask::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown validation task `{s}`"))
    }
}

impl std::fmt::Display for ValidationTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Predictions of one task taken from classified faces.
pub fn face_predictions(task: ValidationTask, faces: &[ClassifiedFace]) -> Vec<PredictionLine> {
    faces
        .iter()
        .filter_map(|f| {
            let label = match task {
                ValidationTask::Race => Some(f.race.to_string()),
                ValidationTask::Age => f.age.map(|a| a.to_string()),
                ValidationTask::Gender => f.gender.map(|g| g.to_string()),
                _ => None,
            }?;
            Some(PredictionLine { item_id: f.face_id.clone(), label })
        })
        .collect()
}

/// Predictions of one task taken from article annotations.
pub fn annotation_predictions(task: ValidationTask, records: &[AnnotationRecord]) -> Vec<PredictionLine> {
    records
        .iter()
        .filter_map(|r| {
            let label = match task {
                ValidationTask::Race => r.race.map(|x| x.to_string()),
                ValidationTask::Emotion => r.emotion.map(|x| x.to_string()),
                ValidationTask::Sentiment => r.sentiment.map(|x| x.to_string()),
                ValidationTask::Category => r.topic.map(|x| x.to_string()),
                ValidationTask::Victim => r.vp.map(|x| x.victim.to_string()),
                ValidationTask::Perpetrator => r.vp.map(|x| x.perpetrator.to_string()),
                _ => None,
            }?;
            Some(PredictionLine { item_id: r.article_id.clone(), label })
        })
        .collect()
}

/// Reads predictions for `task` from a JSONL file of prediction lines,
/// classified faces or annotation records (detected per line).
pub fn read_predictions(task: ValidationTask, path: &Path) -> Result<Vec<PredictionLine>, PipelineError> {
    let bad = |line: usize, e: &dyn std::fmt::Display| PipelineError::Validation(format!("{}:{line}: {e}", path.display()));
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(i + 1, &e))?;
        if v.get("label").is_some() && v.get("item_id").is_some() {
            out.push(serde_json::from_value(v).map_err(|e| bad(i + 1, &e))?);
        } else if v.get("face_id").is_some() {
            let f: ClassifiedFace = serde_json::from_value(v).map_err(|e| bad(i + 1, &e))?;
            out.extend(face_predictions(task, std::slice::from_ref(&f)));
        } else if v.get("article_id").is_some() {
            let r: AnnotationRecord = serde_json::from_value(v).map_err(|e| bad(i + 1, &e))?;
            out.extend(annotation_predictions(task, std::slice::from_ref(&r)));
        } else {
            return Err(bad(i + 1, &"not a prediction, classified face or annotation"));
        }
    }
    Ok(out)
}

/// Scores one task. Items are the task's ratings lines in file order; each
/// needs a prediction.
pub fn validate_task(
    task: ValidationTask,
    preds: &[PredictionLine],
    ratings: &[RatingsLine],
) -> Result<ValidationRow, PipelineError> {
    let bad = PipelineError::Validation;
    let by_id: HashMap<&str, &str> = preds.iter().map(|p| (p.item_id.as_str(), p.label.as_str())).collect();
    let mut table = Vec::new();
    let mut labels = Vec::new();
    for line in ratings.iter().filter(|l| l.task.eq_ignore_ascii_case(task.as_str())) {
        let pred = by_id
            .get(line.item_id.as_str())
            .ok_or_else(|| bad(format!("no {task} prediction for item {}", line.item_id)))?;
        labels.push(task.canonical(pred).map_err(bad)?);
        let row = line
            .ratings
            .iter()
            .map(|r| r.as_deref().map(|l| task.canonical(l)).transpose())
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        table.push(row);
    }
    if table.is_empty() {
        return Err(bad(format!("no ratings for task {task}")));
    }
    validation_row(task.as_str(), &RaterTable::new(table), &labels).map_err(|e| bad(format!("{task}: {e}")))
}

pub fn validation_table(rows: &[ValidationRow]) -> ReportTable {
    let mut t = ReportTable::new(
        "table6_validation",
        &["task", "alpha", "f1_macro", "f1_weighted", "kappa", "accuracy", "items", "items_with_majority"],
    );
    for r in rows {
        t.push(vec![
            Cell::text(&r.task),
            Cell::num(r.alpha),
            Cell::num(r.f1_macro),
            Cell::num(r.f1_weighted),
            Cell::num(r.kappa),
            Cell::num(r.accuracy),
            Cell::int(r.items as u64),
            Cell::int(r.items_with_majority as u64),
        ]);
    }
    t
}
