//! File formats that pass between stages.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::faces::BBox;
use crate::ingest::store::write_atomic;
use crate::labels::{AgeBracket, RaceLabel6, RaceLabel7};
use crate::types::Gender;

/// Output of the classify stage, one line per face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedFace {
    pub face_id: String,
    pub image_id: String,
    pub race: RaceLabel6,
    pub confidence: f64,
    /// Averaged seven-way probabilities in `RaceLabel7::ALL` order.
    pub probs: Vec<f64>,
    pub gender: Option<Gender>,
    pub age: Option<AgeBracket>,
    pub bbox: BBox,
    pub image_width: Option<u32>,
    pub image_height: Option<u32>,
}

/// One model prediction for the validation stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub item_id: String,
    pub label: String,
}

/// Human codes for one item; `null` marks a coder who skipped it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingsLine {
    pub item_id: String,
    pub task: String,
    pub ratings: Vec<Option<String>>,
}

/// Training label for one face of a labelled face set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingLabel {
    pub face_id: String,
    pub label: RaceLabel7,
}

fn invalid(path: &Path, line: usize, e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{line}: {e}", path.display()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| invalid(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("records serialize");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    write_atomic(path, &jsonl_bytes(items))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut v = serde_json::to_vec_pretty(value).expect("values serialize");
    v.push(b'\n');
    write_atomic(path, &v)
}

/// Training labels as CSV with a `face_id,label` header.
pub fn read_training_labels(path: &Path) -> std::io::Result<Vec<TrainingLabel>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| invalid(path, 0, e))?;
    r.deserialize().enumerate().map(|(i, rec)| rec.map_err(|e| invalid(path, i + 2, e))).collect()
}

pub fn write_training_labels(path: &Path, labels: &[TrainingLabel]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for l in labels {
        w.serialize(l).map_err(std::io::Error::other)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_bytes(&fs::read(path)?))
}

/// Hash of every file under `root`, keyed by relative path with `/` separators.
pub fn hash_tree(root: &Path) -> std::io::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if !root.exists() {
        return Ok(out);
    }
    if root.is_file() {
        out.insert(String::new(), sha256_file(root)?);
        return Ok(out);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("under root");
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(key, sha256_file(&p)?);
            }
        }
    }
    Ok(out)
}

/// Single digest over a tree's per-file hashes.
pub fn tree_digest(root: &Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    for (k, v) in hash_tree(root)? {
        h.update(k.as_bytes());
        h.update(b"\0");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}
