//! Reader and writer for the shared embedding format.
//!
//! `PREFIX.jsonl` holds one JSON object per face; `PREFIX.bin` holds, per face
//! and in manifest order, `emb_a` then `emb_b` as little-endian float32,
//! densely packed at the offsets the manifest states.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BBox, FaceDetection, FaceError, FaceRecord, EMB_A_DIM, EMB_B_DIM};
use crate::ingest::canon;
use crate::types::Gender;

/// Bytes per face in the blob.
pub const FACE_BLOB_BYTES: usize = (EMB_A_DIM + EMB_B_DIM) * 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDims {
    pub emb_a: usize,
    pub emb_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingOffsets {
    pub emb_a: u64,
    pub emb_b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifestLine {
    pub face_id: String,
    pub image_id: String,
    pub bbox: [u32; 4],
    pub confidence: f64,
    pub dims: EmbeddingDims,
    pub offsets: EmbeddingOffsets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_probs: Option<Vec<f64>>,
}

/// Blob file that accompanies a manifest (`faces.jsonl` → `faces.bin`).
pub fn blob_path_for(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn tmp_path(p: &Path) -> PathBuf {
    let mut name = p.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    p.with_file_name(name)
}

/// Writes manifest and blob through temporary files renamed into place.
pub fn write_embeddings(manifest: &Path, records: &[FaceRecord]) -> Result<(), FaceError> {
    let blob = blob_path_for(manifest);
    if let Some(dir) = manifest.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let (tmp_m, tmp_b) = (tmp_path(manifest), tmp_path(&blob));
    {
        let mut m = BufWriter::new(File::create(&tmp_m)?);
        let mut b = BufWriter::new(File::create(&tmp_b)?);
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            let base = (i * FACE_BLOB_BYTES) as u64;
            let line = EmbeddingManifestLine {
                face_id: r.face_id.clone(),
                image_id: r.detection.image_id.clone(),
                bbox: [r.detection.bbox.x, r.detection.bbox.y, r.detection.bbox.w, r.detection.bbox.h],
                confidence: r.detection.confidence,
                dims: EmbeddingDims { emb_a: EMB_A_DIM, emb_b: EMB_B_DIM },
                offsets: EmbeddingOffsets { emb_a: base, emb_b: base + (EMB_A_DIM * 4) as u64 },
                image_width: r.image_width_px,
                image_height: r.image_height_px,
                gender: r.gender_pred,
                age_probs: r.age_probs.clone(),
            };
            serde_json::to_writer(&mut m, &line).map_err(|e| FaceError::Format(e.to_string()))?;
            m.write_all(b"\n")?;
            for v in r.emb_a.iter().chain(&r.emb_b) {
                b.write_all(&v.to_le_bytes())?;
            }
        }
        m.flush()?;
        b.flush()?;
    }
    std::fs::rename(&tmp_b, &blob)?;
    std::fs::rename(&tmp_m, manifest)?;
    Ok(())
}

fn decode(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

/// Reads and validates every record. Wrong dimensions, non-dense offsets,
/// short blobs and trailing bytes are all rejected.
pub fn read_embeddings(manifest: &Path) -> Result<Vec<FaceRecord>, FaceError> {
    let blob = std::fs::read(blob_path_for(manifest))?;
    let reader = BufReader::new(File::open(manifest)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: EmbeddingManifestLine = serde_json::from_str(&line)
            .map_err(|e| FaceError::Format(format!("manifest line {}: {e}", lineno + 1)))?;
        if m.dims.emb_a != EMB_A_DIM || m.dims.emb_b != EMB_B_DIM {
            return Err(FaceError::Format(format!(
                "face {}: dims {}/{} (expected {EMB_A_DIM}/{EMB_B_DIM})",
                m.face_id, m.dims.emb_a, m.dims.emb_b
            )));
        }
        let expect_a = (out.len() * FACE_BLOB_BYTES) as u64;
        let expect_b = expect_a + (EMB_A_DIM * 4) as u64;
        if m.offsets.emb_a != expect_a || m.offsets.emb_b != expect_b {
            return Err(FaceError::Format(format!("face {}: offsets are not densely packed", m.face_id)));
        }
        let end = expect_a as usize + FACE_BLOB_BYTES;
        if blob.len() < end {
            return Err(FaceError::Format(format!("face {}: blob truncated", m.face_id)));
        }
        let record = FaceRecord {
            face_id: m.face_id,
            detection: FaceDetection {
                image_id: m.image_id,
                bbox: BBox::new(m.bbox[0], m.bbox[1], m.bbox[2], m.bbox[3]),
                confidence: m.confidence,
            },
            emb_a: decode(&blob[expect_a as usize..expect_b as usize]),
            emb_b: decode(&blob[expect_b as usize..end]),
            image_width_px: m.image_width,
            image_height_px: m.image_height,
            gender_pred: m.gender,
            age_probs: m.age_probs,
        };
        record.validate()?;
        out.push(record);
    }
    let expected = out.len() * FACE_BLOB_BYTES;
    if blob.len() != expected {
        return Err(FaceError::Format(format!("blob has {} bytes, expected {expected}", blob.len())));
    }
    Ok(out)
}

/// Deterministic pseudo-embeddings for a face, seeded by its id.
pub fn stub_embedding(face_id: &str, seed: u64, dim: usize) -> Vec<f32> {
    use rand::{Rng, SeedableRng};
    let key = canon::stable_hash(&format!("{seed}:{face_id}:{dim}"));
    let mut bytes = [0u8; 32];
    bytes[..16].copy_from_slice(&hex::decode(&key).expect("hex digest")[..16]);
    let mut rng = rand_chacha::ChaCha8Rng::from_seed(bytes);
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}
