//! Face detections, embedding records and image-area normalisation.

mod embedding_file;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding_file::{
    blob_path_for, read_embeddings, stub_embedding, write_embeddings, EmbeddingManifestLine, FACE_BLOB_BYTES,
};

use crate::ingest::ImageRef;
use crate::types::{Gender, VenueId};

pub const EMB_A_DIM: usize = 2048;
pub const EMB_B_DIM: usize = 1024;
pub const AGE_DIM: usize = 5;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.9;

#[derive(Debug, Error)]
pub enum FaceError {
    #[error("image {0} has no recorded dimensions")]
    AreaUnavailable(String),
    #[error("invalid face record {face_id}: {reason}")]
    InvalidRecord { face_id: String, reason: String },
    #[error("embedding file: {0}")]
    Format(String),
    #[error("embedding file io: {0}")]
    Io(#[from] std::io::Error),
}

/// Bounding box in pixels: top-left corner, width, height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.x as u64 + self.w as u64 <= width as u64 && self.y as u64 + self.h as u64 <= height as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceDetection {
    pub image_id: String,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Keeps detections whose confidence strictly exceeds `min_conf`, in order.
pub fn filter_detections(dets: &[FaceDetection], min_conf: f64) -> Vec<FaceDetection> {
    dets.iter().filter(|d| d.confidence > min_conf).cloned().collect()
}

pub fn face_bbox_area(det: &FaceDetection) -> u64 {
    det.bbox.area()
}

/// Pixel area of a stored image.
pub fn image_area(image: &ImageRef) -> Result<u64, FaceError> {
    match (image.width_px, image.height_px) {
        (Some(w), Some(h)) if w > 0 && h > 0 => Ok(w as u64 * h as u64),
        _ => Err(FaceError::AreaUnavailable(image.image_id.clone())),
    }
}

/// Which area feeds the prominence statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaMode {
    /// Whole image, width × height.
    #[default]
    Image,
    /// The face bounding box.
    FaceBbox,
}

/// Per-venue z-scores of integer areas. Venues whose scores are undefined
/// (one observation or zero variance) map to `None` and are excluded from
/// downstream tests.
pub fn zscore_by_venue(areas: &BTreeMap<VenueId, Vec<u64>>) -> BTreeMap<VenueId, Option<Vec<f64>>> {
    areas
        .iter()
        .map(|(&v, xs)| {
            let as_f: Vec<f64> = xs.iter().map(|&a| a as f64).collect();
            (v, crate::stats::zscores(&as_f))
        })
        .collect()
}

/// One detected face with both embeddings and optional external attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub face_id: String,
    pub detection: FaceDetection,
    pub emb_a: Vec<f32>,
    pub emb_b: Vec<f32>,
    pub image_width_px: Option<u32>,
    pub image_height_px: Option<u32>,
    pub gender_pred: Option<Gender>,
    pub age_probs: Option<Vec<f64>>,
}

impl FaceRecord {
    pub fn image_id(&self) -> &str {
        &self.detection.image_id
    }

    pub fn validate(&self) -> Result<(), FaceError> {
        let bad = |reason: String| Err(FaceError::InvalidRecord { face_id: self.face_id.clone(), reason });
        if self.emb_a.len() != EMB_A_DIM {
            return bad(format!("emb_a has {} dims, expected {EMB_A_DIM}", self.emb_a.len()));
        }
        if self.emb_b.len() != EMB_B_DIM {
            return bad(format!("emb_b has {} dims, expected {EMB_B_DIM}", self.emb_b.len()));
        }
        let c = self.detection.confidence;
        if !(0.0..=1.0).contains(&c) {
            return bad(format!("confidence {c} outside [0, 1]"));
        }
        if self.detection.bbox.w == 0 || self.detection.bbox.h == 0 {
            return bad("empty bounding box".into());
        }
        if let (Some(w), Some(h)) = (self.image_width_px, self.image_height_px) {
            if !self.detection.bbox.fits_within(w, h) {
                return bad("bounding box outside image".into());
            }
        }
        if let Some(p) = &self.age_probs {
            let sum: f64 = p.iter().sum();
            if p.len() != AGE_DIM || p.iter().any(|v| *v < 0.0 || !v.is_finite()) || (sum - 1.0).abs() > 1e-6 {
                return bad("age_probs is not a 5-way probability vector".into());
            }
        }
        Ok(())
    }

    /// Area of the face under the chosen mode, when available.
    pub fn area(&self, mode: AreaMode) -> Option<u64> {
        match mode {
            AreaMode::FaceBbox => Some(self.detection.bbox.area()),
            AreaMode::Image => match (self.image_width_px, self.image_height_px) {
                (Some(w), Some(h)) => Some(w as u64 * h as u64),
                _ => None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(c: f64) -> FaceDetection {
        FaceDetection { image_id: "i".into(), bbox: BBox::new(0, 0, 10, 10), confidence: c }
    }

    #[test]
    fn filter_is_strict() {
        let kept = filter_detections(&[det(0.95), det(0.85)], 0.9);
        assert_eq!(kept, vec![det(0.95)]);
        assert!(filter_detections(&[det(0.9)], 0.9).is_empty());
        assert!(filter_detections(&[], 0.9).is_empty());
    }

    #[test]
    fn areas() {
        let img = |w, h| ImageRef {
            image_id: "i".into(),
            source_url: String::new(),
            width_px: w,
            height_px: h,
            bytes_path: String::new(),
            fetched: true,
        };
        assert_eq!(image_area(&img(Some(100), Some(200))).unwrap(), 20_000);
        assert_eq!(image_area(&img(Some(1), Some(1))).unwrap(), 1);
        assert_eq!(image_area(&img(Some(640), Some(480))).unwrap(), 307_200);
        assert!(matches!(image_area(&img(None, Some(3))), Err(FaceError::AreaUnavailable(_))));

        assert_eq!(face_bbox_area(&det(1.0)), 100);
        let d = FaceDetection { image_id: "i".into(), bbox: BBox::new(5, 5, 3, 4), confidence: 1.0 };
        assert_eq!(face_bbox_area(&d), 12);
        let full = FaceDetection { image_id: "i".into(), bbox: BBox::new(0, 0, 640, 480), confidence: 1.0 };
        assert_eq!(face_bbox_area(&full), image_area(&img(Some(640), Some(480))).unwrap());
    }

    #[test]
    fn zscores_flag_degenerate_venues() {
        let mut areas = BTreeMap::new();
        areas.insert(VenueId::Nyt, vec![5, 5, 5]);
        areas.insert(VenueId::Fox, vec![1, 2, 3]);
        let z = zscore_by_venue(&areas);
        assert!(z[&VenueId::Nyt].is_none());
        let fox = z[&VenueId::Fox].as_ref().unwrap();
        assert!((fox[0] + 1.0).abs() < 1e-12 && fox[1].abs() < 1e-12 && (fox[2] - 1.0).abs() < 1e-12);
    }
}
