//! Detection-side evaluation machinery: boxes, IoU, non-max suppression,
//! greedy matching, the recall statistic, and annotation I/O, plus the
//! deterministic synthetic scene generator and contrast detector that give
//! calibration a real accuracy-vs-CRF curve.

pub mod synthetic;
pub mod voc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid box ({x_min},{y_min})-({x_max},{y_max}): min must be below max")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("detection score {0} outside [0,1]")]
    InvalidScore(f64),
    #[error("malformed annotation xml: {0}")]
    MalformedXml(String),
    #[error("annotation missing required field {0}")]
    MissingField(String),
    #[error("field {path} holds {text:?}, expected an integer")]
    InvalidCoordinate { path: String, text: String },
    #[error("accuracy is undefined without ground truth (tp + fn = 0)")]
    NoGroundTruth,
    #[error("could not place {requested} non-overlapping targets in a {width}x{height} frame")]
    TooManyTargets {
        requested: usize,
        width: usize,
        height: usize,
    },
}

/// Axis-aligned box; coordinates are pixel edges, so area is
/// `(x_max - x_min) * (y_max - y_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, DetectError> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(DetectError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let intersection = ix * iy;
    if intersection == 0.0 {
        return 0.0;
    }
    intersection / (a.area() + b.area() - intersection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BBox,
    pub score: f64,
    pub class_label: String,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64, class_label: impl Into<String>) -> Result<Self, DetectError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectError::InvalidScore(score));
        }
        Ok(Self {
            bbox,
            score,
            class_label: class_label.into(),
        })
    }
}

/// Ground-truth box for one object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub class_label: String,
    pub frame_id: String,
}

/// Detector runtime parameters. Frames are resized (nearest-neighbor) to
/// `input_size` square before detection; detections are mapped back to the
/// original geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub input_size: usize,
    pub nms_iou_threshold: f64,
    pub score_threshold: f64,
    /// Connected components below this many resized pixels are dropped.
    pub min_component_area: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_size: 416,
            nms_iou_threshold: 0.5,
            score_threshold: 0.05,
            min_component_area: 48,
        }
    }
}

/// Greedy non-max suppression: repeatedly keep the highest-score remaining
/// detection and discard the rest with IoU at or above `iou_threshold`
/// against it. Output is sorted by descending score; score ties keep input
/// order (earlier wins).
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut suppressed = vec![false; detections.len()];
    let mut kept = Vec::new();
    for (rank, &index) in order.iter().enumerate() {
        if suppressed[index] {
            continue;
        }
        kept.push(detections[index].clone());
        for &other in &order[rank + 1..] {
            if !suppressed[other]
                && iou(&detections[index].bbox, &detections[other].bbox) >= iou_threshold
            {
                suppressed[other] = true;
            }
        }
    }
    kept
}

/// Outcome of matching detections against ground truth. `missed` counts the
/// unmatched truths (false negatives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
}

impl MatchCounts {
    pub fn merge(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.missed += other.missed;
    }

    /// Recall over ground truth; the pipeline's accuracy statistic.
    pub fn accuracy(&self) -> Result<f64, DetectError> {
        if self.tp + self.missed == 0 {
            return Err(DetectError::NoGroundTruth);
        }
        Ok(self.tp as f64 / (self.tp + self.missed) as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        if self.tp + self.fp == 0 {
            None
        } else {
            Some(self.tp as f64 / (self.tp + self.fp) as f64)
        }
    }

    pub fn f1(&self) -> Option<f64> {
        let precision = self.precision()?;
        let recall = self.accuracy().ok()?;
        if precision + recall == 0.0 {
            return Some(0.0);
        }
        Some(2.0 * precision * recall / (precision + recall))
    }
}

/// Greedy matching by descending detection score: each detection takes the
/// unmatched same-class truth with the highest IoU at or above `iou_min`
/// (ties go to the lowest truth index).
pub fn match_detections(
    detections: &[Detection],
    truths: &[Annotation],
    iou_min: f64,
) -> MatchCounts {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut truth_taken = vec![false; truths.len()];
    let mut tp = 0usize;
    for &det_index in &order {
        let detection = &detections[det_index];
        let mut best: Option<(usize, f64)> = None;
        for (truth_index, truth) in truths.iter().enumerate() {
            if truth_taken[truth_index] || truth.class_label != detection.class_label {
                continue;
            }
            let overlap = iou(&detection.bbox, &truth.bbox);
            if overlap < iou_min {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, best_overlap)) => overlap > best_overlap,
            };
            if better {
                best = Some((truth_index, overlap));
            }
        }
        if let Some((truth_index, _)) = best {
            truth_taken[truth_index] = true;
            tp += 1;
        }
    }
    MatchCounts {
        tp,
        fp: detections.len() - tp,
        missed: truths.len() - tp,
    }
}

/// Recall over ground-truth objects: `tp / (tp + fn)`. `fp` rides along so
/// the counts stay together; precision and F1 come from [`MatchCounts`].
pub fn detection_accuracy(tp: usize, fp: usize, missed: usize) -> Result<f64, DetectError> {
    MatchCounts { tp, fp, missed }.accuracy()
}
