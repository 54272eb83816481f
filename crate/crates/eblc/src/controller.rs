//! The per-frame adaptive compression loop: classify the environment on a
//! fixed cadence, smooth votes through a majority window, look up the
//! highest safe CRF and its matching detector calibration from the
//! reference table, compress, detect, and account for bandwidth.
//!
//! A static-CRF baseline runs the same pipeline with classification
//! disabled, for dynamic-vs-static comparisons.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{DetectorLibrary, ReferenceTable};
use crate::classify::{classify_frame, ClassifierConfig, ClassifyError, EnvCondition};
use crate::codec::{CodecError, CompressionProfile, Crf, VideoCodec};
use crate::detect::synthetic::{contrast_detector, DetectorCalibration};
use crate::detect::{match_detections, Annotation, DetectorConfig};
use crate::frame::Frame;
use crate::metrics::{db_serde, psnr, MetricsError};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("reference table is not total: {0}")]
    InvalidTable(String),
    #[error("detector library has no calibration for {condition} at crf {crf}")]
    MissingDetector { condition: EnvCondition, crf: u8 },
    #[error("compressed size is zero, bandwidth reduction is undefined")]
    ZeroCompressedSize,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Classify every N-th frame.
    pub classify_interval: usize,
    /// Majority vote window length.
    pub vote_window: usize,
    /// Match threshold used when annotations are supplied.
    pub match_iou_min: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            classify_interval: 10,
            vote_window: 3,
            match_iou_min: 0.5,
        }
    }
}

/// Mutable loop state. `active_crf` always mirrors the reference-table entry
/// for `active_condition` (falling back to `crf_min` when the table holds no
/// valid CRF for it).
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub active_condition: EnvCondition,
    pub active_crf: Crf,
    pub active_model_id: String,
    pub frames_since_classify: usize,
    pub votes: VecDeque<EnvCondition>,
}

/// Per-frame output record, written as one JSON line per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub frame_index: usize,
    pub frame_id: String,
    /// Condition the frame was processed under.
    pub condition: EnvCondition,
    pub crf: u8,
    #[serde(with = "db_serde")]
    pub psnr_db: f64,
    pub detections: usize,
    /// Recall against supplied annotations; absent without ground truth.
    pub accuracy: Option<f64>,
    pub compressed_bits: u64,
    pub bandwidth_reduction: f64,
    /// Set when classification failed and the previous condition was kept.
    pub classifier_fault: bool,
}

/// `raw_bits / compressed_bits`.
pub fn bandwidth_reduction(raw_bits: u64, compressed_bits: u64) -> Result<f64, ControllerError> {
    if compressed_bits == 0 {
        return Err(ControllerError::ZeroCompressedSize);
    }
    Ok(raw_bits as f64 / compressed_bits as f64)
}

pub struct Controller<'a> {
    table: &'a ReferenceTable,
    detectors: &'a DetectorLibrary,
    classifier: &'a ClassifierConfig,
    detector_cfg: &'a DetectorConfig,
    codec: &'a dyn VideoCodec,
    cfg: ControllerConfig,
    state: ControllerState,
    frame_index: usize,
}

impl<'a> Controller<'a> {
    pub fn new(
        table: &'a ReferenceTable,
        detectors: &'a DetectorLibrary,
        classifier: &'a ClassifierConfig,
        detector_cfg: &'a DetectorConfig,
        codec: &'a dyn VideoCodec,
        cfg: ControllerConfig,
    ) -> Result<Self, ControllerError> {
        table
            .validate()
            .map_err(|e| ControllerError::InvalidTable(e.to_string()))?;
        let initial = EnvCondition::Normal;
        let state = ControllerState {
            active_condition: initial,
            active_crf: table_crf(table, initial),
            active_model_id: table.entry(initial).model_id.clone(),
            frames_since_classify: 0,
            votes: VecDeque::with_capacity(cfg.vote_window),
        };
        Ok(Self {
            table,
            detectors,
            classifier,
            detector_cfg,
            codec,
            cfg,
            state,
            frame_index: 0,
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    /// Processes one frame under the currently active profile. A switch
    /// decided on this frame takes effect from the next one; the in-flight
    /// frame finishes under the old profile.
    pub fn step(
        &mut self,
        frame: &Frame,
        annotations: Option<&[Annotation]>,
    ) -> Result<StepReport, ControllerError> {
        let mut classifier_fault = false;
        let mut pending_switch: Option<EnvCondition> = None;

        if self.frame_index % self.cfg.classify_interval == 0 {
            match classify_frame(frame, self.classifier) {
                Ok(probabilities) => {
                    if self.state.votes.len() == self.cfg.vote_window {
                        self.state.votes.pop_front();
                    }
                    self.state.votes.push_back(probabilities.argmax());
                    pending_switch = self.majority_vote();
                }
                Err(ClassifyError::FrameTooSmall { .. }) | Err(_) => {
                    // Fail safe: keep the previous condition, flag the frame.
                    classifier_fault = true;
                }
            }
            self.state.frames_since_classify = 0;
        } else {
            self.state.frames_since_classify += 1;
        }

        let report = self.process_frame(
            frame,
            annotations,
            self.state.active_condition,
            self.state.active_crf,
            classifier_fault,
        )?;

        if let Some(next) = pending_switch {
            self.state.active_condition = next;
            self.state.active_crf = table_crf(self.table, next);
            self.state.active_model_id = self.table.entry(next).model_id.clone();
        }
        self.frame_index += 1;
        Ok(report)
    }

    /// A strict majority of the vote window (more than half of its capacity)
    /// for a condition other than the active one triggers a switch.
    fn majority_vote(&self) -> Option<EnvCondition> {
        let mut counts = [0usize; crate::classify::CONDITION_COUNT];
        for &vote in &self.state.votes {
            counts[vote.index()] += 1;
        }
        for condition in EnvCondition::ALL {
            if condition != self.state.active_condition
                && counts[condition.index()] * 2 > self.cfg.vote_window
            {
                return Some(condition);
            }
        }
        None
    }

    fn process_frame(
        &self,
        frame: &Frame,
        annotations: Option<&[Annotation]>,
        condition: EnvCondition,
        crf: Crf,
        classifier_fault: bool,
    ) -> Result<StepReport, ControllerError> {
        let calibration = self
            .detectors
            .get(condition, crf)
            .ok_or(ControllerError::MissingDetector {
                condition,
                crf: crf.get(),
            })?;
        run_frame(
            frame,
            annotations,
            condition,
            crf,
            calibration,
            self.detector_cfg,
            self.codec,
            self.cfg.match_iou_min,
            self.frame_index,
            classifier_fault,
        )
    }
}

fn table_crf(table: &ReferenceTable, condition: EnvCondition) -> Crf {
    table
        .entry(condition)
        .max_crf
        .unwrap_or_else(|| Crf::new(0).expect("zero is valid"))
}

/// Compress, decode, detect, and account for one frame. Shared between the
/// dynamic controller and the static baseline.
#[allow(clippy::too_many_arguments)]
fn run_frame(
    frame: &Frame,
    annotations: Option<&[Annotation]>,
    condition: EnvCondition,
    crf: Crf,
    calibration: &DetectorCalibration,
    detector_cfg: &DetectorConfig,
    codec: &dyn VideoCodec,
    match_iou_min: f64,
    frame_index: usize,
    classifier_fault: bool,
) -> Result<StepReport, ControllerError> {
    let profile = CompressionProfile {
        codec_id: codec.id(),
        crf,
    };
    let segment = codec.encode(std::slice::from_ref(frame), &profile)?;
    let decoded = codec.decode(&segment)?;
    let psnr_db = psnr(frame, &decoded[0])?;
    let detections = contrast_detector(&decoded[0], detector_cfg, calibration);
    let accuracy = annotations.and_then(|truths| {
        match_detections(&detections, truths, match_iou_min)
            .accuracy()
            .ok()
    });
    let compressed_bits = 8 * segment.payload.len() as u64;
    let raw_bits = 8 * (frame.width() * frame.height() * 3) as u64;
    Ok(StepReport {
        frame_index,
        frame_id: format!("frame_{frame_index:06}"),
        condition,
        crf: crf.get(),
        psnr_db,
        detections: detections.len(),
        accuracy,
        compressed_bits,
        bandwidth_reduction: bandwidth_reduction(raw_bits, compressed_bits)?,
        classifier_fault,
    })
}

/// Classification disabled, CRF pinned: the comparison baseline. The
/// supplied calibration plays the single static model.
pub fn run_static_baseline(
    frames: &[Frame],
    annotations: Option<&[Vec<Annotation>]>,
    fixed_crf: Crf,
    calibration: &DetectorCalibration,
    label_condition: EnvCondition,
    detector_cfg: &DetectorConfig,
    codec: &dyn VideoCodec,
    match_iou_min: f64,
) -> Result<Vec<StepReport>, ControllerError> {
    frames
        .iter()
        .enumerate()
        .map(|(index, frame)| {
            let truths = annotations.map(|a| a[index].as_slice());
            run_frame(
                frame,
                truths,
                label_condition,
                fixed_crf,
                calibration,
                detector_cfg,
                codec,
                match_iou_min,
                index,
                false,
            )
        })
        .collect()
}
