//! Offline reference-table construction: for each environmental condition,
//! find the largest CRF whose detection accuracy stays at or above the
//! baseline threshold.
//!
//! The search walks a coarse CRF grid until accuracy first drops below the
//! threshold, then scans single CRF steps between the last valid and first
//! invalid grid points. An exhaustive oracle over every CRF validates it:
//! on monotone non-increasing accuracy curves the two agree exactly, at a
//! fraction of the evaluations.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{AugmentError, SeverityTable};
use crate::classify::EnvCondition;
use crate::codec::{CodecError, CompressionProfile, Crf, VideoCodec, CRF_MAX, CRF_MIN};
use crate::corpus::{hex_digest, LabeledCorpus};
use crate::detect::synthetic::{calibrate_detector, DetectorCalibration};
use crate::detect::DetectorConfig;
use crate::metrics::{self, db_serde, MetricsError};
use crate::seeds;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("invalid calibration config: {0}")]
    InvalidConfig(String),
    #[error("calibration corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Minimum acceptable detection accuracy (recall).
    pub accuracy_threshold: f64,
    /// Strictly increasing CRF grid for the coarse pass.
    pub coarse_grid: Vec<Crf>,
    pub crf_min: Crf,
    pub crf_max: Crf,
    /// Corpus the table was calibrated on; provenance only.
    pub corpus_ref: String,
    /// Detector family identifier, embedded in model ids.
    pub detector_ref: String,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            accuracy_threshold: 0.97,
            coarse_grid: [10u8, 20, 30, 40, 50, 51]
                .iter()
                .map(|&c| Crf::new(c).expect("grid within range"))
                .collect(),
            crf_min: Crf::new(CRF_MIN).expect("zero is valid"),
            crf_max: Crf::new(CRF_MAX).expect("max is valid"),
            corpus_ref: String::new(),
            detector_ref: "contrast-v1".into(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrateError> {
        if !(self.accuracy_threshold > 0.0 && self.accuracy_threshold <= 1.0) {
            return Err(CalibrateError::InvalidConfig(format!(
                "accuracy_threshold {} outside (0,1]",
                self.accuracy_threshold
            )));
        }
        if self.coarse_grid.is_empty() {
            return Err(CalibrateError::InvalidConfig("coarse grid is empty".into()));
        }
        if self.crf_min > self.crf_max {
            return Err(CalibrateError::InvalidConfig(format!(
                "crf_min {} above crf_max {}",
                self.crf_min, self.crf_max
            )));
        }
        let mut previous: Option<Crf> = None;
        for &point in &self.coarse_grid {
            if point < self.crf_min || point > self.crf_max {
                return Err(CalibrateError::InvalidConfig(format!(
                    "grid point {point} outside [{}, {}]",
                    self.crf_min, self.crf_max
                )));
            }
            if let Some(previous) = previous {
                if point <= previous {
                    return Err(CalibrateError::InvalidConfig(format!(
                        "grid not strictly increasing at {point}"
                    )));
                }
            }
            previous = Some(point);
        }
        Ok(())
    }
}

/// Coarse-to-fine search for the largest CRF with accuracy at or above the
/// threshold. Walks the grid in order; on the first failing grid point,
/// scans the open interval between the last valid and first invalid points
/// one CRF at a time. If the very first grid point fails, the scan covers
/// `[crf_min, first_point)`; if no grid point fails, it covers
/// `(last_point, crf_max]`. Returns `None` when even `crf_min` fails.
///
/// On a non-monotone curve the result is still a valid CRF, though not
/// necessarily the global maximum.
pub fn coarse_to_fine_search<E>(
    cfg: &CalibrationConfig,
    mut eval: impl FnMut(Crf) -> Result<f64, E>,
) -> Result<Option<Crf>, E> {
    let mut last_valid: Option<Crf> = None;
    let mut first_invalid: Option<Crf> = None;
    for &point in &cfg.coarse_grid {
        if eval(point)? >= cfg.accuracy_threshold {
            last_valid = Some(point);
        } else {
            first_invalid = Some(point);
            break;
        }
    }
    let (fine_lo, fine_hi) = match (last_valid, first_invalid) {
        (Some(l), Some(f)) => (l.get() as i32 + 1, f.get() as i32 - 1),
        (None, Some(f)) => (cfg.crf_min.get() as i32, f.get() as i32 - 1),
        (Some(l), None) => (l.get() as i32 + 1, cfg.crf_max.get() as i32),
        (None, None) => unreachable!("grid is non-empty"),
    };
    let mut best = last_valid;
    let mut crf_value = fine_lo;
    while crf_value <= fine_hi {
        let point = Crf::new(crf_value as u8).expect("fine scan stays in range");
        if eval(point)? >= cfg.accuracy_threshold {
            best = Some(point);
        }
        crf_value += 1;
    }
    Ok(best)
}

/// Ground-truth validator: evaluates every CRF in `[crf_min, crf_max]` and
/// returns the largest one meeting the threshold.
pub fn exhaustive_oracle<E>(
    cfg: &CalibrationConfig,
    mut eval: impl FnMut(Crf) -> Result<f64, E>,
) -> Result<Option<Crf>, E> {
    let mut best = None;
    for crf_value in cfg.crf_min.get()..=cfg.crf_max.get() {
        let point = Crf::new(crf_value).expect("range is valid");
        if eval(point)? >= cfg.accuracy_threshold {
            best = Some(point);
        }
    }
    Ok(best)
}

/// One measured (condition, crf) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEvaluation {
    pub accuracy: f64,
    #[serde(with = "db_serde")]
    pub psnr_db: f64,
    pub calibration: DetectorCalibration,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLogRow {
    pub condition: EnvCondition,
    pub crf: u8,
    pub accuracy: f64,
    #[serde(with = "db_serde")]
    pub psnr_db: f64,
}

pub fn eval_log_csv(rows: &[EvalLogRow]) -> String {
    let mut out = String::from("condition,crf,accuracy,psnr_db\n");
    for row in rows {
        let psnr = if row.psnr_db.is_finite() {
            format!("{:.4}", row.psnr_db)
        } else {
            "inf".to_string()
        };
        out.push_str(&format!(
            "{},{},{:.6},{}\n",
            row.condition, row.crf, row.accuracy, psnr
        ));
    }
    out
}

/// The library of per-(condition, crf) detector calibrations produced while
/// building a reference table; the runtime controller selects from it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorLibrary {
    entries: BTreeMap<String, DetectorCalibration>,
}

impl DetectorLibrary {
    fn key(condition: EnvCondition, crf: Crf) -> String {
        format!("{}:crf{:02}", condition, crf.get())
    }

    pub fn insert(&mut self, condition: EnvCondition, crf: Crf, calibration: DetectorCalibration) {
        self.entries.insert(Self::key(condition, crf), calibration);
    }

    pub fn get(&self, condition: EnvCondition, crf: Crf) -> Option<&DetectorCalibration> {
        self.entries.get(&Self::key(condition, crf))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Runs the full degradation pipeline for one (condition, crf) point:
/// augment the corpus, encode and decode, tune a detector for the decoded
/// frames, and measure recall plus compression PSNR. Results are memoized;
/// the reference-table fine scan revisits neighboring points freely.
pub struct Evaluator<'a> {
    corpus: &'a LabeledCorpus,
    severities: &'a SeverityTable,
    detector_cfg: &'a DetectorConfig,
    codec: &'a dyn VideoCodec,
    detector_ref: String,
    seed: u64,
    memo: Mutex<BTreeMap<(EnvCondition, u8), PointEvaluation>>,
    log: Mutex<Vec<EvalLogRow>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        corpus: &'a LabeledCorpus,
        severities: &'a SeverityTable,
        detector_cfg: &'a DetectorConfig,
        codec: &'a dyn VideoCodec,
        detector_ref: impl Into<String>,
        seed: u64,
    ) -> Result<Self, CalibrateError> {
        if corpus.is_empty() {
            return Err(CalibrateError::EmptyCorpus);
        }
        Ok(Self {
            corpus,
            severities,
            detector_cfg,
            codec,
            detector_ref: detector_ref.into(),
            seed,
            memo: Mutex::new(BTreeMap::new()),
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn corpus_hash(&self) -> String {
        self.corpus.content_hash()
    }

    /// Augments the corpus to `condition` with per-scene seeds derived from
    /// the evaluator seed.
    pub fn augmented_frames(&self, condition: EnvCondition) -> Result<Vec<crate::frame::Frame>, AugmentError> {
        self.corpus
            .scenes
            .iter()
            .enumerate()
            .map(|(i, scene)| {
                let severity = self.severities.severity(
                    condition,
                    seeds::derive(self.seed, condition.index() as u64, i as u64),
                );
                crate::augment::synthesize(&scene.frame, &severity)
            })
            .collect()
    }

    pub fn evaluate(
        &self,
        condition: EnvCondition,
        crf: Crf,
    ) -> Result<PointEvaluation, CalibrateError> {
        if let Some(hit) = self
            .memo
            .lock()
            .expect("memo lock")
            .get(&(condition, crf.get()))
        {
            return Ok(hit.clone());
        }
        let augmented = self.augmented_frames(condition)?;
        let profile = CompressionProfile {
            codec_id: self.codec.id(),
            crf,
        };
        let segment = self.codec.encode(&augmented, &profile)?;
        let decoded = self.codec.decode(&segment)?;
        let psnr_db = metrics::segment_quality(&augmented, &decoded)?.psnr;
        let truths = self.corpus.truths();
        let calibration = calibrate_detector(&decoded, &truths, self.detector_cfg);
        let point = PointEvaluation {
            accuracy: calibration.calibration_accuracy,
            psnr_db,
            calibration,
            model_id: format!("{}:{}:crf{:02}", self.detector_ref, condition, crf.get()),
        };
        self.log.lock().expect("log lock").push(EvalLogRow {
            condition,
            crf: crf.get(),
            accuracy: point.accuracy,
            psnr_db,
        });
        self.memo
            .lock()
            .expect("memo lock")
            .insert((condition, crf.get()), point.clone());
        Ok(point)
    }

    /// Every calibration evaluated so far, keyed by (condition, crf).
    pub fn detector_library(&self) -> DetectorLibrary {
        let mut library = DetectorLibrary::default();
        for ((condition, crf_value), point) in self.memo.lock().expect("memo lock").iter() {
            library.insert(
                *condition,
                Crf::new(*crf_value).expect("memo keys are valid"),
                point.calibration,
            );
        }
        library
    }

    pub fn eval_log(&self) -> Vec<EvalLogRow> {
        self.log.lock().expect("log lock").clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTableEntry {
    pub condition: EnvCondition,
    /// Largest CRF meeting the threshold; `None` when even `crf_min` fails.
    pub max_crf: Option<Crf>,
    /// PSNR measured at `max_crf` (at `crf_min` when no CRF qualified);
    /// `null` in JSON means lossless.
    #[serde(with = "db_serde")]
    pub min_psnr_db: f64,
    pub model_id: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub corpus_hash: String,
    /// Absent by default so identical inputs rebuild byte-identical tables.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub created_at: Option<String>,
}

/// One entry per condition, always, in enum order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub entries: Vec<ReferenceTableEntry>,
    pub provenance: Provenance,
}

impl ReferenceTable {
    pub fn entry(&self, condition: EnvCondition) -> &ReferenceTableEntry {
        self.entries
            .iter()
            .find(|e| e.condition == condition)
            .expect("table is total over conditions")
    }

    pub fn validate(&self) -> Result<(), CalibrateError> {
        for condition in EnvCondition::ALL {
            let found = self
                .entries
                .iter()
                .filter(|e| e.condition == condition)
                .count();
            if found != 1 {
                return Err(CalibrateError::InvalidConfig(format!(
                    "reference table must hold exactly one {condition} entry, found {found}"
                )));
            }
        }
        Ok(())
    }
}

/// Hash of everything that influences a calibration run, stamped into the
/// table's provenance.
pub fn config_hash(
    cfg: &CalibrationConfig,
    severities: &SeverityTable,
    detector_cfg: &DetectorConfig,
    seed: u64,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(cfg).expect("config serializes"));
    hasher.update(serde_json::to_vec(severities).expect("severities serialize"));
    hasher.update(serde_json::to_vec(detector_cfg).expect("detector config serializes"));
    hasher.update(seed.to_be_bytes());
    hex_digest(hasher)
}

/// Runs the coarse-to-fine search per condition and assembles the table.
/// Entries for conditions where no CRF qualifies fall back to diagnostic
/// measurements at `crf_min` with `max_crf = None`.
pub fn build_reference_table(
    cfg: &CalibrationConfig,
    evaluator: &Evaluator<'_>,
    config_hash: String,
) -> Result<ReferenceTable, CalibrateError> {
    cfg.validate()?;
    let mut entries = Vec::with_capacity(EnvCondition::ALL.len());
    for condition in EnvCondition::ALL {
        let max_crf = coarse_to_fine_search(cfg, |crf| {
            evaluator.evaluate(condition, crf).map(|p| p.accuracy)
        })?;
        let measured_at = max_crf.unwrap_or(cfg.crf_min);
        let point = evaluator.evaluate(condition, measured_at)?;
        entries.push(ReferenceTableEntry {
            condition,
            max_crf,
            min_psnr_db: point.psnr_db,
            model_id: point.model_id,
            accuracy: point.accuracy,
        });
    }
    Ok(ReferenceTable {
        entries,
        provenance: Provenance {
            config_hash,
            corpus_hash: evaluator.corpus_hash(),
            created_at: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn cfg() -> CalibrationConfig {
        CalibrationConfig::default()
    }

    fn search_infallible(cfg: &CalibrationConfig, curve: impl Fn(u8) -> f64) -> Option<u8> {
        coarse_to_fine_search::<Infallible>(cfg, |crf| Ok(curve(crf.get())))
            .unwrap()
            .map(Crf::get)
    }

    fn oracle_infallible(cfg: &CalibrationConfig, curve: impl Fn(u8) -> f64) -> Option<u8> {
        exhaustive_oracle::<Infallible>(cfg, |crf| Ok(curve(crf.get())))
            .unwrap()
            .map(Crf::get)
    }

    #[test]
    fn search_finds_interior_drop() {
        let curve = |c: u8| if c <= 27 { 1.0 } else { 0.90 };
        assert_eq!(search_infallible(&cfg(), curve), Some(27));
        assert_eq!(oracle_infallible(&cfg(), curve), Some(27));
    }

    #[test]
    fn search_all_valid_returns_max() {
        assert_eq!(search_infallible(&cfg(), |_| 1.0), Some(51));
    }

    #[test]
    fn search_only_zero_valid() {
        let curve = |c: u8| if c == 0 { 1.0 } else { 0.5 };
        assert_eq!(search_infallible(&cfg(), curve), Some(0));
        assert_eq!(oracle_infallible(&cfg(), curve), Some(0));
    }

    #[test]
    fn search_nothing_valid_returns_none() {
        assert_eq!(search_infallible(&cfg(), |_| 0.0), None);
        assert_eq!(oracle_infallible(&cfg(), |_| 0.0), None);
    }

    #[test]
    fn search_never_leaves_range_and_never_repeats() {
        let mut seen = std::collections::HashSet::new();
        coarse_to_fine_search::<Infallible>(&cfg(), |crf| {
            assert!(crf.get() <= 51);
            assert!(seen.insert(crf.get()), "re-evaluated crf {crf}");
            Ok(if crf.get() <= 33 { 1.0 } else { 0.0 })
        })
        .unwrap();
    }

    #[test]
    fn search_matches_oracle_on_adversarial_boundaries() {
        for drop_at in [0u8, 10, 11, 50, 51] {
            let curve = move |c: u8| if c < drop_at { 1.0 } else { 0.5 };
            assert_eq!(
                search_infallible(&cfg(), curve),
                oracle_infallible(&cfg(), curve),
                "drop at {drop_at}"
            );
        }
    }

    #[test]
    fn search_call_count_is_bounded() {
        // Worst case: a gap-wide fine scan plus the full grid.
        for drop_at in 0u8..=51 {
            let mut calls = 0usize;
            let curve = move |c: u8| if c < drop_at { 1.0 } else { 0.5 };
            coarse_to_fine_search::<Infallible>(&cfg(), |crf| {
                calls += 1;
                Ok(curve(crf.get()))
            })
            .unwrap();
            assert!(calls <= 16, "drop at {drop_at}: {calls} calls");
        }
    }

    #[test]
    fn search_on_non_monotone_curve_returns_valid_point() {
        // Accuracy recovers after a dip; the search may miss the global
        // maximum but must return a point above threshold.
        let curve = |c: u8| match c {
            0..=14 => 1.0,
            15..=29 => 0.5,
            _ => 1.0,
        };
        let found = search_infallible(&cfg(), curve).unwrap();
        assert!(curve(found) >= cfg().accuracy_threshold);
    }

    #[test]
    fn config_validation_rejects_bad_grids() {
        let mut bad = cfg();
        bad.coarse_grid = vec![];
        assert!(bad.validate().is_err());

        let mut bad = cfg();
        bad.coarse_grid = vec![Crf::new(20).unwrap(), Crf::new(10).unwrap()];
        assert!(bad.validate().is_err());

        let mut bad = cfg();
        bad.accuracy_threshold = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reference_table_json_round_trips() {
        let table = ReferenceTable {
            entries: EnvCondition::ALL
                .iter()
                .map(|&condition| ReferenceTableEntry {
                    condition,
                    max_crf: Some(Crf::new(30).unwrap()),
                    min_psnr_db: 41.0,
                    model_id: format!("contrast-v1:{condition}:crf30"),
                    accuracy: 0.97,
                })
                .collect(),
            provenance: Provenance {
                config_hash: "abc".into(),
                corpus_hash: "def".into(),
                created_at: None,
            },
        };
        table.validate().unwrap();
        let json = serde_json::to_string_pretty(&table).unwrap();
        let back: ReferenceTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, table);
        assert!(!json.contains("created_at"));
    }

    #[test]
    fn detector_library_lookup() {
        let mut library = DetectorLibrary::default();
        let calibration = DetectorCalibration {
            contrast_threshold: 20.0,
            calibration_accuracy: 0.99,
        };
        library.insert(EnvCondition::HeavyRain, Crf::new(0).unwrap(), calibration);
        assert_eq!(
            library
                .get(EnvCondition::HeavyRain, Crf::new(0).unwrap())
                .unwrap()
                .contrast_threshold,
            20.0
        );
        assert!(library.get(EnvCondition::Normal, Crf::new(0).unwrap()).is_none());
    }

    #[test]
    fn eval_log_csv_format() {
        let rows = vec![
            EvalLogRow {
                condition: EnvCondition::Normal,
                crf: 0,
                accuracy: 1.0,
                psnr_db: f64::INFINITY,
            },
            EvalLogRow {
                condition: EnvCondition::HeavyRain,
                crf: 10,
                accuracy: 0.5,
                psnr_db: 30.25,
            },
        ];
        let csv = eval_log_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "condition,crf,accuracy,psnr_db");
        assert_eq!(lines[1], "normal,0,1.000000,inf");
        assert_eq!(lines[2], "heavy_rain,10,0.500000,30.2500");
    }

    // Random monotone non-increasing curves: search equals oracle, with a
    // fraction of the evaluations.
    #[test]
    fn search_equals_oracle_on_random_monotone_curves() {
        use rand::{Rng, SeedableRng};
        for seed in 0..20u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut accuracy = 1.0f64;
            let curve: Vec<f64> = (0..=51)
                .map(|_| {
                    accuracy -= rng.gen_range(0.0..0.01);
                    accuracy
                })
                .collect();
            let threshold_cfg = CalibrationConfig {
                accuracy_threshold: 0.97,
                ..cfg()
            };
            let by_search = search_infallible(&threshold_cfg, |c| curve[c as usize]);
            let by_oracle = oracle_infallible(&threshold_cfg, |c| curve[c as usize]);
            assert_eq!(by_search, by_oracle, "seed {seed}");
        }
    }
}
