//! Seven-class environmental-condition classification.
//!
//! The shipped classifier is a transparent feature-threshold ladder behind
//! the same interface a learned model would use (frame in, 7-vector out),
//! so the controller never depends on how the prediction was produced.
//! Rain is checked before darkness: rain lowers sharpness and raises
//! near-vertical edge energy, while darkness does neither.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("frame {width}x{height} is too small for feature extraction (need 8x8)")]
    FrameTooSmall { width: usize, height: usize },
    #[error("classifier thresholds are not calibrated")]
    UncalibratedThresholds,
    #[error("class {condition} has {got} samples, calibration needs at least {needed}")]
    InsufficientSamples {
        condition: EnvCondition,
        got: usize,
        needed: usize,
    },
    #[error("class probabilities must be non-negative and sum to 1 (sum {sum})")]
    InvalidProbabilities { sum: f64 },
}

/// The seven environmental conditions, ordered from clear weather through
/// worsening darkness and rain. The order is part of the contract: argmax
/// ties resolve to the earlier variant, and condition indices follow it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvCondition {
    Normal,
    LightDark,
    MediumDark,
    HighDark,
    LightRain,
    ModerateRain,
    HeavyRain,
}

pub const CONDITION_COUNT: usize = 7;

impl EnvCondition {
    pub const ALL: [EnvCondition; CONDITION_COUNT] = [
        EnvCondition::Normal,
        EnvCondition::LightDark,
        EnvCondition::MediumDark,
        EnvCondition::HighDark,
        EnvCondition::LightRain,
        EnvCondition::ModerateRain,
        EnvCondition::HeavyRain,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("closed enum")
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_rain(self) -> bool {
        matches!(
            self,
            EnvCondition::LightRain | EnvCondition::ModerateRain | EnvCondition::HeavyRain
        )
    }

    pub fn is_darkness(self) -> bool {
        matches!(
            self,
            EnvCondition::LightDark | EnvCondition::MediumDark | EnvCondition::HighDark
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvCondition::Normal => "normal",
            EnvCondition::LightDark => "light_dark",
            EnvCondition::MediumDark => "medium_dark",
            EnvCondition::HighDark => "high_dark",
            EnvCondition::LightRain => "light_rain",
            EnvCondition::ModerateRain => "moderate_rain",
            EnvCondition::HeavyRain => "heavy_rain",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for EnvCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The classifier's 7-vector output: non-negative weights summing to 1,
/// indexed by [`EnvCondition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    weights: [f64; CONDITION_COUNT],
}

impl ClassProbabilities {
    pub fn new(weights: [f64; CONDITION_COUNT]) -> Result<Self, ClassifyError> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(ClassifyError::InvalidProbabilities { sum });
        }
        Ok(Self { weights })
    }

    pub fn one_hot(condition: EnvCondition) -> Self {
        let mut weights = [0.0; CONDITION_COUNT];
        weights[condition.index()] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64; CONDITION_COUNT] {
        &self.weights
    }

    /// Predicted condition; ties break toward the earlier enum variant.
    pub fn argmax(&self) -> EnvCondition {
        let mut best = 0;
        for i in 1..CONDITION_COUNT {
            if self.weights[i] > self.weights[best] {
                best = i;
            }
        }
        EnvCondition::from_index(best).expect("index in range")
    }
}

/// Deterministic per-frame features standing in for learned embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Mean HSL lightness, in [0,1].
    pub mean_lightness: f64,
    /// Standard deviation of HSL lightness, in [0,1].
    pub lightness_stddev: f64,
    /// Mean magnitude of near-vertical edge responses (unit-luma scale).
    pub streak_energy: f64,
    /// Variance of the 3x3 Laplacian on unit luma.
    pub sharpness: f64,
}

/// Edge responses steeper than this |gy|/|gx| ratio are not counted as
/// streaks; tan(20 deg) matches the rain synthesizer's slant range of
/// 20 degrees around vertical.
const STREAK_SLOPE_MAX: f64 = 0.36397023426620234;

pub fn extract_features(frame: &Frame) -> Result<FeatureVector, ClassifyError> {
    let (w, h) = (frame.width(), frame.height());
    if w < 8 || h < 8 {
        return Err(ClassifyError::FrameTooSmall {
            width: w,
            height: h,
        });
    }

    let mut lightness_sum = 0.0;
    let mut lightness_sq = 0.0;
    for px in frame.data().chunks_exact(3) {
        let max = px[0].max(px[1]).max(px[2]) as f64;
        let min = px[0].min(px[1]).min(px[2]) as f64;
        let lightness = (max + min) / (2.0 * 255.0);
        lightness_sum += lightness;
        lightness_sq += lightness * lightness;
    }
    let n = (w * h) as f64;
    let mean_lightness = lightness_sum / n;
    let lightness_var = (lightness_sq / n - mean_lightness * mean_lightness).max(0.0);

    let luma: Vec<f64> = frame.luma().iter().map(|v| v / 255.0).collect();
    let at = |x: usize, y: usize| luma[y * w + x];

    let mut streak_sum = 0.0;
    let mut laplacian_sum = 0.0;
    let mut laplacian_sq = 0.0;
    let interior = ((w - 2) * (h - 2)) as f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            // Sobel responses.
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            if gy.abs() <= STREAK_SLOPE_MAX * gx.abs() {
                streak_sum += gx.abs();
            }
            let lap = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y);
            laplacian_sum += lap;
            laplacian_sq += lap * lap;
        }
    }
    let lap_mean = laplacian_sum / interior;
    let sharpness = (laplacian_sq / interior - lap_mean * lap_mean).max(0.0);

    Ok(FeatureVector {
        mean_lightness,
        lightness_stddev: lightness_var.sqrt(),
        streak_energy: streak_sum / interior,
        sharpness,
    })
}

/// Calibrated decision boundaries, persisted as plain JSON so any run can be
/// reproduced from its config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Lightness below `darkness_bounds[0]` leaves Normal; below `[1]` and
    /// `[2]` step to medium and high darkness.
    pub darkness_bounds: [f64; 3],
    /// Streak energy above `rain_bounds[0]` enters the rain ladder; above
    /// `[1]` and `[2]` step to moderate and heavy rain.
    pub rain_bounds: [f64; 3],
    /// Rain is only accepted when sharpness sits at or below this bound.
    pub sharpness_max_for_rain: f64,
}

pub fn classify(
    features: &FeatureVector,
    config: &ClassifierConfig,
) -> Result<ClassProbabilities, ClassifyError> {
    if config.rain_bounds.iter().any(|b| !b.is_finite())
        || config.darkness_bounds.iter().any(|b| !b.is_finite())
    {
        return Err(ClassifyError::UncalibratedThresholds);
    }
    let condition = if features.streak_energy >= config.rain_bounds[0]
        && features.sharpness <= config.sharpness_max_for_rain
    {
        if features.streak_energy >= config.rain_bounds[2] {
            EnvCondition::HeavyRain
        } else if features.streak_energy >= config.rain_bounds[1] {
            EnvCondition::ModerateRain
        } else {
            EnvCondition::LightRain
        }
    } else if features.mean_lightness < config.darkness_bounds[0] {
        if features.mean_lightness < config.darkness_bounds[2] {
            EnvCondition::HighDark
        } else if features.mean_lightness < config.darkness_bounds[1] {
            EnvCondition::MediumDark
        } else {
            EnvCondition::LightDark
        }
    } else {
        EnvCondition::Normal
    };
    Ok(ClassProbabilities::one_hot(condition))
}

pub const MIN_SAMPLES_PER_CLASS: usize = 10;

/// Places every band boundary at the midpoint between adjacent per-class
/// feature means. Deterministic and order-free: per-class values are sorted
/// before averaging, so permuting the corpus cannot change a boundary.
pub fn calibrate_thresholds(
    labeled: &[(FeatureVector, EnvCondition)],
) -> Result<ClassifierConfig, ClassifyError> {
    let mut per_class: [Vec<&FeatureVector>; CONDITION_COUNT] = Default::default();
    for (features, condition) in labeled {
        per_class[condition.index()].push(features);
    }
    for condition in EnvCondition::ALL {
        let got = per_class[condition.index()].len();
        if got < MIN_SAMPLES_PER_CLASS {
            return Err(ClassifyError::InsufficientSamples {
                condition,
                got,
                needed: MIN_SAMPLES_PER_CLASS,
            });
        }
    }

    let mean_of = |condition: EnvCondition, pick: fn(&FeatureVector) -> f64| -> f64 {
        let mut values: Vec<f64> = per_class[condition.index()]
            .iter()
            .map(|f| pick(f))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        values.iter().sum::<f64>() / values.len() as f64
    };

    let lightness = |c| mean_of(c, |f| f.mean_lightness);
    let streak = |c| mean_of(c, |f| f.streak_energy);
    let sharpness = |c| mean_of(c, |f| f.sharpness);

    let darkness_bounds = [
        (lightness(EnvCondition::Normal) + lightness(EnvCondition::LightDark)) / 2.0,
        (lightness(EnvCondition::LightDark) + lightness(EnvCondition::MediumDark)) / 2.0,
        (lightness(EnvCondition::MediumDark) + lightness(EnvCondition::HighDark)) / 2.0,
    ];

    let non_rain_streak: f64 = EnvCondition::ALL
        .iter()
        .filter(|c| !c.is_rain())
        .map(|&c| streak(c))
        .fold(f64::MIN, f64::max);
    let rain_bounds = [
        (non_rain_streak + streak(EnvCondition::LightRain)) / 2.0,
        (streak(EnvCondition::LightRain) + streak(EnvCondition::ModerateRain)) / 2.0,
        (streak(EnvCondition::ModerateRain) + streak(EnvCondition::HeavyRain)) / 2.0,
    ];

    let non_rain_sharpness = EnvCondition::ALL
        .iter()
        .filter(|c| !c.is_rain())
        .map(|&c| sharpness(c))
        .sum::<f64>()
        / 4.0;
    let rain_sharpness = EnvCondition::ALL
        .iter()
        .filter(|c| c.is_rain())
        .map(|&c| sharpness(c))
        .sum::<f64>()
        / 3.0;
    // Blur normally pulls rain sharpness below clear-weather sharpness. If a
    // corpus inverts that, the guard degenerates to "always allow" rather
    // than vetoing every rain prediction.
    let sharpness_max_for_rain = if rain_sharpness < non_rain_sharpness {
        (rain_sharpness + non_rain_sharpness) / 2.0
    } else {
        f64::MAX
    };

    Ok(ClassifierConfig {
        darkness_bounds,
        rain_bounds,
        sharpness_max_for_rain,
    })
}

/// Convenience wrapper: extract features then apply the threshold ladder.
pub fn classify_frame(
    frame: &Frame,
    config: &ClassifierConfig,
) -> Result<ClassProbabilities, ClassifyError> {
    classify(&extract_features(frame)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_config() -> ClassifierConfig {
        ClassifierConfig {
            darkness_bounds: [0.40, 0.30, 0.20],
            rain_bounds: [0.02, 0.05, 0.10],
            sharpness_max_for_rain: 0.5,
        }
    }

    #[test]
    fn one_hot_decodes_medium_dark() {
        let w = ClassProbabilities::new([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.argmax(), EnvCondition::MediumDark);
    }

    #[test]
    fn probabilities_validate_sum_and_sign() {
        assert!(ClassProbabilities::new([0.5; 7]).is_err());
        assert!(ClassProbabilities::new([-0.1, 1.1, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        let uniform = [1.0 / 7.0; 7];
        assert_eq!(
            ClassProbabilities::new(uniform).unwrap().argmax(),
            EnvCondition::Normal,
            "ties break toward the earlier variant"
        );
    }

    #[test]
    fn condition_names_round_trip() {
        for condition in EnvCondition::ALL {
            assert_eq!(EnvCondition::parse(condition.name()), Some(condition));
            let json = serde_json::to_string(&condition).unwrap();
            assert_eq!(json, format!("\"{}\"", condition.name()));
        }
    }

    #[test]
    fn features_of_black_and_uniform_frames() {
        let black = Frame::filled(16, 16, [0, 0, 0]).unwrap();
        let f = extract_features(&black).unwrap();
        assert_eq!(f.mean_lightness, 0.0);
        assert_eq!(f.lightness_stddev, 0.0);

        let gray = Frame::filled(16, 16, [77, 77, 77]).unwrap();
        let f = extract_features(&gray).unwrap();
        assert_eq!(f.streak_energy, 0.0);
        assert_eq!(f.sharpness, 0.0);
    }

    #[test]
    fn features_reject_small_frames() {
        let tiny = Frame::filled(7, 8, [0, 0, 0]).unwrap();
        assert!(matches!(
            extract_features(&tiny).unwrap_err(),
            ClassifyError::FrameTooSmall { width: 7, .. }
        ));
    }

    #[test]
    fn ladder_covers_all_classes() {
        let config = test_config();
        let base = FeatureVector {
            mean_lightness: 0.5,
            lightness_stddev: 0.1,
            streak_energy: 0.0,
            sharpness: 0.1,
        };
        let classify_with = |lightness: f64, streak: f64, sharpness: f64| {
            classify(
                &FeatureVector {
                    mean_lightness: lightness,
                    streak_energy: streak,
                    sharpness,
                    ..base
                },
                &config,
            )
            .unwrap()
            .argmax()
        };
        assert_eq!(classify_with(0.50, 0.00, 0.1), EnvCondition::Normal);
        assert_eq!(classify_with(0.35, 0.00, 0.1), EnvCondition::LightDark);
        assert_eq!(classify_with(0.25, 0.00, 0.1), EnvCondition::MediumDark);
        assert_eq!(classify_with(0.10, 0.00, 0.1), EnvCondition::HighDark);
        assert_eq!(classify_with(0.50, 0.03, 0.1), EnvCondition::LightRain);
        assert_eq!(classify_with(0.50, 0.07, 0.1), EnvCondition::ModerateRain);
        assert_eq!(classify_with(0.50, 0.20, 0.1), EnvCondition::HeavyRain);
        // High sharpness vetoes the rain ladder.
        assert_eq!(classify_with(0.50, 0.20, 0.9), EnvCondition::Normal);
    }

    #[test]
    fn uncalibrated_thresholds_rejected() {
        let mut config = test_config();
        config.rain_bounds[0] = f64::NAN;
        let features = FeatureVector {
            mean_lightness: 0.5,
            lightness_stddev: 0.0,
            streak_energy: 0.0,
            sharpness: 0.0,
        };
        assert!(matches!(
            classify(&features, &config).unwrap_err(),
            ClassifyError::UncalibratedThresholds
        ));
    }

    fn synthetic_labeled_corpus(per_class: usize) -> Vec<(FeatureVector, EnvCondition)> {
        let mut out = Vec::new();
        for condition in EnvCondition::ALL {
            for i in 0..per_class {
                let jitter = (i as f64 - per_class as f64 / 2.0) / (per_class as f64 * 50.0);
                let (lightness, streak, sharpness) = match condition {
                    EnvCondition::Normal => (0.50, 0.004, 0.10),
                    EnvCondition::LightDark => (0.35, 0.003, 0.07),
                    EnvCondition::MediumDark => (0.25, 0.002, 0.05),
                    EnvCondition::HighDark => (0.15, 0.001, 0.03),
                    EnvCondition::LightRain => (0.51, 0.030, 0.04),
                    EnvCondition::ModerateRain => (0.52, 0.060, 0.04),
                    EnvCondition::HeavyRain => (0.53, 0.120, 0.02),
                };
                out.push((
                    FeatureVector {
                        mean_lightness: lightness + jitter,
                        lightness_stddev: 0.1,
                        streak_energy: (streak + jitter / 10.0).max(0.0),
                        sharpness,
                    },
                    condition,
                ));
            }
        }
        out
    }

    #[test]
    fn calibration_separates_a_separable_corpus() {
        let corpus = synthetic_labeled_corpus(20);
        let config = calibrate_thresholds(&corpus).unwrap();
        let correct = corpus
            .iter()
            .filter(|(f, c)| classify(f, &config).unwrap().argmax() == *c)
            .count();
        assert_eq!(correct, corpus.len());
    }

    #[test]
    fn calibration_requires_every_class() {
        let corpus: Vec<_> = synthetic_labeled_corpus(20)
            .into_iter()
            .filter(|(_, c)| matches!(c, EnvCondition::Normal | EnvCondition::HighDark))
            .collect();
        match calibrate_thresholds(&corpus).unwrap_err() {
            ClassifyError::InsufficientSamples { condition, got, .. } => {
                assert_eq!(condition, EnvCondition::LightDark);
                assert_eq!(got, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn calibration_is_permutation_invariant() {
        let corpus = synthetic_labeled_corpus(15);
        let config = calibrate_thresholds(&corpus).unwrap();
        let mut reversed = corpus.clone();
        reversed.reverse();
        assert_eq!(calibrate_thresholds(&reversed).unwrap(), config);
    }
}
