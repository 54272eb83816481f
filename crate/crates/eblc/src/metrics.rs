//! Frame- and segment-level loss metrics: MSE, RMSE, PSNR, SSIM.
//!
//! MSE/RMSE/PSNR run over all three channels; SSIM runs on the luma plane
//! with the reference parameters (11x11 Gaussian window, sigma 1.5,
//! K1 = 0.01, K2 = 0.03). PSNR of identical frames is the `f64::INFINITY`
//! sentinel, serialized as JSON `null`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("frame dimensions differ: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },
    #[error("frame {width}x{height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    FrameTooSmall { width: usize, height: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("sequences have different lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
}

/// Aggregated quality over a frame sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Mean per-frame PSNR in dB; `null` in JSON when every frame was identical.
    #[serde(with = "db_serde")]
    pub psnr: f64,
    pub rmse: f64,
    pub ssim: f64,
    pub frame_count: usize,
}

/// Serializes non-finite dB values as JSON null and reads null back as the
/// infinite sentinel; tables and reports must survive a round trip.
pub mod db_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            ser.serialize_some(value)
        } else {
            ser.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::INFINITY))
    }
}

fn check_dimensions(a: &Frame, b: &Frame) -> Result<(), MetricsError> {
    if !a.same_dimensions(b) {
        return Err(MetricsError::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            b_width: b.width(),
            b_height: b.height(),
        });
    }
    Ok(())
}

/// Mean squared difference over all width*height*3 samples.
pub fn mse(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_dimensions(a, b)?;
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.data().len() as f64)
}

pub fn rmse(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    Ok(mse(a, b)?.sqrt())
}

/// `10 * log10(255^2 / MSE)`; infinite when the frames are identical.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    let mse = mse(a, b)?;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

/// Mean SSIM over sliding Gaussian-weighted windows on the luma plane.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_dimensions(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::FrameTooSmall {
            width: w,
            height: h,
        });
    }
    // Identical inputs are exactly 1 by definition; skip the float path so
    // the rmse = 0 <=> ssim = 1 invariant holds without epsilon.
    if a.data() == b.data() {
        return Ok(1.0);
    }
    let luma_a = a.luma();
    let luma_b = b.luma();
    let weights = gaussian_window();

    let mut total = 0.0;
    let mut windows = 0usize;
    for wy in 0..=(h - SSIM_WINDOW) {
        for wx in 0..=(w - SSIM_WINDOW) {
            let mut mean_a = 0.0;
            let mut mean_b = 0.0;
            let mut sq_a = 0.0;
            let mut sq_b = 0.0;
            let mut cross = 0.0;
            for dy in 0..SSIM_WINDOW {
                let row = (wy + dy) * w + wx;
                for dx in 0..SSIM_WINDOW {
                    let weight = weights[dy * SSIM_WINDOW + dx];
                    let va = luma_a[row + dx];
                    let vb = luma_b[row + dx];
                    mean_a += weight * va;
                    mean_b += weight * vb;
                    sq_a += weight * va * va;
                    sq_b += weight * vb * vb;
                    cross += weight * va * vb;
                }
            }
            let var_a = (sq_a - mean_a * mean_a).max(0.0);
            let var_b = (sq_b - mean_b * mean_b).max(0.0);
            let cov = cross - mean_a * mean_b;
            let numerator = (2.0 * mean_a * mean_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let denominator =
                (mean_a * mean_a + mean_b * mean_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
            total += numerator / denominator;
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let center = (SSIM_WINDOW / 2) as f64;
    let mut weights = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dx = x as f64 - center;
            let dy = y as f64 - center;
            let value = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            weights[y * SSIM_WINDOW + x] = value;
            sum += value;
        }
    }
    for weight in &mut weights {
        *weight /= sum;
    }
    weights
}

/// Per-frame metrics averaged over a segment. Infinite PSNR frames are left
/// out of the PSNR mean; the sentinel survives only when every frame pair is
/// identical.
pub fn segment_quality(
    original: &[Frame],
    degraded: &[Frame],
) -> Result<QualityReport, MetricsError> {
    if original.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    if original.len() != degraded.len() {
        return Err(MetricsError::LengthMismatch {
            a: original.len(),
            b: degraded.len(),
        });
    }
    let mut finite_psnr_sum = 0.0;
    let mut finite_psnr_count = 0usize;
    let mut rmse_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (a, b) in original.iter().zip(degraded) {
        let frame_psnr = psnr(a, b)?;
        if frame_psnr.is_finite() {
            finite_psnr_sum += frame_psnr;
            finite_psnr_count += 1;
        }
        rmse_sum += rmse(a, b)?;
        ssim_sum += ssim(a, b)?;
    }
    let psnr = if finite_psnr_count == 0 {
        f64::INFINITY
    } else {
        finite_psnr_sum / finite_psnr_count as f64
    };
    Ok(QualityReport {
        psnr,
        rmse: rmse_sum / original.len() as f64,
        ssim: ssim_sum / original.len() as f64,
        frame_count: original.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(w: usize, h: usize, v: u8) -> Frame {
        Frame::filled(w, h, [v, v, v]).unwrap()
    }

    /// 20x20 frame pair whose MSE is exactly n * 51^2 / 1200.
    /// With n = 3 the MSE is 6.5025 (40 dB); with n = 30 it is 65.025 (30 dB).
    fn frame_pair_with_diffs(n: usize) -> (Frame, Frame) {
        let a = uniform(20, 20, 100);
        let mut b = a.clone();
        for i in 0..n {
            b.data_mut()[i * 7] = 100 + 51;
        }
        (a, b)
    }

    #[test]
    fn mse_identical_and_unit_difference() {
        let a = uniform(4, 4, 0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = uniform(4, 4, 1);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn mse_hand_sum() {
        // 2x1 frame: 6 samples, one differs by 10.
        let a = Frame::new(2, 1, vec![10, 20, 30, 40, 50, 60]).unwrap();
        let b = Frame::new(2, 1, vec![10, 20, 30, 40, 60, 60]).unwrap();
        let got = mse(&a, &b).unwrap();
        assert!((got - 100.0 / 6.0).abs() < 1e-12, "{got}");
        assert!((rmse(&a, &b).unwrap() - (100.0f64 / 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mse_rejects_dimension_mismatch() {
        let a = uniform(4, 4, 0);
        let b = uniform(4, 5, 0);
        assert!(matches!(
            mse(&a, &b).unwrap_err(),
            MetricsError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn psnr_fixtures() {
        let a = uniform(12, 12, 0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = uniform(12, 12, 255);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
        assert_eq!(rmse(&a, &b).unwrap(), 255.0);

        let (a, b) = frame_pair_with_diffs(3);
        assert!((mse(&a, &b).unwrap() - 6.5025).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = uniform(16, 16, 100);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let textured = Frame::new(
            16,
            16,
            (0..16 * 16 * 3).map(|i| (i * 13 % 251) as u8).collect(),
        )
        .unwrap();
        assert!((ssim(&textured, &textured).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_black_vs_white_closed_form() {
        let a = uniform(16, 16, 0);
        let b = uniform(16, 16, 255);
        // Zero-variance windows: contrast/structure terms are 1, luminance
        // term is C1 / (255^2 + C1).
        let expected = SSIM_C1 / (255.0 * 255.0 + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1e-4).abs() < 1e-6);
    }

    #[test]
    fn ssim_rejects_small_frames() {
        let a = uniform(10, 16, 0);
        assert!(matches!(
            ssim(&a, &a).unwrap_err(),
            MetricsError::FrameTooSmall { width: 10, .. }
        ));
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = Frame::new(16, 16, (0..16 * 16 * 3).map(|i| (i % 256) as u8).collect()).unwrap();
        let b = Frame::new(
            16,
            16,
            (0..16 * 16 * 3).map(|i| (i * 31 % 256) as u8).collect(),
        )
        .unwrap();
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn additive_constant_gives_exact_rmse() {
        let a = uniform(16, 16, 40);
        let b = uniform(16, 16, 40 + 17);
        assert_eq!(rmse(&a, &b).unwrap(), 17.0);
    }

    #[test]
    fn segment_quality_identical() {
        let frames = vec![uniform(16, 16, 7); 3];
        let report = segment_quality(&frames, &frames).unwrap();
        assert_eq!(report.psnr, f64::INFINITY);
        assert_eq!(report.rmse, 0.0);
        assert_eq!(report.ssim, 1.0);
        assert_eq!(report.frame_count, 3);
    }

    #[test]
    fn segment_quality_means_db() {
        let (a40, b40) = frame_pair_with_diffs(3);
        let (a30, b30) = frame_pair_with_diffs(30);
        let report = segment_quality(&[a40.clone(), a30.clone()], &[b40.clone(), b30.clone()])
            .unwrap();
        assert!((report.psnr - 35.0).abs() < 1e-9, "{}", report.psnr);

        // Infinite frames are excluded from the mean.
        let report = segment_quality(&[a40.clone(), a30], &[a40, b30]).unwrap();
        assert!((report.psnr - 30.0).abs() < 1e-9, "{}", report.psnr);
    }

    #[test]
    fn segment_quality_rejects_empty() {
        assert!(matches!(
            segment_quality(&[], &[]).unwrap_err(),
            MetricsError::EmptySequence
        ));
    }

    #[test]
    fn quality_report_json_round_trips_infinite_psnr() {
        let report = QualityReport {
            psnr: f64::INFINITY,
            rmse: 0.0,
            ssim: 1.0,
            frame_count: 2,
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"psnr\":null"), "{json}");
        let back: QualityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
