//! Desk-scale stand-ins for field video and a learned detector: a seeded
//! scene generator that renders high-contrast "pedestrian" rectangles over a
//! textured background, and a contrast detector whose per-(condition, crf)
//! threshold is tuned the way a model would be retrained per degradation
//! level. Accuracy genuinely falls as darkening, rain, and quantization eat
//! the contrast the detector depends on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{nms, Annotation, BBox, DetectError, Detection, DetectorConfig, MatchCounts};
use crate::frame::Frame;
use crate::seeds;

/// Class label used for every synthetic target.
pub const TARGET_LABEL: &str = "person";

/// Luma lift of a rendered target above the background mean.
pub const TARGET_CONTRAST: f64 = 90.0;

/// Background gray level of generated scenes.
pub const BACKGROUND_MEAN: f64 = 128.0;

/// Per-scene spread of the background level around [`BACKGROUND_MEAN`].
/// Every scene draws its own base gray, so a corpus never has all of its
/// targets sitting on the same absolute levels: quantization artifacts hit
/// different scenes at different steps and corpus-level accuracy moves
/// smoothly instead of jumping when one shared level collides.
pub const BACKGROUND_LEVEL_SPREAD: f64 = 20.0;

/// Background texture amplitude of generated scenes.
pub const BACKGROUND_AMPLITUDE: f64 = 10.0;

/// Film-grain dither applied over the whole rendered scene, targets
/// included. Spreads quantization transitions over a band of levels so
/// detection quality degrades gradually with the quantization step instead
/// of snapping at isolated level collisions.
pub const SCENE_DITHER: f64 = 3.0;

/// Contrast multipliers by distance (in pixels) from the target's box
/// boundary; pixels deeper than the ladder sit at full contrast. Targets
/// peak at [`TARGET_CONTRAST`] in the core and fade toward their boundary,
/// the way a silhouette loses extent before it loses its core: coarser
/// quantization swallows the fade band first, shrinking the detected box
/// until it no longer overlaps the truth.
pub const TARGET_EDGE_FADE: [f64; 3] = [0.30, 0.55, 0.80];

/// Candidate contrast thresholds explored when tuning the detector for one
/// (condition, crf) point. Spans everything from barely-above-noise to just
/// under the rendered target contrast.
pub const THRESHOLD_GRID: [f64; 16] = [
    6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0, 24.0, 28.0, 34.0, 40.0, 46.0, 52.0, 60.0, 68.0, 76.0,
];

/// Contrast threshold tuned for one (condition, crf) point, together with
/// the recall it achieved on its calibration corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorCalibration {
    pub contrast_threshold: f64,
    pub calibration_accuracy: f64,
}

impl Default for DetectorCalibration {
    fn default() -> Self {
        // Mid-grid threshold; sensible for clean uncompressed scenes.
        Self {
            contrast_threshold: 24.0,
            calibration_accuracy: 1.0,
        }
    }
}

/// Multi-octave value noise in gray, clamped around `mean`. Smooth octaves
/// give natural-looking structure; the finest octave dithers per pixel so
/// quantization effects grow gradually instead of snapping all at once.
pub fn textured_frame(seed: u64, width: usize, height: usize, mean: f64, amplitude: f64) -> Frame {
    let octaves: [(usize, f64); 3] = [(16, 0.55), (6, 0.30), (1, 0.15)];
    let mut values = vec![0.0f64; width * height];
    for (octave, (cell, weight)) in octaves.iter().enumerate() {
        let lattice_w = width / cell + 2;
        let lattice_h = height / cell + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, 0x7e47, octave as u64));
        let lattice: Vec<f64> = (0..lattice_w * lattice_h)
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        for y in 0..height {
            let fy = y as f64 / *cell as f64;
            let y0 = fy.floor() as usize;
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = x as f64 / *cell as f64;
                let x0 = fx.floor() as usize;
                let tx = fx - x0 as f64;
                let v00 = lattice[y0 * lattice_w + x0];
                let v10 = lattice[y0 * lattice_w + x0 + 1];
                let v01 = lattice[(y0 + 1) * lattice_w + x0];
                let v11 = lattice[(y0 + 1) * lattice_w + x0 + 1];
                let top = v00 + (v10 - v00) * tx;
                let bottom = v01 + (v11 - v01) * tx;
                values[y * width + x] += weight * (top + (bottom - top) * ty);
            }
        }
    }
    let mut data = Vec::with_capacity(width * height * 3);
    for v in values {
        let gray = (mean + amplitude * v).round().clamp(0.0, 255.0) as u8;
        data.extend_from_slice(&[gray, gray, gray]);
    }
    Frame::new(width, height, data).expect("generator respects dimensions")
}

/// Renders `n_targets` non-overlapping bright rectangles over a textured
/// background and returns the frame together with exact annotations.
pub fn synthesize_scene(
    seed: u64,
    n_targets: usize,
    width: usize,
    height: usize,
) -> Result<(Frame, Vec<Annotation>), DetectError> {
    let mut level_rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, 0xb9, 3));
    let base_level = BACKGROUND_MEAN
        + level_rng.gen_range(-BACKGROUND_LEVEL_SPREAD..=BACKGROUND_LEVEL_SPREAD);
    let mut frame = textured_frame(
        seeds::derive(seed, 0xb6, 0),
        width,
        height,
        base_level,
        BACKGROUND_AMPLITUDE,
    );
    let frame_id = format!("scene-{seed:016x}");
    let mut annotations = Vec::with_capacity(n_targets);

    let base = width.min(height);
    let (w_lo, w_hi) = ((base / 13).max(6), (base / 9).max(8));
    let (h_lo, h_hi) = ((base / 4).max(10), (base / 3).max(14));

    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, 0x7a, 1));
    let mut placed: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut attempts = 0usize;
    while placed.len() < n_targets {
        attempts += 1;
        if attempts > 200 * n_targets {
            return Err(DetectError::TooManyTargets {
                requested: n_targets,
                width,
                height,
            });
        }
        let tw = rng.gen_range(w_lo..=w_hi);
        let th = rng.gen_range(h_lo..=h_hi);
        if tw + 2 >= width || th + 2 >= height {
            return Err(DetectError::TooManyTargets {
                requested: n_targets,
                width,
                height,
            });
        }
        let x = rng.gen_range(1..width - tw - 1);
        let y = rng.gen_range(1..height - th - 1);
        // Keep a 3 px separation so nearby targets never share a component.
        let margin = 3usize;
        let clash = placed.iter().any(|&(px, py, pw, ph)| {
            x < px + pw + margin && px < x + tw + margin && y < py + ph + margin && py < y + th + margin
        });
        if clash {
            continue;
        }
        for yy in y..y + th {
            for xx in x..x + tw {
                let edge_distance = (xx - x + 1)
                    .min(x + tw - xx)
                    .min(yy - y + 1)
                    .min(y + th - yy);
                let profile = TARGET_EDGE_FADE
                    .get(edge_distance - 1)
                    .copied()
                    .unwrap_or(1.0);
                let value =
                    (base_level + TARGET_CONTRAST * profile).round().clamp(0.0, 255.0) as u8;
                frame.set_pixel(xx, yy, [value, value, value]);
            }
        }
        annotations.push(Annotation {
            bbox: BBox::new(x as f64, y as f64, (x + tw) as f64, (y + th) as f64)
                .expect("positive extent"),
            class_label: TARGET_LABEL.into(),
            frame_id: frame_id.clone(),
        });
        placed.push((x, y, tw, th));
    }

    let mut dither_rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, 0xd1, 2));
    for px in frame.data_mut().chunks_exact_mut(3) {
        let offset = dither_rng.gen_range(-SCENE_DITHER..=SCENE_DITHER);
        let gray = (px[0] as f64 + offset).round().clamp(0.0, 255.0) as u8;
        px.copy_from_slice(&[gray, gray, gray]);
    }
    Ok((frame, annotations))
}

/// Resized luma plane plus the background estimate, reusable across
/// threshold sweeps during calibration.
pub struct DetectorContext {
    luma: Vec<f64>,
    size: usize,
    scale_x: f64,
    scale_y: f64,
    background: f64,
}

impl DetectorContext {
    pub fn new(frame: &Frame, cfg: &DetectorConfig) -> Self {
        let resized = if frame.width() == cfg.input_size && frame.height() == cfg.input_size {
            frame.clone()
        } else {
            frame.resize_nearest(cfg.input_size, cfg.input_size)
        };
        let luma = resized.luma();
        let mut histogram = [0u32; 256];
        for &v in &luma {
            histogram[(v.round().clamp(0.0, 255.0)) as usize] += 1;
        }
        let half = luma.len() as u32 / 2;
        let mut cumulative = 0u32;
        let mut background = 0.0;
        for (value, &count) in histogram.iter().enumerate() {
            cumulative += count;
            if cumulative > half {
                background = value as f64;
                break;
            }
        }
        Self {
            luma,
            size: cfg.input_size,
            scale_x: frame.width() as f64 / cfg.input_size as f64,
            scale_y: frame.height() as f64 / cfg.input_size as f64,
            background,
        }
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    /// Thresholds contrast against the background estimate, groups mask
    /// pixels into 8-connected components, and returns the surviving
    /// component boxes (original frame coordinates) after NMS.
    pub fn detect(&self, cfg: &DetectorConfig, contrast_threshold: f64) -> Vec<Detection> {
        let size = self.size;
        let mask: Vec<bool> = self
            .luma
            .iter()
            .map(|&v| v - self.background >= contrast_threshold)
            .collect();
        let mut visited = vec![false; mask.len()];
        let mut detections = Vec::new();
        let mut stack = Vec::new();
        for start in 0..mask.len() {
            if !mask[start] || visited[start] {
                continue;
            }
            visited[start] = true;
            stack.push(start);
            let (mut min_x, mut min_y) = (start % size, start / size);
            let (mut max_x, mut max_y) = (min_x, min_y);
            let mut contrast_sum = 0.0;
            let mut area = 0usize;
            while let Some(index) = stack.pop() {
                let (x, y) = (index % size, index / size);
                min_x = min_x.min(x);
                max_x = max_x.max(x);
                min_y = min_y.min(y);
                max_y = max_y.max(y);
                contrast_sum += self.luma[index] - self.background;
                area += 1;
                let x_lo = x.saturating_sub(1);
                let x_hi = (x + 1).min(size - 1);
                let y_lo = y.saturating_sub(1);
                let y_hi = (y + 1).min(size - 1);
                for ny in y_lo..=y_hi {
                    for nx in x_lo..=x_hi {
                        let n = ny * size + nx;
                        if mask[n] && !visited[n] {
                            visited[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
            if area < cfg.min_component_area {
                continue;
            }
            let score = (contrast_sum / area as f64 / 255.0).clamp(0.0, 1.0);
            if score < cfg.score_threshold {
                continue;
            }
            let bbox = BBox::new(
                min_x as f64 * self.scale_x,
                min_y as f64 * self.scale_y,
                (max_x + 1) as f64 * self.scale_x,
                (max_y + 1) as f64 * self.scale_y,
            )
            .expect("component has positive extent");
            detections.push(Detection {
                bbox,
                score,
                class_label: TARGET_LABEL.into(),
            });
        }
        nms(&detections, cfg.nms_iou_threshold)
    }
}

/// Runs the contrast detector on one frame. Detections come back in the
/// frame's own coordinate system.
pub fn contrast_detector(
    frame: &Frame,
    cfg: &DetectorConfig,
    calibration: &DetectorCalibration,
) -> Vec<Detection> {
    DetectorContext::new(frame, cfg).detect(cfg, calibration.contrast_threshold)
}

/// Tunes the contrast threshold for one degradation level: sweeps
/// [`THRESHOLD_GRID`] over the supplied (already degraded) frames and keeps
/// the threshold with the best total recall at IoU 0.5. Ties keep the lowest
/// threshold. This plays the role the per-level model retraining plays in a
/// learned pipeline.
pub fn calibrate_detector(
    frames: &[Frame],
    truths: &[Vec<Annotation>],
    cfg: &DetectorConfig,
) -> DetectorCalibration {
    assert_eq!(frames.len(), truths.len(), "one truth list per frame");
    let contexts: Vec<DetectorContext> = frames
        .iter()
        .map(|frame| DetectorContext::new(frame, cfg))
        .collect();
    let mut best = DetectorCalibration {
        contrast_threshold: THRESHOLD_GRID[0],
        calibration_accuracy: -1.0,
    };
    for &threshold in THRESHOLD_GRID.iter() {
        let mut counts = MatchCounts::default();
        for (context, frame_truths) in contexts.iter().zip(truths) {
            let detections = context.detect(cfg, threshold);
            counts.merge(super::match_detections(&detections, frame_truths, 0.5));
        }
        let accuracy = counts.accuracy().unwrap_or(0.0);
        if accuracy > best.calibration_accuracy {
            best = DetectorCalibration {
                contrast_threshold: threshold,
                calibration_accuracy: accuracy,
            };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::match_detections;

    fn small_cfg() -> DetectorConfig {
        DetectorConfig {
            input_size: 128,
            min_component_area: 24,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let (frame_a, ann_a) = synthesize_scene(42, 3, 128, 96).unwrap();
        let (frame_b, ann_b) = synthesize_scene(42, 3, 128, 96).unwrap();
        assert_eq!(frame_a, frame_b);
        assert_eq!(ann_a, ann_b);
        let (frame_c, _) = synthesize_scene(43, 3, 128, 96).unwrap();
        assert_ne!(frame_a, frame_c);
    }

    #[test]
    fn scene_without_targets_is_background_only() {
        let (frame, annotations) = synthesize_scene(7, 0, 64, 48).unwrap();
        assert!(annotations.is_empty());
        // No rendered targets: nothing approaches the target fill level.
        let max = *frame.data().iter().max().unwrap();
        assert!((max as f64) < BACKGROUND_MEAN + TARGET_CONTRAST - 40.0);
    }

    #[test]
    fn scene_rejects_impossible_packing() {
        assert!(matches!(
            synthesize_scene(1, 100, 32, 32),
            Err(DetectError::TooManyTargets { requested: 100, .. })
        ));
    }

    #[test]
    fn annotations_match_rendered_boxes() {
        let (frame, annotations) = synthesize_scene(9, 3, 128, 96).unwrap();
        for annotation in &annotations {
            let b = &annotation.bbox;
            // Pixels inside the box sit at the bright fill, up to dither.
            let inside = frame.pixel(b.x_min as usize, b.y_min as usize);
            assert!((inside[0] as f64 - 218.0).abs() <= SCENE_DITHER + 1.0);
            // One pixel outside the left edge is background texture.
            let outside = frame.pixel(b.x_min as usize - 1, b.y_min as usize);
            assert!(outside[0] < 218 - 40);
        }
    }

    #[test]
    fn detector_finds_all_targets_on_clean_scene() {
        let cfg = small_cfg();
        for seed in [1u64, 2, 3, 4] {
            let (frame, truths) = synthesize_scene(seed, 3, 128, 96).unwrap();
            let calibration =
                calibrate_detector(std::slice::from_ref(&frame), &[truths.clone()], &cfg);
            assert_eq!(calibration.calibration_accuracy, 1.0, "seed {seed}");
            let detections = contrast_detector(&frame, &cfg, &calibration);
            let counts = match_detections(&detections, &truths, 0.5);
            assert_eq!(counts.tp, truths.len(), "seed {seed}: {counts:?}");
        }
    }

    #[test]
    fn detector_on_blank_frame_is_empty() {
        let blank = Frame::filled(64, 64, [90, 90, 90]).unwrap();
        let detections =
            contrast_detector(&blank, &small_cfg(), &DetectorCalibration::default());
        assert!(detections.is_empty());
    }

    #[test]
    fn heavy_compression_never_beats_lossless() {
        use crate::codec::{BuiltinCodec, CompressionProfile, Crf, VideoCodec};
        let cfg = small_cfg();
        let scenes: Vec<_> = (0..4)
            .map(|i| synthesize_scene(100 + i, 3, 128, 96).unwrap())
            .collect();
        let frames: Vec<Frame> = scenes.iter().map(|(f, _)| f.clone()).collect();
        let truths: Vec<Vec<Annotation>> = scenes.iter().map(|(_, t)| t.clone()).collect();

        let accuracy_at = |crf: u8| {
            let profile = CompressionProfile::builtin(Crf::new(crf).unwrap());
            let decoded = BuiltinCodec
                .decode(&BuiltinCodec.encode(&frames, &profile).unwrap())
                .unwrap();
            let calibration = calibrate_detector(&decoded, &truths, &cfg);
            calibration.calibration_accuracy
        };
        assert!(accuracy_at(51) <= accuracy_at(0));
    }

    #[test]
    fn textured_frame_stays_near_mean() {
        let frame = textured_frame(5, 64, 64, 128.0, 12.0);
        let mean =
            frame.data().iter().map(|&v| v as f64).sum::<f64>() / frame.data().len() as f64;
        assert!((mean - 128.0).abs() < 6.0, "mean {mean}");
        let max = *frame.data().iter().max().unwrap();
        let min = *frame.data().iter().min().unwrap();
        assert!(max <= 145 && min >= 111, "range {min}..{max}");
    }
}
