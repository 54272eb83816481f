//! Parametric synthesis of the seven environmental conditions from
//! clear-weather frames: darkness by scaling HSL lightness, rain by
//! overlaying slanted bright streaks and a box blur.
//!
//! Everything here is a pure function of (frame, parameters, seed); rain
//! placement comes from ChaCha8 so corpora reproduce bit-for-bit across
//! platforms and releases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::EnvCondition;
use crate::frame::{hsl_to_rgb, rgb_to_hsl, Frame};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("darkness factor {0} outside (0,1]")]
    InvalidFactor(f64),
    #[error("severity for {condition} violates its invariants: {reason}")]
    InvalidSeverity {
        condition: EnvCondition,
        reason: String,
    },
}

pub const DEFAULT_STREAK_COLOR: [u8; 3] = [200, 200, 200];
pub const DEFAULT_STREAK_LENGTH: f64 = 12.0;

/// Streak slant range in degrees, measured from the horizontal axis with y
/// pointing down; 90 is straight down.
pub const STREAK_ANGLE_MIN_DEG: f64 = 70.0;
pub const STREAK_ANGLE_MAX_DEG: f64 = 110.0;

/// Augmentation strength for one condition, before a seed is attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityParams {
    /// Lightness multiplier in (0,1]; 1 leaves the frame untouched.
    pub darkness_factor: f64,
    /// Streaks per megapixel.
    pub streak_density: f64,
    /// Streak length in pixels.
    pub streak_length: f64,
    /// Box blur radius in pixels; 0 disables the blur.
    pub blur_radius: usize,
    pub streak_color: [u8; 3],
}

impl SeverityParams {
    fn identity() -> Self {
        Self {
            darkness_factor: 1.0,
            streak_density: 0.0,
            streak_length: DEFAULT_STREAK_LENGTH,
            blur_radius: 0,
            streak_color: DEFAULT_STREAK_COLOR,
        }
    }

    fn darkness(factor: f64) -> Self {
        Self {
            darkness_factor: factor,
            ..Self::identity()
        }
    }

    fn rain(density: f64, blur_radius: usize) -> Self {
        Self {
            streak_density: density,
            blur_radius,
            ..Self::identity()
        }
    }
}

/// Per-condition severity table. The shipped values are artifact defaults,
/// kept as data so deployments can override them in config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityTable {
    pub normal: SeverityParams,
    pub light_dark: SeverityParams,
    pub medium_dark: SeverityParams,
    pub high_dark: SeverityParams,
    pub light_rain: SeverityParams,
    pub moderate_rain: SeverityParams,
    pub heavy_rain: SeverityParams,
}

impl Default for SeverityTable {
    fn default() -> Self {
        Self {
            normal: SeverityParams::identity(),
            light_dark: SeverityParams::darkness(0.7),
            medium_dark: SeverityParams::darkness(0.5),
            high_dark: SeverityParams::darkness(0.3),
            light_rain: SeverityParams::rain(50.0, 1),
            moderate_rain: SeverityParams::rain(150.0, 1),
            heavy_rain: SeverityParams::rain(300.0, 2),
        }
    }
}

impl SeverityTable {
    pub fn params(&self, condition: EnvCondition) -> &SeverityParams {
        match condition {
            EnvCondition::Normal => &self.normal,
            EnvCondition::LightDark => &self.light_dark,
            EnvCondition::MediumDark => &self.medium_dark,
            EnvCondition::HighDark => &self.high_dark,
            EnvCondition::LightRain => &self.light_rain,
            EnvCondition::ModerateRain => &self.moderate_rain,
            EnvCondition::HeavyRain => &self.heavy_rain,
        }
    }

    pub fn severity(&self, condition: EnvCondition, seed: u64) -> Severity {
        Severity {
            condition,
            params: *self.params(condition),
            seed,
        }
    }
}

/// A condition, its augmentation parameters, and the seed that fixes the
/// streak placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Severity {
    pub condition: EnvCondition,
    #[serde(flatten)]
    pub params: SeverityParams,
    pub seed: u64,
}

impl Severity {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let p = &self.params;
        let fail = |reason: &str| {
            Err(AugmentError::InvalidSeverity {
                condition: self.condition,
                reason: reason.to_string(),
            })
        };
        if !(p.darkness_factor > 0.0 && p.darkness_factor <= 1.0) {
            return fail("darkness_factor outside (0,1]");
        }
        if p.streak_density < 0.0 {
            return fail("streak_density negative");
        }
        match self.condition {
            EnvCondition::Normal => {
                if p.darkness_factor != 1.0 || p.streak_density != 0.0 || p.blur_radius != 0 {
                    return fail("normal must be the identity");
                }
            }
            c if c.is_darkness() => {
                if p.streak_density != 0.0 {
                    return fail("darkness severities must not add streaks");
                }
            }
            _ => {
                if p.darkness_factor != 1.0 {
                    return fail("rain severities must not darken");
                }
            }
        }
        Ok(())
    }
}

/// Scales per-pixel HSL lightness by `factor`, preserving hue and
/// saturation up to conversion rounding.
pub fn darken(frame: &Frame, factor: f64) -> Result<Frame, AugmentError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(AugmentError::InvalidFactor(factor));
    }
    let mut out = frame.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        let mut hsl = rgb_to_hsl(px[0], px[1], px[2]);
        hsl.lightness *= factor;
        let (r, g, b) = hsl_to_rgb(hsl);
        px.copy_from_slice(&[r, g, b]);
    }
    Ok(out)
}

/// Overlays `round(density * width * height / 1e6)` anti-aliased streaks
/// (Wu's line algorithm), slanted uniformly within
/// [`STREAK_ANGLE_MIN_DEG`, `STREAK_ANGLE_MAX_DEG`], then applies a
/// normalized box blur. Placement draws x, y, then angle per streak from
/// ChaCha8 seeded with `seed`.
pub fn add_rain(
    frame: &Frame,
    density: f64,
    length: f64,
    blur_radius: usize,
    seed: u64,
) -> Frame {
    add_rain_colored(frame, density, length, blur_radius, seed, DEFAULT_STREAK_COLOR)
}

pub fn add_rain_colored(
    frame: &Frame,
    density: f64,
    length: f64,
    blur_radius: usize,
    seed: u64,
    color: [u8; 3],
) -> Frame {
    assert!(density >= 0.0, "streak density must be non-negative");
    let mut out = frame.clone();
    let count =
        (density * frame.width() as f64 * frame.height() as f64 / 1e6).round() as usize;
    if count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            let x0 = rng.gen_range(0.0..frame.width() as f64);
            let y0 = rng.gen_range(0.0..frame.height() as f64);
            let angle = rng
                .gen_range(STREAK_ANGLE_MIN_DEG..=STREAK_ANGLE_MAX_DEG)
                .to_radians();
            let x1 = x0 + length * angle.cos();
            let y1 = y0 + length * angle.sin();
            draw_line_aa(&mut out, x0, y0, x1, y1, color);
        }
    }
    if blur_radius > 0 {
        out = box_blur(&out, blur_radius);
    }
    out
}

/// Darken, then rain, each skipped at its identity value.
pub fn synthesize(frame: &Frame, severity: &Severity) -> Result<Frame, AugmentError> {
    severity.validate()?;
    let p = &severity.params;
    let mut out = if p.darkness_factor < 1.0 {
        darken(frame, p.darkness_factor)?
    } else {
        frame.clone()
    };
    if p.streak_density > 0.0 || p.blur_radius > 0 {
        out = add_rain_colored(
            &out,
            p.streak_density,
            p.streak_length,
            p.blur_radius,
            severity.seed,
            p.streak_color,
        );
    }
    Ok(out)
}

fn blend(frame: &mut Frame, x: isize, y: isize, color: [u8; 3], alpha: f64) {
    if x < 0 || y < 0 || x >= frame.width() as isize || y >= frame.height() as isize {
        return;
    }
    let alpha = alpha.clamp(0.0, 1.0);
    let (x, y) = (x as usize, y as usize);
    let px = frame.pixel(x, y);
    let mut blended = [0u8; 3];
    for c in 0..3 {
        blended[c] =
            (px[c] as f64 * (1.0 - alpha) + color[c] as f64 * alpha).round() as u8;
    }
    frame.set_pixel(x, y, blended);
}

/// Xiaolin Wu anti-aliased line.
fn draw_line_aa(frame: &mut Frame, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
    let steep = (y1 - y0).abs() > (x1 - x0).abs();
    let (mut x0, mut y0, mut x1, mut y1) = if steep {
        (y0, x0, y1, x1)
    } else {
        (x0, y0, x1, y1)
    };
    if x0 > x1 {
        std::mem::swap(&mut x0, &mut x1);
        std::mem::swap(&mut y0, &mut y1);
    }
    let dx = x1 - x0;
    let gradient = if dx == 0.0 { 1.0 } else { (y1 - y0) / dx };

    let mut plot = |x: isize, y: isize, alpha: f64| {
        if steep {
            blend(frame, y, x, color, alpha);
        } else {
            blend(frame, x, y, color, alpha);
        }
    };

    let fpart = |v: f64| v - v.floor();
    let rfpart = |v: f64| 1.0 - fpart(v);

    // First endpoint.
    let x_end = x0.round();
    let y_end = y0 + gradient * (x_end - x0);
    let x_gap = rfpart(x0 + 0.5);
    let x_px1 = x_end as isize;
    let y_px1 = y_end.floor() as isize;
    plot(x_px1, y_px1, rfpart(y_end) * x_gap);
    plot(x_px1, y_px1 + 1, fpart(y_end) * x_gap);
    let mut intery = y_end + gradient;

    // Second endpoint.
    let x_end2 = x1.round();
    let y_end2 = y1 + gradient * (x_end2 - x1);
    let x_gap2 = fpart(x1 + 0.5);
    let x_px2 = x_end2 as isize;
    let y_px2 = y_end2.floor() as isize;

    for x in (x_px1 + 1)..x_px2 {
        plot(x, intery.floor() as isize, rfpart(intery));
        plot(x, intery.floor() as isize + 1, fpart(intery));
        intery += gradient;
    }

    plot(x_px2, y_px2, rfpart(y_end2) * x_gap2);
    plot(x_px2, y_px2 + 1, fpart(y_end2) * x_gap2);
}

/// Separable box blur with edge-truncated, renormalized windows.
fn box_blur(frame: &Frame, radius: usize) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let data = frame.data();
    let mut horizontal = vec![0.0f64; data.len()];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            let span = (hi - lo + 1) as f64;
            for c in 0..3 {
                let mut sum = 0.0;
                for xi in lo..=hi {
                    sum += data[(y * w + xi) * 3 + c] as f64;
                }
                horizontal[(y * w + x) * 3 + c] = sum / span;
            }
        }
    }
    let mut out = vec![0u8; data.len()];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        let span = (hi - lo + 1) as f64;
        for x in 0..w {
            for c in 0..3 {
                let mut sum = 0.0;
                for yi in lo..=hi {
                    sum += horizontal[(yi * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = (sum / span).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Frame::new(w, h, out).expect("blur preserves dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    fn gray(w: usize, h: usize, v: u8) -> Frame {
        Frame::filled(w, h, [v, v, v]).unwrap()
    }

    fn max_channel_diff(a: &Frame, b: &Frame) -> i16 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x as i16 - y as i16).abs())
            .max()
            .unwrap()
    }

    #[test]
    fn darken_factor_one_is_identity_up_to_rounding() {
        let frame = crate::detect::synthetic::textured_frame(3, 32, 32, 128.0, 60.0);
        let out = darken(&frame, 1.0).unwrap();
        assert!(max_channel_diff(&frame, &out) <= 1);
    }

    #[test]
    fn darken_black_stays_black() {
        let black = gray(8, 8, 0);
        assert_eq!(darken(&black, 0.25).unwrap(), black);
    }

    #[test]
    fn darken_halves_gray_200() {
        let out = darken(&gray(8, 8, 200), 0.5).unwrap();
        for &v in out.data() {
            assert!((v as i16 - 100).abs() <= 1, "{v}");
        }
    }

    #[test]
    fn darken_rejects_bad_factor() {
        let frame = gray(4, 4, 10);
        assert!(matches!(darken(&frame, 0.0), Err(AugmentError::InvalidFactor(_))));
        assert!(matches!(darken(&frame, 1.5), Err(AugmentError::InvalidFactor(_))));
    }

    #[test]
    fn darken_is_monotone_in_factor() {
        let frame = crate::detect::synthetic::textured_frame(5, 24, 24, 140.0, 50.0);
        let mean = |f: &Frame| {
            f.data().iter().map(|&v| v as f64).sum::<f64>() / f.data().len() as f64
        };
        let m07 = mean(&darken(&frame, 0.7).unwrap());
        let m05 = mean(&darken(&frame, 0.5).unwrap());
        let m03 = mean(&darken(&frame, 0.3).unwrap());
        assert!(m03 <= m05 && m05 <= m07);
    }

    #[test]
    fn rain_noop_parameters_leave_frame_untouched() {
        let frame = crate::detect::synthetic::textured_frame(9, 32, 32, 128.0, 40.0);
        assert_eq!(add_rain(&frame, 0.0, 12.0, 0, 42), frame);
    }

    #[test]
    fn rain_is_deterministic_per_seed() {
        let frame = crate::detect::synthetic::textured_frame(1, 48, 48, 128.0, 40.0);
        let a = add_rain(&frame, 4000.0, 12.0, 1, 7);
        let b = add_rain(&frame, 4000.0, 12.0, 1, 7);
        assert_eq!(a, b);
        let c = add_rain(&frame, 4000.0, 12.0, 1, 8);
        assert_ne!(a, c, "different seed should move the streaks");
    }

    #[test]
    fn heavier_rain_lowers_psnr() {
        let table = SeverityTable::default();
        let frame = crate::detect::synthetic::textured_frame(2, 160, 120, 128.0, 40.0);
        let light = synthesize(&frame, &table.severity(EnvCondition::LightRain, 5)).unwrap();
        let heavy = synthesize(&frame, &table.severity(EnvCondition::HeavyRain, 5)).unwrap();
        let psnr_light = psnr(&frame, &light).unwrap();
        let psnr_heavy = psnr(&frame, &heavy).unwrap();
        assert!(psnr_heavy < psnr_light, "{psnr_heavy} vs {psnr_light}");
    }

    #[test]
    fn more_streaks_never_raise_psnr() {
        let frame = crate::detect::synthetic::textured_frame(4, 160, 120, 128.0, 40.0);
        let mut last = f64::INFINITY;
        for density in [0.0, 100.0, 400.0, 1600.0] {
            let rained = add_rain(&frame, density, 12.0, 0, 11);
            let value = psnr(&frame, &rained).unwrap();
            assert!(value <= last, "density {density}: {value} > {last}");
            last = value;
        }
    }

    #[test]
    fn synthesize_normal_is_identity() {
        let table = SeverityTable::default();
        let frame = crate::detect::synthetic::textured_frame(6, 32, 32, 128.0, 40.0);
        let out = synthesize(&frame, &table.severity(EnvCondition::Normal, 0)).unwrap();
        assert!(max_channel_diff(&frame, &out) <= 1);
    }

    #[test]
    fn synthesize_high_dark_hits_expected_mean() {
        let table = SeverityTable::default();
        let frame = gray(16, 16, 200);
        let out = synthesize(&frame, &table.severity(EnvCondition::HighDark, 0)).unwrap();
        let mean =
            out.data().iter().map(|&v| v as f64).sum::<f64>() / out.data().len() as f64;
        assert!((mean - 60.0).abs() <= 2.0, "mean {mean}");
    }

    #[test]
    fn severity_invariants_enforced() {
        let mut severity = SeverityTable::default().severity(EnvCondition::Normal, 0);
        severity.params.streak_density = 10.0;
        assert!(severity.validate().is_err());

        let mut severity = SeverityTable::default().severity(EnvCondition::HighDark, 0);
        severity.params.streak_density = 1.0;
        assert!(severity.validate().is_err());

        let mut severity = SeverityTable::default().severity(EnvCondition::HeavyRain, 0);
        severity.params.darkness_factor = 0.5;
        assert!(severity.validate().is_err());
    }

    #[test]
    fn severity_table_round_trips_as_json() {
        let table = SeverityTable::default();
        let json = serde_json::to_string_pretty(&table).unwrap();
        let back: SeverityTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, table);
    }
}
