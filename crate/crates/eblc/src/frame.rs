//! Frame representation, RGB/HSL conversion, and binary pixmap I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame dimensions must be positive (got {width}x{height})")]
    InvalidDimensions { width: usize, height: usize },
    #[error("sample buffer holds {actual} bytes, expected {expected} for {width}x{height}x3")]
    SampleCountMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("malformed pixmap header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("unsupported maxval {maxval} at byte {offset} (only 255 is accepted)")]
    UnsupportedMaxval { offset: usize, maxval: u64 },
    #[error("truncated pixel data at byte {offset}: expected {expected} bytes, found {actual}")]
    TruncatedData {
        offset: usize,
        expected: usize,
        actual: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One decoded RGB image: row-major, interleaved 8-bit samples,
/// `data.len() == width * height * 3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidDimensions { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(FrameError::SampleCountMismatch {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Frame filled with a single RGB value.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, FrameError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn same_dimensions(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma of every pixel, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|px| 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
            .collect()
    }

    /// Nearest-neighbor resize. Deterministic, no filtering.
    pub fn resize_nearest(&self, new_width: usize, new_height: usize) -> Frame {
        assert!(new_width > 0 && new_height > 0);
        let mut data = Vec::with_capacity(new_width * new_height * 3);
        for y in 0..new_height {
            let sy = y * self.height / new_height;
            for x in 0..new_width {
                let sx = x * self.width / new_width;
                let i = (sy * self.width + sx) * 3;
                data.extend_from_slice(&self.data[i..i + 3]);
            }
        }
        Frame {
            width: new_width,
            height: new_height,
            data,
        }
    }
}

/// Hue in degrees `[0,360)`, saturation and lightness in `[0,1]`.
/// Achromatic pixels carry hue 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HslPixel {
    pub hue: f64,
    pub saturation: f64,
    pub lightness: f64,
}

pub fn rgb_to_hsl(r: u8, g: u8, b: u8) -> HslPixel {
    let rf = r as f64 / 255.0;
    let gf = g as f64 / 255.0;
    let bf = b as f64 / 255.0;
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let lightness = (max + min) / 2.0;
    if max == min {
        return HslPixel {
            hue: 0.0,
            saturation: 0.0,
            lightness,
        };
    }
    let delta = max - min;
    let saturation = delta / (1.0 - (2.0 * lightness - 1.0).abs());
    let hue = if max == rf {
        60.0 * (((gf - bf) / delta).rem_euclid(6.0))
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    HslPixel {
        hue: hue.rem_euclid(360.0),
        saturation: saturation.clamp(0.0, 1.0),
        lightness,
    }
}

pub fn hsl_to_rgb(p: HslPixel) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * p.lightness - 1.0).abs()) * p.saturation;
    let h = p.hue.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = p.lightness - c / 2.0;
    let to_sample = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to_sample(r1), to_sample(g1), to_sample(b1))
}

/// Reads a binary pixmap: `P6`, whitespace-separated width/height/maxval
/// (maxval must be 255), one whitespace byte, then raw RGB samples.
pub fn load_raster(path: impl AsRef<Path>) -> Result<Frame, FrameError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FrameError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_raster(&bytes)
}

pub fn parse_raster(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(FrameError::MalformedHeader {
            offset: 0,
            reason: "missing P6 magic".into(),
        });
    }
    let mut pos = 2;
    let width = read_header_uint(bytes, &mut pos)?;
    let height = read_header_uint(bytes, &mut pos)?;
    let maxval_offset = {
        let mut probe = pos;
        skip_whitespace(bytes, &mut probe);
        probe
    };
    let maxval = read_header_uint(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(FrameError::UnsupportedMaxval {
            offset: maxval_offset,
            maxval,
        });
    }
    // Exactly one whitespace byte separates the header from the samples.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FrameError::MalformedHeader {
            offset: pos,
            reason: "expected whitespace before pixel data".into(),
        });
    }
    pos += 1;
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| FrameError::MalformedHeader {
            offset: 2,
            reason: "dimensions overflow".into(),
        })?;
    let actual = bytes.len() - pos;
    if actual < expected {
        return Err(FrameError::TruncatedData {
            offset: pos + actual,
            expected,
            actual,
        });
    }
    Frame::new(width, height, bytes[pos..pos + expected].to_vec())
}

pub fn save_raster(frame: &Frame, path: impl AsRef<Path>) -> Result<(), FrameError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(frame.data.len() + 32);
    write!(out, "P6\n{} {}\n255\n", frame.width, frame.height).expect("vec write");
    out.extend_from_slice(&frame.data);
    write_atomic(path, &out).map_err(|source| FrameError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes via a sibling temp file plus rename so partially written files
/// never appear under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp.partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn skip_whitespace(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn read_header_uint(bytes: &[u8], pos: &mut usize) -> Result<u64, FrameError> {
    skip_whitespace(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(FrameError::MalformedHeader {
            offset: start,
            reason: "expected decimal integer".into(),
        });
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).expect("digits are ascii");
    text.parse().map_err(|_| FrameError::MalformedHeader {
        offset: start,
        reason: "integer out of range".into(),
    })
}
