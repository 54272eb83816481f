//! Error-bounded lossy compression behind a uniform codec interface.
//!
//! The built-in codec quantizes each 8-bit sample with a uniform step
//! `q = 1 + crf` (so crf 0 is lossless) and run-length encodes the quantized
//! stream. It exists so calibration and the controller can be exercised
//! hermetically; an external tool can be swapped in behind the same trait
//! (`external-encoder` feature) and is measured empirically the same way.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;
use crate::metrics::{self, MetricsError};

#[cfg(feature = "external-encoder")]
pub mod external;

pub const CRF_MIN: u8 = 0;
pub const CRF_MAX: u8 = 51;

const MAGIC: &[u8; 4] = b"EBLC";
const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("crf {0} outside [{CRF_MIN},{CRF_MAX}]")]
    CrfOutOfRange(u8),
    #[error("cannot encode an empty frame sequence")]
    EmptySequence,
    #[error("frame {index} is {width}x{height}, segment is {seg_width}x{seg_height}")]
    MixedDimensions {
        index: usize,
        width: usize,
        height: usize,
        seg_width: usize,
        seg_height: usize,
    },
    #[error("corrupt payload at byte {offset}: {reason}")]
    CorruptPayload { offset: usize, reason: String },
    #[error("segment metadata does not match payload header: {0}")]
    HeaderMismatch(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("external encoder failed (status {status:?}): {stderr}")]
    ExternalEncoderFailure {
        status: Option<i32>,
        stderr: String,
    },
}

/// Constant rate factor: 0 is lossless, 51 is maximum compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Crf(u8);

impl Crf {
    pub fn new(value: u8) -> Result<Self, CodecError> {
        if value > CRF_MAX {
            return Err(CodecError::CrfOutOfRange(value));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Quantization step of the built-in codec at this level.
    pub fn step(self) -> u16 {
        1 + self.0 as u16
    }
}

impl std::fmt::Display for Crf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl<'de> Deserialize<'de> for Crf {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let value = u8::deserialize(de)?;
        Crf::new(value).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecId {
    Builtin,
    External,
}

impl CodecId {
    fn as_byte(self) -> u8 {
        match self {
            CodecId::Builtin => 0,
            CodecId::External => 1,
        }
    }

    fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(CodecId::Builtin),
            1 => Some(CodecId::External),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompressionProfile {
    pub codec_id: CodecId,
    pub crf: Crf,
}

impl CompressionProfile {
    pub fn builtin(crf: Crf) -> Self {
        Self {
            codec_id: CodecId::Builtin,
            crf,
        }
    }
}

/// One encoded run of frames plus the metadata needed to decode and account
/// for it. `payload` includes the 32-byte container header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedSegment {
    pub profile: CompressionProfile,
    pub payload: Vec<u8>,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
}

impl CompressedSegment {
    pub fn duration_secs(&self, fps: f64) -> f64 {
        self.frame_count as f64 / fps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitrateReport {
    pub bits_total: u64,
    pub duration_secs: f64,
    pub bitrate_mbps: f64,
}

/// `bits / duration / 1e6`, with duration derived from the frame count.
pub fn measure_bitrate(seg: &CompressedSegment, fps: f64) -> BitrateReport {
    assert!(fps > 0.0, "fps must be positive");
    let bits_total = 8 * seg.payload.len() as u64;
    let duration_secs = seg.duration_secs(fps);
    BitrateReport {
        bits_total,
        duration_secs,
        bitrate_mbps: bits_total as f64 / duration_secs / 1e6,
    }
}

pub trait VideoCodec {
    fn id(&self) -> CodecId;
    fn encode(
        &self,
        frames: &[Frame],
        profile: &CompressionProfile,
    ) -> Result<CompressedSegment, CodecError>;
    fn decode(&self, seg: &CompressedSegment) -> Result<Vec<Frame>, CodecError>;
}

/// Uniform scalar quantization + run-length coding. Deterministic: identical
/// input and profile always produce identical bytes.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinCodec;

impl VideoCodec for BuiltinCodec {
    fn id(&self) -> CodecId {
        CodecId::Builtin
    }

    fn encode(
        &self,
        frames: &[Frame],
        profile: &CompressionProfile,
    ) -> Result<CompressedSegment, CodecError> {
        let first = frames.first().ok_or(CodecError::EmptySequence)?;
        let (width, height) = (first.width(), first.height());
        for (index, frame) in frames.iter().enumerate() {
            if frame.width() != width || frame.height() != height {
                return Err(CodecError::MixedDimensions {
                    index,
                    width: frame.width(),
                    height: frame.height(),
                    seg_width: width,
                    seg_height: height,
                });
            }
        }
        let step = profile.crf.step();
        let mut quantized = Vec::with_capacity(frames.len() * width * height * 3);
        for frame in frames {
            quantized.extend(frame.data().iter().map(|&v| quantize(v, step)));
        }
        let mut payload = build_header(profile, width, height, frames.len());
        rle_encode(&quantized, &mut payload);
        Ok(CompressedSegment {
            profile: *profile,
            payload,
            frame_count: frames.len(),
            width,
            height,
        })
    }

    fn decode(&self, seg: &CompressedSegment) -> Result<Vec<Frame>, CodecError> {
        let header = parse_header(&seg.payload)?;
        if header.width != seg.width
            || header.height != seg.height
            || header.frame_count != seg.frame_count
            || header.crf != seg.profile.crf
        {
            return Err(CodecError::HeaderMismatch(format!(
                "header says {}x{} x{} crf {}, segment says {}x{} x{} crf {}",
                header.width,
                header.height,
                header.frame_count,
                header.crf,
                seg.width,
                seg.height,
                seg.frame_count,
                seg.profile.crf,
            )));
        }
        let expected = seg.frame_count * seg.width * seg.height * 3;
        let samples = rle_decode(&seg.payload[HEADER_LEN..], HEADER_LEN, expected)?;
        let frame_len = seg.width * seg.height * 3;
        samples
            .chunks_exact(frame_len)
            .map(|chunk| {
                Frame::new(seg.width, seg.height, chunk.to_vec()).map_err(|e| {
                    CodecError::CorruptPayload {
                        offset: HEADER_LEN,
                        reason: e.to_string(),
                    }
                })
            })
            .collect()
    }
}

#[inline]
fn quantize(value: u8, step: u16) -> u8 {
    if step == 1 {
        return value;
    }
    let step = step as f64;
    ((value as f64 / step).round() * step).clamp(0.0, 255.0) as u8
}

struct Header {
    crf: Crf,
    width: usize,
    height: usize,
    frame_count: usize,
}

fn build_header(
    profile: &CompressionProfile,
    width: usize,
    height: usize,
    frame_count: usize,
) -> Vec<u8> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.push(FORMAT_VERSION);
    header.push(profile.codec_id.as_byte());
    header.push(profile.crf.get());
    header.extend_from_slice(&(width as u32).to_be_bytes());
    header.extend_from_slice(&(height as u32).to_be_bytes());
    header.extend_from_slice(&(frame_count as u32).to_be_bytes());
    header.resize(HEADER_LEN, 0);
    header
}

fn parse_header(payload: &[u8]) -> Result<Header, CodecError> {
    if payload.len() < HEADER_LEN {
        return Err(CodecError::CorruptPayload {
            offset: payload.len(),
            reason: "payload shorter than header".into(),
        });
    }
    if &payload[..4] != MAGIC {
        return Err(CodecError::CorruptPayload {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    if payload[4] != FORMAT_VERSION {
        return Err(CodecError::CorruptPayload {
            offset: 4,
            reason: format!("unsupported version {}", payload[4]),
        });
    }
    if CodecId::from_byte(payload[5]).is_none() {
        return Err(CodecError::CorruptPayload {
            offset: 5,
            reason: format!("unknown codec id {}", payload[5]),
        });
    }
    let crf = Crf::new(payload[6]).map_err(|_| CodecError::CorruptPayload {
        offset: 6,
        reason: format!("crf {} out of range", payload[6]),
    })?;
    let read_u32 = |at: usize| u32::from_be_bytes(payload[at..at + 4].try_into().unwrap()) as usize;
    Ok(Header {
        crf,
        width: read_u32(7),
        height: read_u32(11),
        frame_count: read_u32(15),
    })
}

// Run-length coding, PackBits style. Control byte c:
//   c in [0,127]   -> literal block, c+1 raw bytes follow
//   c in [128,255] -> run block, one value byte follows, repeated c-125 times
// Runs shorter than 3 ride along inside literal blocks, so worst-case
// expansion on incompressible data is 1 control byte per 128 literals.
const MAX_LITERAL: usize = 128;
const MIN_RUN: usize = 3;
const MAX_RUN: usize = 130;

fn rle_encode(data: &[u8], out: &mut Vec<u8>) {
    let mut literal_start = 0usize;
    let mut pos = 0usize;
    while pos < data.len() {
        let value = data[pos];
        let mut run_end = pos + 1;
        while run_end < data.len() && data[run_end] == value {
            run_end += 1;
        }
        let run_len = run_end - pos;
        if run_len >= MIN_RUN {
            flush_literals(&data[literal_start..pos], out);
            let mut remaining = run_len;
            while remaining > 0 {
                let chunk = remaining.min(MAX_RUN);
                if chunk < MIN_RUN {
                    // Tail shorter than a run block; emit as a literal.
                    out.push((chunk - 1) as u8);
                    out.extend(std::iter::repeat(value).take(chunk));
                } else {
                    out.push((128 + (chunk - MIN_RUN)) as u8);
                    out.push(value);
                }
                remaining -= chunk;
            }
            literal_start = run_end;
        }
        pos = run_end;
    }
    flush_literals(&data[literal_start..], out);
}

fn flush_literals(chunk: &[u8], out: &mut Vec<u8>) {
    for block in chunk.chunks(MAX_LITERAL) {
        out.push((block.len() - 1) as u8);
        out.extend_from_slice(block);
    }
}

fn rle_decode(data: &[u8], base_offset: usize, expected: usize) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(expected);
    let mut pos = 0usize;
    while pos < data.len() {
        let control = data[pos];
        pos += 1;
        if control < 128 {
            let len = control as usize + 1;
            if pos + len > data.len() {
                return Err(CodecError::CorruptPayload {
                    offset: base_offset + data.len(),
                    reason: "literal block overruns payload".into(),
                });
            }
            out.extend_from_slice(&data[pos..pos + len]);
            pos += len;
        } else {
            if pos >= data.len() {
                return Err(CodecError::CorruptPayload {
                    offset: base_offset + data.len(),
                    reason: "run block missing value byte".into(),
                });
            }
            let len = control as usize - 125;
            out.extend(std::iter::repeat(data[pos]).take(len));
            pos += 1;
        }
        if out.len() > expected {
            return Err(CodecError::CorruptPayload {
                offset: base_offset + pos,
                reason: format!("decoded {} samples, expected {}", out.len(), expected),
            });
        }
    }
    if out.len() != expected {
        return Err(CodecError::CorruptPayload {
            offset: base_offset + data.len(),
            reason: format!("decoded {} samples, expected {}", out.len(), expected),
        });
    }
    Ok(out)
}

/// Empirical PSNR of a corpus pushed through `codec` at `crf`.
pub fn crf_to_psnr(
    corpus: &[Frame],
    codec: &dyn VideoCodec,
    crf: Crf,
) -> Result<f64, CodecError> {
    let profile = CompressionProfile {
        codec_id: codec.id(),
        crf,
    };
    let seg = codec.encode(corpus, &profile)?;
    let decoded = codec.decode(&seg)?;
    Ok(metrics::segment_quality(corpus, &decoded)?.psnr)
}
