//! Adapter for an external video encoder exposing a CRF flag.
//!
//! The adapter shells out to a configured executable, moving frames in and
//! out through raster files. It is deliberately not part of the default
//! build: every calibration and acceptance path runs on the built-in codec.

use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::codec::{
    CodecError, CodecId, CompressedSegment, CompressionProfile, VideoCodec,
};
use crate::frame::{self, Frame};

/// One lock per process: external tools are invoked serially.
static EXEC_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalEncoderConfig {
    pub executable: PathBuf,
    /// Encode arguments; `{input}` expands to a numbered raster pattern,
    /// `{output}` to the container path, `{crf}` to the CRF value.
    pub encode_args: Vec<String>,
    /// Decode arguments; `{input}` is the container, `{output}` a numbered
    /// raster pattern to write.
    pub decode_args: Vec<String>,
    /// File extension of the container the tool produces, e.g. "mp4".
    pub container_extension: String,
}

pub struct ExternalCodec {
    config: ExternalEncoderConfig,
}

impl ExternalCodec {
    pub fn new(config: ExternalEncoderConfig) -> Self {
        Self { config }
    }

    fn run(&self, args: &[String]) -> Result<(), CodecError> {
        let _guard = EXEC_LOCK.lock().expect("external codec lock");
        let output = Command::new(&self.config.executable)
            .args(args)
            .output()
            .map_err(|e| CodecError::ExternalEncoderFailure {
                status: None,
                stderr: format!("failed to launch {}: {e}", self.config.executable.display()),
            })?;
        if !output.status.success() {
            return Err(CodecError::ExternalEncoderFailure {
                status: output.status.code(),
                stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
            });
        }
        Ok(())
    }
}

pub fn expand_template(args: &[String], pairs: &[(&str, String)]) -> Vec<String> {
    args.iter()
        .map(|arg| {
            let mut expanded = arg.clone();
            for (key, value) in pairs {
                expanded = expanded.replace(key, value);
            }
            expanded
        })
        .collect()
}

fn frame_pattern(dir: &std::path::Path) -> PathBuf {
    dir.join("frame_%06d.ppm")
}

fn frame_path(dir: &std::path::Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:06}.ppm"))
}

impl VideoCodec for ExternalCodec {
    fn id(&self) -> CodecId {
        CodecId::External
    }

    fn encode(
        &self,
        frames: &[Frame],
        profile: &CompressionProfile,
    ) -> Result<CompressedSegment, CodecError> {
        let first = frames.first().ok_or(CodecError::EmptySequence)?;
        let (width, height) = (first.width(), first.height());
        for (index, f) in frames.iter().enumerate() {
            if f.width() != width || f.height() != height {
                return Err(CodecError::MixedDimensions {
                    index,
                    width: f.width(),
                    height: f.height(),
                    seg_width: width,
                    seg_height: height,
                });
            }
        }
        let dir = tempfile::tempdir().map_err(|e| CodecError::ExternalEncoderFailure {
            status: None,
            stderr: format!("temp dir: {e}"),
        })?;
        // External frame numbering is 1-based to match common tools.
        for (i, f) in frames.iter().enumerate() {
            frame::save_raster(f, frame_path(dir.path(), i + 1)).map_err(|e| {
                CodecError::ExternalEncoderFailure {
                    status: None,
                    stderr: e.to_string(),
                }
            })?;
        }
        let container = dir
            .path()
            .join(format!("segment.{}", self.config.container_extension));
        let args = expand_template(
            &self.config.encode_args,
            &[
                ("{input}", frame_pattern(dir.path()).display().to_string()),
                ("{output}", container.display().to_string()),
                ("{crf}", profile.crf.to_string()),
            ],
        );
        self.run(&args)?;
        let payload = std::fs::read(&container).map_err(|e| CodecError::ExternalEncoderFailure {
            status: None,
            stderr: format!("reading container: {e}"),
        })?;
        Ok(CompressedSegment {
            profile: *profile,
            payload,
            frame_count: frames.len(),
            width,
            height,
        })
    }

    fn decode(&self, seg: &CompressedSegment) -> Result<Vec<Frame>, CodecError> {
        let dir = tempfile::tempdir().map_err(|e| CodecError::ExternalEncoderFailure {
            status: None,
            stderr: format!("temp dir: {e}"),
        })?;
        let container = dir
            .path()
            .join(format!("segment.{}", self.config.container_extension));
        std::fs::write(&container, &seg.payload).map_err(|e| {
            CodecError::ExternalEncoderFailure {
                status: None,
                stderr: format!("writing container: {e}"),
            }
        })?;
        let args = expand_template(
            &self.config.decode_args,
            &[
                ("{input}", container.display().to_string()),
                ("{output}", frame_pattern(dir.path()).display().to_string()),
            ],
        );
        self.run(&args)?;
        let mut frames = Vec::with_capacity(seg.frame_count);
        for i in 0..seg.frame_count {
            let path = frame_path(dir.path(), i + 1);
            let frame = frame::load_raster(&path).map_err(|e| CodecError::CorruptPayload {
                offset: 0,
                reason: format!("decoded frame {} unreadable: {e}", i + 1),
            })?;
            frames.push(frame);
        }
        Ok(frames)
    }
}
