//! Bandwidth-aware adaptive video compression for detection workloads.
//!
//! Environmental conditions (darkness, rain) change how aggressively a video
//! feed can be compressed before object detection degrades. This crate
//! classifies the current condition, looks up the highest safe compression
//! level from an offline-calibrated reference table, and keeps detection
//! accuracy pinned while minimizing transmitted bits.
//!
//! The pipeline is built from small, independently testable pieces:
//!
//! - [`frame`]: frame representation, HSL conversion, raster I/O
//! - [`metrics`]: MSE/RMSE/PSNR/SSIM at frame and segment granularity
//! - [`codec`]: error-bounded compression behind a uniform codec trait
//! - [`augment`]: synthetic darkness and rain at configurable severities
//! - [`detect`]: boxes, NMS, matching, VOC parsing, synthetic scenes
//! - [`classify`]: seven-class condition classification
//! - [`calibrate`]: offline reference-table construction
//! - [`controller`]: the per-frame adaptive compression loop
//! - [`cli`]: the command-line harness wiring everything together

pub mod augment;
pub mod calibrate;
pub mod classify;
pub mod codec;
pub mod controller;
pub mod corpus;
pub mod detect;
pub mod frame;
pub mod metrics;
pub mod seeds;
