//! Staged engine for audio-referring video object segmentation.
//!
//! A spoken referring expression is transcribed, checked for visual
//! existence, turned into a segmentation prompt, segmented over the whole
//! video, assessed for reliability and optionally refined from a trusted
//! anchor frame. Predictions are scored with J, F, J&F, N-acc, T-acc and
//! Final.

pub mod agentic;
pub mod backend;
pub mod error;
pub mod harness;
mod json;
pub mod mask;
pub mod metadata;
pub mod metrics;
pub mod orchestrator;
pub mod prompt;

pub use error::{Error, Result};
pub use mask::{BBox, BinaryMask, GeometricPrompt, MaskTrajectory, Point};
pub use metadata::{ExpressionRecord, PredictionRecord, NO_OBJECT_META};
pub use metrics::{EvalResult, ExpressionScore};
