//! Request and response documents exchanged with model backends. Field
//! tables live in `docs/protocol.md`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BackendKind;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GeometricPrompt, MaskTrajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrRequest {
    pub audio_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrResponse {
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub video_id: String,
    pub frame_indices: Vec<usize>,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub exists: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    /// Omitted by backends that looked at exactly the requested frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_frames: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub video_id: String,
    pub prompt: String,
    pub template_id: u8,
    pub frame_count: usize,
    pub height: u32,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub trajectory: MaskTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub video_id: String,
    pub frame_count: usize,
    pub prompt: GeometricPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedFrameDoc {
    pub frame_index: usize,
    pub mask: BinaryMask,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResponse {
    pub anchor: usize,
    pub frames: Vec<RefinedFrameDoc>,
}

/// Existence verdict for a phrase over a set of sampled frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub exists: bool,
    pub rationale: Option<String>,
    pub sampled_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedMask {
    pub mask: BinaryMask,
    pub confidence: f64,
}

/// Masks propagated from an anchor over a contiguous window of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub anchor: usize,
    pub frames: BTreeMap<usize, RefinedMask>,
}

impl RefineResult {
    /// A result with no refined frames; fusing it changes nothing.
    pub fn empty(anchor: usize) -> Self {
        Self {
            anchor,
            frames: BTreeMap::new(),
        }
    }
}

/// The parts of a video a backend needs to know about. Frames are passed
/// by reference, never by pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRef {
    pub video_id: String,
    pub frame_count: usize,
    pub height: u32,
    pub width: u32,
}

pub(crate) fn validate_verdict(
    resp: JudgeResponse,
    requested: &[usize],
    frame_count: usize,
) -> Result<JudgeVerdict> {
    let sampled = resp.sampled_frames.unwrap_or_else(|| requested.to_vec());
    if let Some(bad) = sampled.iter().find(|&&t| t >= frame_count) {
        return Err(Error::protocol(
            BackendKind::Judge,
            format!("sampled frame {bad} is outside [0, {frame_count})"),
        ));
    }
    Ok(JudgeVerdict {
        exists: resp.exists,
        rationale: resp.rationale,
        sampled_frames: sampled,
    })
}

pub(crate) fn validate_trajectory(traj: &MaskTrajectory, video: &VideoRef) -> Result<()> {
    let kind = BackendKind::Segment;
    if traj.frame_count() != video.frame_count {
        return Err(Error::protocol(
            kind,
            format!(
                "trajectory has {} frames, video `{}` has {}",
                traj.frame_count(),
                video.video_id,
                video.frame_count
            ),
        ));
    }
    if let Some((t, m)) = traj
        .masks()
        .iter()
        .enumerate()
        .find(|(_, m)| m.dims() != (video.height, video.width))
    {
        return Err(Error::protocol(
            kind,
            format!(
                "frame {t} is {:?}, expected {:?}",
                m.dims(),
                (video.height, video.width)
            ),
        ));
    }
    Ok(())
}

pub(crate) fn validate_refine(
    resp: RefineResponse,
    prompt: &GeometricPrompt,
    video: &VideoRef,
) -> Result<RefineResult> {
    let kind = BackendKind::Refine;
    if resp.anchor != prompt.frame_index {
        return Err(Error::protocol(
            kind,
            format!(
                "response anchor {} differs from requested anchor {}",
                resp.anchor, prompt.frame_index
            ),
        ));
    }
    let mut frames = BTreeMap::new();
    for f in resp.frames {
        if f.frame_index >= video.frame_count {
            return Err(Error::protocol(
                kind,
                format!("frame {} is outside [0, {})", f.frame_index, video.frame_count),
            ));
        }
        if !(0.0..=1.0).contains(&f.confidence) {
            return Err(Error::protocol(
                kind,
                format!("frame {} confidence {} is not in [0, 1]", f.frame_index, f.confidence),
            ));
        }
        if f.mask.dims() != (video.height, video.width) {
            return Err(Error::protocol(
                kind,
                format!("frame {} mask is {:?}", f.frame_index, f.mask.dims()),
            ));
        }
        let refined = RefinedMask {
            mask: f.mask,
            confidence: f.confidence,
        };
        if frames.insert(f.frame_index, refined).is_some() {
            return Err(Error::protocol(kind, format!("frame {} repeated", f.frame_index)));
        }
    }
    if !frames.contains_key(&resp.anchor) {
        return Err(Error::protocol(kind, "anchor frame has no mask"));
    }
    let first = *frames.keys().next().expect("anchor present");
    let last = *frames.keys().next_back().expect("anchor present");
    if last - first + 1 != frames.len() {
        return Err(Error::protocol(kind, "refined frames are not a contiguous window"));
    }
    Ok(RefineResult {
        anchor: resp.anchor,
        frames,
    })
}
