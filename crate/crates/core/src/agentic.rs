//! Reliability assessment of a coarse trajectory, anchor selection,
//! geometric prompt derivation and fusion of refined masks.
//!
//! Signals, over the non-empty frames of a trajectory:
//!
//! * coverage: fraction of frames with a non-empty mask
//! * area smoothness: `1 - mean |A_next - A_prev| / max(A_next, A_prev)` over
//!   consecutive non-empty frames (empty frames are skipped)
//! * fragmentation: mean number of 4-connected components
//! * solidity: mean of `area / bbox area`
//!
//! Refinement is recommended when coverage reaches `coverage_min` and any
//! of smoothness, fragmentation or solidity is out of bounds.

use serde::{Deserialize, Serialize};

use crate::backend::RefineResult;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GeometricPrompt, MaskTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorWeights {
    pub solidity: f64,
    pub smoothness: f64,
    pub typical_area: f64,
}

impl Default for AnchorWeights {
    fn default() -> Self {
        Self {
            solidity: 1.0 / 3.0,
            smoothness: 1.0 / 3.0,
            typical_area: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgenticConfig {
    /// Below this coverage the trajectory is not worth refining.
    pub coverage_min: f64,
    pub smoothness_min: f64,
    pub fragmentation_max: f64,
    pub solidity_min: f64,
    /// Refined masks below this confidence are ignored by [`fuse`].
    pub confidence_min: f64,
    pub anchor_weights: AnchorWeights,
}

impl Default for AgenticConfig {
    fn default() -> Self {
        Self {
            coverage_min: 0.05,
            smoothness_min: 0.7,
            fragmentation_max: 1.5,
            solidity_min: 0.3,
            confidence_min: 0.5,
            anchor_weights: AnchorWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub frame_count: usize,
    pub non_empty_frames: usize,
    pub coverage: f64,
    pub area_smoothness: f64,
    pub fragmentation: f64,
    pub solidity: f64,
    pub anchor: Option<usize>,
    pub refine_recommended: bool,
}

struct FrameStat {
    frame: usize,
    area: u64,
    components: usize,
    solidity: f64,
}

fn frame_solidity(mask: &BinaryMask) -> f64 {
    match mask.bbox() {
        Some(b) => mask.area() as f64 / b.area() as f64,
        None => 0.0,
    }
}

fn frame_stats(traj: &MaskTrajectory) -> Vec<FrameStat> {
    traj.masks()
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(frame, m)| FrameStat {
            frame,
            area: m.area(),
            components: m.connected_components(),
            solidity: frame_solidity(m),
        })
        .collect()
}

/// `1 - |a - b| / max(a, b)` for two positive areas; always in `[0, 1]`.
pub fn pair_smoothness(a: u64, b: u64) -> f64 {
    let hi = a.max(b);
    if hi == 0 {
        return 1.0;
    }
    1.0 - a.abs_diff(b) as f64 / hi as f64
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

pub fn assess(traj: &MaskTrajectory, cfg: &AgenticConfig) -> ReliabilityReport {
    let stats = frame_stats(traj);
    let coverage = stats.len() as f64 / traj.frame_count() as f64;
    let area_smoothness =
        mean(stats.windows(2).map(|w| pair_smoothness(w[0].area, w[1].area))).unwrap_or(1.0);
    let fragmentation = mean(stats.iter().map(|s| s.components as f64)).unwrap_or(0.0);
    let solidity = mean(stats.iter().map(|s| s.solidity)).unwrap_or(0.0);
    let anchor = anchor_from_stats(&stats, &cfg.anchor_weights);
    let refine_recommended = anchor.is_some()
        && coverage >= cfg.coverage_min
        && (area_smoothness < cfg.smoothness_min
            || fragmentation > cfg.fragmentation_max
            || solidity < cfg.solidity_min);
    ReliabilityReport {
        frame_count: traj.frame_count(),
        non_empty_frames: stats.len(),
        coverage,
        area_smoothness,
        fragmentation,
        solidity,
        anchor,
        refine_recommended,
    }
}

/// Per-frame anchor scores for the non-empty frames, as `(frame, score)`.
///
/// `score = w_s * solidity + w_m * local_smoothness + w_a * (1 - |A - median| / max)`,
/// where local smoothness averages the pair terms with the previous and
/// next non-empty frames, a missing neighbour counting as 1.
pub fn anchor_scores(traj: &MaskTrajectory, weights: &AnchorWeights) -> Vec<(usize, f64)> {
    scores_from_stats(&frame_stats(traj), weights)
}

fn scores_from_stats(stats: &[FrameStat], w: &AnchorWeights) -> Vec<(usize, f64)> {
    if stats.is_empty() {
        return Vec::new();
    }
    let mut areas: Vec<u64> = stats.iter().map(|s| s.area).collect();
    areas.sort_unstable();
    let med = median(&areas);
    let max = *areas.last().expect("non-empty") as f64;
    stats
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let prev = if i > 0 { pair_smoothness(stats[i - 1].area, s.area) } else { 1.0 };
            let next = stats.get(i + 1).map_or(1.0, |n| pair_smoothness(s.area, n.area));
            let local = (prev + next) / 2.0;
            let typical = 1.0 - (s.area as f64 - med).abs() / max;
            (
                s.frame,
                w.solidity * s.solidity + w.smoothness * local + w.typical_area * typical,
            )
        })
        .collect()
}

fn anchor_from_stats(stats: &[FrameStat], w: &AnchorWeights) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (frame, score) in scores_from_stats(stats, w) {
        // strict comparison keeps the earliest frame on ties
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((frame, score));
        }
    }
    best.map(|(frame, _)| frame)
}

/// Highest-scoring non-empty frame; `None` for an all-empty trajectory.
pub fn select_anchor(traj: &MaskTrajectory, weights: &AnchorWeights) -> Option<usize> {
    anchor_from_stats(&frame_stats(traj), weights)
}

/// Bounding box and centre point of the anchor frame's mask.
pub fn derive_prompt(traj: &MaskTrajectory, anchor: usize) -> Result<GeometricPrompt> {
    let mask = traj.get(anchor).ok_or_else(|| {
        Error::Usage(format!(
            "anchor {anchor} is outside the trajectory's {} frames",
            traj.frame_count()
        ))
    })?;
    match (mask.bbox(), mask.center()) {
        (Some(bbox), Some(point)) => Ok(GeometricPrompt {
            frame_index: anchor,
            bbox,
            point,
        }),
        _ => Err(Error::Usage(format!("anchor frame {anchor} has an empty mask"))),
    }
}

/// Per frame, the refined mask when there is one with confidence at least
/// `confidence_min`, otherwise the coarse mask.
pub fn fuse(
    coarse: &MaskTrajectory,
    refined: &RefineResult,
    confidence_min: f64,
) -> Result<MaskTrajectory> {
    for (&t, r) in &refined.frames {
        let Some(c) = coarse.get(t) else {
            return Err(Error::Alignment(format!(
                "refined frame {t} is outside the trajectory's {} frames",
                coarse.frame_count()
            )));
        };
        if c.dims() != r.mask.dims() {
            return Err(Error::Alignment(format!(
                "refined frame {t} is {:?}, coarse frame is {:?}",
                r.mask.dims(),
                c.dims()
            )));
        }
    }
    let masks = coarse
        .masks()
        .iter()
        .enumerate()
        .map(|(t, c)| match refined.frames.get(&t) {
            Some(r) if r.confidence >= confidence_min => r.mask.clone(),
            _ => c.clone(),
        })
        .collect();
    MaskTrajectory::new(masks)
}

/// Chooses whether to refine a coarse trajectory and from which anchor.
/// Implementations may consult a model; the built-in ones are rule based.
pub trait RefinementPlanner: Send + Sync {
    /// The anchor frame to refine from, or `None` to keep the coarse
    /// trajectory.
    fn plan(&self, coarse: &MaskTrajectory, report: &ReliabilityReport) -> Option<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinePolicy {
    /// Never refine.
    Never,
    /// Always refine from the first non-empty frame.
    FirstNonEmpty,
    /// Refine from the scored anchor when the reliability report asks for it.
    #[default]
    Agentic,
}

impl RefinementPlanner for RefinePolicy {
    fn plan(&self, coarse: &MaskTrajectory, report: &ReliabilityReport) -> Option<usize> {
        match self {
            RefinePolicy::Never => None,
            RefinePolicy::FirstNonEmpty => coarse.masks().iter().position(|m| !m.is_empty()),
            RefinePolicy::Agentic => report.anchor.filter(|_| report.refine_recommended),
        }
    }
}
