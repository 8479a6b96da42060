use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

/// One mask per video frame, in frame order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryDoc", into = "TrajectoryDoc")]
pub struct MaskTrajectory {
    masks: Vec<BinaryMask>,
}

/// On-disk layout; `frame_count` is redundant with `frames` and checked on
/// load.
#[derive(Serialize, Deserialize)]
struct TrajectoryDoc {
    frame_count: usize,
    frames: Vec<BinaryMask>,
}

impl TryFrom<TrajectoryDoc> for MaskTrajectory {
    type Error = Error;

    fn try_from(doc: TrajectoryDoc) -> Result<Self> {
        if doc.frames.len() != doc.frame_count {
            return Err(Error::Alignment(format!(
                "frame_count is {} but {} frames are present",
                doc.frame_count,
                doc.frames.len()
            )));
        }
        MaskTrajectory::new(doc.frames)
    }
}

impl From<MaskTrajectory> for TrajectoryDoc {
    fn from(t: MaskTrajectory) -> Self {
        TrajectoryDoc {
            frame_count: t.masks.len(),
            frames: t.masks,
        }
    }
}

impl MaskTrajectory {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::Dimension("a trajectory needs at least one frame".into()));
        }
        Ok(Self { masks })
    }

    /// All-zero trajectory of `frame_count` frames at a fixed size.
    pub fn zeros(frame_count: usize, height: u32, width: u32) -> Result<Self> {
        let blank = BinaryMask::zeros(height, width)?;
        Self::new(vec![blank; frame_count])
    }

    pub fn frame_count(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn get(&self, frame: usize) -> Option<&BinaryMask> {
        self.masks.get(frame)
    }

    pub fn into_masks(self) -> Vec<BinaryMask> {
        self.masks
    }

    pub fn dims(&self) -> Vec<(u32, u32)> {
        self.masks.iter().map(BinaryMask::dims).collect()
    }

    /// True when no frame has a foreground pixel.
    pub fn is_all_empty(&self) -> bool {
        self.masks.iter().all(BinaryMask::is_empty)
    }

    /// Checks that `other` has the same number of frames and per-frame dims.
    pub fn check_aligned(&self, other: &MaskTrajectory) -> Result<()> {
        if self.frame_count() != other.frame_count() {
            return Err(Error::Alignment(format!(
                "trajectories have {} and {} frames",
                self.frame_count(),
                other.frame_count()
            )));
        }
        for (t, (a, b)) in self.masks.iter().zip(&other.masks).enumerate() {
            if a.dims() != b.dims() {
                return Err(Error::Alignment(format!(
                    "frame {t} dims differ: {:?} vs {:?}",
                    a.dims(),
                    b.dims()
                )));
            }
        }
        Ok(())
    }

    /// Compact JSON followed by a newline. Byte-stable for equal values.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("trajectory serialization is infallible");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        crate::json::parse(text, origin)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Writes `frame_00000.pgm`, `frame_00001.pgm`, ... into `dir`.
    pub fn dump_pgm(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, mask) in self.masks.iter().enumerate() {
            let path = dir.join(format!("frame_{t:05}.pgm"));
            fs::write(&path, mask.to_pgm()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
