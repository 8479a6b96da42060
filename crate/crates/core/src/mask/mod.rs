//! Binary masks stored as row-major run lengths.
//!
//! A mask of `height x width` pixels is scanned row by row. `runs` holds
//! alternating run lengths starting with a run of zeros, which may be empty
//! when the first pixel is set. Every later run is at least one pixel long,
//! so each grid has exactly one encoding.
//!
//! ```text
//! 0 1 1 0   ->  runs [1, 2, 1]
//! 1 1 / 1 1 ->  runs [0, 4]
//! ```

mod compare;
mod geometry;
mod trajectory;

pub use compare::{boundary_f, boundary_pixels, default_boundary_tolerance, jaccard};
pub use geometry::{BBox, GeometricPrompt, Point};
pub use trajectory::MaskTrajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct BinaryMask {
    height: u32,
    width: u32,
    runs: Vec<u32>,
}

#[derive(Deserialize)]
struct RawMask {
    height: u32,
    width: u32,
    runs: Vec<u32>,
}

impl TryFrom<RawMask> for BinaryMask {
    type Error = Error;

    fn try_from(raw: RawMask) -> Result<Self> {
        BinaryMask::from_runs(raw.height, raw.width, raw.runs)
    }
}

/// A half-open interval `[row, col_start..col_end)` of foreground pixels
/// lying on a single row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RowSegment {
    pub row: u32,
    pub col_start: u32,
    pub col_end: u32,
}

fn check_dims(height: u32, width: u32) -> Result<usize> {
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!(
            "mask dimensions must be positive, got {height}x{width}"
        )));
    }
    (height as usize)
        .checked_mul(width as usize)
        .filter(|&n| n <= u32::MAX as usize)
        .ok_or_else(|| Error::Dimension(format!("mask {height}x{width} is too large")))
}

impl BinaryMask {
    /// Run-length encode a dense row-major grid. Any non-zero cell counts as
    /// foreground.
    pub fn from_dense(height: u32, width: u32, dense: &[u8]) -> Result<Self> {
        let n = check_dims(height, width)?;
        if dense.len() != n {
            return Err(Error::Dimension(format!(
                "grid has {} cells, expected {height}x{width} = {n}",
                dense.len()
            )));
        }
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &cell in dense {
            let bit = cell != 0;
            if bit != current {
                runs.push(len);
                len = 0;
                current = bit;
            }
            len += 1;
        }
        runs.push(len);
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    /// Build a mask by evaluating `f(row, col)` on every pixel.
    pub fn from_fn(height: u32, width: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        check_dims(height, width)?;
        let mut dense = Vec::with_capacity(height as usize * width as usize);
        for r in 0..height {
            for c in 0..width {
                dense.push(u8::from(f(r, c)));
            }
        }
        Self::from_dense(height, width, &dense)
    }

    pub fn from_runs(height: u32, width: u32, runs: Vec<u32>) -> Result<Self> {
        let n = check_dims(height, width)? as u64;
        if runs.is_empty() {
            return Err(Error::InvalidRuns("run list is empty".into()));
        }
        if let Some(pos) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(Error::InvalidRuns(format!(
                "run {} has length 0; only the leading zero-run may be empty",
                pos + 1
            )));
        }
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != n {
            return Err(Error::InvalidRuns(format!(
                "runs sum to {total}, expected {height}x{width} = {n}"
            )));
        }
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    pub fn zeros(height: u32, width: u32) -> Result<Self> {
        let n = check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            runs: vec![n as u32],
        })
    }

    pub fn ones(height: u32, width: u32) -> Result<Self> {
        let n = check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            runs: vec![0, n as u32],
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn pixel_count(&self) -> usize {
        self.height as usize * self.width as usize
    }

    /// Decode into a dense row-major grid of 0/1 bytes.
    pub fn to_dense(&self) -> Vec<u8> {
        let mut dense = Vec::with_capacity(self.pixel_count());
        let mut value = 0u8;
        for &run in &self.runs {
            dense.extend(std::iter::repeat_n(value, run as usize));
            value ^= 1;
        }
        dense
    }

    pub fn is_empty(&self) -> bool {
        self.runs.len() < 2
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        assert!(row < self.height && col < self.width, "pixel out of bounds");
        let idx = row as u64 * self.width as u64 + col as u64;
        let mut start = 0u64;
        for (i, &run) in self.runs.iter().enumerate() {
            let end = start + run as u64;
            if idx < end {
                return i % 2 == 1;
            }
            start = end;
        }
        unreachable!("runs cover the whole grid")
    }

    /// Foreground intervals `[start, end)` in linear row-major indices.
    pub(crate) fn foreground_spans(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut start = 0u64;
        self.runs.iter().enumerate().filter_map(move |(i, &run)| {
            let span = (start, start + run as u64);
            start = span.1;
            (i % 2 == 1).then_some(span)
        })
    }

    /// Foreground intervals split at row boundaries.
    pub(crate) fn row_segments(&self) -> Vec<RowSegment> {
        let w = self.width as u64;
        let mut out = Vec::new();
        for (mut start, end) in self.foreground_spans() {
            while start < end {
                let row = start / w;
                let row_end = ((row + 1) * w).min(end);
                out.push(RowSegment {
                    row: row as u32,
                    col_start: (start - row * w) as u32,
                    col_end: (row_end - row * w) as u32,
                });
                start = row_end;
            }
        }
        out
    }

    /// Binary portable graymap (P5), foreground written as 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_dense().into_iter().map(|v| v * 255));
        out
    }
}
