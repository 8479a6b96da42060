use serde::{Deserialize, Serialize};

use super::{BinaryMask, RowSegment};

/// Tight inclusive bounds of the foreground pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub row_min: u32,
    pub col_min: u32,
    pub row_max: u32,
    pub col_max: u32,
}

impl BBox {
    pub fn area(&self) -> u64 {
        (self.row_max - self.row_min + 1) as u64 * (self.col_max - self.col_min + 1) as u64
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.row_min..=self.row_max).contains(&p.row)
            && (self.col_min..=self.col_max).contains(&p.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub row: u32,
    pub col: u32,
}

/// Box and interior point taken from the mask at an anchor frame; the
/// input a promptable refiner is initialised with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeometricPrompt {
    pub frame_index: usize,
    pub bbox: BBox,
    pub point: Point,
}

impl BinaryMask {
    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn bbox(&self) -> Option<BBox> {
        let w = self.width as u64;
        let mut bbox: Option<BBox> = None;
        for (start, end) in self.foreground_spans() {
            let (r0, r1) = (start / w, (end - 1) / w);
            // a span crossing a row edge touches both the last and first column
            let (c0, c1) = if r0 == r1 {
                (start % w, (end - 1) % w)
            } else {
                (0, w - 1)
            };
            let span = BBox {
                row_min: r0 as u32,
                col_min: c0 as u32,
                row_max: r1 as u32,
                col_max: c1 as u32,
            };
            bbox = Some(match bbox {
                None => span,
                Some(b) => BBox {
                    row_min: b.row_min.min(span.row_min),
                    col_min: b.col_min.min(span.col_min),
                    row_max: b.row_max.max(span.row_max),
                    col_max: b.col_max.max(span.col_max),
                },
            });
        }
        bbox
    }

    /// Foreground centroid rounded to the nearest pixel (halves round up).
    /// When that pixel is background the closest foreground pixel is
    /// returned instead, ties going to the smaller row and then the smaller
    /// column.
    pub fn center(&self) -> Option<Point> {
        let segments = self.row_segments();
        if segments.is_empty() {
            return None;
        }
        let (mut n, mut row_sum, mut col_sum) = (0f64, 0f64, 0f64);
        for s in &segments {
            let len = (s.col_end - s.col_start) as f64;
            n += len;
            row_sum += s.row as f64 * len;
            // sum of col_start..col_end
            col_sum += len * (s.col_start as f64 + s.col_end as f64 - 1.0) / 2.0;
        }
        let target = Point {
            row: (row_sum / n).round() as u32,
            col: (col_sum / n).round() as u32,
        };
        let hit = segments
            .iter()
            .any(|s| s.row == target.row && (s.col_start..s.col_end).contains(&target.col));
        if hit {
            return Some(target);
        }
        Some(nearest_foreground(&segments, target))
    }

    /// Number of 4-connected foreground components.
    pub fn connected_components(&self) -> usize {
        let segments = self.row_segments();
        let mut sets = DisjointSets::new(segments.len());
        // segments are sorted row-major; link overlapping runs on adjacent rows
        let mut prev_row_start = 0usize;
        let mut row_start = 0usize;
        for i in 0..segments.len() {
            if i > 0 && segments[i].row != segments[i - 1].row {
                prev_row_start = if segments[i].row == segments[i - 1].row + 1 {
                    row_start
                } else {
                    i
                };
                row_start = i;
            }
            let s = segments[i];
            for (j, p) in segments.iter().enumerate().take(row_start).skip(prev_row_start) {
                if p.col_start < s.col_end && s.col_start < p.col_end {
                    sets.union(i, j);
                }
            }
        }
        sets.count()
    }
}

fn nearest_foreground(segments: &[RowSegment], target: Point) -> Point {
    let mut best: Option<(u64, Point)> = None;
    for s in segments {
        let col = target.col.clamp(s.col_start, s.col_end - 1);
        let dr = s.row.abs_diff(target.row) as u64;
        let dc = col.abs_diff(target.col) as u64;
        let d2 = dr * dr + dc * dc;
        if best.is_none_or(|(bd, _)| d2 < bd) {
            best = Some((d2, Point { row: s.row, col }));
        }
    }
    best.expect("segments is non-empty").1
}

struct DisjointSets {
    parent: Vec<usize>,
    roots: usize,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            roots: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.roots -= 1;
        }
    }

    fn count(&self) -> usize {
        self.roots
    }
}
