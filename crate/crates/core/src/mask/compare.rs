//! Per-frame comparison kernels: region similarity (IoU) and boundary
//! F-measure with a pixel tolerance band.

use super::BinaryMask;
use crate::error::{Error, Result};

fn same_dims(pred: &BinaryMask, gt: &BinaryMask) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::Dimension(format!(
            "mask dims differ: {:?} vs {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    Ok(())
}

fn intersection_area(a: &BinaryMask, b: &BinaryMask) -> u64 {
    let xs: Vec<(u64, u64)> = a.foreground_spans().collect();
    let ys: Vec<(u64, u64)> = b.foreground_spans().collect();
    let (mut i, mut j, mut total) = (0, 0, 0u64);
    while i < xs.len() && j < ys.len() {
        let lo = xs[i].0.max(ys[j].0);
        let hi = xs[i].1.min(ys[j].1);
        if lo < hi {
            total += hi - lo;
        }
        if xs[i].1 < ys[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Intersection over union. Two empty masks score 1.0.
pub fn jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_dims(pred, gt)?;
    let inter = intersection_area(pred, gt);
    let union = pred.area() + gt.area() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// `ceil(0.008 * diagonal)`, the usual DAVIS boundary band.
pub fn default_boundary_tolerance(height: u32, width: u32) -> u32 {
    let diag = (height as f64).hypot(width as f64);
    (0.008 * diag).ceil() as u32
}

/// Foreground pixels with a 4-neighbour that is background or off-grid,
/// as a dense row-major flag grid.
pub fn boundary_pixels(mask: &BinaryMask) -> Vec<bool> {
    let (h, w) = (mask.height() as usize, mask.width() as usize);
    let dense = mask.to_dense();
    let at = |r: usize, c: usize| dense[r * w + c] != 0;
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            if !at(r, c) {
                continue;
            }
            out[r * w + c] = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !at(r - 1, c)
                || !at(r + 1, c)
                || !at(r, c - 1)
                || !at(r, c + 1);
        }
    }
    out
}

/// Every pixel within Euclidean distance `tol` of a set pixel.
fn dilate_disk(flags: &[bool], h: usize, w: usize, tol: u32) -> Vec<bool> {
    let t = tol as i64;
    let offsets: Vec<(i64, i64)> = (-t..=t)
        .flat_map(|dr| (-t..=t).map(move |dc| (dr, dc)))
        .filter(|(dr, dc)| dr * dr + dc * dc <= t * t)
        .collect();
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            if !flags[r * w + c] {
                continue;
            }
            for &(dr, dc) in &offsets {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    out[rr as usize * w + cc as usize] = true;
                }
            }
        }
    }
    out
}

/// Boundary F-measure. A boundary pixel of one mask is matched when some
/// boundary pixel of the other lies within Euclidean distance `tol`.
///
/// Two empty boundaries score 1.0; exactly one empty boundary scores 0.0.
pub fn boundary_f(pred: &BinaryMask, gt: &BinaryMask, tol: u32) -> Result<f64> {
    same_dims(pred, gt)?;
    let (h, w) = (pred.height() as usize, pred.width() as usize);
    let pb = boundary_pixels(pred);
    let gb = boundary_pixels(gt);
    let n_pred = pb.iter().filter(|&&b| b).count();
    let n_gt = gb.iter().filter(|&&b| b).count();
    match (n_pred, n_gt) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let near_gt = dilate_disk(&gb, h, w, tol);
    let near_pred = dilate_disk(&pb, h, w, tol);
    let matched_pred = pb.iter().zip(&near_gt).filter(|(&b, &n)| b && n).count();
    let matched_gt = gb.iter().zip(&near_pred).filter(|(&b, &n)| b && n).count();
    let precision = matched_pred as f64 / n_pred as f64;
    let recall = matched_gt as f64 / n_gt as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}
