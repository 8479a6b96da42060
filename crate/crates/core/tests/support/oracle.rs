//! Dense-grid reference implementations. Deliberately naive: every pixel,
//! every neighbour, every pair.

#![allow(dead_code)]

use rand::Rng;

#[derive(Clone, Debug)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
    pub px: Vec<u8>,
}

impl Grid {
    pub fn at(&self, r: usize, c: usize) -> bool {
        self.px[r * self.w + c] != 0
    }

    pub fn fg(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.h {
            for c in 0..self.w {
                if self.at(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

/// Random grids of mixed texture: empty, full, salt noise, and unions of
/// rectangles and discs with a little noise.
pub fn random_grid(rng: &mut impl Rng, max_side: usize) -> Grid {
    let h = rng.gen_range(1..=max_side);
    let w = rng.gen_range(1..=max_side);
    let mut px = vec![0u8; h * w];
    match rng.gen_range(0..10) {
        0 => {}
        1 => px.iter_mut().for_each(|p| *p = 1),
        2 | 3 => {
            let density: f64 = rng.gen();
            px.iter_mut().for_each(|p| *p = rng.gen_bool(density) as u8);
        }
        _ => {
            for _ in 0..rng.gen_range(1..=4) {
                let r0 = rng.gen_range(0..h);
                let c0 = rng.gen_range(0..w);
                let r1 = rng.gen_range(r0..h);
                let c1 = rng.gen_range(c0..w);
                let disc = rng.gen_bool(0.5);
                let (cr, cc) = ((r0 + r1) as f64 / 2.0, (c0 + c1) as f64 / 2.0);
                let rad = ((r1 - r0).min(c1 - c0) as f64 / 2.0).max(0.5);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        let inside = !disc || (r as f64 - cr).hypot(c as f64 - cc) <= rad;
                        if inside {
                            px[r * w + c] = 1;
                        }
                    }
                }
            }
            let flips = rng.gen_range(0..=(h * w / 20));
            for _ in 0..flips {
                let i = rng.gen_range(0..h * w);
                px[i] ^= 1;
            }
        }
    }
    Grid { h, w, px }
}

pub fn area(g: &Grid) -> u64 {
    g.px.iter().map(|&p| p as u64).sum()
}

pub fn jaccard(a: &Grid, b: &Grid) -> f64 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for (x, y) in a.px.iter().zip(&b.px) {
        inter += (*x != 0 && *y != 0) as u64;
        union += (*x != 0 || *y != 0) as u64;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// (row_min, col_min, row_max, col_max)
pub fn bbox(g: &Grid) -> Option<(usize, usize, usize, usize)> {
    let fg = g.fg();
    if fg.is_empty() {
        return None;
    }
    Some((
        fg.iter().map(|p| p.0).min().unwrap(),
        fg.iter().map(|p| p.1).min().unwrap(),
        fg.iter().map(|p| p.0).max().unwrap(),
        fg.iter().map(|p| p.1).max().unwrap(),
    ))
}

pub fn center(g: &Grid) -> Option<(usize, usize)> {
    let fg = g.fg();
    if fg.is_empty() {
        return None;
    }
    let n = fg.len() as f64;
    let mr = fg.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mc = fg.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let target = ((mr + 0.5).floor() as usize, (mc + 0.5).floor() as usize);
    if target.0 < g.h && target.1 < g.w && g.at(target.0, target.1) {
        return Some(target);
    }
    fg.into_iter().min_by_key(|&(r, c)| {
        let dr = r as i64 - target.0 as i64;
        let dc = c as i64 - target.1 as i64;
        (dr * dr + dc * dc, r, c)
    })
}

pub fn components(g: &Grid) -> usize {
    let mut seen = vec![false; g.h * g.w];
    let mut count = 0;
    for start in g.fg() {
        if seen[start.0 * g.w + start.1] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start.0 * g.w + start.1] = true;
        while let Some((r, c)) = stack.pop() {
            let mut next = Vec::new();
            if r > 0 {
                next.push((r - 1, c));
            }
            if c > 0 {
                next.push((r, c - 1));
            }
            if r + 1 < g.h {
                next.push((r + 1, c));
            }
            if c + 1 < g.w {
                next.push((r, c + 1));
            }
            for (rr, cc) in next {
                if g.at(rr, cc) && !seen[rr * g.w + cc] {
                    seen[rr * g.w + cc] = true;
                    stack.push((rr, cc));
                }
            }
        }
    }
    count
}

pub fn boundary(g: &Grid) -> Vec<(usize, usize)> {
    g.fg()
        .into_iter()
        .filter(|&(r, c)| {
            let off = |dr: i64, dc: i64| {
                let rr = r as i64 + dr;
                let cc = c as i64 + dc;
                rr < 0 || cc < 0 || rr >= g.h as i64 || cc >= g.w as i64 || !g.at(rr as usize, cc as usize)
            };
            off(-1, 0) || off(1, 0) || off(0, -1) || off(0, 1)
        })
        .collect()
}

pub fn boundary_f(pred: &Grid, gt: &Grid, tol: u32) -> f64 {
    let bp = boundary(pred);
    let bg = boundary(gt);
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let flags = |pts: &[(usize, usize)], g: &Grid| {
        let mut f = vec![false; g.h * g.w];
        for &(r, c) in pts {
            f[r * g.w + c] = true;
        }
        f
    };
    let (fp, fg) = (flags(&bp, pred), flags(&bg, gt));
    let t = tol as i64;
    // scan the square window and keep offsets inside the disc
    let near = |p: &(usize, usize), other: &[bool]| {
        for dr in -t..=t {
            for dc in -t..=t {
                if dr * dr + dc * dc > t * t {
                    continue;
                }
                let (r, c) = (p.0 as i64 + dr, p.1 as i64 + dc);
                if r >= 0 && c >= 0 && (r as usize) < pred.h && (c as usize) < pred.w && other[r as usize * pred.w + c as usize] {
                    return true;
                }
            }
        }
        false
    };
    let precision = bp.iter().filter(|p| near(p, &fg)).count() as f64 / bp.len() as f64;
    let recall = bg.iter().filter(|p| near(p, &fp)).count() as f64 / bg.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Row-major run lengths starting with a zero run.
pub fn encode(g: &Grid) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = 0u8;
    let mut len = 0u32;
    for &p in &g.px {
        let p = (p != 0) as u8;
        if p == current {
            len += 1;
        } else {
            runs.push(len);
            current = p;
            len = 1;
        }
    }
    runs.push(len);
    runs
}
