//! Minimum member thickness of a design, measured on a raster.
//!
//! The solid indicator is sampled at pixel centers, an exact Euclidean
//! feature transform gives every solid pixel its nearest void pixel, and
//! medial pixels are those whose nearest void lies on the opposite side of
//! some neighbor's nearest void (the angle between the two directions exceeds
//! `min_angle_deg`). Each medial pixel defines an inscribed ball; a pixel's
//! local thickness is the diameter of the largest such ball covering it, and
//! the minimum local thickness is the reported feature size. Medial branches
//! that run into convex corners are excluded by the angle test.

use crate::error::{Error, Result};
use crate::grid::StructuredGrid;

#[derive(Debug, Clone)]
pub struct FeatureOptions {
    /// Raster resolution; 4 gives pixels of size `h / 4`.
    pub pixels_per_element: usize,
    /// Treat `x = origin.x` as a symmetry plane instead of a free boundary.
    pub mirror_left: bool,
    /// Nodes whose elements are ignored (non-design pads).
    pub excluded_nodes: Option<Vec<bool>>,
    pub min_angle_deg: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            pixels_per_element: 4,
            mirror_left: false,
            excluded_nodes: None,
            min_angle_deg: 120.0,
        }
    }
}

const FAR: i64 = i64::MAX / 4;

/// Minimum feature diameter of `{indicator > 0}` in length units.
pub fn minimum_feature_diameter(
    grid: &StructuredGrid,
    indicator: &[f64],
    opts: &FeatureOptions,
) -> Result<f64> {
    let k = opts.pixels_per_element.max(1);
    let (px, py) = (grid.nx * k, grid.ny * k);
    let pixel = grid.h / k as f64;

    // Sample the bilinear indicator at pixel centers.
    let mut solid = vec![false; px * py];
    for b in 0..py {
        for a in 0..px {
            let e = (b / k) * grid.nx + a / k;
            let c = grid.elem_nodes(e).map(|n| indicator[n]);
            let u = ((a % k) as f64 + 0.5) / k as f64;
            let v = ((b % k) as f64 + 0.5) / k as f64;
            let val = c[0] * (1.0 - u) * (1.0 - v) + c[1] * u * (1.0 - v) + c[2] * u * v + c[3] * (1.0 - u) * v;
            solid[b * px + a] = val > 0.0;
        }
    }
    if !solid.iter().any(|&s| s) {
        return Err(Error::EmptySolid);
    }

    // Padded (and optionally mirrored) image; the one-pixel border is void.
    let mirror = if opts.mirror_left { px } else { 0 };
    let w = mirror + px + 2;
    let hgt = py + 2;
    let mut img = vec![false; w * hgt];
    for b in 0..py {
        for c in 0..mirror + px {
            let a = if c < mirror { mirror - 1 - c } else { c - mirror };
            img[(b + 1) * w + c + 1] = solid[b * px + a];
        }
    }

    let (dist2, feat) = feature_transform(&img, w, hgt);

    let excluded_elem = |a: usize, b: usize| -> bool {
        match &opts.excluded_nodes {
            Some(mask) => {
                let e = (b / k) * grid.nx + a / k;
                grid.elem_nodes(e).iter().any(|&n| mask[n])
            }
            None => false,
        }
    };
    let cos_limit = opts.min_angle_deg.to_radians().cos();

    // Medial pixels over the whole (possibly mirrored) image.
    let mut centers: Vec<(i64, usize)> = Vec::new();
    for y in 1..hgt - 1 {
        for x in 1..w - 1 {
            let p = y * w + x;
            if img[p] && is_medial(&img, &feat, w, x, y, cos_limit) {
                centers.push((dist2[p], p));
            }
        }
    }
    // Local thickness: every pixel takes the diameter of the largest medial
    // ball that covers it.
    centers.sort_unstable();
    let mut thick = vec![0i64; w * hgt];
    for &(d2, p) in &centers {
        let (cx, cy) = ((p % w) as i64, (p / w) as i64);
        // Half a pixel of slack lets a ball reach rim pixels that sit off its
        // lattice-aligned center.
        let reach = (d2 as f64).sqrt() + 0.5;
        let r = reach.ceil() as i64;
        for y in (cy - r).max(0)..=(cy + r).min(hgt as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as i64 - 1) {
                if (((x - cx).pow(2) + (y - cy).pow(2)) as f64) < reach * reach {
                    thick[y as usize * w + x as usize] = d2;
                }
            }
        }
    }

    let mut best = i64::MAX;
    for b in 0..py {
        for a in 0..px {
            let p = (b + 1) * w + mirror + a + 1;
            if img[p] && thick[p] > 0 && !excluded_elem(a, b) {
                best = best.min(thick[p]);
            }
        }
    }
    if best < i64::MAX {
        Ok(2.0 * (best as f64).sqrt() * pixel)
    } else {
        Err(Error::EmptySolid)
    }
}

// A solid pixel is medial when some neighbor's nearest void is a distinct
// point lying in a clearly different direction.
fn is_medial(img: &[bool], feat: &[(i64, i64)], w: usize, x: usize, y: usize, cos_limit: f64) -> bool {
    let fp = feat[y * w + x];
    let vp = [fp.0 - x as i64, fp.1 - y as i64];
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (qx, qy) = (x as i64 + dx, y as i64 + dy);
            let q = qy as usize * w + qx as usize;
            if !img[q] {
                continue;
            }
            let fq = feat[q];
            if (fp.0 - fq.0).pow(2) + (fp.1 - fq.1).pow(2) <= 2 {
                continue;
            }
            let vq = [fq.0 - qx, fq.1 - qy];
            let dot = (vp[0] * vq[0] + vp[1] * vq[1]) as f64;
            let norm = (((vp[0].pow(2) + vp[1].pow(2)) * (vq[0].pow(2) + vq[1].pow(2))) as f64).sqrt();
            if norm > 0.0 && dot / norm < cos_limit {
                return true;
            }
        }
    }
    false
}

/// Exact squared Euclidean distance from each pixel to the nearest `false`
/// pixel, with that pixel's coordinates (separable lower-envelope method).
fn feature_transform(img: &[bool], w: usize, h: usize) -> (Vec<i64>, Vec<(i64, i64)>) {
    // Column pass: nearest void row in the same column.
    let mut col_row = vec![-1i64; w * h];
    for x in 0..w {
        let mut last: i64 = -1;
        for y in 0..h {
            if !img[y * w + x] {
                last = y as i64;
            }
            col_row[y * w + x] = last;
        }
        let mut next: i64 = -1;
        for y in (0..h).rev() {
            if !img[y * w + x] {
                next = y as i64;
            }
            let cur = col_row[y * w + x];
            let pick = match (cur, next) {
                (-1, n) => n,
                (c, -1) => c,
                (c, n) => {
                    if (y as i64 - c) <= (n - y as i64) {
                        c
                    } else {
                        n
                    }
                }
            };
            col_row[y * w + x] = pick;
        }
    }

    // Row pass: lower envelope of parabolas (x - q)^2 + g(q)^2.
    let mut dist2 = vec![FAR; w * h];
    let mut feat = vec![(0i64, 0i64); w * h];
    let mut v = vec![0usize; w];
    let mut z = vec![0f64; w + 1];
    for y in 0..h {
        let g = |q: usize| -> i64 {
            let r = col_row[y * w + q];
            if r < 0 {
                FAR
            } else {
                (y as i64 - r).pow(2)
            }
        };
        let mut kk = 0usize;
        let mut started = false;
        for q in 0..w {
            let fq = g(q);
            if fq >= FAR {
                continue;
            }
            if !started {
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                started = true;
                continue;
            }
            loop {
                let r = v[kk];
                let s = ((fq + (q * q) as i64) - (g(r) + (r * r) as i64)) as f64 / (2.0 * (q as f64 - r as f64));
                // z[0] is -inf, so kk never underflows.
                if s <= z[kk] {
                    kk -= 1;
                    continue;
                }
                kk += 1;
                v[kk] = q;
                z[kk] = s;
                z[kk + 1] = f64::INFINITY;
                break;
            }
        }
        if !started {
            continue;
        }
        let mut kk = 0usize;
        for x in 0..w {
            while z[kk + 1] < x as f64 {
                kk += 1;
            }
            let q = v[kk];
            let d = (x as i64 - q as i64).pow(2) + g(q);
            dist2[y * w + x] = d;
            feat[y * w + x] = (q as i64, col_row[y * w + q]);
        }
    }
    (dist2, feat)
}
