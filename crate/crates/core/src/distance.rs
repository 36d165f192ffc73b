//! Instance-aware exact Euclidean distance maps.
//!
//! Every pixel of instance `k` receives its distance to the nearest pixel that
//! is not in `k`: background, another instance, or anything beyond the frame.
//! Touching instances therefore meet along a ridge of 1.0 values.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::raster::{Grid, LabelMap, Raster};

/// Output scaling of [`distance_map_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistanceScale {
    #[default]
    Raw,
    /// Each instance divided by its own maximum, giving values in `(0, 1]`.
    UnitPerInstance,
}

#[derive(Clone, Copy, Debug)]
struct Bounds {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

/// Exact Euclidean distance of each labeled pixel to the nearest non-member.
pub fn distance_map(labels: &LabelMap) -> Raster {
    distance_map_with(labels, DistanceScale::Raw)
}

pub fn distance_map_with(labels: &LabelMap, scale: DistanceScale) -> Raster {
    let (width, height) = labels.dims();
    let mut bounds: BTreeMap<u32, Bounds> = BTreeMap::new();
    for (i, &l) in labels.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % width, i / width);
        bounds
            .entry(l)
            .and_modify(|b| {
                b.x0 = b.x0.min(x);
                b.x1 = b.x1.max(x);
                b.y0 = b.y0.min(y);
                b.y1 = b.y1.max(y);
            })
            .or_insert(Bounds {
                x0: x,
                y0: y,
                x1: x,
                y1: y,
            });
    }

    let per_instance: Vec<Vec<(usize, f32)>> = bounds
        .into_par_iter()
        .map(|(label, b)| {
            let mut values = instance_distances(labels, label, b);
            if scale == DistanceScale::UnitPerInstance {
                let peak = values.iter().map(|&(_, v)| v).fold(0.0f32, f32::max);
                for (_, v) in &mut values {
                    *v /= peak;
                }
            }
            values
        })
        .collect();

    let mut out = vec![0.0f32; width * height];
    for (i, v) in per_instance.into_iter().flatten() {
        out[i] = v;
    }
    Raster::from_parts(width, height, out)
}

/// Distances to the nearest non-member, computed inside `label`'s bounding
/// box grown by one pixel on each side. That ring is entirely non-member (or
/// off-frame), so the nearest non-member of any member lies inside the window.
fn instance_distances(labels: &LabelMap, label: u32, b: Bounds) -> Vec<(usize, f32)> {
    let width = labels.width();
    let data = labels.labels();
    let w = b.x1 - b.x0 + 3;
    let h = b.y1 - b.y0 + 3;
    // Window coordinate (lx, ly) maps to image (b.x0 + lx - 1, b.y0 + ly - 1).
    let member = |lx: usize, ly: usize| -> bool {
        if lx == 0 || ly == 0 || lx == w - 1 || ly == h - 1 {
            return false;
        }
        data[(b.y0 + ly - 1) * width + b.x0 + lx - 1] == label
    };

    let inf = (w + h) as i64;
    let mut g = vec![0i64; w * h];
    for lx in 0..w {
        g[lx] = if member(lx, 0) { inf } else { 0 };
        for ly in 1..h {
            g[ly * w + lx] = if member(lx, ly) { g[(ly - 1) * w + lx] + 1 } else { 0 };
        }
        for ly in (0..h - 1).rev() {
            let below = g[(ly + 1) * w + lx];
            if below < g[ly * w + lx] {
                g[ly * w + lx] = below + 1;
            }
        }
    }

    let mut out = Vec::new();
    let mut s = vec![0usize; w];
    let mut t = vec![0i64; w];
    for ly in 1..h - 1 {
        let row = &g[ly * w..(ly + 1) * w];
        let f = |x: usize, i: usize| -> i64 {
            let dx = x as i64 - i as i64;
            dx * dx + row[i] * row[i]
        };
        let sep = |i: usize, u: usize| -> i64 {
            let (i, u) = (i as i64, u as i64);
            (u * u - i * i + row[u as usize].pow(2) - row[i as usize].pow(2)).div_euclid(2 * (u - i))
        };

        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize] as usize, s[q as usize]) > f(t[q as usize] as usize, u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let next = 1 + sep(s[q as usize], u);
                if next < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = next;
                }
            }
        }
        for lx in (0..w).rev() {
            let d2 = f(lx, s[q as usize]);
            if member(lx, ly) {
                let index = (b.y0 + ly - 1) * width + b.x0 + lx - 1;
                out.push((index, (d2 as f64).sqrt() as f32));
            }
            if lx as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }
    out
}
