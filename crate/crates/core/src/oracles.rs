//! Slow reference implementations and random input generators for tests.
//!
//! Each oracle follows the textbook definition directly and shares no code
//! with the optimized routines it is compared against.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;

use crate::morphology::Connectivity;
use crate::raster::{BinaryMask, Grid, LabelMap, Raster};

fn neighbor_coords(conn: Connectivity, x: usize, y: usize, w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if (dx, dy) == (0, 0) || (conn == Connectivity::Four && dx != 0 && dy != 0) {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                out.push((nx as usize, ny as usize));
            }
        }
    }
    out
}

/// Breadth-first flood fill labeling in raster-scan discovery order.
pub fn flood_fill_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels[y * w + x] != 0 {
                continue;
            }
            next += 1;
            labels[y * w + x] = next;
            let mut queue = VecDeque::from([(x, y)]);
            while let Some((cx, cy)) = queue.pop_front() {
                for (nx, ny) in neighbor_coords(conn, cx, cy, w, h) {
                    if mask.get(nx, ny) && labels[ny * w + nx] == 0 {
                        labels[ny * w + nx] = next;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
    }
    LabelMap::new(w, h, labels).unwrap()
}

/// True if the two label maps induce the same partition of the pixels.
pub fn same_partition(a: &LabelMap, b: &LabelMap) -> bool {
    if a.dims() != b.dims() {
        return false;
    }
    let mut fwd = BTreeMap::new();
    let mut bwd = BTreeMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Iterated geodesic dilation until nothing changes.
pub fn naive_reconstruct(marker: &Raster, mask: &Raster, conn: Connectivity) -> Raster {
    let (w, h) = marker.dims();
    let mut cur: Vec<f32> = marker.samples().to_vec();
    loop {
        let mut next = cur.clone();
        for y in 0..h {
            for x in 0..w {
                let mut v = cur[y * w + x];
                for (nx, ny) in neighbor_coords(conn, x, y, w, h) {
                    v = v.max(cur[ny * w + nx]);
                }
                next[y * w + x] = v.min(mask.get(x, y));
            }
        }
        if next == cur {
            return Raster::new(w, h, cur).unwrap();
        }
        cur = next;
    }
}

pub fn naive_h_maxima(f: &Raster, h: f64, conn: Connectivity) -> Raster {
    let marker = Raster::new(
        f.width(),
        f.height(),
        f.samples().iter().map(|&v| (v as f64 - h) as f32).collect(),
    )
    .unwrap();
    naive_reconstruct(&marker, f, conn)
}

/// Distance from every member pixel to the nearest non-member, by exhaustive
/// search over all pixels plus the frame.
pub fn brute_force_distance(labels: &LabelMap) -> Raster {
    let (w, h) = labels.dims();
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let k = labels.get(x, y);
            if k == 0 {
                continue;
            }
            // Nearest off-frame pixel lies straight across the closest edge.
            let edge = (x + 1).min(y + 1).min(w - x).min(h - y) as i64;
            let mut best = edge * edge;
            for qy in 0..h {
                for qx in 0..w {
                    if labels.get(qx, qy) != k {
                        let d2 = (qx as i64 - x as i64).pow(2) + (qy as i64 - y as i64).pow(2);
                        best = best.min(d2);
                    }
                }
            }
            out[y * w + x] = (best as f64).sqrt() as f32;
        }
    }
    Raster::new(w, h, out).unwrap()
}

/// Priority flood by exhaustive search: at each step the frontier pixel with
/// the highest relief (smallest index on ties) is labeled from whichever of
/// its neighbors was labeled earliest (smallest index among the seeds).
pub fn naive_watershed(relief: &Raster, seeds: &LabelMap, mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (w, h) = relief.dims();
    let n = w * h;
    let mut labels = seeds.labels().to_vec();
    // Labeling time; seeds are ordered among themselves by index.
    let mut time: Vec<Option<(usize, usize)>> = (0..n).map(|i| (labels[i] != 0).then_some((0, i))).collect();
    let mut step = 0;
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if labels[i] != 0 || !mask.bits()[i] {
                continue;
            }
            let frontier = neighbor_coords(conn, i % w, i / w, w, h)
                .iter()
                .any(|&(x, y)| labels[y * w + x] != 0);
            if !frontier {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (vi, vb) = (relief.samples()[i] + 0.0, relief.samples()[b] + 0.0);
                    vi > vb
                }
            };
            if better {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        step += 1;
        let (_, from) = neighbor_coords(conn, i % w, i / w, w, h)
            .into_iter()
            .map(|(x, y)| y * w + x)
            .filter_map(|j| time[j].map(|t| (t, j)))
            .min()
            .unwrap();
        labels[i] = labels[from];
        time[i] = Some((step, i));
    }
    LabelMap::new(w, h, labels).unwrap()
}

/// Matching counts `(tp, fp, fn)` and pairs by comparing every ground-truth
/// instance with every predicted one pixel by pixel.
pub fn exhaustive_matching(gt: &LabelMap, pred: &LabelMap, tau: f64) -> (usize, usize, usize, Vec<(u32, u32)>) {
    let gt_ids = gt.instance_ids();
    let pred_ids = pred.instance_ids();
    let mut pairs = Vec::new();
    for &g in &gt_ids {
        for &p in &pred_ids {
            let (mut inter, mut union) = (0u64, 0u64);
            for (&a, &b) in gt.labels().iter().zip(pred.labels()) {
                inter += (a == g && b == p) as u64;
                union += (a == g || b == p) as u64;
            }
            if inter > 0 && inter as f64 / union as f64 >= tau {
                pairs.push((g, p));
            }
        }
    }
    // A label reaching the threshold with two partners (possible only at
    // exactly 0.5) is ambiguous and left unmatched.
    let shared =
        |pick: fn(&(u32, u32)) -> u32, pairs: &[(u32, u32)], v: u32| pairs.iter().filter(|p| pick(p) == v).count() > 1;
    let pairs: Vec<(u32, u32)> = pairs
        .iter()
        .copied()
        .filter(|&(g, p)| !shared(|q| q.0, &pairs, g) && !shared(|q| q.1, &pairs, p))
        .collect();
    let matched_gt: BTreeSet<u32> = pairs.iter().map(|p| p.0).collect();
    let matched_pred: BTreeSet<u32> = pairs.iter().map(|p| p.1).collect();
    assert_eq!(matched_gt.len(), pairs.len(), "ground-truth label matched twice");
    assert_eq!(matched_pred.len(), pairs.len(), "predicted label matched twice");
    let tp = pairs.len();
    (tp, pred_ids.len() - tp, gt_ids.len() - tp, pairs)
}

pub fn exhaustive_map(gt: &LabelMap, pred: &LabelMap) -> f64 {
    let grid = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];
    let mut sum = 0.0;
    for tau in grid {
        let (tp, fp, fn_, _) = exhaustive_matching(gt, pred, tau);
        let den = tp + fp + fn_;
        sum += if den == 0 { 1.0 } else { tp as f64 / den as f64 };
    }
    sum / grid.len() as f64
}

/// Cross-entropy straight from the definition, through the sigmoid.
///
/// `1 - sigmoid(z)` is evaluated as `sigmoid(-z)`; the literal subtraction
/// cancels catastrophically in f64 once `z` approaches 20.
pub fn naive_bce(z: f64, t: f64) -> f64 {
    let p = 1.0 / (1.0 + (-z).exp());
    let q = 1.0 / (1.0 + z.exp());
    -(t * p.ln() + (1.0 - t) * q.ln())
}

pub fn random_raster(rng: &mut impl Rng, w: usize, h: usize, levels: u32) -> Raster {
    Raster::from_fn(w, h, |_, _| rng.gen_range(0..levels) as f32).unwrap()
}

/// A smooth-ish random relief: a few bumps plus integer noise.
pub fn random_relief(rng: &mut impl Rng, w: usize, h: usize) -> Raster {
    let bumps: Vec<(f32, f32, f32, f32)> = (0..rng.gen_range(1..6))
        .map(|_| {
            (
                rng.gen_range(0.0..w as f32),
                rng.gen_range(0.0..h as f32),
                rng.gen_range(2.0..10.0),
                rng.gen_range(5.0..40.0),
            )
        })
        .collect();
    Raster::from_fn(w, h, |x, y| {
        let mut v = 0.0f32;
        for &(cx, cy, s, a) in &bumps {
            let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
            v = v.max(a * (-d2 / (2.0 * s * s)).exp());
        }
        (v + rng.gen_range(0..3) as f32).round()
    })
    .unwrap()
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density)).unwrap()
}

/// Up to `max_instances` random rectangles painted over each other, with
/// labels drawn sparsely so they need not be dense.
pub fn random_label_map(rng: &mut impl Rng, w: usize, h: usize, max_instances: usize) -> LabelMap {
    let mut labels = vec![0u32; w * h];
    let count = rng.gen_range(0..=max_instances);
    for k in 0..count {
        let rw = rng.gen_range(1..=w.max(2) / 2);
        let rh = rng.gen_range(1..=h.max(2) / 2);
        let x0 = rng.gen_range(0..=w - rw.min(w));
        let y0 = rng.gen_range(0..=h - rh.min(h));
        let id = (k as u32 + 1) * rng.gen_range(1..4);
        for y in y0..(y0 + rh).min(h) {
            for x in x0..(x0 + rw).min(w) {
                labels[y * w + x] = id;
            }
        }
    }
    LabelMap::new(w, h, labels).unwrap()
}

/// A prediction derived from `gt`: instances shifted, eroded, split,
/// merged or dropped, plus spurious blobs.
pub fn perturb_labels(rng: &mut impl Rng, gt: &LabelMap, max_instances: usize) -> LabelMap {
    let (w, h) = gt.dims();
    let mut out = vec![0u32; w * h];
    let mut next = 1u32;
    let mut relabel: BTreeMap<u32, u32> = BTreeMap::new();
    for id in gt.instance_ids() {
        let action = rng.gen_range(0..5);
        if action == 0 {
            continue;
        }
        let (dx, dy) = if action == 1 {
            (rng.gen_range(-2i64..=2), rng.gen_range(-2i64..=2))
        } else {
            (0, 0)
        };
        let target = if action == 2 && !relabel.is_empty() {
            *relabel.values().next().unwrap()
        } else {
            next += 1;
            next - 1
        };
        relabel.insert(id, target);
        let split_col = if action == 3 { Some(rng.gen_range(0..w)) } else { None };
        for y in 0..h {
            for x in 0..w {
                if gt.get(x, y) != id {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let mut label = target;
                if let Some(c) = split_col {
                    if x >= c {
                        label = target + 1000;
                    }
                }
                out[ny as usize * w + nx as usize] = label;
            }
        }
    }
    let extra = rng.gen_range(0..=max_instances / 4);
    for k in 0..extra {
        let x0 = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h);
        for y in y0..(y0 + 3).min(h) {
            for x in x0..(x0 + 3).min(w) {
                out[y * w + x] = 5000 + k as u32;
            }
        }
    }
    LabelMap::new(w, h, out).unwrap()
}
