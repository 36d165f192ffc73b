//! Grayscale reconstruction, h-maxima, regional maxima and connected
//! components on [`Raster`], [`BinaryMask`] and [`LabelMap`] grids.
//!
//! Pixels outside the frame never take part in a neighborhood: for regional
//! maxima the frame behaves as if it were lower than everything inside.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, BinaryMask, Grid, LabelMap, Raster};

/// Pixel neighborhood used by every morphological operation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

const OFFSETS_4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
const OFFSETS_8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

impl Connectivity {
    /// Neighbor offsets `(dx, dy)` in raster order.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &OFFSETS_4,
            Connectivity::Eight => &OFFSETS_8,
        }
    }

    /// Offsets that precede the center pixel in raster order.
    fn causal_offsets(self) -> &'static [(isize, isize)] {
        let all = self.offsets();
        &all[..all.len() / 2]
    }

    /// Offsets that follow the center pixel in raster order.
    fn anticausal_offsets(self) -> &'static [(isize, isize)] {
        let all = self.offsets();
        &all[all.len() / 2..]
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Connectivity::Four => f.write_str("4"),
            Connectivity::Eight => f.write_str("8"),
        }
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" | "four" => Ok(Connectivity::Four),
            "8" | "eight" => Ok(Connectivity::Eight),
            other => Err(Error::InvalidConfig(format!(
                "connectivity must be 4 or 8, got {other:?}"
            ))),
        }
    }
}

/// Linear indices of the in-frame neighbors of `index` for the given offsets.
#[inline]
pub(crate) fn neighbors_with(
    offsets: &'static [(isize, isize)],
    index: usize,
    width: usize,
    height: usize,
) -> impl Iterator<Item = usize> {
    let x = (index % width) as isize;
    let y = (index / width) as isize;
    offsets.iter().filter_map(move |&(dx, dy)| {
        let nx = x + dx;
        let ny = y + dy;
        if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
            None
        } else {
            Some(ny as usize * width + nx as usize)
        }
    })
}

#[inline]
pub(crate) fn neighbors(conn: Connectivity, index: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    neighbors_with(conn.offsets(), index, width, height)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // Keep the earlier pixel as root.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Labels the maximal connected foreground regions of `mask`.
///
/// Labels run `1..=K` in the order each component is first met during a
/// raster scan; background stays 0.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (width, height) = mask.dims();
    let bits = mask.bits();
    let mut sets = DisjointSet::new(bits.len());
    for (i, &set) in bits.iter().enumerate() {
        if !set {
            continue;
        }
        for j in neighbors_with(conn.causal_offsets(), i, width, height) {
            if bits[j] {
                sets.union(i, j);
            }
        }
    }

    let mut root_label = vec![0u32; bits.len()];
    let mut next = 0u32;
    let mut labels = vec![0u32; bits.len()];
    for (i, &set) in bits.iter().enumerate() {
        if !set {
            continue;
        }
        let root = sets.find(i);
        if root_label[root] == 0 {
            next += 1;
            root_label[root] = next;
        }
        labels[i] = root_label[root];
    }
    LabelMap::from_parts(width, height, labels)
}

/// Morphological reconstruction by dilation of `marker` under `mask`.
///
/// Uses the hybrid raster / anti-raster scan followed by FIFO propagation.
/// Output values are always drawn from the inputs, so the result is exact.
pub fn reconstruct_by_dilation(marker: &Raster, mask: &Raster, conn: Connectivity) -> Result<Raster> {
    ensure_same_dims(marker, mask)?;
    let lim = mask.samples();
    if let Some(index) = marker.samples().iter().zip(lim).position(|(m, i)| m > i) {
        return Err(Error::MarkerExceedsMask { index });
    }
    let (width, height) = marker.dims();
    let mut out = marker.samples().to_vec();

    for i in 0..out.len() {
        let mut v = out[i];
        for j in neighbors_with(conn.causal_offsets(), i, width, height) {
            v = v.max(out[j]);
        }
        out[i] = v.min(lim[i]);
    }

    let mut queue = VecDeque::new();
    for i in (0..out.len()).rev() {
        let mut v = out[i];
        for j in neighbors_with(conn.anticausal_offsets(), i, width, height) {
            v = v.max(out[j]);
        }
        out[i] = v.min(lim[i]);
        let p = out[i];
        if neighbors_with(conn.anticausal_offsets(), i, width, height).any(|j| out[j] < p && out[j] < lim[j]) {
            queue.push_back(i);
        }
    }

    while let Some(i) = queue.pop_front() {
        let p = out[i];
        for j in neighbors(conn, i, width, height) {
            if out[j] < p && out[j] != lim[j] {
                out[j] = p.min(lim[j]);
                queue.push_back(j);
            }
        }
    }

    Ok(Raster::from_parts(width, height, out))
}

/// h-maxima transform: reconstruction by dilation of `f - h` under `f`.
///
/// The subtraction is not clamped, so the result may be negative.
pub fn h_maxima(f: &Raster, h: f64, conn: Connectivity) -> Result<Raster> {
    if !h.is_finite() || h < 0.0 {
        return Err(Error::NegativeH(h));
    }
    // Subtract in f64 so the marker is `f - h` rounded once.
    let marker = f.map(|v| (v as f64 - h) as f32)?;
    reconstruct_by_dilation(&marker, f, conn)
}

/// Pixels on connected plateaus whose outside neighbors are all strictly lower.
pub fn regional_maxima(f: &Raster, conn: Connectivity) -> BinaryMask {
    let (width, height) = f.dims();
    let values = f.samples();
    let mut visited = vec![false; values.len()];
    let mut bits = vec![false; values.len()];
    let mut plateau = Vec::new();
    let mut stack = Vec::new();

    for start in 0..values.len() {
        if visited[start] {
            continue;
        }
        let level = values[start];
        let mut is_max = true;
        plateau.clear();
        visited[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            plateau.push(i);
            for j in neighbors(conn, i, width, height) {
                let v = values[j];
                if v > level {
                    is_max = false;
                } else if v == level && !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        if is_max {
            for &i in &plateau {
                bits[i] = true;
            }
        }
    }
    BinaryMask::from_parts(width, height, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(width: usize, rows: &[&str]) -> BinaryMask {
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryMask::new(width, rows.len(), bits).unwrap()
    }

    #[test]
    fn two_squares() {
        let m = mask(5, &["##...", "##...", ".....", "...##", "...##"]);
        let l = connected_components(&m, Connectivity::Eight);
        assert_eq!(l.instance_ids(), vec![1, 2]);
        assert_eq!(l.get(0, 0), 1);
        assert_eq!(l.get(4, 4), 2);
    }

    #[test]
    fn diagonal_touch() {
        let m = mask(2, &["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Eight).instance_count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).instance_count(), 2);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::new(3, 3, vec![false; 9]).unwrap();
        assert_eq!(connected_components(&m, Connectivity::Eight).instance_count(), 0);
    }

    #[test]
    fn first_encounter_order() {
        // The U shape is one component first met at (0,0); the dot is second.
        let m = mask(5, &["#.#.#", "###.."]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.labels(), &[1, 0, 1, 0, 2, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn reconstruct_fixed_point() {
        let m = Raster::from_fn(4, 4, |x, y| (x * y) as f32).unwrap();
        assert_eq!(reconstruct_by_dilation(&m, &m, Connectivity::Eight).unwrap(), m);
    }

    #[test]
    fn reconstruct_constant() {
        let mask = Raster::filled(5, 5, 12.0).unwrap();
        let marker = Raster::filled(5, 5, 2.0).unwrap();
        let out = reconstruct_by_dilation(&marker, &mask, Connectivity::Four).unwrap();
        assert!(out.samples().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn reconstruct_rejects_bad_marker() {
        let mask = Raster::filled(2, 2, 1.0).unwrap();
        let marker = Raster::new(2, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            reconstruct_by_dilation(&marker, &mask, Connectivity::Eight),
            Err(Error::MarkerExceedsMask { index: 1 })
        ));
        let other = Raster::filled(3, 2, 0.0).unwrap();
        assert!(matches!(
            reconstruct_by_dilation(&other, &mask, Connectivity::Eight),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reconstruct_spreads_only_inside_mask() {
        // Two mask basins at 5 separated by a 0 column; the marker seeds the left one.
        let mask = Raster::new(5, 1, vec![5.0, 5.0, 0.0, 5.0, 5.0]).unwrap();
        let marker = Raster::new(5, 1, vec![3.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let out = reconstruct_by_dilation(&marker, &mask, Connectivity::Eight).unwrap();
        assert_eq!(out.samples(), &[3.0, 3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn h_maxima_basics() {
        let f = Raster::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { 20.0 } else { 0.0 }).unwrap();
        assert_eq!(h_maxima(&f, 0.0, Connectivity::Eight).unwrap(), f);
        let out = h_maxima(&f, 10.0, Connectivity::Eight).unwrap();
        assert_eq!(out.get(3, 3), 10.0);
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.samples().iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(matches!(
            h_maxima(&f, -1.0, Connectivity::Eight),
            Err(Error::NegativeH(_))
        ));
        assert!(h_maxima(&f, f64::NAN, Connectivity::Eight).is_err());
    }

    #[test]
    fn h_maxima_allows_negative_values() {
        let f = Raster::filled(3, 3, 2.0).unwrap();
        let out = h_maxima(&f, 10.0, Connectivity::Eight).unwrap();
        assert!(out.samples().iter().all(|&v| v == -8.0));
    }

    #[test]
    fn regional_maxima_cases() {
        let spike = Raster::from_fn(5, 5, |x, y| if (x, y) == (1, 2) { 3.0 } else { 0.0 }).unwrap();
        let m = regional_maxima(&spike, Connectivity::Eight);
        assert_eq!(m.count(), 1);
        assert!(m.get(1, 2));

        let flat = Raster::filled(4, 3, 7.0).unwrap();
        assert_eq!(regional_maxima(&flat, Connectivity::Four).count(), 12);

        let ramp = Raster::from_fn(6, 1, |x, _| x as f32).unwrap();
        assert_eq!(
            regional_maxima(&ramp, Connectivity::Eight).bits(),
            &[false, false, false, false, false, true]
        );
    }

    #[test]
    fn plateau_with_higher_neighbor_is_not_maximum() {
        let f = Raster::new(4, 1, vec![2.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(
            regional_maxima(&f, Connectivity::Eight).bits(),
            &[false, false, true, false]
        );
    }

    #[test]
    fn diagonal_neighbor_depends_on_connectivity() {
        let f = Raster::new(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(regional_maxima(&f, Connectivity::Four).count(), 2);
        assert_eq!(regional_maxima(&f, Connectivity::Eight).count(), 1);
    }

    #[test]
    fn connectivity_parsing() {
        assert_eq!("4".parse::<Connectivity>().unwrap(), Connectivity::Four);
        assert_eq!("8".parse::<Connectivity>().unwrap(), Connectivity::Eight);
        assert!("6".parse::<Connectivity>().is_err());
        assert_eq!(Connectivity::default(), Connectivity::Eight);
    }
}
