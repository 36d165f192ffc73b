//! Instance segmentation from a predicted distance map and a semantic
//! prediction: threshold, h-maxima seeds, seeded watershed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::logit;
use crate::morphology::{connected_components, h_maxima, neighbors, regional_maxima, Connectivity};
use crate::raster::{ensure_same_dims, BinaryMask, Grid, LabelMap, Raster};

/// Depth below which maxima of the distance map are suppressed.
pub const DEFAULT_H: f64 = 10.0;
pub const DEFAULT_SEMANTIC_THRESHOLD: f64 = 0.5;

/// How semantic logits are turned into probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    /// `1 / (1 + exp(-v))`
    #[default]
    Standard,
    /// `1 / (1 + exp(-(v - 0.5)))`, for outputs that naturally live in `[0, 1]`.
    Shifted,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Standard => f.write_str("standard"),
            Activation::Shifted => f.write_str("shifted"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Activation::Standard),
            "shifted" => Ok(Activation::Shifted),
            other => Err(Error::InvalidConfig(format!(
                "activation must be standard or shifted, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub h: f64,
    pub activation: Activation,
    pub semantic_threshold: f64,
    pub connectivity: Connectivity,
    /// Flood the h-maxima transformed map instead of the raw distance map.
    pub flood_on_hmax: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            h: DEFAULT_H,
            activation: Activation::Standard,
            semantic_threshold: DEFAULT_SEMANTIC_THRESHOLD,
            connectivity: Connectivity::Eight,
            flood_on_hmax: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(Error::NegativeH(self.h));
        }
        if !(self.semantic_threshold > 0.0 && self.semantic_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "semantic threshold must lie in (0, 1), got {}",
                self.semantic_threshold
            )));
        }
        Ok(())
    }

    /// Logit value at which a pixel's probability reaches the threshold.
    pub fn logit_cutoff(&self) -> f64 {
        let base = logit(self.semantic_threshold);
        match self.activation {
            Activation::Standard => base,
            Activation::Shifted => base + 0.5,
        }
    }
}

/// Watershed seeds: one dense label per connected seed plateau.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedSet {
    seeds: LabelMap,
}

impl SeedSet {
    /// Wraps a label map after checking that labels are dense `1..=K`.
    pub fn new(seeds: LabelMap) -> Result<Self> {
        let ids = seeds.instance_ids();
        if ids.iter().enumerate().any(|(i, &l)| l as usize != i + 1) {
            return Err(Error::InvalidConfig("seed labels must be dense 1..K".into()));
        }
        Ok(Self { seeds })
    }

    pub fn labels(&self) -> &LabelMap {
        &self.seeds
    }

    pub fn count(&self) -> usize {
        self.seeds.max_label() as usize
    }

    pub fn into_labels(self) -> LabelMap {
        self.seeds
    }
}

/// Foreground where the activated prediction reaches the threshold.
pub fn threshold_semantic(pred: &Raster, cfg: &PipelineConfig) -> BinaryMask {
    let cutoff = cfg.logit_cutoff();
    let bits = pred.samples().iter().map(|&v| v as f64 >= cutoff).collect();
    BinaryMask::from_parts(pred.width(), pred.height(), bits)
}

fn seeds_and_hmax(dist: &Raster, mask: &BinaryMask, cfg: &PipelineConfig) -> Result<(SeedSet, Raster)> {
    ensure_same_dims(dist, mask)?;
    cfg.validate()?;
    let hmax = h_maxima(dist, cfg.h, cfg.connectivity)?;
    let maxima = regional_maxima(&hmax, cfg.connectivity);
    let bits = maxima.bits().iter().zip(mask.bits()).map(|(&a, &b)| a && b).collect();
    let seeds = connected_components(
        &BinaryMask::from_parts(dist.width(), dist.height(), bits),
        cfg.connectivity,
    );
    Ok((SeedSet { seeds }, hmax))
}

/// Regional maxima of the h-maxima transformed distance map, restricted to
/// `mask`, one label per connected plateau.
pub fn extract_seeds(dist: &Raster, mask: &BinaryMask, cfg: &PipelineConfig) -> Result<SeedSet> {
    seeds_and_hmax(dist, mask, cfg).map(|(seeds, _)| seeds)
}

/// Heap entry: higher relief first, then lower linear index.
#[derive(Clone, Copy, Debug)]
struct Pending {
    relief: f32,
    index: usize,
    label: u32,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.relief
            .total_cmp(&other.relief)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Floods `relief` from high to low starting at the seeds, inside `mask`.
///
/// Each mask pixel joins the label of the first labeled neighbor that reaches
/// it. Pending pixels are processed by descending relief; ties go to the
/// smaller row-major index. Mask components without a seed stay 0, and no
/// watershed-line pixels are produced.
pub fn seeded_watershed(relief: &Raster, seeds: &SeedSet, mask: &BinaryMask, conn: Connectivity) -> Result<LabelMap> {
    ensure_same_dims(relief, mask)?;
    ensure_same_dims(relief, seeds.labels())?;
    let (width, height) = relief.dims();
    let inside = mask.bits();
    let mut labels = seeds.labels().labels().to_vec();
    if let Some(index) = labels.iter().zip(inside).position(|(&l, &m)| l != 0 && !m) {
        return Err(Error::SeedOutsideMask {
            index,
            label: labels[index],
        });
    }
    // Adding 0.0 folds -0.0 into +0.0 so equal values compare equal.
    let priority: Vec<f32> = relief.samples().iter().map(|&v| v + 0.0).collect();

    let mut queued: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    let mut heap = BinaryHeap::new();
    let enqueue_neighbors = |i: usize, label: u32, queued: &mut [bool], heap: &mut BinaryHeap<Pending>| {
        for j in neighbors(conn, i, width, height) {
            if inside[j] && !queued[j] {
                queued[j] = true;
                heap.push(Pending {
                    relief: priority[j],
                    index: j,
                    label,
                });
            }
        }
    };

    for (i, &label) in labels.iter().enumerate() {
        if label != 0 {
            enqueue_neighbors(i, label, &mut queued, &mut heap);
        }
    }
    while let Some(Pending { index, label, .. }) = heap.pop() {
        labels[index] = label;
        enqueue_neighbors(index, label, &mut queued, &mut heap);
    }

    Ok(LabelMap::from_parts(width, height, labels))
}

/// Full post-processing: semantic threshold, h-maxima seeds, seeded watershed.
pub fn instance_segment(dist_pred: &Raster, semantic_pred: &Raster, cfg: &PipelineConfig) -> Result<LabelMap> {
    ensure_same_dims(dist_pred, semantic_pred)?;
    cfg.validate()?;
    let mask = threshold_semantic(semantic_pred, cfg);
    let (seeds, hmax) = seeds_and_hmax(dist_pred, &mask, cfg)?;
    let relief = if cfg.flood_on_hmax { &hmax } else { dist_pred };
    seeded_watershed(relief, &seeds, &mask, cfg.connectivity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::distance_map;

    fn row(values: &[f32]) -> Raster {
        Raster::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn standard_threshold() {
        let cfg = PipelineConfig::default();
        let m = threshold_semantic(&row(&[-1.0, 0.0, 2.0]), &cfg);
        assert_eq!(m.bits(), &[false, true, true]);
    }

    #[test]
    fn shifted_threshold() {
        let cfg = PipelineConfig {
            activation: Activation::Shifted,
            ..Default::default()
        };
        let m = threshold_semantic(&row(&[0.4, 0.5, 0.9]), &cfg);
        assert_eq!(m.bits(), &[false, true, true]);
    }

    #[test]
    fn high_threshold() {
        let cfg = PipelineConfig {
            semantic_threshold: 0.9,
            ..Default::default()
        };
        // logit(0.9) = ln 9 ~ 2.1972
        assert!((cfg.logit_cutoff() - 2.197_224_577_336_219_4).abs() < 1e-12);
        assert_eq!(threshold_semantic(&row(&[2.0, 2.2]), &cfg).bits(), &[false, true]);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            h: -1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::NegativeH(_))));
        for t in [0.0, 1.0, 1.5] {
            let bad = PipelineConfig {
                semantic_threshold: t,
                ..Default::default()
            };
            assert!(bad.validate().is_err());
        }
    }

    fn full_mask(w: usize, h: usize) -> BinaryMask {
        BinaryMask::new(w, h, vec![true; w * h]).unwrap()
    }

    #[test]
    fn separated_spikes_give_two_seeds() {
        let mut v = vec![0.0f32; 11];
        v[2] = 30.0;
        v[8] = 25.0;
        let seeds = extract_seeds(&row(&v), &full_mask(11, 1), &PipelineConfig::default()).unwrap();
        assert_eq!(seeds.count(), 2);
    }

    #[test]
    fn shallow_peak_is_merged() {
        let mut v = vec![0.0f32; 11];
        for x in v.iter_mut().take(9).skip(2) {
            *x = 28.0;
        }
        v[3] = 30.0;
        v[7] = 35.0;
        let seeds = extract_seeds(&row(&v), &full_mask(11, 1), &PipelineConfig::default()).unwrap();
        assert_eq!(seeds.count(), 1);
        assert_eq!(seeds.labels().get(7, 0), 1);
    }

    #[test]
    fn empty_mask_has_no_seeds() {
        let r = Raster::from_fn(5, 5, |x, y| (x + y) as f32).unwrap();
        let m = BinaryMask::new(5, 5, vec![false; 25]).unwrap();
        assert_eq!(extract_seeds(&r, &m, &PipelineConfig::default()).unwrap().count(), 0);
    }

    #[test]
    fn seeds_dimension_mismatch() {
        let r = Raster::filled(5, 5, 0.0).unwrap();
        assert!(matches!(
            extract_seeds(&r, &full_mask(4, 5), &PipelineConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_basin_fills_blob() {
        let mask = BinaryMask::from_fn(6, 6, |x, y| (1..5).contains(&x) && (1..5).contains(&y)).unwrap();
        let mut s = vec![0; 36];
        s[2 * 6 + 2] = 1;
        let seeds = SeedSet::new(LabelMap::new(6, 6, s).unwrap()).unwrap();
        let relief = Raster::from_fn(6, 6, |x, _| x as f32).unwrap();
        let out = seeded_watershed(&relief, &seeds, &mask, Connectivity::Eight).unwrap();
        assert_eq!(out.foreground(), mask);
        assert_eq!(out.instance_ids(), vec![1]);
    }

    #[test]
    fn unseeded_blob_stays_background() {
        let mask = BinaryMask::from_fn(7, 3, |x, _| x != 3).unwrap();
        let mut s = vec![0; 21];
        s[7] = 1;
        let seeds = SeedSet::new(LabelMap::new(7, 3, s).unwrap()).unwrap();
        let relief = Raster::filled(7, 3, 1.0).unwrap();
        let out = seeded_watershed(&relief, &seeds, &mask, Connectivity::Eight).unwrap();
        for y in 0..3 {
            for x in 0..7 {
                assert_eq!(out.get(x, y), if x < 3 { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn seed_outside_mask() {
        let mask = BinaryMask::new(2, 1, vec![true, false]).unwrap();
        let seeds = SeedSet::new(LabelMap::new(2, 1, vec![0, 1]).unwrap()).unwrap();
        let relief = Raster::filled(2, 1, 0.0).unwrap();
        assert!(matches!(
            seeded_watershed(&relief, &seeds, &mask, Connectivity::Eight),
            Err(Error::SeedOutsideMask { index: 1, label: 1 })
        ));
    }

    #[test]
    fn non_dense_seed_labels_rejected() {
        assert!(SeedSet::new(LabelMap::new(2, 1, vec![0, 2]).unwrap()).is_err());
    }

    #[test]
    fn dumbbell_splits_at_bridge() {
        // Two 5x5 squares joined by a one-pixel bridge along row 4.
        let mask = BinaryMask::from_fn(13, 9, |x, y| {
            let left = (1..6).contains(&x) && (2..7).contains(&y);
            let right = (7..12).contains(&x) && (2..7).contains(&y);
            left || right || (x == 6 && y == 4)
        })
        .unwrap();
        let whole = LabelMap::new(13, 9, mask.bits().iter().map(|&b| b as u32).collect()).unwrap();
        let relief = distance_map(&whole);
        let mut s = vec![0; 13 * 9];
        s[4 * 13 + 3] = 1;
        s[4 * 13 + 9] = 2;
        let seeds = SeedSet::new(LabelMap::new(13, 9, s).unwrap()).unwrap();
        let out = seeded_watershed(&relief, &seeds, &mask, Connectivity::Eight).unwrap();
        for y in 2..7 {
            for x in 1..6 {
                assert_eq!(out.get(x, y), 1);
                assert_eq!(out.get(x + 6, y), 2);
            }
        }
        assert_ne!(out.get(6, 4), 0);
    }

    #[test]
    fn empty_inputs_give_empty_labels() {
        let dist = Raster::filled(8, 8, 0.0).unwrap();
        let sem = Raster::filled(8, 8, -40.0).unwrap();
        let out = instance_segment(&dist, &sem, &PipelineConfig::default()).unwrap();
        assert_eq!(out.instance_count(), 0);
    }

    #[test]
    fn flat_blob_is_one_instance() {
        let inside = |x: usize, y: usize| (2..8).contains(&x) && (2..8).contains(&y);
        let dist = Raster::from_fn(10, 10, |x, y| if inside(x, y) { 5.0 } else { 0.0 }).unwrap();
        let sem = Raster::from_fn(10, 10, |x, y| if inside(x, y) { 40.0 } else { -40.0 }).unwrap();
        let out = instance_segment(&dist, &sem, &PipelineConfig::default()).unwrap();
        assert_eq!(out.instance_ids(), vec![1]);
        assert_eq!(out.foreground().count(), 36);
    }

    #[test]
    fn instance_segment_dimension_mismatch() {
        let dist = Raster::filled(8, 8, 0.0).unwrap();
        let sem = Raster::filled(8, 7, 0.0).unwrap();
        assert!(matches!(
            instance_segment(&dist, &sem, &PipelineConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
