//! Dataset preparation: random crops, instance filtering, train/test splits
//! and a synthetic generator of touching cell-like instances.
//!
//! All randomness is keyed explicitly. Crop positions come from a ChaCha
//! stream selected by `(seed, image id, crop index)`, so any crop can be
//! regenerated independently of the others and of thread scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distance::distance_map;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Grid, LabelMap, Raster};

pub const DEFAULT_CROP_COUNT: usize = 5;
pub const DEFAULT_CROP_SIZE: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            count: DEFAULT_CROP_COUNT,
            size: DEFAULT_CROP_SIZE,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CropOffset {
    pub index: usize,
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

fn crop_rng(seed: u64, image_id: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(image_id);
    rng
}

/// Top-left corners of `spec.count` square crops drawn uniformly from the
/// valid positions of a `width`x`height` image. Crops may overlap.
pub fn crop_offsets(width: usize, height: usize, spec: &CropSpec, image_id: u64) -> Result<Vec<CropOffset>> {
    if spec.count == 0 {
        return Err(Error::BadCount("crop count must be at least 1".into()));
    }
    if spec.size == 0 || spec.size > width.min(height) {
        return Err(Error::CropTooLarge {
            size: spec.size,
            width,
            height,
        });
    }
    Ok((0..spec.count)
        .map(|index| {
            let mut rng = crop_rng(spec.seed, image_id, index as u64);
            CropOffset {
                index,
                x: rng.gen_range(0..=width - spec.size),
                y: rng.gen_range(0..=height - spec.size),
                size: spec.size,
            }
        })
        .collect())
}

/// Crops `image` at the offsets of [`crop_offsets`]. Cropping an image and
/// its label map with the same spec and id keeps them aligned.
pub fn random_crops<T: Grid>(image: &T, spec: &CropSpec, image_id: u64) -> Result<Vec<(CropOffset, T)>> {
    let offsets = crop_offsets(image.width(), image.height(), spec, image_id)?;
    Ok(offsets
        .into_iter()
        .map(|o| (o, image.crop(o.x, o.y, o.size, o.size)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CropManifestRow {
    pub image_id: String,
    pub crop_index: usize,
    pub x_offset: usize,
    pub y_offset: usize,
    pub size: usize,
}

impl CropManifestRow {
    pub fn new(image_id: impl Into<String>, offset: &CropOffset) -> Self {
        Self {
            image_id: image_id.into(),
            crop_index: offset.index,
            x_offset: offset.x,
            y_offset: offset.y,
            size: offset.size,
        }
    }
}

/// CSV with header `image_id,crop_index,x_offset,y_offset,size`.
pub fn crop_manifest_csv(rows: &[CropManifestRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record(["image_id", "crop_index", "x_offset", "y_offset", "size"])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

/// True if any pixel carries a positive label.
pub fn has_instances(labels: &LabelMap) -> bool {
    labels.labels().iter().any(|&l| l != 0)
}

/// Seeded shuffle, then the first `train_count` ids train and the rest test.
pub fn split_train_test<T: Clone>(ids: &[T], train_count: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if train_count > ids.len() {
        return Err(Error::BadCount(format!(
            "train count {train_count} exceeds {} ids",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..train_count]), pick(&order[train_count..])))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OverlapPolicy {
    /// Neighboring instances may share a boundary.
    #[default]
    TouchingAllowed,
    /// At least one background pixel between instances, in every direction.
    Disjoint,
}

/// Parameters of [`synth_instances`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub cells: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Lower bound on the distance-map peak of every generated instance.
    pub min_peak: f64,
    pub policy: OverlapPolicy,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            cells: 30,
            radius_min: 14.0,
            radius_max: 22.0,
            min_peak: 12.0,
            policy: OverlapPolicy::TouchingAllowed,
            seed: 0,
        }
    }
}

/// Placement attempts per requested cell before giving up.
const PLACEMENT_ATTEMPTS: usize = 1000;

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty canvas {}x{}", self.width, self.height));
        }
        if !(self.radius_min >= 2.0 && self.radius_min <= self.radius_max && self.radius_max.is_finite()) {
            return bad(format!(
                "radius range [{}, {}] invalid; radii must be >= 2",
                self.radius_min, self.radius_max
            ));
        }
        if !(self.min_peak >= 0.0 && self.min_peak <= self.radius_min - 1.0) {
            return bad(format!(
                "min peak {} must lie in [0, radius_min - 1 = {}]",
                self.min_peak,
                self.radius_min - 1.0
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Disc {
    cx: f64,
    cy: f64,
    r: f64,
}

/// Synthetic ground truth: instance labels, their distance map, and the
/// foreground mask.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub labels: LabelMap,
    pub distance: Raster,
    pub semantic: BinaryMask,
}

/// Places `spec.cells` disc-shaped instances at random.
///
/// Under [`OverlapPolicy::TouchingAllowed`] about half of the cells are
/// docked against an existing one; discs that overlap are split by assigning
/// contested pixels to the nearer center. Centers are kept at least
/// `2 * (min_peak + 1)` apart, which bounds every instance's distance peak
/// from below by `min_peak`.
pub fn synth_instances(spec: &SynthSpec) -> Result<SynthSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut discs: Vec<Disc> = Vec::with_capacity(spec.cells);
    let min_center_gap = 2.0 * (spec.min_peak + 1.0);

    let fits = |d: &Disc| {
        d.cx - d.r >= 0.0
            && d.cy - d.r >= 0.0
            && d.cx + d.r <= (spec.width - 1) as f64
            && d.cy + d.r <= (spec.height - 1) as f64
    };
    let compatible = |d: &Disc, others: &[Disc]| {
        others.iter().all(|o| {
            let gap = ((d.cx - o.cx).powi(2) + (d.cy - o.cy).powi(2)).sqrt();
            match spec.policy {
                OverlapPolicy::Disjoint => gap >= d.r + o.r + 2.0,
                OverlapPolicy::TouchingAllowed => gap >= min_center_gap.max(d.r).max(o.r),
            }
        })
    };

    for _ in 0..spec.cells {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let r = rng.gen_range(spec.radius_min..=spec.radius_max);
            let dock = spec.policy == OverlapPolicy::TouchingAllowed && !discs.is_empty() && rng.gen_bool(0.5);
            let candidate = if dock {
                let anchor = discs[rng.gen_range(0..discs.len())];
                let lo = min_center_gap.max(r).max(anchor.r);
                let hi = (r + anchor.r).max(lo);
                let gap = rng.gen_range(lo..=hi);
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                Disc {
                    cx: anchor.cx + gap * angle.cos(),
                    cy: anchor.cy + gap * angle.sin(),
                    r,
                }
            } else {
                Disc {
                    cx: rng.gen_range(0.0..spec.width as f64),
                    cy: rng.gen_range(0.0..spec.height as f64),
                    r,
                }
            };
            if fits(&candidate) && compatible(&candidate, &discs) {
                discs.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::PlacementFailure {
                placed: discs.len(),
                requested: spec.cells,
            });
        }
    }

    let (width, height) = (spec.width, spec.height);
    let mut labels = vec![0u32; width * height];
    let mut owner_d2 = vec![f64::INFINITY; width * height];
    for (k, d) in discs.iter().enumerate() {
        let x0 = (d.cx - d.r).floor().max(0.0) as usize;
        let y0 = (d.cy - d.r).floor().max(0.0) as usize;
        let x1 = ((d.cx + d.r).ceil() as usize).min(width - 1);
        let y1 = ((d.cy + d.r).ceil() as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - d.cx).powi(2) + (y as f64 - d.cy).powi(2);
                let i = y * width + x;
                if d2 <= d.r * d.r && d2 < owner_d2[i] {
                    owner_d2[i] = d2;
                    labels[i] = k as u32 + 1;
                }
            }
        }
    }

    let labels = LabelMap::from_parts(width, height, labels);
    let distance = distance_map(&labels);
    let semantic = labels.foreground();
    Ok(SynthSample {
        labels,
        distance,
        semantic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{connected_components, Connectivity};

    #[test]
    fn full_size_crop() {
        let r = Raster::from_fn(8, 8, |x, y| (x + y) as f32).unwrap();
        let spec = CropSpec {
            count: 3,
            size: 8,
            seed: 9,
        };
        for (o, c) in random_crops(&r, &spec, 0).unwrap() {
            assert_eq!((o.x, o.y), (0, 0));
            assert_eq!(c, r);
        }
    }

    #[test]
    fn crops_are_deterministic() {
        let spec = CropSpec {
            count: 5,
            size: 100,
            seed: 42,
        };
        let a = crop_offsets(1000, 700, &spec, 7).unwrap();
        assert_eq!(a, crop_offsets(1000, 700, &spec, 7).unwrap());
        assert_ne!(a, crop_offsets(1000, 700, &spec, 8).unwrap());
        // Each crop depends only on its own key.
        let more = CropSpec { count: 8, ..spec };
        assert_eq!(&crop_offsets(1000, 700, &more, 7).unwrap()[..5], &a[..]);
    }

    #[test]
    fn crop_bounds() {
        let spec = CropSpec {
            count: 200,
            size: 512,
            seed: 1,
        };
        for o in crop_offsets(2160, 2160, &spec, 3).unwrap() {
            assert!(o.x <= 1648 && o.y <= 1648);
        }
    }

    #[test]
    fn crop_errors() {
        let spec = CropSpec {
            count: 1,
            size: 4096,
            seed: 0,
        };
        assert!(matches!(
            crop_offsets(2160, 2160, &spec, 0),
            Err(Error::CropTooLarge { .. })
        ));
        let spec = CropSpec {
            count: 0,
            size: 4,
            seed: 0,
        };
        assert!(matches!(crop_offsets(8, 8, &spec, 0), Err(Error::BadCount(_))));
    }

    #[test]
    fn paired_crops_align() {
        let img = Raster::from_fn(40, 30, |x, y| (y * 40 + x) as f32).unwrap();
        let lab = LabelMap::new(40, 30, (0..1200).collect()).unwrap();
        let spec = CropSpec {
            count: 4,
            size: 10,
            seed: 5,
        };
        let a = random_crops(&img, &spec, 2).unwrap();
        let b = random_crops(&lab, &spec, 2).unwrap();
        for ((oa, ca), (ob, cb)) in a.iter().zip(&b) {
            assert_eq!(oa, ob);
            for y in 0..10 {
                for x in 0..10 {
                    assert_eq!(ca.get(x, y) as u32, cb.get(x, y));
                    assert_eq!(cb.get(x, y), lab.get(x + oa.x, y + oa.y));
                }
            }
        }
    }

    #[test]
    fn manifest_csv() {
        let rows = vec![CropManifestRow::new(
            "img1",
            &CropOffset {
                index: 0,
                x: 3,
                y: 4,
                size: 5,
            },
        )];
        assert_eq!(
            crop_manifest_csv(&rows).unwrap(),
            "image_id,crop_index,x_offset,y_offset,size\nimg1,0,3,4,5\n"
        );
    }

    #[test]
    fn instance_presence() {
        assert!(!has_instances(&LabelMap::empty(3, 3).unwrap()));
        let mut l = vec![0; 9];
        l[4] = 1;
        assert!(has_instances(&LabelMap::new(3, 3, l).unwrap()));
        assert!(has_instances(&LabelMap::new(2, 1, vec![3, 7]).unwrap()));
    }

    #[test]
    fn splits() {
        let ids: Vec<u32> = (0..421).collect();
        let (train, test) = split_train_test(&ids, 384, 11).unwrap();
        assert_eq!((train.len(), test.len()), (384, 37));
        let mut all: Vec<u32> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, ids);
        assert_eq!(split_train_test(&ids, 384, 11).unwrap(), (train, test));

        let (train, test) = split_train_test(&ids, 421, 0).unwrap();
        assert_eq!(train.len(), 421);
        assert!(test.is_empty());
        assert!(matches!(split_train_test(&ids, 422, 0), Err(Error::BadCount(_))));
    }

    #[test]
    fn synth_zero_cells() {
        let spec = SynthSpec {
            width: 32,
            height: 32,
            cells: 0,
            ..Default::default()
        };
        let s = synth_instances(&spec).unwrap();
        assert_eq!(s.labels.instance_count(), 0);
        assert_eq!(s.semantic.count(), 0);
        assert!(s.distance.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synth_single_disc() {
        let spec = SynthSpec {
            width: 40,
            height: 40,
            cells: 1,
            radius_min: 5.0,
            radius_max: 5.0,
            min_peak: 4.0,
            seed: 3,
            ..Default::default()
        };
        let s = synth_instances(&spec).unwrap();
        assert_eq!(s.labels.instance_ids(), vec![1]);
        let peak = s.distance.samples().iter().copied().fold(0.0, f32::max);
        assert!(peak >= 4.0, "peak {peak}");
    }

    #[test]
    fn synth_disjoint_keeps_gap() {
        let spec = SynthSpec {
            width: 256,
            height: 256,
            cells: 12,
            radius_min: 6.0,
            radius_max: 12.0,
            min_peak: 4.0,
            policy: OverlapPolicy::Disjoint,
            seed: 17,
        };
        let s = synth_instances(&spec).unwrap();
        assert_eq!(s.labels.instance_count(), 12);
        // Dilating each instance by one pixel never reaches another instance.
        let l = &s.labels;
        for y in 0..256 {
            for x in 0..256 {
                let a = l.get(x, y);
                if a == 0 {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if (0..256).contains(&nx) && (0..256).contains(&ny) {
                            let b = l.get(nx as usize, ny as usize);
                            assert!(b == 0 || b == a);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn synth_touching_is_valid() {
        let spec = SynthSpec {
            seed: 5,
            ..Default::default()
        };
        let s = synth_instances(&spec).unwrap();
        assert_eq!(s.labels.instance_count(), 30);
        // Each instance is one connected region with a peak at least min_peak.
        for id in s.labels.instance_ids() {
            let mask = BinaryMask::new(512, 512, s.labels.labels().iter().map(|&l| l == id).collect()).unwrap();
            assert_eq!(connected_components(&mask, Connectivity::Four).instance_count(), 1);
            let peak = s
                .labels
                .labels()
                .iter()
                .zip(s.distance.samples())
                .filter(|(&l, _)| l == id)
                .map(|(_, &d)| d)
                .fold(0.0, f32::max);
            assert!(peak as f64 >= spec.min_peak, "instance {id} peak {peak}");
        }
        assert_eq!(synth_instances(&spec).unwrap().labels, s.labels);
    }

    #[test]
    fn synth_reports_placement_failure() {
        let spec = SynthSpec {
            width: 30,
            height: 30,
            cells: 50,
            radius_min: 5.0,
            radius_max: 5.0,
            min_peak: 3.0,
            policy: OverlapPolicy::Disjoint,
            seed: 0,
        };
        assert!(matches!(
            synth_instances(&spec),
            Err(Error::PlacementFailure { requested: 50, .. })
        ));
    }
}
