//! Raster containers shared by every stage of the pipeline.
//!
//! All grids are row-major with the origin at the top-left corner and `y`
//! increasing downward, which is also PNG scanline order.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyDimensions { width, height });
    }
    match width.checked_mul(height) {
        None => Err(Error::DimensionOverflow {
            width: width as u64,
            height: height as u64,
        }),
        Some(n) if n != len => Err(Error::SampleCount {
            width,
            height,
            actual: len,
        }),
        Some(_) => Ok(()),
    }
}

/// Common shape accessors for the grid types.
pub trait Grid {
    fn width(&self) -> usize;
    fn height(&self) -> usize;

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn len(&self) -> usize {
        self.width() * self.height()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x, y)`.
    ///
    /// The window must lie inside the grid.
    fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Self
    where
        Self: Sized;
}

/// Errors with `DimensionMismatch` unless both grids have the same shape.
pub fn ensure_same_dims(a: &impl Grid, b: &impl Grid) -> Result<()> {
    if a.dims() == b.dims() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        })
    }
}

fn crop_rows<T: Copy>(data: &[T], width: usize, x: usize, y: usize, w: usize, h: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(w * h);
    for row in y..y + h {
        let start = row * width + x;
        out.extend_from_slice(&data[start..start + w]);
    }
    out
}

macro_rules! impl_grid {
    ($ty:ident, $field:ident) => {
        impl Grid for $ty {
            fn width(&self) -> usize {
                self.width
            }

            fn height(&self) -> usize {
                self.height
            }

            fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Self {
                assert!(
                    x + w <= self.width && y + h <= self.height && w > 0 && h > 0,
                    "crop window out of bounds"
                );
                $ty {
                    width: w,
                    height: h,
                    $field: crop_rows(&self.$field, self.width, x, y, w, h),
                }
            }
        }
    };
}

/// A single-channel image of finite 32-bit samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    samples: Vec<f32>,
}

impl_grid!(Raster, samples);

impl Raster {
    /// Builds a raster, rejecting mismatched lengths and non-finite samples.
    pub fn new(width: usize, height: usize, samples: Vec<f32>) -> Result<Self> {
        check_dims(width, height, samples.len())?;
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        let n = width.checked_mul(height).ok_or(Error::DimensionOverflow {
            width: width as u64,
            height: height as u64,
        })?;
        Self::new(width, height, vec![value; n])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut samples = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    /// Internal constructor for operations whose output is finite by construction.
    pub(crate) fn from_parts(width: usize, height: usize, samples: Vec<f32>) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        debug_assert!(samples.iter().all(|v| v.is_finite()));
        Self { width, height, samples }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.samples[y * self.width + x]
    }

    /// Applies `f` to every sample. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.width, self.height, self.samples.iter().map(|&v| f(v)).collect())
    }
}

/// Instance identifiers; 0 is background.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl_grid!(LabelMap, labels);

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        check_dims(width, height, labels.len())?;
        Ok(Self { width, height, labels })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        let n = width.checked_mul(height).ok_or(Error::DimensionOverflow {
            width: width as u64,
            height: height as u64,
        })?;
        Self::new(width, height, vec![0; n])
    }

    pub(crate) fn from_parts(width: usize, height: usize, labels: Vec<u32>) -> Self {
        debug_assert_eq!(labels.len(), width * height);
        Self { width, height, labels }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Distinct positive labels in ascending order.
    pub fn instance_ids(&self) -> Vec<u32> {
        self.labels
            .iter()
            .copied()
            .filter(|&l| l != 0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn instance_count(&self) -> usize {
        self.instance_ids().len()
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Foreground mask: every pixel with a positive label.
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask::from_parts(self.width, self.height, self.labels.iter().map(|&l| l != 0).collect())
    }
}

/// Boolean foreground image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl_grid!(BinaryMask, bits);

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub(crate) fn from_parts(width: usize, height: usize, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), width * height);
        Self { width, height, bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Saturated logits: `+magnitude` on foreground, `-magnitude` elsewhere.
    pub fn to_logits(&self, magnitude: f32) -> Raster {
        let samples = self
            .bits
            .iter()
            .map(|&b| if b { magnitude } else { -magnitude })
            .collect();
        Raster::from_parts(self.width, self.height, samples)
    }
}

/// Focal planes of one field of view, all with identical dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ZStack {
    planes: Vec<Raster>,
}

impl ZStack {
    pub fn new(planes: Vec<Raster>) -> Result<Self> {
        let first = planes.first().ok_or(Error::EmptyStack)?;
        for plane in &planes[1..] {
            ensure_same_dims(first, plane)?;
        }
        Ok(Self { planes })
    }

    pub fn planes(&self) -> &[Raster] {
        &self.planes
    }
}

/// Maximum intensity projection along the focal axis.
pub fn max_project(stack: &ZStack) -> Raster {
    let mut planes = stack.planes.iter();
    let first = planes.next().expect("ZStack is never empty");
    let mut samples = first.samples.clone();
    for plane in planes {
        for (acc, &v) in samples.iter_mut().zip(&plane.samples) {
            *acc = acc.max(v);
        }
    }
    Raster::from_parts(first.width, first.height, samples)
}
