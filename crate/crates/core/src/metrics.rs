//! Image and instance metrics, and the loss kernel used to score training
//! outputs.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, BinaryMask, Grid, LabelMap, Raster};

/// IoU thresholds averaged by [`map_score`]: 0.50, 0.55, ..., 0.95.
pub const MAP_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Weight of the semantic term in [`combined_loss`].
pub const DEFAULT_ALPHA: f64 = 2000.0;

/// Pearson correlation over all pixels.
pub fn pcc(x: &Raster, y: &Raster) -> Result<f64> {
    ensure_same_dims(x, y)?;
    let n = x.len() as f64;
    let mean_x = x.samples().iter().map(|&v| v as f64).sum::<f64>() / n;
    let mean_y = y.samples().iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.samples().iter().zip(y.samples()) {
        let dx = a as f64 - mean_x;
        let dy = b as f64 - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantImage);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// `(|x & y|, |x | y|)` pixel counts.
pub fn overlap_counts(x: &BinaryMask, y: &BinaryMask) -> Result<(u64, u64)> {
    ensure_same_dims(x, y)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&a, &b) in x.bits().iter().zip(y.bits()) {
        inter += (a && b) as u64;
        union += (a || b) as u64;
    }
    Ok((inter, union))
}

/// Jaccard index; two empty masks score 1.
pub fn iou(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    let (inter, union) = overlap_counts(x, y)?;
    Ok(ratio_or_one(inter, union))
}

fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatchedPair {
    pub gt: u32,
    pub pred: u32,
    pub iou: f64,
}

/// Instance matching at one IoU threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchResult {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub pairs: Vec<MatchedPair>,
}

impl MatchResult {
    /// `TP / (TP + FP + FN)`, or 1 when both maps are empty.
    pub fn precision(&self) -> f64 {
        let den = self.true_positives + self.false_positives + self.false_negatives;
        ratio_or_one(self.true_positives as u64, den as u64)
    }
}

/// Per-label areas and pairwise intersections of two label maps, computed in
/// a single pass so several thresholds can be evaluated cheaply.
#[derive(Clone, Debug)]
pub struct OverlapTable {
    gt_count: usize,
    pred_count: usize,
    /// `(gt, pred) -> (intersection, union)`, ordered by label pair.
    overlaps: Vec<(u32, u32, u64, u64)>,
}

impl OverlapTable {
    pub fn new(gt: &LabelMap, pred: &LabelMap) -> Result<Self> {
        ensure_same_dims(gt, pred)?;
        let mut gt_area: HashMap<u32, u64> = HashMap::new();
        let mut pred_area: HashMap<u32, u64> = HashMap::new();
        let mut inter: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
            if g != 0 {
                *gt_area.entry(g).or_default() += 1;
            }
            if p != 0 {
                *pred_area.entry(p).or_default() += 1;
            }
            if g != 0 && p != 0 {
                *inter.entry((g, p)).or_default() += 1;
            }
        }
        let overlaps = inter
            .into_iter()
            .map(|((g, p), i)| (g, p, i, gt_area[&g] + pred_area[&p] - i))
            .collect();
        Ok(Self {
            gt_count: gt_area.len(),
            pred_count: pred_area.len(),
            overlaps,
        })
    }

    /// All pairs with IoU at or above `tau`.
    ///
    /// Above 0.5 a region can overlap at most one other region that well, so
    /// the pairs are one-to-one. At exactly 0.5 an object split into two equal
    /// halves reaches the threshold with both; such ambiguous pairs are
    /// dropped.
    pub fn match_at(&self, tau: f64) -> Result<MatchResult> {
        if tau.is_nan() || tau < 0.5 {
            return Err(Error::ThresholdTooLow(tau));
        }
        let candidates: Vec<MatchedPair> = self
            .overlaps
            .iter()
            .map(|&(gt, pred, i, u)| MatchedPair {
                gt,
                pred,
                iou: i as f64 / u as f64,
            })
            .filter(|p| p.iou >= tau)
            .collect();
        let mut gt_uses: HashMap<u32, usize> = HashMap::new();
        let mut pred_uses: HashMap<u32, usize> = HashMap::new();
        for p in &candidates {
            *gt_uses.entry(p.gt).or_default() += 1;
            *pred_uses.entry(p.pred).or_default() += 1;
        }
        let pairs: Vec<MatchedPair> = candidates
            .into_iter()
            .filter(|p| gt_uses[&p.gt] == 1 && pred_uses[&p.pred] == 1)
            .collect();
        let tp = pairs.len();
        Ok(MatchResult {
            threshold: tau,
            true_positives: tp,
            false_positives: self.pred_count - tp,
            false_negatives: self.gt_count - tp,
            pairs,
        })
    }

    /// Precision at every threshold of [`MAP_THRESHOLDS`].
    pub fn precisions(&self) -> [f64; 10] {
        MAP_THRESHOLDS.map(|tau| self.match_at(tau).expect("grid thresholds are >= 0.5").precision())
    }
}

pub fn match_instances(gt: &LabelMap, pred: &LabelMap, tau: f64) -> Result<MatchResult> {
    if tau.is_nan() || tau < 0.5 {
        return Err(Error::ThresholdTooLow(tau));
    }
    OverlapTable::new(gt, pred)?.match_at(tau)
}

/// Detection precision `TP / (TP + FP + FN)` at one IoU threshold.
pub fn precision_at(gt: &LabelMap, pred: &LabelMap, tau: f64) -> Result<f64> {
    match_instances(gt, pred, tau).map(|m| m.precision())
}

/// Mean of [`precision_at`] over the ten thresholds 0.50..=0.95.
pub fn map_score(gt: &LabelMap, pred: &LabelMap) -> Result<f64> {
    let precisions = OverlapTable::new(gt, pred)?.precisions();
    Ok(precisions.iter().sum::<f64>() / precisions.len() as f64)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Sigmoid centered on 0.5 instead of 0.
pub fn shifted_sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-(v - 0.5)).exp())
}

/// Inverse of [`sigmoid`].
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Binary cross-entropy of logit `z` against target `t`, in the form that
/// neither overflows nor loses precision for large `|z|`.
pub fn bce_with_logits(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// Inputs of [`combined_loss`]: a distance channel and a semantic channel,
/// each with its target.
#[derive(Clone, Debug)]
pub struct LossInputs {
    pub distance_pred: Raster,
    pub semantic_logits: Raster,
    pub distance_target: Raster,
    pub semantic_target: BinaryMask,
    pub alpha: f64,
}

impl LossInputs {
    pub fn new(
        distance_pred: Raster,
        semantic_logits: Raster,
        distance_target: Raster,
        semantic_target: BinaryMask,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        let inputs = Self {
            distance_pred,
            semantic_logits,
            distance_target,
            semantic_target,
            alpha,
        };
        inputs.check_dims()?;
        Ok(inputs)
    }

    fn check_dims(&self) -> Result<()> {
        ensure_same_dims(&self.distance_pred, &self.semantic_logits)?;
        ensure_same_dims(&self.distance_pred, &self.distance_target)?;
        ensure_same_dims(&self.distance_pred, &self.semantic_target)
    }
}

/// Mean squared error over pixels.
pub fn mse(pred: &Raster, target: &Raster) -> Result<f64> {
    ensure_same_dims(pred, target)?;
    let sum: f64 = pred
        .samples()
        .iter()
        .zip(target.samples())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean of [`bce_with_logits`] over pixels.
pub fn mean_bce_with_logits(logits: &Raster, target: &BinaryMask) -> Result<f64> {
    ensure_same_dims(logits, target)?;
    let sum: f64 = logits
        .samples()
        .iter()
        .zip(target.bits())
        .map(|(&z, &t)| bce_with_logits(z as f64, t as u8 as f64))
        .sum();
    Ok(sum / logits.len() as f64)
}

/// `MSE(distance) + alpha * BCEWithLogits(semantic)`, both as pixel means.
pub fn combined_loss(inputs: &LossInputs) -> Result<f64> {
    inputs.check_dims()?;
    let distance = mse(&inputs.distance_pred, &inputs.distance_target)?;
    let semantic = mean_bce_with_logits(&inputs.semantic_logits, &inputs.semantic_target)?;
    Ok(distance + inputs.alpha * semantic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(values: &[f32]) -> Raster {
        Raster::new(values.len(), 1, values.to_vec()).unwrap()
    }

    fn m(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(bits.len(), 1, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    fn l(width: usize, labels: &[u32]) -> LabelMap {
        LabelMap::new(width, labels.len() / width, labels.to_vec()).unwrap()
    }

    #[test]
    fn pcc_examples() {
        let x = r(&[1.0, 3.0, 2.0, 7.0]);
        assert!((pcc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg = x.map(|v| -v + 10.0).unwrap();
        assert!((pcc(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pcc(&r(&[1.0, 0.0, 1.0, 0.0]), &r(&[1.0, 1.0, 0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn pcc_errors() {
        let c = r(&[2.0, 2.0, 2.0]);
        assert!(matches!(pcc(&c, &r(&[1.0, 2.0, 3.0])), Err(Error::ConstantImage)));
        assert!(matches!(pcc(&r(&[1.0, 2.0, 3.0]), &c), Err(Error::ConstantImage)));
        assert!(matches!(pcc(&c, &r(&[1.0, 2.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&m(&[0, 0]), &m(&[0, 0])).unwrap(), 1.0);
        assert_eq!(iou(&m(&[1, 0, 1]), &m(&[1, 0, 1])).unwrap(), 1.0);
        let x = m(&[1, 1, 1, 1, 1, 1, 0, 0]);
        let y = m(&[0, 0, 1, 1, 1, 1, 1, 1]);
        assert_eq!(iou(&x, &y).unwrap(), 0.5);
        assert_eq!(iou(&m(&[1, 0]), &m(&[0, 1])).unwrap(), 0.0);
    }

    #[test]
    fn match_identity() {
        let gt = l(4, &[1, 1, 0, 2, 3, 0, 0, 2]);
        let res = match_instances(&gt, &gt, 0.5).unwrap();
        assert_eq!(
            (res.true_positives, res.false_positives, res.false_negatives),
            (3, 0, 0)
        );
        assert_eq!(res.precision(), 1.0);
    }

    #[test]
    fn match_one_of_two() {
        // gt 1 (10 px) overlaps pred 1 with IoU 7/10; gt 2 is missed; preds 2, 3 are spurious.
        let mut gt = vec![0u32; 40];
        let mut pred = vec![0u32; 40];
        gt[..10].fill(1);
        pred[..7].fill(1);
        gt[20] = 2;
        pred[30] = 2;
        pred[35] = 3;
        let res = match_instances(&l(10, &gt), &l(10, &pred), 0.5).unwrap();
        assert_eq!(
            (res.true_positives, res.false_positives, res.false_negatives),
            (1, 2, 1)
        );
        assert_eq!(
            res.pairs,
            vec![MatchedPair {
                gt: 1,
                pred: 1,
                iou: 0.7
            }]
        );
        assert_eq!(res.precision(), 0.25);
    }

    #[test]
    fn split_object_matches_nothing() {
        // Each half spills into the background: IoU 3/9 for both.
        let gt = l(12, &[0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0]);
        let pred = l(12, &[1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2]);
        let res = match_instances(&gt, &pred, 0.5).unwrap();
        assert_eq!(
            (res.true_positives, res.false_positives, res.false_negatives),
            (0, 2, 1)
        );
    }

    #[test]
    fn exact_halves_are_ambiguous() {
        // Both halves reach IoU exactly 0.5; neither is accepted.
        let gt = l(6, &[1, 1, 1, 1, 1, 1]);
        let pred = l(6, &[1, 1, 1, 2, 2, 2]);
        let res = match_instances(&gt, &pred, 0.5).unwrap();
        assert_eq!(
            (res.true_positives, res.false_positives, res.false_negatives),
            (0, 2, 1)
        );
        // A single half on its own is a match at 0.5.
        let pred = l(6, &[1, 1, 1, 0, 0, 0]);
        let res = match_instances(&gt, &pred, 0.5).unwrap();
        assert_eq!(res.true_positives, 1);
        assert_eq!(res.pairs[0].iou, 0.5);
    }

    #[test]
    fn low_threshold_rejected() {
        let gt = l(2, &[1, 0]);
        assert!(matches!(match_instances(&gt, &gt, 0.3), Err(Error::ThresholdTooLow(_))));
        assert!(matches!(precision_at(&gt, &gt, 0.49), Err(Error::ThresholdTooLow(_))));
    }

    #[test]
    fn precision_empty_maps() {
        let e = LabelMap::empty(3, 3).unwrap();
        assert_eq!(precision_at(&e, &e, 0.5).unwrap(), 1.0);
        assert_eq!(map_score(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn map_examples() {
        let gt = l(5, &[1, 1, 0, 2, 2, 3, 0, 4, 4, 4]);
        assert_eq!(map_score(&gt, &gt).unwrap(), 1.0);
        assert_eq!(map_score(&l(2, &[1, 0]), &l(2, &[0, 1])).unwrap(), 0.0);
    }

    #[test]
    fn map_with_partial_overlap() {
        // gt is 100 px wide, pred covers its first 72 px: IoU 0.72.
        let gt = l(100, &[1; 100]);
        let pred = l(100, &(0..100).map(|i| (i < 72) as u32).collect::<Vec<_>>());
        assert_eq!(map_score(&gt, &pred).unwrap(), 0.5);
    }

    #[test]
    fn map_thresholds_grid() {
        for (i, &t) in MAP_THRESHOLDS.iter().enumerate() {
            assert!((t - (0.5 + i as f64 * 0.05)).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(shifted_sigmoid(0.5), 0.5);
        assert!(shifted_sigmoid(40.0) > 1.0 - 1e-15);
        let expected = 1.0 / (1.0 + std::f64::consts::E);
        assert!((shifted_sigmoid(-0.5) - expected).abs() < 1e-15);
        assert!((shifted_sigmoid(-0.5) - 0.268_941).abs() < 1e-6);
        assert_eq!(logit(0.5), 0.0);
        assert!((sigmoid(logit(0.9)) - 0.9).abs() < 1e-15);
    }

    fn loss_inputs(n: usize, logit: f32, target: bool, alpha: f64) -> LossInputs {
        let d = Raster::from_fn(n, n, |x, y| (x * y) as f32).unwrap();
        LossInputs {
            distance_pred: d.clone(),
            semantic_logits: Raster::filled(n, n, logit).unwrap(),
            distance_target: d,
            semantic_target: BinaryMask::new(n, n, vec![target; n * n]).unwrap(),
            alpha,
        }
    }

    #[test]
    fn loss_zero_logits() {
        let loss = combined_loss(&loss_inputs(4, 0.0, false, DEFAULT_ALPHA)).unwrap();
        assert!((loss - 2000.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert!((loss - 1386.294).abs() < 1e-3);
    }

    #[test]
    fn loss_saturated_logits() {
        assert!(combined_loss(&loss_inputs(4, 40.0, true, DEFAULT_ALPHA)).unwrap() < 1e-12);
    }

    #[test]
    fn loss_without_semantic_weight_is_mse() {
        let mut inputs = loss_inputs(3, 1.3, true, 0.0);
        inputs.distance_target = Raster::filled(3, 3, 1.0).unwrap();
        let expected = mse(&inputs.distance_pred, &inputs.distance_target).unwrap();
        assert_eq!(combined_loss(&inputs).unwrap(), expected);
    }

    #[test]
    fn loss_input_validation() {
        let i = loss_inputs(3, 0.0, false, 1.0);
        assert!(LossInputs::new(
            i.distance_pred.clone(),
            i.semantic_logits.clone(),
            i.distance_target.clone(),
            i.semantic_target.clone(),
            0.0
        )
        .is_err());
        let bad = LossInputs {
            distance_target: Raster::filled(2, 3, 0.0).unwrap(),
            ..i
        };
        assert!(matches!(combined_loss(&bad), Err(Error::DimensionMismatch { .. })));
    }
}
