//! Rank-map MAE and the segmentation-aware ranking correlation (SA-SOR).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::maps::{Mask, RankMap};
use crate::ranking::validate_permutation;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMask {
    pub mask: Mask,
    pub id: u32,
}

impl InstanceMask {
    pub fn new(mask: Mask, id: u32) -> Result<Self> {
        if mask.area() == 0 {
            return Err(Error::Config(alloc::format!("instance {id} has no pixels")));
        }
        Ok(InstanceMask { mask, id })
    }
}

/// One-to-one assignment of ground-truth to predicted instances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Matching {
    /// `(gt_index, pred_index)`
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Mean absolute per-pixel difference of two rank maps.
pub fn mae(pred: &RankMap, gt: &RankMap) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::Dimension {
            expected: gt.dims(),
            found: pred.dims(),
        });
    }
    let total: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g).abs())
        .sum();
    Ok(total / (pred.height() * pred.width()) as f64)
}

/// Sample Pearson correlation. `None` when either vector is constant (or the
/// vectors are shorter than two), where the coefficient is undefined.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            op: "pearson",
            lhs: alloc::vec![x.len()],
            rhs: alloc::vec![y.len()],
        });
    }
    if x.len() < 2 {
        return Ok(None);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0)))
}

/// Greedy matching: candidate pairs with IoU at or above the threshold are
/// taken in descending IoU order (ties by GT index, then prediction index),
/// skipping any pair whose GT or prediction is already used.
pub fn match_instances(gt: &[Mask], pred: &[Mask], iou_threshold: f64) -> Result<Matching> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Config("IoU threshold must lie in (0, 1]".into()));
    }
    let mut candidates = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            let iou = g.iou(p)?;
            if iou >= iou_threshold {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut gt_used = alloc::vec![false; gt.len()];
    let mut pred_used = alloc::vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !gt_used[i] && !pred_used[j] {
            gt_used[i] = true;
            pred_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    Ok(Matching {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&i| !gt_used[i]).collect(),
        unmatched_pred: (0..pred.len()).filter(|&j| !pred_used[j]).collect(),
    })
}

/// Saliency levels of matched predictions for every GT object, in GT order:
/// returns `(x, y)` with `x_i = N_gt - r_i + 1` and `y_i` the matched
/// prediction's `N_pred - r + 1`, or 0 when the object was missed.
pub fn sa_sor_levels(
    gt: &[(InstanceMask, usize)],
    pred: &[(InstanceMask, usize)],
    iou_threshold: f64,
) -> Result<(Vec<f64>, Vec<f64>, Matching)> {
    let gt_ranks: Vec<usize> = gt.iter().map(|(_, r)| *r).collect();
    validate_permutation(&gt_ranks)?;
    let pred_ranks: Vec<usize> = pred.iter().map(|(_, r)| *r).collect();
    validate_permutation(&pred_ranks)?;
    let gt_masks: Vec<Mask> = gt.iter().map(|(m, _)| m.mask.clone()).collect();
    let pred_masks: Vec<Mask> = pred.iter().map(|(m, _)| m.mask.clone()).collect();
    let matching = match_instances(&gt_masks, &pred_masks, iou_threshold)?;
    let (n_gt, n_pred) = (gt.len(), pred.len());
    let x: Vec<f64> = gt_ranks.iter().map(|&r| (n_gt + 1 - r) as f64).collect();
    let mut y = alloc::vec![0.0; n_gt];
    for &(i, j) in &matching.pairs {
        y[i] = (n_pred + 1 - pred_ranks[j]) as f64;
    }
    Ok((x, y, matching))
}

/// Pearson correlation between GT and matched predicted saliency levels;
/// `None` when undefined (constant levels).
pub fn sa_sor(
    gt: &[(InstanceMask, usize)],
    pred: &[(InstanceMask, usize)],
    iou_threshold: f64,
) -> Result<Option<f64>> {
    let (x, y, _) = sa_sor_levels(gt, pred, iou_threshold)?;
    pearson(&x, &y)
}

/// Running averages of per-frame metrics; undefined SA-SOR frames are counted
/// but excluded from the mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSummary {
    sa_sor_sum: f64,
    sa_sor_count: usize,
    undefined: usize,
    mae_sum: f64,
    frames: usize,
}

impl MetricSummary {
    pub fn push(&mut self, sa_sor: Option<f64>, mae: f64) {
        match sa_sor {
            Some(v) => {
                self.sa_sor_sum += v;
                self.sa_sor_count += 1;
            }
            None => self.undefined += 1,
        }
        self.mae_sum += mae;
        self.frames += 1;
    }

    pub fn sa_sor(&self) -> Option<f64> {
        (self.sa_sor_count > 0).then(|| self.sa_sor_sum / self.sa_sor_count as f64)
    }

    pub fn mae(&self) -> Option<f64> {
        (self.frames > 0).then(|| self.mae_sum / self.frames as f64)
    }

    pub fn undefined(&self) -> usize {
        self.undefined
    }

    pub fn frames(&self) -> usize {
        self.frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn inst(mask: Mask, id: u32) -> InstanceMask {
        InstanceMask::new(mask, id).unwrap()
    }

    fn strip(i: usize) -> Mask {
        Mask::rect(4, 12, 0, 4 * i, 4, 4 * i + 4)
    }

    #[test]
    fn mae_examples() {
        let z = RankMap::zeros(2, 2);
        let p = RankMap::new(2, 2, vec![0.5, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(mae(&p, &z).unwrap(), 0.125);
        assert_eq!(mae(&z, &z).unwrap(), 0.0);
        let ones = RankMap::new(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(mae(&ones, &z).unwrap(), 1.0);
        assert!(mae(&RankMap::zeros(1, 2), &z).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap().unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pearson(&x, &[-1.0, -2.0, -3.0]).unwrap(), Some(-1.0));
        assert_eq!(pearson(&x, &[1.0, 2.0, 0.0]).unwrap(), Some(-0.5));
        assert_eq!(pearson(&x, &[4.0, 4.0, 4.0]).unwrap(), None);
    }

    #[test]
    fn matching_examples() {
        let a = strip(0);
        let m = match_instances(core::slice::from_ref(&a), core::slice::from_ref(&a), 0.5).unwrap();
        assert_eq!(m.pairs, vec![(0, 0)]);
        assert!(m.unmatched_gt.is_empty() && m.unmatched_pred.is_empty());

        let m = match_instances(&[strip(0)], &[strip(1)], 0.5).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt, vec![0]);
        assert_eq!(m.unmatched_pred, vec![0]);
        assert!(match_instances(&[], &[], 0.0).is_err());
    }

    #[test]
    fn sa_sor_examples() {
        let gt: Vec<_> = (0..3)
            .map(|i| (inst(strip(i), i as u32 + 1), i + 1))
            .collect();
        assert_eq!(sa_sor(&gt, &gt, 0.5).unwrap(), Some(1.0));

        let reversed: Vec<_> = (0..3).map(|i| (inst(strip(i), 9), 3 - i)).collect();
        assert_eq!(sa_sor(&gt, &reversed, 0.5).unwrap(), Some(-1.0));

        let bad = vec![(inst(strip(0), 1), 2)];
        assert!(sa_sor(&bad, &gt, 0.5).is_err());
    }

    #[test]
    fn summary_excludes_undefined() {
        let mut s = MetricSummary::default();
        s.push(Some(1.0), 0.0);
        s.push(None, 0.5);
        s.push(Some(0.0), 0.25);
        assert_eq!(s.sa_sor(), Some(0.5));
        assert_eq!(s.undefined(), 1);
        assert_eq!(s.mae(), Some(0.25));
    }
}
