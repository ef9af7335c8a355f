//! Seeded random inputs for the oracle comparisons.

use rand::seq::SliceRandom;
use rand::Rng;
use vsor_core::annotation::RankAnnotation;
use vsor_core::maps::Mask;
use vsor_core::Tensor;

pub fn tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

pub fn permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut r: Vec<usize> = (1..=n).collect();
    r.shuffle(rng);
    r
}

/// Paints up to `max_objects` random rectangles into an instance map (later
/// rectangles occlude earlier ones) and returns the surviving instances as
/// disjoint masks.
pub fn instance_masks(h: usize, w: usize, rects: &[(usize, usize, usize, usize)]) -> Vec<Mask> {
    let mut map = vec![0usize; h * w];
    for (id, &(top, left, bottom, right)) in rects.iter().enumerate() {
        for y in top..bottom.min(h) {
            for x in left..right.min(w) {
                map[y * w + x] = id + 1;
            }
        }
    }
    (1..=rects.len())
        .filter_map(|id| {
            let px: Vec<bool> = map.iter().map(|&v| v == id).collect();
            px.iter().any(|&p| p).then(|| Mask::new(h, w, px).unwrap())
        })
        .collect()
}

pub fn random_rect(rng: &mut impl Rng, h: usize, w: usize) -> (usize, usize, usize, usize) {
    let top = rng.gen_range(0..h - 1);
    let left = rng.gen_range(0..w - 1);
    let bottom = rng.gen_range(top + 1..=h);
    let right = rng.gen_range(left + 1..=w);
    (top, left, bottom, right)
}

/// A ground-truth scene and a perturbed prediction, each with ≤ `max_objects`
/// disjoint instances and a rank permutation.
pub struct Scene {
    pub gt: Vec<(Mask, usize)>,
    pub pred: Vec<(Mask, usize)>,
}

pub fn scene(rng: &mut impl Rng, h: usize, w: usize, max_objects: usize) -> Scene {
    let (gt_rects, gt_masks) = loop {
        let rects: Vec<_> = (0..rng.gen_range(2..=max_objects))
            .map(|_| random_rect(rng, h, w))
            .collect();
        let masks = instance_masks(h, w, &rects);
        if masks.len() >= 2 {
            break (rects, masks);
        }
    };
    let mut pred_rects = Vec::new();
    for &(t, l, b, r) in &gt_rects {
        match rng.gen_range(0..4) {
            0 => {}
            1 => pred_rects.push(random_rect(rng, h, w)),
            _ => {
                let dy = rng.gen_range(0..2);
                let dx = rng.gen_range(0..2);
                pred_rects.push((
                    t + dy,
                    l + dx,
                    (b + dy).max(t + dy + 1),
                    (r + dx).max(l + dx + 1),
                ));
            }
        }
    }
    pred_rects.truncate(max_objects);
    let pred_masks = instance_masks(h, w, &pred_rects);
    let gt_ranks = permutation(rng, gt_masks.len());
    let pred_ranks = permutation(rng, pred_masks.len());
    Scene {
        gt: gt_masks.into_iter().zip(gt_ranks).collect(),
        pred: pred_masks.into_iter().zip(pred_ranks).collect(),
    }
}

/// Frames with 2, 3, 4 and 5 objects in the proportions 578/188/125/109.
pub fn skewed_count_annotations() -> Vec<RankAnnotation> {
    let mut out = Vec::new();
    for (k, count) in [(2usize, 578usize), (3, 188), (4, 125), (5, 109)] {
        let masks: Vec<Mask> = (0..k)
            .map(|i| Mask::rect(2, 2 * k, 0, 2 * i, 2, 2 * i + 1))
            .collect();
        let ranks: Vec<usize> = (1..=k).collect();
        let a = RankAnnotation::from_masks(&masks, &ranks).unwrap();
        out.extend(std::iter::repeat_n(a, count));
    }
    out
}
