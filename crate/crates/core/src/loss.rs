//! Pairwise margin ranking objective on saliency scores.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ranking::validate_permutation;
use crate::tape::{Tape, Var};

pub const DEFAULT_MARGIN: f64 = 0.5;

/// Ground-truth ranks aligned with a frame's object order, 1 = most salient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankTarget {
    gt_ranks: Vec<usize>,
}

impl RankTarget {
    pub fn new(gt_ranks: Vec<usize>) -> Result<Self> {
        validate_permutation(&gt_ranks)?;
        Ok(RankTarget { gt_ranks })
    }

    pub fn ranks(&self) -> &[usize] {
        &self.gt_ranks
    }

    pub fn len(&self) -> usize {
        self.gt_ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt_ranks.is_empty()
    }

    /// Ordered pairs `(i, j)` where object `i` is more salient than `j`.
    pub fn ordered_pairs(&self) -> Vec<(usize, usize)> {
        let r = &self.gt_ranks;
        let mut pairs = Vec::new();
        for i in 0..r.len() {
            for j in 0..r.len() {
                if r[i] < r[j] {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

/// Mean hinge `max(0, margin - (s_i - s_j))` over every pair where `i`
/// outranks `j`. `scores` must be a vector aligned with `target`.
pub fn rank_loss(tape: &mut Tape, scores: Var, target: &RankTarget, margin: f64) -> Result<Var> {
    let n = tape.value(scores).len();
    if n != target.len() {
        return Err(Error::Shape {
            op: "rank_loss",
            lhs: tape.shape(scores).to_vec(),
            rhs: alloc::vec![target.len()],
        });
    }
    if n < 2 {
        return Err(Error::TooFewObjects { n });
    }
    if margin.is_nan() || margin <= 0.0 {
        return Err(Error::Config("margin must be positive".into()));
    }
    tape.pairwise_hinge(scores, &target.ordered_pairs(), margin)
}

/// Plain-value version of [`rank_loss`].
pub fn rank_loss_value(scores: &[f64], target: &RankTarget, margin: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.leaf(crate::Tensor::new(&[scores.len()], scores.to_vec())?);
    let l = rank_loss(&mut tape, s, target, margin)?;
    tape.value(l).item()
}

/// Unweighted sum of the rank term and whichever detector terms are present.
pub fn total_loss(rank: f64, box_term: Option<f64>, mask: Option<f64>, cls: Option<f64>) -> f64 {
    rank + box_term.unwrap_or(0.0) + mask.unwrap_or(0.0) + cls.unwrap_or(0.0)
}

/// [`total_loss`] on tape scalars.
pub fn total_loss_var(tape: &mut Tape, rank: Var, others: &[Var]) -> Result<Var> {
    others.iter().try_fold(rank, |acc, &v| tape.add(acc, v))
}
