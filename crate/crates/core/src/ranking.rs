//! Rank assignment from scores and rank-permutation checks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Checks that `ranks` is a permutation of `1..=ranks.len()`.
pub fn validate_permutation(ranks: &[usize]) -> Result<()> {
    let n = ranks.len();
    let mut seen = vec![false; n];
    for &r in ranks {
        if r == 0 || r > n {
            return Err(Error::InvalidRanks(format!("rank {r} outside 1..={n}")));
        }
        if core::mem::replace(&mut seen[r - 1], true) {
            return Err(Error::InvalidRanks(format!("rank {r} repeated")));
        }
    }
    Ok(())
}

/// Rank 1 goes to the highest score. Equal scores are ordered by ascending
/// object index.
pub fn rank_assign(scores: &[f64]) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::EmptyFrame);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("rank_assign scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps index order among ties
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut ranks = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    Ok(ranks)
}
