use alloc::format;
use alloc::vec::Vec;

use crate::{math, Error, Result, RngState};

/// How [`partition`] splits row indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Seeded shuffle, then the last `round(n * fraction)` rows are held out.
    Holdout(f64),
    /// Seeded shuffle into `k` near-equal folds; fold `fold` is held out.
    KFold { k: usize, fold: usize },
    /// Unshuffled: the first `ceil(n / 2)` rows vs the rest.
    AbHalves,
}

/// Splits `0..n` into `(first, second)` index lists, both sorted ascending.
/// For holdout and k-fold `second` is the held-out side; for `AbHalves`
/// `first` is side A. `rng` is untouched by `AbHalves`.
pub fn partition(n: usize, scheme: Scheme, rng: &mut RngState) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut first, mut second) = match scheme {
        Scheme::Holdout(fraction) => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Partition(format!("holdout fraction {fraction} outside (0, 1)")));
            }
            let perm = rng.permutation(n);
            let held = math::round(n as f64 * fraction) as usize;
            (perm[..n - held].to_vec(), perm[n - held..].to_vec())
        }
        Scheme::KFold { k, fold } => {
            if k < 2 || fold >= k {
                return Err(Error::Partition(format!("fold {fold} of {k} is invalid (need k >= 2, fold < k)")));
            }
            let perm = rng.permutation(n);
            let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
            let mut train = perm[..lo].to_vec();
            train.extend_from_slice(&perm[hi..]);
            (train, perm[lo..hi].to_vec())
        }
        Scheme::AbHalves => {
            let half = n.div_ceil(2);
            ((0..half).collect(), (half..n).collect())
        }
    };
    if first.is_empty() || second.is_empty() {
        return Err(Error::Partition(format!("{scheme:?} on {n} rows leaves an empty side")));
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// `count` distinct indices of `0..n` chosen uniformly, in ascending order.
pub fn undersample(n: usize, count: usize, rng: &mut RngState) -> Result<Vec<usize>> {
    if count > n {
        return Err(Error::Partition(format!("cannot undersample {count} rows from {n}")));
    }
    if count == n {
        return Ok((0..n).collect());
    }
    // Partial Fisher-Yates over a sparse swap map keeps this O(count) for
    // very large n.
    let mut swaps = alloc::collections::BTreeMap::new();
    let mut chosen = Vec::with_capacity(count);
    for i in 0..count {
        let j = i + rng.below(n - i);
        let vj = *swaps.get(&j).unwrap_or(&j);
        let vi = *swaps.get(&i).unwrap_or(&i);
        swaps.insert(j, vi);
        chosen.push(vj);
    }
    chosen.sort_unstable();
    Ok(chosen)
}
