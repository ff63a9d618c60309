use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const RATIO: [usize; 3] = [416, 60, 117];

/// Train/validation/test sizes for `n` items in proportion 416:60:117, with at
/// least one item per split.
pub fn split_sizes(n: usize) -> Result<[usize; 3]> {
    if n < 3 {
        return Err(Error::invalid("split_corpus", format!("need at least 3 items, got {n}")));
    }
    let total: usize = RATIO.iter().sum();
    let share = |r: usize| ((n * r) as f64 / total as f64).round() as usize;
    let val = share(RATIO[1]).max(1);
    let train = share(RATIO[0]).clamp(1, n - val - 1);
    Ok([train, val, n - train - val])
}

/// Seeded shuffle, then consecutive train/validation/test runs.
pub fn split_corpus<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let [train, val, _] = split_sizes(items.len())?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..train]),
        pick(&order[train..train + val]),
        pick(&order[train + val..]),
    ))
}
