use rand::seq::SliceRandom;
use rand::Rng;

/// Row chunk size used when running a trained network over a whole table.
pub(crate) const EVAL_CHUNK: usize = 1024;

/// A fresh permutation of `0..n` cut into minibatches of at most `size` rows.
pub(crate) fn shuffled_batches<R: Rng + ?Sized>(
    n: usize,
    size: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// `0..n` in consecutive chunks of at most `size`.
pub(crate) fn sequential_chunks(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0..n)
        .collect::<Vec<_>>()
        .chunks(size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}
