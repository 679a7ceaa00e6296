use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Shuffled row partition: the first `⌊ratio · n⌋` shuffled indices train,
/// the remainder test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_train_test(n: usize, ratio: f64, seed: u64) -> Result<Split> {
    if n < 2 {
        return Err(Error::Invalid(format!("cannot split {n} rows")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Invalid(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let n_train = (ratio * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Invalid(format!(
            "ratio {ratio} leaves an empty partition of {n} rows"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, 0));
    let test = idx.split_off(n_train);
    Ok(Split { train: idx, test })
}
