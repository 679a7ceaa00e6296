use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::encode::EncodedMatrix;
use super::schema::DatasetSchema;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng;

/// Observation mask, 1 = observed, 0 = missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl MaskMatrix {
    pub fn new(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows * cols || bits.iter().any(|&b| b > 1) {
            return Err(Error::Invalid(format!(
                "mask must hold {} bits in {{0,1}}",
                rows * cols
            )));
        }
        Ok(MaskMatrix { rows, cols, bits })
    }

    pub fn all_observed(rows: usize, cols: usize) -> Self {
        MaskMatrix {
            rows,
            cols,
            bits: vec![1; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_observed(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c] == 1
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn missing_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 0).count()
    }

    pub fn select_rows(&self, indices: &[usize]) -> MaskMatrix {
        let mut bits = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            bits.extend_from_slice(self.row(i));
        }
        MaskMatrix {
            rows: indices.len(),
            cols: self.cols,
            bits,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.bits.iter().map(|&b| f64::from(b)).collect();
        Tensor::matrix(self.rows, self.cols, data).expect("non-empty mask")
    }

    pub fn batch_tensor(&self, indices: &[usize]) -> Tensor {
        self.select_rows(indices).to_tensor()
    }

    pub fn to_matrix(&self) -> EncodedMatrix {
        let values = self.bits.iter().map(|&b| f64::from(b)).collect();
        EncodedMatrix::new(self.rows, self.cols, values).expect("same extents")
    }

    pub fn from_matrix(m: &EncodedMatrix) -> Result<Self> {
        let bits = m
            .values()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                other => Err(Error::Invalid(format!("mask entry {other} is not 0 or 1"))),
            })
            .collect::<Result<_>>()?;
        MaskMatrix::new(m.rows(), m.cols(), bits)
    }

    /// Whether every variable block is either fully observed or fully missing
    /// in every row.
    pub fn is_block_constant(&self, schema: &DatasetSchema) -> bool {
        let blocks = schema.blocks();
        (0..self.rows).all(|r| {
            let row = self.row(r);
            blocks
                .iter()
                .all(|b| row[b.start..b.end].iter().all(|&x| x == row[b.start]))
        })
    }
}

/// Encoded data with noise in the missing positions, plus its mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmputedDataset {
    pub data: EncodedMatrix,
    pub mask: MaskMatrix,
    pub noise_seed: u64,
}

impl AmputedDataset {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> AmputedDataset {
        AmputedDataset {
            data: self.data.select_rows(indices),
            mask: self.mask.select_rows(indices),
            noise_seed: self.noise_seed,
        }
    }
}

/// MCAR amputation: each variable of each row is dropped when `r < p` with
/// `r ~ U[0, 1)`. A dropped variable loses its whole feature block, and every
/// dropped feature is overwritten with an independent N(0, 1) draw.
pub fn ampute(
    matrix: &EncodedMatrix,
    schema: &DatasetSchema,
    p: f64,
    seed: u64,
) -> Result<AmputedDataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!(
            "missing probability {p} outside [0, 1]"
        )));
    }
    if matrix.cols() != schema.total_features() {
        return Err(Error::Invalid(format!(
            "matrix has {} columns, schema encodes {}",
            matrix.cols(),
            schema.total_features()
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let blocks = schema.blocks();
    let mut data = matrix.clone();
    let mut bits = vec![1u8; matrix.rows() * matrix.cols()];
    let cols = matrix.cols();
    for r in 0..matrix.rows() {
        let row = data.row_mut(r);
        for b in &blocks {
            let u: f64 = rng.random();
            if u < p {
                for k in b.start..b.end {
                    row[k] = rng.sample(StandardNormal);
                    bits[r * cols + k] = 0;
                }
            }
        }
    }
    Ok(AmputedDataset {
        data,
        mask: MaskMatrix::new(matrix.rows(), cols, bits)?,
        noise_seed: seed,
    })
}

/// `x̄ ⊙ m + x̂ ⊙ (1 − m)`, copying observed entries bit-exactly.
pub fn merge_observed(
    observed: &EncodedMatrix,
    mask: &MaskMatrix,
    reconstruction: &EncodedMatrix,
) -> EncodedMatrix {
    let mut out = reconstruction.clone();
    for ((o, &x), &m) in out
        .values_mut()
        .iter_mut()
        .zip(observed.values())
        .zip(mask.bits())
    {
        if m == 1 {
            *o = x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::VariableSpec;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            VariableSpec::numerical("a").with_range(0.0, 1.0),
            VariableSpec::categorical("b", ["x", "y", "z"]),
            VariableSpec::categorical("c", ["p", "q"]),
        ])
        .unwrap()
    }

    fn data(rows: usize) -> EncodedMatrix {
        let mut v = Vec::new();
        for r in 0..rows {
            let h = r % 3;
            v.push((r as f64 * 0.37).fract());
            v.extend((0..3).map(|q| if q == h { 1.0 } else { 0.0 }));
            v.extend((0..2).map(|q| if q == r % 2 { 1.0 } else { 0.0 }));
        }
        EncodedMatrix::new(rows, 6, v).unwrap()
    }

    #[test]
    fn nothing_dropped_at_zero() {
        let x = data(50);
        let a = ampute(&x, &schema(), 0.0, 3).unwrap();
        assert_eq!(a.mask.missing_count(), 0);
        assert_eq!(a.data, x);
    }

    #[test]
    fn everything_dropped_at_one() {
        let x = data(50);
        let a = ampute(&x, &schema(), 1.0, 3).unwrap();
        assert_eq!(a.mask.missing_count(), 300);
        // noise, not the source values
        assert!(a.data.values().iter().zip(x.values()).all(|(n, o)| n != o));
    }

    #[test]
    fn observed_values_kept_and_blocks_constant() {
        let x = data(200);
        for (i, p) in [0.2, 0.5, 0.8].into_iter().enumerate() {
            let a = ampute(&x, &schema(), p, i as u64).unwrap();
            assert!(a.mask.is_block_constant(&schema()));
            for k in 0..x.values().len() {
                if a.mask.bits()[k] == 1 {
                    assert_eq!(a.data.values()[k].to_bits(), x.values()[k].to_bits());
                }
            }
        }
    }

    #[test]
    fn same_seed_same_amputation() {
        let x = data(100);
        let a = ampute(&x, &schema(), 0.4, 99).unwrap();
        let b = ampute(&x, &schema(), 0.4, 99).unwrap();
        assert_eq!(a, b);
        let c = ampute(&x, &schema(), 0.4, 100).unwrap();
        assert_ne!(a.mask, c.mask);
    }

    #[test]
    fn invalid_probability() {
        assert!(ampute(&data(3), &schema(), 1.5, 0).is_err());
        assert!(ampute(&data(3), &schema(), -0.1, 0).is_err());
    }

    #[test]
    fn merge_copies_observed_bits() {
        let x = data(4);
        let mask = ampute(&x, &schema(), 0.5, 1).unwrap().mask;
        let recon = EncodedMatrix::new(4, 6, vec![0.123; 24]).unwrap();
        let out = merge_observed(&x, &mask, &recon);
        for k in 0..24 {
            let expected = if mask.bits()[k] == 1 {
                x.values()[k]
            } else {
                0.123
            };
            assert_eq!(out.values()[k], expected);
        }
    }
}
