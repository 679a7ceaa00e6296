use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::{DatasetSchema, VariableSpec, VariableType};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// A decoded cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RawValue {
    Number(f64),
    Category(String),
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Number(v) => write!(f, "{v}"),
            RawValue::Category(c) => f.write_str(c),
        }
    }
}

/// `n x s` matrix of encoded features: scaled numericals and one-hot blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl EncodedMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(Error::Invalid(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(EncodedMatrix { rows, cols, values })
    }

    pub fn from_tensor(t: Tensor) -> Self {
        let (rows, cols) = (t.rows(), t.cols());
        EncodedMatrix {
            rows,
            cols,
            values: t.into_data(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows, self.cols, self.values.clone()).expect("non-empty matrix")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn select_rows(&self, indices: &[usize]) -> EncodedMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        EncodedMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    /// Mini-batch as a tensor.
    pub fn batch_tensor(&self, indices: &[usize]) -> Tensor {
        let m = self.select_rows(indices);
        Tensor::matrix(m.rows, m.cols, m.values).expect("non-empty batch")
    }
}

/// `(value - min) / (max - min)`.
pub fn scale_numerical(value: f64, min: f64, max: f64) -> Result<f64> {
    if !(max > min) {
        return Err(Error::Schema(format!(
            "cannot scale with min {min} >= max {max}"
        )));
    }
    Ok((value - min) / (max - min))
}

fn numeric_range(spec: &VariableSpec) -> Result<(f64, f64)> {
    match (spec.min, spec.max) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(Error::Schema(format!(
            "variable `{}` has no fitted range; fit the schema first",
            spec.name
        ))),
    }
}

/// Parses CSV text cells into typed values under `schema`.
pub fn parse_rows(schema: &DatasetSchema, rows: &[Vec<String>]) -> Result<Vec<Vec<RawValue>>> {
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() != schema.num_variables() {
                return Err(Error::Data {
                    row: r,
                    detail: format!(
                        "expected {} fields, found {}",
                        schema.num_variables(),
                        row.len()
                    ),
                });
            }
            row.iter()
                .zip(schema.variables())
                .map(|(cell, spec)| match spec.vtype {
                    VariableType::Numerical => cell
                        .trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(RawValue::Number)
                        .ok_or_else(|| Error::Data {
                            row: r,
                            detail: format!("`{cell}` is not a number (variable `{}`)", spec.name),
                        }),
                    VariableType::Categorical => Ok(RawValue::Category(cell.clone())),
                })
                .collect()
        })
        .collect()
}

/// Learns numerical min/max from `rows`. Constant columns are rejected.
pub fn fit_scaling(schema: &DatasetSchema, rows: &[Vec<RawValue>]) -> Result<DatasetSchema> {
    let mut ranges: Vec<Option<(f64, f64)>> = schema
        .variables()
        .iter()
        .map(|v| (!v.is_categorical()).then_some((f64::INFINITY, f64::NEG_INFINITY)))
        .collect();
    for (r, row) in rows.iter().enumerate() {
        for (j, value) in row.iter().enumerate() {
            if let Some((lo, hi)) = ranges.get_mut(j).and_then(Option::as_mut) {
                let RawValue::Number(v) = value else {
                    return Err(Error::Data {
                        row: r,
                        detail: format!("variable {} expects a number", j + 1),
                    });
                };
                *lo = lo.min(*v);
                *hi = hi.max(*v);
            }
        }
    }
    if rows.is_empty() && ranges.iter().any(Option::is_some) {
        return Err(Error::Schema("cannot fit scaling on zero rows".into()));
    }
    schema.with_ranges(ranges)
}

/// One-hot / min-max encodes rows under a fitted schema.
pub fn encode(schema: &DatasetSchema, rows: &[Vec<RawValue>]) -> Result<EncodedMatrix> {
    let s = schema.total_features();
    let mut values = Vec::with_capacity(rows.len() * s);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != schema.num_variables() {
            return Err(Error::Data {
                row: r,
                detail: format!(
                    "expected {} values, found {}",
                    schema.num_variables(),
                    row.len()
                ),
            });
        }
        for (value, spec) in row.iter().zip(schema.variables()) {
            match (spec.vtype, value) {
                (VariableType::Numerical, RawValue::Number(v)) => {
                    let (lo, hi) = numeric_range(spec)?;
                    values.push(scale_numerical(*v, lo, hi)?);
                }
                (VariableType::Categorical, RawValue::Category(label)) => {
                    let idx = spec.category_index(label).ok_or_else(|| Error::Data {
                        row: r,
                        detail: format!("unknown category `{label}` for variable `{}`", spec.name),
                    })?;
                    values.extend((0..spec.size()).map(|q| if q == idx { 1.0 } else { 0.0 }));
                }
                (_, other) => {
                    return Err(Error::Data {
                        row: r,
                        detail: format!("value `{other}` does not match variable `{}`", spec.name),
                    })
                }
            }
        }
    }
    EncodedMatrix::new(rows.len(), s, values)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(block: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in block.iter().enumerate().skip(1) {
        if v > block[best] {
            best = i;
        }
    }
    best
}

/// Inverse of [`encode`]. Categorical blocks are read by argmax (so soft
/// outputs decode too); numericals are unscaled and clipped to the fitted range.
pub fn decode(schema: &DatasetSchema, matrix: &EncodedMatrix) -> Result<Vec<Vec<RawValue>>> {
    if matrix.cols() != schema.total_features() {
        return Err(Error::Invalid(format!(
            "matrix has {} columns, schema encodes {}",
            matrix.cols(),
            schema.total_features()
        )));
    }
    let blocks = schema.blocks();
    (0..matrix.rows())
        .map(|r| {
            let row = matrix.row(r);
            blocks
                .iter()
                .zip(schema.variables())
                .map(|(b, spec)| match spec.vtype {
                    VariableType::Numerical => {
                        let (lo, hi) = numeric_range(spec)?;
                        let v = lo + row[b.start] * (hi - lo);
                        Ok(RawValue::Number(v.clamp(lo, hi)))
                    }
                    VariableType::Categorical => {
                        let idx = argmax_lowest(&row[b.start..b.end]);
                        Ok(RawValue::Category(spec.categories[idx].clone()))
                    }
                })
                .collect()
        })
        .collect()
}

/// Replaces every categorical block with the one-hot of its argmax.
pub fn harden_categoricals(schema: &DatasetSchema, matrix: &EncodedMatrix) -> EncodedMatrix {
    let mut out = matrix.clone();
    let blocks = schema.categorical_blocks();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for b in &blocks {
            let idx = argmax_lowest(&row[b.start..b.end]);
            for (q, v) in row[b.start..b.end].iter_mut().enumerate() {
                *v = if q == idx { 1.0 } else { 0.0 };
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num_cat3() -> DatasetSchema {
        DatasetSchema::new(vec![
            VariableSpec::numerical("x").with_range(0.0, 10.0),
            VariableSpec::categorical("c", ["a", "b", "c"]),
        ])
        .unwrap()
    }

    fn cat(s: &str) -> RawValue {
        RawValue::Category(s.into())
    }

    #[test]
    fn scaling_bounds_and_midpoint() {
        assert_eq!(scale_numerical(2.0, 2.0, 7.0).unwrap(), 0.0);
        assert_eq!(scale_numerical(7.0, 2.0, 7.0).unwrap(), 1.0);
        assert_eq!(scale_numerical(5.0, 0.0, 10.0).unwrap(), 0.5);
        assert!(scale_numerical(1.0, 3.0, 3.0).is_err());
    }

    #[test]
    fn encodes_numerical_then_one_hot() {
        let m = encode(&num_cat3(), &[vec![RawValue::Number(5.0), cat("b")]]).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn encode_errors() {
        let s = num_cat3();
        assert!(encode(&s, &[vec![RawValue::Number(1.0), cat("zzz")]]).is_err());
        assert!(encode(&s, &[vec![RawValue::Number(1.0)]]).is_err());
        assert!(encode(&s, &[vec![cat("a"), cat("a")]]).is_err());
        let rows = vec![vec!["abc".to_string(), "a".to_string()]];
        assert!(parse_rows(&s, &rows).is_err());
    }

    #[test]
    fn decode_argmax_inverse_scale_and_ties() {
        let s = num_cat3();
        let m = EncodedMatrix::new(2, 4, vec![0.5, 0.2, 0.7, 0.1, 1.3, 0.4, 0.4, 0.2]).unwrap();
        let rows = decode(&s, &m).unwrap();
        assert_eq!(rows[0], vec![RawValue::Number(5.0), cat("b")]);
        // clipped numerical, tie resolved to the lowest index
        assert_eq!(rows[1], vec![RawValue::Number(10.0), cat("a")]);

        let two = DatasetSchema::new(vec![VariableSpec::categorical("t", ["p", "q"])]).unwrap();
        let tie = EncodedMatrix::new(1, 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(decode(&two, &tie).unwrap()[0], vec![cat("p")]);

        let wrong = EncodedMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert!(decode(&s, &wrong).is_err());
    }

    #[test]
    fn fit_rejects_constant_columns() {
        let s = DatasetSchema::new(vec![VariableSpec::numerical("x")]).unwrap();
        let rows = vec![vec![RawValue::Number(2.0)], vec![RawValue::Number(2.0)]];
        assert!(matches!(fit_scaling(&s, &rows), Err(Error::Schema(_))));
    }

    proptest! {
        #[test]
        fn categorical_blocks_are_one_hot(labels in prop::collection::vec(0usize..3, 1..1000)) {
            let s = num_cat3();
            let names = ["a", "b", "c"];
            let rows: Vec<Vec<RawValue>> = labels
                .iter()
                .map(|&l| vec![RawValue::Number(l as f64), cat(names[l])])
                .collect();
            let m = encode(&s, &rows).unwrap();
            for r in 0..m.rows() {
                let block = &m.row(r)[1..4];
                prop_assert_eq!(block.iter().sum::<f64>(), 1.0);
                prop_assert!(block.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }

        #[test]
        fn decode_inverts_encode(values in prop::collection::vec((0.0f64..10.0, 0usize..3), 1..50)) {
            let s = num_cat3();
            let names = ["a", "b", "c"];
            let rows: Vec<Vec<RawValue>> = values
                .iter()
                .map(|&(v, l)| vec![RawValue::Number(v), cat(names[l])])
                .collect();
            let m = encode(&s, &rows).unwrap();
            let back = decode(&s, &m).unwrap();
            for (orig, dec) in rows.iter().zip(&back) {
                match (&orig[0], &dec[0]) {
                    (RawValue::Number(a), RawValue::Number(b)) => prop_assert!((a - b).abs() < 1e-12),
                    _ => prop_assert!(false),
                }
                prop_assert_eq!(&orig[1], &dec[1]);
            }
            // and encode(decode(m)) reproduces m on hard data
            let again = encode(&s, &back).unwrap();
            for (a, b) in again.values().iter().zip(m.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
