#![allow(dead_code)]

use std::path::Path;

use genimpute::harness::{prepare, Dataset, Prepared, ScalingScope};
use genimpute::tabular::synth::{mixed, MixedSpec};
use genimpute::tabular::write_table;

pub fn mixed_dataset(rows: usize, seed: u64) -> Dataset {
    let (schema, rows) = mixed(&MixedSpec {
        rows,
        numerical: 3,
        categorical: 2,
        seed,
        ..MixedSpec::default()
    })
    .unwrap();
    Dataset {
        name: "mixed".into(),
        schema,
        rows,
    }
}

pub fn prepared(rows: usize, p: f64, seed: u64) -> Prepared {
    prepare(&mixed_dataset(rows, 7), p, seed, ScalingScope::All).unwrap()
}

pub fn write_mixed_csv(path: &Path, rows: usize) {
    let d = mixed_dataset(rows, 7);
    write_table(path, &d.schema, &d.rows).unwrap();
}
