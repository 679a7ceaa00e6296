//! Schema handling, encoding, MCAR amputation and splitting.

mod ampute;
mod csvio;
mod encode;
mod schema;
mod split;
pub mod synth;

pub use ampute::{ampute, merge_observed, AmputedDataset, MaskMatrix};
pub use csvio::{infer_schema, read_matrix, write_matrix, write_table, RawTable};
pub use encode::{
    argmax_lowest, decode, encode, fit_scaling, harden_categoricals, parse_rows, scale_numerical,
    EncodedMatrix, RawValue,
};
pub use schema::{Block, DatasetSchema, VariableSpec, VariableType};
pub use split::{split_train_test, Split};
