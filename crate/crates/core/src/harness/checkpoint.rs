//! Versioned binary checkpoints.
//!
//! Layout (little endian): the 8-byte magic `GIMPCKPT`, a `u32` format
//! version, a `u64` byte length followed by that many bytes of JSON metadata
//! (schema, hyperparameters, parameter names and shapes), then every
//! parameter's `f64` values in metadata order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::TrainedModel;
use crate::diffcore::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::tabular::DatasetSchema;

pub const MAGIC: &[u8; 8] = b"GIMPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    schema: DatasetSchema,
    hyper: HyperParams,
    params: Vec<(String, Vec<usize>)>,
}

pub fn encode_checkpoint(model: &TrainedModel) -> Result<Vec<u8>> {
    let meta = Meta {
        schema: model.schema().clone(),
        hyper: model.hyper().clone(),
        params: model
            .params()
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec()))
            .collect(),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut out = Vec::with_capacity(json.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.params().values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::CorruptCheckpoint("unexpected end of file".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

/// Rebuilds a model; with `expected`, its schema must match exactly.
pub fn decode_checkpoint(
    mut bytes: &[u8],
    expected: Option<&DatasetSchema>,
) -> Result<TrainedModel> {
    let cursor = &mut bytes;
    if take(cursor, 8)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(cursor, 4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(take(cursor, 8)?.try_into().expect("8 bytes"));
    let len =
        usize::try_from(len).map_err(|_| Error::CorruptCheckpoint("metadata too large".into()))?;
    let meta: Meta = serde_json::from_slice(take(cursor, len)?)
        .map_err(|e| Error::CorruptCheckpoint(format!("metadata: {e}")))?;
    if let Some(schema) = expected {
        if *schema != meta.schema {
            return Err(Error::Schema(
                "checkpoint was trained on a different schema".into(),
            ));
        }
    }
    let mut params = ParamStore::new();
    for (name, shape) in &meta.params {
        let count: usize = shape.iter().product();
        let raw = take(cursor, count * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape.clone(), data)
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        params.insert(name.clone(), t);
    }
    if !cursor.is_empty() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            cursor.len()
        )));
    }
    let mut model = TrainedModel::initial(&meta.schema, &meta.hyper)
        .map_err(|e| Error::CorruptCheckpoint(format!("architecture: {e}")))?;
    let fresh = model.params();
    let same_layout = fresh.len() == params.len()
        && fresh
            .iter()
            .zip(&params)
            .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape());
    if !same_layout {
        return Err(Error::CorruptCheckpoint(
            "parameters do not match the recorded architecture".into(),
        ));
    }
    model.set_params(&params)?;
    Ok(model)
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&DatasetSchema>) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}
