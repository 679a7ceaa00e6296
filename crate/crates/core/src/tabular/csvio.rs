use std::collections::BTreeSet;
use std::path::Path;

use super::encode::{EncodedMatrix, RawValue};
use super::schema::{DatasetSchema, VariableSpec};
use crate::error::{Error, Result};

/// Header plus string cells of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::Data {
                    row: r,
                    detail: format!("{} fields, header has {}", record.len(), header.len()),
                });
            }
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(RawTable { header, rows })
    }

    fn column(&self, j: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[j].as_str())
    }
}

/// Numeric-parseable columns become numerical; everything else categorical
/// with its observed labels sorted lexicographically.
pub fn infer_schema(table: &RawTable) -> Result<DatasetSchema> {
    if table.rows.is_empty() {
        return Err(Error::Schema("CSV has a header but no rows".into()));
    }
    let mut variables = Vec::with_capacity(table.header.len());
    for (j, name) in table.header.iter().enumerate() {
        if table.column(j).any(|c| c.trim().is_empty()) {
            return Err(Error::Schema(format!("column `{name}` has empty cells")));
        }
        let numeric = table
            .column(j)
            .all(|c| c.trim().parse::<f64>().is_ok_and(f64::is_finite));
        if numeric {
            variables.push(VariableSpec::numerical(name.clone()));
        } else {
            let labels: BTreeSet<&str> = table.column(j).collect();
            variables.push(VariableSpec::categorical(name.clone(), labels));
        }
    }
    DatasetSchema::new(variables)
}

/// Writes raw rows under a header of the schema's variable names.
pub fn write_table(path: &Path, schema: &DatasetSchema, rows: &[Vec<RawValue>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(schema.variables().iter().map(|v| v.name.as_str()))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a numeric matrix with a `f0..f{s-1}` header.
pub fn write_matrix(path: &Path, matrix: &EncodedMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..matrix.cols()).map(|k| format!("f{k}")))?;
    for r in 0..matrix.rows() {
        w.write_record(matrix.row(r).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<EncodedMatrix> {
    let table = RawTable::read(path)?;
    let cols = table.header.len();
    let mut values = Vec::with_capacity(table.rows.len() * cols);
    for (r, row) in table.rows.iter().enumerate() {
        for cell in row {
            values.push(cell.trim().parse::<f64>().map_err(|_| Error::Data {
                row: r,
                detail: format!("`{cell}` is not a number"),
            })?);
        }
    }
    EncodedMatrix::new(table.rows.len(), cols, values)
}
