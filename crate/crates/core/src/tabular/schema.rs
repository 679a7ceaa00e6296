use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableType {
    Numerical,
    Categorical,
}

/// One column of the source table.
///
/// `min`/`max` are only present on numerical variables of a fitted schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub vtype: VariableType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl VariableSpec {
    pub fn numerical(name: impl Into<String>) -> Self {
        VariableSpec {
            name: name.into(),
            vtype: VariableType::Numerical,
            categories: Vec::new(),
            min: None,
            max: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        VariableSpec {
            name: name.into(),
            vtype: VariableType::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            min: None,
            max: None,
        }
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.min = Some(min);
        self.max = Some(max);
        self
    }

    /// Number of encoded features.
    pub fn size(&self) -> usize {
        match self.vtype {
            VariableType::Numerical => 1,
            VariableType::Categorical => self.categories.len(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.vtype == VariableType::Categorical
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    fn validate(&self) -> Result<()> {
        match self.vtype {
            VariableType::Numerical => {
                if !self.categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "numerical variable `{}` must not list categories",
                        self.name
                    )));
                }
                match (self.min, self.max) {
                    (Some(lo), Some(hi)) if !(lo < hi) => Err(Error::Schema(format!(
                        "variable `{}` is constant or has an inverted range ({lo}, {hi})",
                        self.name
                    ))),
                    (Some(_), None) | (None, Some(_)) => Err(Error::Schema(format!(
                        "variable `{}` needs both min and max",
                        self.name
                    ))),
                    _ => Ok(()),
                }
            }
            VariableType::Categorical => {
                if self.categories.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical variable `{}` needs at least 2 categories",
                        self.name
                    )));
                }
                let unique: BTreeSet<&String> = self.categories.iter().collect();
                if unique.len() != self.categories.len() {
                    return Err(Error::Schema(format!(
                        "categorical variable `{}` has duplicate categories",
                        self.name
                    )));
                }
                if self.min.is_some() || self.max.is_some() {
                    return Err(Error::Schema(format!(
                        "categorical variable `{}` must not carry a range",
                        self.name
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Contiguous column range of one variable in the encoded layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub variable: usize,
    pub start: usize,
    pub end: usize,
    pub vtype: VariableType,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Ordered variables and the encoded feature layout they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    variables: Vec<VariableSpec>,
}

impl DatasetSchema {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::Schema("schema has no variables".into()));
        }
        let mut names = BTreeSet::new();
        for v in &variables {
            v.validate()?;
            if !names.insert(v.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate variable name `{}`",
                    v.name
                )));
            }
        }
        Ok(DatasetSchema { variables })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// Encoded width `s`, the sum of every variable size.
    pub fn total_features(&self) -> usize {
        self.variables.iter().map(VariableSpec::size).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.variables.iter().map(VariableSpec::size).collect()
    }

    pub fn num_numerical(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| !v.is_categorical())
            .count()
    }

    pub fn num_categorical(&self) -> usize {
        self.variables.iter().filter(|v| v.is_categorical()).count()
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut start = 0;
        self.variables
            .iter()
            .enumerate()
            .map(|(variable, v)| {
                let b = Block {
                    variable,
                    start,
                    end: start + v.size(),
                    vtype: v.vtype,
                };
                start = b.end;
                b
            })
            .collect()
    }

    pub fn categorical_blocks(&self) -> Vec<Block> {
        self.blocks()
            .into_iter()
            .filter(|b| b.vtype == VariableType::Categorical)
            .collect()
    }

    /// Whether every numerical variable carries a scaling range.
    pub fn is_fitted(&self) -> bool {
        self.variables
            .iter()
            .all(|v| v.is_categorical() || (v.min.is_some() && v.max.is_some()))
    }

    /// Same variables, ignoring fitted ranges.
    pub fn same_layout(&self, other: &DatasetSchema) -> bool {
        self.variables.len() == other.variables.len()
            && self.variables.iter().zip(&other.variables).all(|(a, b)| {
                a.name == b.name && a.vtype == b.vtype && a.categories == b.categories
            })
    }

    /// Column of feature `q` of variable `j`, both counted from 1 as in the
    /// masked reconstruction loss; the returned column is 0-based.
    pub fn feature_index(&self, j: usize, q: usize) -> Result<usize> {
        if j == 0 || j > self.variables.len() {
            return Err(Error::Invalid(format!(
                "variable index {j} outside 1..={}",
                self.variables.len()
            )));
        }
        let size = self.variables[j - 1].size();
        if q == 0 || q > size {
            return Err(Error::Invalid(format!(
                "offset {q} outside 1..={size} for variable {j}"
            )));
        }
        let before: usize = self.variables[..j - 1].iter().map(VariableSpec::size).sum();
        Ok(before + q - 1)
    }

    /// Replaces numerical ranges with the min/max of `columns`, one slice per
    /// variable in schema order (categorical entries are ignored).
    pub(crate) fn with_ranges(&self, ranges: Vec<Option<(f64, f64)>>) -> Result<DatasetSchema> {
        let mut variables = self.variables.clone();
        for (v, range) in variables.iter_mut().zip(ranges) {
            if let Some((lo, hi)) = range {
                if !(lo < hi) {
                    return Err(Error::Schema(format!(
                        "numerical variable `{}` is constant ({lo}); it cannot be min-max scaled",
                        v.name
                    )));
                }
                v.min = Some(lo);
                v.max = Some(hi);
            }
        }
        DatasetSchema::new(variables)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SchemaDocument = serde_json::from_str(text)?;
        let schema = DatasetSchema::new(doc.variables)?;
        if let Some(total) = doc.total_features {
            if total != schema.total_features() {
                return Err(Error::Schema(format!(
                    "document declares {total} features but its variables encode to {}",
                    schema.total_features()
                )));
            }
        }
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        let doc = SchemaDocument {
            variables: self.variables.clone(),
            total_features: Some(self.total_features()),
        };
        serde_json::to_string_pretty(&doc).expect("schema serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// On-disk form: `{"variables": [{"name", "type", "categories"?, "min"?, "max"?}],
/// "total_features"?}`.
#[derive(Debug, Serialize, Deserialize)]
struct SchemaDocument {
    variables: Vec<VariableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_features: Option<usize>,
}
