use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Dense row-major matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

fn default_names(cols: usize) -> Vec<String> {
    (0..cols).map(|j| format!("x{j}")).collect()
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::param(
                "matrix",
                format!("{} values for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self {
            rows,
            cols,
            data,
            names: default_names(cols),
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                found: names.len(),
            });
        }
        self.names = names;
        Ok(self)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::LengthMismatch {
                expected: cols,
                found: r.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
            names: default_names(cols),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Slot {
    Numeric,
    /// One indicator per level after the first (reference coding).
    OneHot {
        levels: usize,
    },
}

/// Maps raw dataset rows (numeric values and categorical codes) to model
/// inputs. Categorical columns expand to drop-first indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    features: Vec<String>,
    dictionaries: Vec<Vec<String>>,
    slots: Vec<Slot>,
    encoded_names: Vec<String>,
}

impl FeatureEncoder {
    pub fn fit(ds: &Dataset, features: &[String]) -> Result<Self> {
        let mut slots = Vec::with_capacity(features.len());
        let mut dictionaries = Vec::with_capacity(features.len());
        let mut encoded_names = Vec::new();
        for name in features {
            let col = ds.require(name)?;
            match col.kind() {
                ColumnKind::Numeric => {
                    slots.push(Slot::Numeric);
                    dictionaries.push(Vec::new());
                    encoded_names.push(name.clone());
                }
                ColumnKind::Categorical => {
                    let dict = col.meta().dictionary.clone();
                    for level in dict.iter().skip(1) {
                        encoded_names.push(format!("{name}={level}"));
                    }
                    slots.push(Slot::OneHot { levels: dict.len() });
                    dictionaries.push(dict);
                }
                ColumnKind::Label => {
                    return Err(Error::column(name, "label column cannot be a model feature"));
                }
            }
        }
        Ok(Self {
            features: features.to_vec(),
            dictionaries,
            slots,
            encoded_names,
        })
    }

    /// Raw feature names, in input order.
    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn encoded_names(&self) -> &[String] {
        &self.encoded_names
    }

    pub fn is_categorical(&self, feature: usize) -> bool {
        matches!(self.slots[feature], Slot::OneHot { .. })
    }

    pub fn dictionary(&self, feature: usize) -> &[String] {
        &self.dictionaries[feature]
    }

    /// Encodes one raw row. Missing cells (NaN) are rejected.
    pub fn encode_row(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.features.len() {
            return Err(Error::LengthMismatch {
                expected: self.features.len(),
                found: raw.len(),
            });
        }
        let mut out = Vec::with_capacity(self.encoded_names.len());
        for ((&v, slot), name) in raw.iter().zip(&self.slots).zip(&self.features) {
            if !v.is_finite() {
                return Err(Error::MissingInput(name.clone()));
            }
            match slot {
                Slot::Numeric => out.push(v),
                Slot::OneHot { levels } => {
                    let code = v as usize;
                    out.extend((1..*levels).map(|l| if l == code { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }

    /// Raw rows of `ds` in feature order with categorical codes remapped to
    /// the fitted dictionaries. Columns are looked up by name, so `ds` may
    /// contain extra columns; unseen levels map to the reference level and
    /// missing cells stay NaN.
    pub fn raw_matrix(&self, ds: &Dataset) -> Result<Matrix> {
        let remaps = self
            .features
            .iter()
            .zip(&self.dictionaries)
            .map(|(name, dict)| {
                let col = ds.require(name)?;
                Ok(col
                    .meta()
                    .dictionary
                    .iter()
                    .map(|tok| dict.iter().position(|d| d == tok).unwrap_or(0) as f64)
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(ds.n_rows() * self.features.len());
        for r in 0..ds.n_rows() {
            let mut raw = ds.row_values(r, &self.features)?;
            for (j, v) in raw.iter_mut().enumerate() {
                if self.is_categorical(j) && v.is_finite() {
                    *v = remaps[j][*v as usize];
                }
            }
            data.extend(raw);
        }
        Matrix::new(ds.n_rows(), self.features.len(), data)?.with_names(self.features.clone())
    }

    /// Encodes every row of `ds`; see [`FeatureEncoder::raw_matrix`].
    pub fn transform(&self, ds: &Dataset) -> Result<Matrix> {
        let raw = self.raw_matrix(ds)?;
        let mut data = Vec::with_capacity(ds.n_rows() * self.encoded_names.len());
        for row in raw.rows() {
            data.extend(self.encode_row(row)?);
        }
        Matrix::new(ds.n_rows(), self.encoded_names.len(), data)?.with_names(self.encoded_names.clone())
    }
}
