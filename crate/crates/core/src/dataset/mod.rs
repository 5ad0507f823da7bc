//! Column-major clinical tables with explicit missingness.
//!
//! A [`Dataset`] owns one [`Column`] per variable. Every column keeps a
//! boolean mask alongside its values; a masked cell's stored value is
//! meaningless and must not be read without checking the mask first.

mod encode;
mod io;
mod split;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encode::{FeatureEncoder, Matrix};
pub use io::{load_table, write_table, Delimiter, TableReader};
pub use split::{split, SplitSpec, Splits};

/// Default sparsity cut: columns with more than this missing fraction are dropped.
pub const DEFAULT_SPARSITY_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub missing_fraction: f64,
    /// Code -> token, in first-appearance order. Empty for numeric columns.
    pub dictionary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Numeric(Vec<f64>),
    Codes(Vec<u32>),
}

impl Values {
    fn len(&self) -> usize {
        match self {
            Values::Numeric(v) => v.len(),
            Values::Codes(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    meta: ColumnMeta,
    values: Values,
    missing: Vec<bool>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, cells: Vec<Option<f64>>) -> Self {
        let missing: Vec<bool> = cells.iter().map(|c| c.is_none()).collect();
        let values = cells.into_iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        Self::from_parts(
            name.into(),
            ColumnKind::Numeric,
            Values::Numeric(values),
            missing,
            Vec::new(),
        )
    }

    /// Builds a categorical column, assigning codes in first-appearance order.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, cells: Vec<Option<S>>) -> Self {
        let mut dictionary: Vec<String> = Vec::new();
        let mut codes = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for cell in &cells {
            match cell {
                Some(tok) => {
                    let tok = tok.as_ref();
                    let code = match dictionary.iter().position(|d| d == tok) {
                        Some(c) => c,
                        None => {
                            dictionary.push(tok.to_string());
                            dictionary.len() - 1
                        }
                    };
                    codes.push(code as u32);
                    missing.push(false);
                }
                None => {
                    codes.push(0);
                    missing.push(true);
                }
            }
        }
        Self::from_parts(
            name.into(),
            ColumnKind::Categorical,
            Values::Codes(codes),
            missing,
            dictionary,
        )
    }

    /// Categorical column from explicit codes and dictionary.
    pub fn from_codes(name: impl Into<String>, codes: Vec<Option<u32>>, dictionary: Vec<String>) -> Result<Self> {
        let name = name.into();
        if let Some(bad) = codes.iter().flatten().find(|&&c| c as usize >= dictionary.len()) {
            return Err(Error::column(name, format!("code {bad} has no dictionary entry")));
        }
        let missing = codes.iter().map(Option::is_none).collect();
        let codes = codes.into_iter().map(|c| c.unwrap_or(0)).collect();
        Ok(Self::from_parts(
            name,
            ColumnKind::Categorical,
            Values::Codes(codes),
            missing,
            dictionary,
        ))
    }

    pub fn label(name: impl Into<String>, labels: Vec<u8>) -> Result<Self> {
        let name = name.into();
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::column(name, "label codes must be 0 or 1"));
        }
        let missing = vec![false; labels.len()];
        let codes = labels.into_iter().map(u32::from).collect();
        Ok(Self::from_parts(
            name,
            ColumnKind::Label,
            Values::Codes(codes),
            missing,
            vec!["0".into(), "1".into()],
        ))
    }

    fn from_parts(name: String, kind: ColumnKind, values: Values, missing: Vec<bool>, dictionary: Vec<String>) -> Self {
        let n = missing.len();
        let masked = missing.iter().filter(|&&m| m).count();
        let missing_fraction = if n == 0 { 0.0 } else { masked as f64 / n as f64 };
        Self {
            meta: ColumnMeta {
                name,
                kind,
                missing_fraction,
                dictionary,
            },
            values,
            missing,
        }
    }

    pub fn meta(&self) -> &ColumnMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.meta.kind
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Cell as a float (codes widen to `f64`); `None` when masked.
    pub fn get(&self, row: usize) -> Option<f64> {
        if self.missing[row] {
            return None;
        }
        Some(match &self.values {
            Values::Numeric(v) => v[row],
            Values::Codes(c) => f64::from(c[row]),
        })
    }

    /// Numeric payload, `None` for categorical and label columns.
    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.values {
            Values::Numeric(v) => Some(v),
            Values::Codes(_) => None,
        }
    }

    pub fn as_codes(&self) -> Option<&[u32]> {
        match &self.values {
            Values::Codes(c) => Some(c),
            Values::Numeric(_) => None,
        }
    }

    /// Observed numeric values, in row order.
    pub fn observed_numeric(&self) -> Vec<f64> {
        match &self.values {
            Values::Numeric(v) => v
                .iter()
                .zip(&self.missing)
                .filter(|(_, &m)| !m)
                .map(|(&x, _)| x)
                .collect(),
            Values::Codes(_) => Vec::new(),
        }
    }

    /// Token for a cell: the dictionary entry for coded columns, the
    /// shortest round-tripping decimal for numeric ones.
    pub fn token(&self, row: usize) -> Option<String> {
        if self.missing[row] {
            return None;
        }
        Some(match &self.values {
            Values::Numeric(v) => format!("{}", v[row]),
            Values::Codes(c) => self.meta.dictionary[c[row] as usize].clone(),
        })
    }

    /// Same column with every cell observed. `values` must hold a valid
    /// value for each formerly masked cell; `dictionary` replaces the
    /// existing one for coded columns (it must extend it).
    pub(crate) fn completed(&self, values: Values, dictionary: Option<Vec<String>>) -> Self {
        debug_assert_eq!(values.len(), self.len());
        let dictionary = dictionary.unwrap_or_else(|| self.meta.dictionary.clone());
        Self::from_parts(
            self.meta.name.clone(),
            self.meta.kind,
            values,
            vec![false; self.len()],
            dictionary,
        )
    }

    fn take(&self, rows: &[usize]) -> Self {
        let values = match &self.values {
            Values::Numeric(v) => Values::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Values::Codes(c) => Values::Codes(rows.iter().map(|&r| c[r]).collect()),
        };
        let missing = rows.iter().map(|&r| self.missing[r]).collect();
        Self::from_parts(
            self.meta.name.clone(),
            self.meta.kind,
            values,
            missing,
            self.meta.dictionary.clone(),
        )
    }
}

/// Equality looks at metadata, masks and observed cells only; whatever a
/// masked cell happens to store is ignored.
impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        if self.meta != other.meta || self.missing != other.missing {
            return false;
        }
        (0..self.len()).all(|r| self.missing[r] || self.get(r) == other.get(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
    label_column: Option<String>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Validates column lengths, name uniqueness and label constraints.
    pub fn new(columns: Vec<Column>, label_column: Option<&str>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        Self::with_row_ids(columns, label_column, (0..n_rows).collect())
    }

    pub fn with_row_ids(mut columns: Vec<Column>, label_column: Option<&str>, row_ids: Vec<usize>) -> Result<Self> {
        let n_rows = row_ids.len();
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.name().to_string()) {
                return Err(Error::DuplicateColumn(col.name().to_string()));
            }
            if col.len() != n_rows || col.values.len() != n_rows {
                return Err(Error::column(
                    col.name(),
                    format!("has {} cells, expected {n_rows}", col.len()),
                ));
            }
        }
        if let Some(label) = label_column {
            let idx = columns
                .iter()
                .position(|c| c.name() == label)
                .ok_or_else(|| Error::UnknownColumn(label.to_string()))?;
            let col = &mut columns[idx];
            if col.missing_count() > 0 {
                return Err(Error::column(label, "label column has missing entries"));
            }
            let labels: Vec<u8> = match &col.values {
                Values::Codes(c) if col.meta.kind == ColumnKind::Label => c.iter().map(|&v| v as u8).collect(),
                _ => label_codes(col)?,
            };
            *col = Column::label(label, labels)?;
        } else if let Some(c) = columns.iter().find(|c| c.kind() == ColumnKind::Label) {
            return Err(Error::column(c.name(), "label-kind column but no label set"));
        }
        Ok(Self {
            columns,
            n_rows,
            label_column: label_column.map(str::to_string),
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Original row identities (0-based positions in the source table).
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn label_column(&self) -> Option<&str> {
        self.label_column.as_deref()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn require(&self, name: &str) -> Result<&Column> {
        self.column(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name().to_string()).collect()
    }

    /// All non-label column names in table order.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.kind() != ColumnKind::Label)
            .map(|c| c.name().to_string())
            .collect()
    }

    /// Label codes; errors when no label column is set.
    pub fn labels(&self) -> Result<Vec<u8>> {
        let name = self
            .label_column
            .as_deref()
            .ok_or_else(|| Error::param("label", "dataset has no label column"))?;
        let col = self.require(name)?;
        Ok(col
            .as_codes()
            .expect("label column stores codes")
            .iter()
            .map(|&c| c as u8)
            .collect())
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| c.missing_count() > 0)
    }

    /// Values of the named columns for one row; categorical codes widen to
    /// `f64`, masked cells become NaN.
    pub fn row_values(&self, row: usize, names: &[String]) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| Ok(self.require(n)?.get(row).unwrap_or(f64::NAN)))
            .collect()
    }

    /// Kind of every column, suitable as schema hints for reloading.
    pub fn schema(&self) -> Vec<(String, ColumnKind)> {
        self.columns.iter().map(|c| (c.name().to_string(), c.kind())).collect()
    }

    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
            label_column: self.label_column.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// Keeps the named columns (in the given order) plus the label column.
    pub fn select_columns(&self, names: &[String]) -> Result<Dataset> {
        let mut columns = Vec::with_capacity(names.len() + 1);
        for name in names {
            columns.push(self.require(name)?.clone());
        }
        if let Some(label) = &self.label_column {
            if !names.iter().any(|n| n == label) {
                columns.push(self.require(label)?.clone());
            }
        }
        Ok(Dataset {
            columns,
            n_rows: self.n_rows,
            label_column: self.label_column.clone(),
            row_ids: self.row_ids.clone(),
        })
    }

    pub(crate) fn replace_columns(&self, columns: Vec<Column>) -> Dataset {
        debug_assert!(columns.iter().all(|c| c.len() == self.n_rows));
        Dataset {
            columns,
            n_rows: self.n_rows,
            label_column: self.label_column.clone(),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Drops rows whose label cell is missing, then marks the column as the
    /// label. This is the only row filter the pipeline applies.
    pub fn drop_rows_missing_label(columns: Vec<Column>, label: &str) -> Result<Dataset> {
        let n = columns.first().map_or(0, Column::len);
        let col = columns
            .iter()
            .find(|c| c.name() == label)
            .ok_or_else(|| Error::UnknownColumn(label.to_string()))?;
        let keep: Vec<usize> = (0..n).filter(|&r| !col.is_missing(r)).collect();
        let columns: Vec<Column> = columns.iter().map(|c| c.take(&keep)).collect();
        if keep.is_empty() {
            return Err(Error::NoRows);
        }
        Dataset::with_row_ids(columns, Some(label), keep)
    }
}

fn label_codes(col: &Column) -> Result<Vec<u8>> {
    (0..col.len())
        .map(|r| {
            let tok = col.token(r).unwrap_or_default();
            match tok.trim() {
                "0" | "0.0" => Ok(0),
                "1" | "1.0" => Ok(1),
                other => Err(Error::column(
                    col.name(),
                    format!("label value `{other}` is not 0 or 1"),
                )),
            }
        })
        .collect()
}

/// (column name, missing fraction), most sparse first. Ties keep table order.
pub fn sparsity_profile(ds: &Dataset) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = ds
        .columns
        .iter()
        .map(|c| (c.name().to_string(), c.meta.missing_fraction))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

/// Keeps columns whose missing fraction is at most `threshold`. The label
/// column is always kept.
pub fn drop_sparse_columns(ds: &Dataset, threshold: f64) -> Result<Dataset> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::param("threshold", format!("{threshold} not in (0, 1]")));
    }
    let columns: Vec<Column> = ds
        .columns
        .iter()
        .filter(|c| c.kind() == ColumnKind::Label || c.meta.missing_fraction <= threshold)
        .cloned()
        .collect();
    if !columns.iter().any(|c| c.kind() != ColumnKind::Label) {
        return Err(Error::EmptyFeatureSet);
    }
    Ok(ds.replace_columns(columns))
}
