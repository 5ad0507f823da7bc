use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Column, ColumnKind, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    #[default]
    Comma,
    Pipe,
}

impl Delimiter {
    pub fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Pipe => b'|',
        }
    }

    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("psv") => Delimiter::Pipe,
            _ => Delimiter::Comma,
        }
    }
}

impl std::str::FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comma" | "csv" | "," => Ok(Delimiter::Comma),
            "pipe" | "psv" | "|" => Ok(Delimiter::Pipe),
            other => Err(Error::param("format", format!("unknown delimiter `{other}`"))),
        }
    }
}

/// Reads delimited tables. Kinds come from `hints` where given, otherwise a
/// column is numeric when every observed token parses as a finite decimal.
#[derive(Debug, Clone, Default)]
pub struct TableReader {
    pub delimiter: Delimiter,
    pub hints: HashMap<String, ColumnKind>,
    /// Name of the label column. Also settable through a `Label` hint.
    pub label: Option<String>,
    pub drop_missing_label: bool,
}

impl TableReader {
    pub fn new(delimiter: Delimiter) -> Self {
        Self {
            delimiter,
            ..Self::default()
        }
    }

    pub fn hint(mut self, name: impl Into<String>, kind: ColumnKind) -> Self {
        self.hints.insert(name.into(), kind);
        self
    }

    pub fn label(mut self, name: impl Into<String>) -> Self {
        self.label = Some(name.into());
        self
    }

    pub fn drop_missing_label(mut self, yes: bool) -> Self {
        self.drop_missing_label = yes;
        self
    }

    pub fn read(&self, path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let raw = parse_raw(&bytes, self.delimiter)?;
        self.build(raw)
    }

    /// Concatenates every regular file in `dir` (sorted by file name). All
    /// files must share one header.
    pub fn read_dir(&self, dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let mut merged: Option<RawTable> = None;
        for path in paths {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let raw = parse_raw(&bytes, self.delimiter)?;
            match &mut merged {
                None => merged = Some(raw),
                Some(acc) => {
                    if acc.header != raw.header {
                        return Err(Error::param(
                            "input",
                            format!("{} has a different header", path.display()),
                        ));
                    }
                    acc.rows.extend(raw.rows);
                }
            }
        }
        let merged = merged.ok_or(Error::NoRows)?;
        self.build(merged)
    }

    pub fn read_str(&self, text: &str) -> Result<Dataset> {
        self.build(parse_raw(text.as_bytes(), self.delimiter)?)
    }

    fn build(&self, raw: RawTable) -> Result<Dataset> {
        if raw.rows.is_empty() {
            return Err(Error::NoRows);
        }
        let mut label = self.label.clone();
        if label.is_none() {
            label = self
                .hints
                .iter()
                .find(|(_, &k)| k == ColumnKind::Label)
                .map(|(n, _)| n.clone());
        }
        let mut columns = Vec::with_capacity(raw.header.len());
        for (j, name) in raw.header.iter().enumerate() {
            let cells: Vec<Option<&str>> = raw
                .rows
                .iter()
                .map(|r| {
                    let tok = r[j].trim();
                    (!is_missing_token(tok)).then_some(tok)
                })
                .collect();
            let kind = self.hints.get(name).copied();
            let is_label = label.as_deref() == Some(name.as_str());
            columns.push(build_column(name, &cells, kind, is_label)?);
        }
        match label {
            Some(l) if self.drop_missing_label => Dataset::drop_rows_missing_label(columns, &l),
            Some(l) => Dataset::new(columns, Some(&l)),
            None => Dataset::new(columns, None),
        }
    }
}

/// Loads one delimited file. Missing cells are empty fields or the tokens
/// `NaN` / `NA` in any case.
pub fn load_table(
    path: impl AsRef<Path>,
    delimiter: Delimiter,
    schema_hints: Option<&HashMap<String, ColumnKind>>,
) -> Result<Dataset> {
    let mut reader = TableReader::new(delimiter);
    if let Some(h) = schema_hints {
        reader.hints = h.clone();
    }
    reader.read(path)
}

/// Serialises a dataset; masked cells become empty fields.
pub fn write_table<W: Write>(ds: &Dataset, out: W, delimiter: Delimiter) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter.byte()).from_writer(out);
    w.write_record(ds.columns().iter().map(Column::name))?;
    for r in 0..ds.n_rows() {
        w.write_record(ds.columns().iter().map(|c| c.token(r).unwrap_or_default()))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_raw(bytes: &[u8], delimiter: Delimiter) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter.byte())
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut names = std::collections::HashSet::new();
    for h in &header {
        if !names.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

fn is_missing_token(tok: &str) -> bool {
    tok.is_empty() || tok.eq_ignore_ascii_case("nan") || tok.eq_ignore_ascii_case("na")
}

fn parse_decimal(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn build_column(name: &str, cells: &[Option<&str>], hint: Option<ColumnKind>, is_label: bool) -> Result<Column> {
    let numeric = || -> Option<Vec<Option<f64>>> {
        cells
            .iter()
            .map(|c| match c {
                None => Some(None),
                Some(t) => parse_decimal(t).map(Some),
            })
            .collect()
    };
    let kind = match hint {
        Some(k) => k,
        None if is_label => ColumnKind::Label,
        None => {
            if numeric().is_some() {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            }
        }
    };
    match kind {
        ColumnKind::Numeric => {
            let values = numeric().ok_or_else(|| Error::column(name, "non-numeric token in numeric column"))?;
            Ok(Column::numeric(name, values))
        }
        // Labels are parsed as tokens here and validated as {0,1} by Dataset.
        ColumnKind::Categorical | ColumnKind::Label => Ok(Column::categorical(name, cells.to_vec())),
    }
}
