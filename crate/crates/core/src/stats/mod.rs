//! Descriptive statistics, correlation, significance tests and feature
//! ranking.

mod select;

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::par;

pub use select::{select_features, FeatureSelection, RankedFeature, CLINICAL_WHITELIST};
pub use tests::{anova_oneway, chi_squared_test, pearson_correlation, t_test, TestKind, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics (position `(n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of the observed cells; `mask[i] == true` excludes `values[i]`.
pub fn describe(values: &[f64], mask: &[bool]) -> Result<DescriptiveStats> {
    let mut obs: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| !m).map(|(&v, _)| v).collect();
    if obs.is_empty() {
        return Err(Error::param("values", "no observed values"));
    }
    obs.sort_by(f64::total_cmp);
    let n = obs.len();
    let mean = obs.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(DescriptiveStats {
        n,
        mean,
        sd,
        min: obs[0],
        q1: quantile_sorted(&obs, 0.25),
        median: quantile_sorted(&obs, 0.5),
        q3: quantile_sorted(&obs, 0.75),
        max: obs[n - 1],
    })
}

pub fn describe_column(col: &Column) -> Result<DescriptiveStats> {
    let values = col
        .as_numeric()
        .ok_or_else(|| Error::column(col.name(), "not numeric"))?;
    describe(values, col.missing_mask()).map_err(|_| Error::column(col.name(), "no observed values"))
}

/// Pairwise-deletion Pearson correlations. An entry is `None` when either
/// column is constant over the shared observed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.names.len() + j]
    }

    /// Delimited text: a header row of names, then one row per column with
    /// `NA` for undefined entries.
    pub fn to_delimited(&self, delimiter: u8) -> String {
        let sep = delimiter as char;
        let mut out = String::from("variable");
        for n in &self.names {
            out.push(sep);
            out.push_str(n);
        }
        out.push('\n');
        for (i, n) in self.names.iter().enumerate() {
            out.push_str(n);
            for j in 0..self.names.len() {
                out.push(sep);
                match self.get(i, j) {
                    Some(r) => out.push_str(&format!("{r:.6}")),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn with_nan(col: &Column) -> Result<Vec<f64>> {
    let v = col
        .as_numeric()
        .ok_or_else(|| Error::column(col.name(), "not numeric"))?;
    Ok(v.iter()
        .zip(col.missing_mask())
        .map(|(&x, &m)| if m { f64::NAN } else { x })
        .collect())
}

pub fn correlation_matrix(ds: &Dataset, columns: &[String]) -> Result<CorrelationMatrix> {
    let data: Vec<Vec<f64>> = columns
        .iter()
        .map(|n| {
            let col = ds.require(n)?;
            if col.kind() != ColumnKind::Numeric {
                return Err(Error::column(n, "not numeric"));
            }
            with_nan(col)
        })
        .collect::<Result<_>>()?;
    let d = columns.len();
    let upper = par::map_range(d * d, |idx| {
        let (i, j) = (idx / d, idx % d);
        if j < i {
            return None;
        }
        match pearson_correlation(&data[i], &data[j]) {
            Ok(t) if i == j => t.statistic.is_finite().then_some(1.0),
            Ok(t) => Some(t.statistic),
            Err(_) => None,
        }
    });
    let mut values = vec![None; d * d];
    for i in 0..d {
        for j in i..d {
            values[i * d + j] = upper[i * d + j];
            values[j * d + i] = upper[i * d + j];
        }
    }
    // A constant column is undefined everywhere, its diagonal included.
    for i in 0..d {
        if values[i * d + i].is_none() {
            for j in 0..d {
                values[i * d + j] = None;
                values[j * d + i] = None;
            }
        }
    }
    Ok(CorrelationMatrix {
        names: columns.to_vec(),
        values,
    })
}
