use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Dataset, Values};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// How one feature is mapped to interpretable bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureBins {
    /// Quartile bins `f <= q1`, `q1 < f <= median`, `median < f <= q3`,
    /// `f > q3`. `min` and `max` bound the outer bins when sampling.
    Quartiles { cuts: [f64; 3], min: f64, max: f64 },
    /// Distinct training values with their relative frequencies. Used for
    /// categorical codes and for numeric columns too degenerate to bin.
    Levels {
        values: Vec<f64>,
        labels: Vec<String>,
        frequencies: Vec<f64>,
        pass_through: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub names: Vec<String>,
    pub bins: Vec<FeatureBins>,
}

/// Cut points and labels print with at most four decimals.
pub(crate) fn fmt_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn levels(values: Vec<f64>, labels: Vec<String>, counts: &[usize], pass_through: bool) -> FeatureBins {
    let total: usize = counts.iter().sum();
    FeatureBins::Levels {
        values,
        labels,
        frequencies: counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect(),
        pass_through,
    }
}

/// Fits quartile bins for numeric features and frequency tables for
/// categorical ones, on the observed training cells.
pub fn fit_discretizer(train: &Dataset, features: &[String]) -> Result<Discretizer> {
    let mut bins = Vec::with_capacity(features.len());
    for name in features {
        let col = train.require(name)?;
        match (col.kind(), col.values()) {
            (ColumnKind::Numeric, Values::Numeric(_)) => {
                let mut obs = col.observed_numeric();
                if obs.is_empty() {
                    return Err(Error::column(name, "no observed values"));
                }
                obs.sort_by(f64::total_cmp);
                let mut distinct = obs.clone();
                distinct.dedup();
                let cuts = [
                    quantile_sorted(&obs, 0.25),
                    quantile_sorted(&obs, 0.5),
                    quantile_sorted(&obs, 0.75),
                ];
                if distinct.len() >= 4 && cuts[0] < cuts[1] && cuts[1] < cuts[2] {
                    bins.push(FeatureBins::Quartiles {
                        cuts,
                        min: obs[0],
                        max: obs[obs.len() - 1],
                    });
                } else {
                    let counts: Vec<usize> = distinct
                        .iter()
                        .map(|d| obs.iter().filter(|v| *v == d).count())
                        .collect();
                    let labels = distinct.iter().map(|&d| fmt_value(d)).collect();
                    bins.push(levels(distinct, labels, &counts, true));
                }
            }
            (_, Values::Codes(codes)) => {
                let dict = &col.meta().dictionary;
                let mut counts = vec![0usize; dict.len()];
                for (r, &c) in codes.iter().enumerate() {
                    if !col.is_missing(r) {
                        counts[c as usize] += 1;
                    }
                }
                let values = (0..dict.len()).map(|c| c as f64).collect();
                bins.push(levels(values, dict.clone(), &counts, false));
            }
            _ => return Err(Error::column(name, "cannot be discretized")),
        }
    }
    Ok(Discretizer {
        names: features.to_vec(),
        bins,
    })
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        match self {
            FeatureBins::Quartiles { .. } => 4,
            FeatureBins::Levels { values, .. } => values.len(),
        }
    }

    /// Bin index of a raw value. Level values absent from training get
    /// `n_bins()`, a bin no perturbation can draw.
    pub fn bin_of(&self, v: f64) -> usize {
        match self {
            FeatureBins::Quartiles { cuts, .. } => cuts.iter().filter(|&&c| v > c).count(),
            FeatureBins::Levels { values, .. } => values.iter().position(|&x| x == v).unwrap_or(values.len()),
        }
    }

    pub fn describe(&self, name: &str, v: f64) -> String {
        match self {
            FeatureBins::Quartiles { cuts, .. } => {
                let [a, b, c] = cuts.map(fmt_value);
                match self.bin_of(v) {
                    0 => format!("{name} ≤ {a}"),
                    1 => format!("{a} < {name} ≤ {b}"),
                    2 => format!("{b} < {name} ≤ {c}"),
                    _ => format!("{name} > {c}"),
                }
            }
            FeatureBins::Levels { .. } => format!("{name} = {}", self.label(v)),
        }
    }

    /// Display form of a raw value: level label or formatted number.
    pub fn label(&self, v: f64) -> String {
        match self {
            FeatureBins::Levels { values, labels, .. } => match values.iter().position(|&x| x == v) {
                Some(i) => labels[i].clone(),
                None => fmt_value(v),
            },
            FeatureBins::Quartiles { .. } => fmt_value(v),
        }
    }

    pub fn is_pass_through(&self) -> bool {
        matches!(self, FeatureBins::Levels { pass_through: true, .. })
    }
}

impl Discretizer {
    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn describe(&self, feature: usize, v: f64) -> String {
        self.bins[feature].describe(&self.names[feature], v)
    }
}
