use serde::{Deserialize, Serialize};

use super::tests::{chi_squared_test, t_test, TestKind};
use crate::dataset::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::par;

/// Clinical variables force-included by default. Blood pressure is
/// ambiguous, so systolic, diastolic and mean arterial pressure all appear.
pub const CLINICAL_WHITELIST: [&str; 15] = [
    "Age",
    "HR",
    "Resp",
    "SBP",
    "DBP",
    "MAP",
    "Temp",
    "WBC",
    "Lactate",
    "Creatinine",
    "Platelets",
    "Glucose",
    "O2Sat",
    "Comorbidities",
    "PriorAntibiotics",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub test_kind: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    /// Included because of the whitelist rather than its p-value.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Every feature, ascending by p-value (ties by name).
    pub ranked: Vec<RankedFeature>,
    /// Selected names in rank order.
    pub selected: Vec<String>,
    pub whitelist_applied: bool,
}

impl FeatureSelection {
    /// Aligned text table: rank, feature, test, statistic, p-value, status.
    pub fn to_table(&self) -> String {
        let width = self.ranked.iter().map(|r| r.name.len()).max().unwrap_or(7).max(7);
        let mut out = format!(
            "{:>4}  {:<width$}  {:<11}  {:>12}  {:>12}  status\n",
            "rank", "feature", "test", "statistic", "p_value"
        );
        for (i, r) in self.ranked.iter().enumerate() {
            let status = match (self.selected.contains(&r.name), r.forced) {
                (true, true) => "forced",
                (true, false) => "selected",
                _ => "-",
            };
            out.push_str(&format!(
                "{:>4}  {:<width$}  {:<11}  {:>12.4}  {:>12.4e}  {status}\n",
                i + 1,
                r.name,
                r.test_kind.as_str(),
                r.statistic,
                r.p_value
            ));
        }
        out
    }
}

/// Tests every feature against the binary label: Welch t for numeric
/// columns, chi-squared on the feature x label table for categorical ones.
/// Keeps features with `p < alpha`, force-includes whitelisted names that
/// exist in `ds`, and truncates to `k` (forced names are kept first).
pub fn select_features(
    ds: &Dataset,
    alpha: f64,
    whitelist: Option<&[String]>,
    k: Option<usize>,
) -> Result<FeatureSelection> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("{alpha} not in (0, 1)")));
    }
    let labels = ds.labels()?;
    let names = ds.feature_names();
    let mut ranked = par::try_map_range(names.len(), |i| test_feature(ds, &names[i], &labels))?;
    ranked.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then_with(|| a.name.cmp(&b.name)));

    let forced: Vec<&str> = whitelist
        .unwrap_or(&[])
        .iter()
        .map(String::as_str)
        .filter(|w| names.iter().any(|n| n == w))
        .collect();
    for r in &mut ranked {
        r.forced = forced.contains(&r.name.as_str());
    }
    let mut keep: Vec<bool> = ranked.iter().map(|r| r.forced || r.p_value < alpha).collect();
    if let Some(k) = k {
        let mut budget = k.saturating_sub(ranked.iter().filter(|r| r.forced).count());
        for (r, kept) in ranked.iter().zip(keep.iter_mut()) {
            if *kept && !r.forced {
                if budget == 0 {
                    *kept = false;
                } else {
                    budget -= 1;
                }
            }
        }
    }
    let selected = ranked
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.name.clone())
        .collect();
    Ok(FeatureSelection {
        ranked,
        selected,
        whitelist_applied: !forced.is_empty(),
    })
}

fn test_feature(ds: &Dataset, name: &str, labels: &[u8]) -> Result<RankedFeature> {
    let col = ds.require(name)?;
    let (kind, statistic, p_value) = match col.kind() {
        ColumnKind::Numeric => {
            let mut groups: [Vec<f64>; 2] = Default::default();
            for (r, &l) in labels.iter().enumerate() {
                if let Some(v) = col.get(r) {
                    groups[l as usize].push(v);
                }
            }
            match t_test(&groups[0], &groups[1]) {
                Ok(t) => (TestKind::WelchT, t.statistic, t.p_value),
                Err(_) => (TestKind::WelchT, 0.0, 1.0),
            }
        }
        ColumnKind::Categorical => {
            let levels = col.meta().dictionary.len();
            let mut table = vec![vec![0u64; 2]; levels];
            for (r, &l) in labels.iter().enumerate() {
                if let Some(code) = col.get(r) {
                    table[code as usize][l as usize] += 1;
                }
            }
            table.retain(|row| row.iter().any(|&c| c > 0));
            match chi_squared_test(&table) {
                Ok(t) => (TestKind::ChiSquared, t.statistic, t.p_value),
                Err(_) => (TestKind::ChiSquared, 0.0, 1.0),
            }
        }
        ColumnKind::Label => unreachable!("feature_names excludes the label"),
    };
    Ok(RankedFeature {
        name: name.to_string(),
        test_kind: kind,
        statistic,
        p_value,
        forced: false,
    })
}
