//! Validation-set hyperparameter search.

use serde::{Deserialize, Serialize};

use super::{accuracy, gbt_fit, glm_fit, log_loss, predict_all, GbtConfig, GlmConfig, Predictor};
use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TuneMetric {
    #[default]
    LogLoss,
    Accuracy,
}

impl TuneMetric {
    fn score(self, y: &[u8], p: &[f64]) -> f64 {
        match self {
            TuneMetric::LogLoss => log_loss(y, p),
            TuneMetric::Accuracy => accuracy(y, p),
        }
    }

    fn better(self, a: f64, b: f64) -> bool {
        match self {
            TuneMetric::LogLoss => a < b,
            TuneMetric::Accuracy => a > b,
        }
    }
}

impl std::str::FromStr for TuneMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_loss" => Ok(TuneMetric::LogLoss),
            "accuracy" => Ok(TuneMetric::Accuracy),
            other => Err(Error::param("metric", format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult<C> {
    pub metric: TuneMetric,
    pub grid: Vec<(C, f64)>,
    pub best_index: usize,
    pub best_config: C,
    pub best_metric: f64,
}

fn evaluate<C, M, F>(grid: &[C], metric: TuneMetric, val_x: &Matrix, val_y: &[u8], fit: F) -> Result<TuneResult<C>>
where
    C: Clone + Sync,
    M: Predictor,
    F: Fn(&C) -> Result<M> + Sync,
{
    if grid.is_empty() {
        return Err(Error::param("grid", "must contain at least one entry"));
    }
    if val_y.is_empty() {
        return Err(Error::EmptyPartition("validation"));
    }
    let scores = par::map_slice(grid, |c| {
        let model = fit(c)?;
        let p = predict_all(&model, val_x)?;
        Ok::<_, Error>(metric.score(val_y, &p))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if metric.better(s, scores[best_index]) {
            best_index = i;
        }
    }
    Ok(TuneResult {
        metric,
        best_config: grid[best_index].clone(),
        best_metric: scores[best_index],
        best_index,
        grid: grid.iter().cloned().zip(scores).collect(),
    })
}

/// Fits every configuration on the training matrix and scores it on the
/// validation matrix. Ties keep the earliest entry.
pub fn tune_gbt(
    train: (&Matrix, &[u8]),
    validation: (&Matrix, &[u8]),
    grid: &[GbtConfig],
    metric: TuneMetric,
) -> Result<TuneResult<GbtConfig>> {
    evaluate(grid, metric, validation.0, validation.1, |c| {
        gbt_fit(train.0, train.1, c)
    })
}

pub fn tune_glm(
    train: (&Matrix, &[u8]),
    validation: (&Matrix, &[u8]),
    grid: &[GlmConfig],
    metric: TuneMetric,
) -> Result<TuneResult<GlmConfig>> {
    evaluate(grid, metric, validation.0, validation.1, |c| {
        glm_fit(train.0, train.1, c)
    })
}
