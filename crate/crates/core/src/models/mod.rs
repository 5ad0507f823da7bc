//! Probability classifiers for the binary sepsis label.
//!
//! Both models implement [`Predictor`]; explanation and evaluation code only
//! ever calls `predict_proba`, so either can be swapped in.

mod bundle;
mod gbt;
mod glm;
mod tune;

use crate::error::Result;

pub use bundle::{ModelBundle, ModelKind, MODEL_FORMAT_VERSION};
pub use gbt::{
    gbt_best_split, gbt_fit, gbt_leaf_weight, gbt_predict_proba, grow_tree, GbtConfig, GbtModel, Node, SplitCandidate,
    Tree,
};
pub use glm::{glm_fit, glm_predict_proba, GlmConfig, GlmModel, GlmObjective};
pub use tune::{tune_gbt, tune_glm, TuneMetric, TuneResult};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` so log-loss
/// stays finite.
pub const PROB_CLAMP: f64 = 1e-12;

pub trait Predictor: Sync {
    /// Probability of the positive class for one feature row.
    fn predict_proba(&self, row: &[f64]) -> Result<f64>;
    fn feature_names(&self) -> &[String];
    fn model_type(&self) -> &str;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        (**self).predict_proba(row)
    }
    fn feature_names(&self) -> &[String] {
        (**self).feature_names()
    }
    fn model_type(&self) -> &str {
        (**self).model_type()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy with clamped probabilities.
pub fn log_loss(y: &[u8], p: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(p)
        .map(|(&t, &q)| {
            let q = clamp_prob(q);
            if t == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    total / y.len() as f64
}

pub fn accuracy(y: &[u8], p: &[f64]) -> f64 {
    let hits = y.iter().zip(p).filter(|(&t, &q)| (q >= 0.5) == (t == 1)).count();
    hits as f64 / y.len() as f64
}

/// Row-wise probabilities, fanned out across threads when enabled.
pub fn predict_all<P: Predictor + ?Sized>(model: &P, x: &crate::dataset::Matrix) -> Result<Vec<f64>> {
    crate::par::try_map_range(x.n_rows(), |i| model.predict_proba(x.row(i)))
}
