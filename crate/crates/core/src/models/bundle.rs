//! Serialized model artifacts: the encoder that maps dataset rows to model
//! inputs plus the fitted model, as versioned JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GbtModel, GlmModel, Predictor};
use crate::dataset::FeatureEncoder;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Glm(GlmModel),
    Gbt(GbtModel),
}

impl ModelKind {
    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            ModelKind::Glm(m) => m,
            ModelKind::Gbt(m) => m,
        }
    }
}

/// Predicts from raw dataset rows (numeric values and categorical codes in
/// the order of `encoder.features()`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub encoder: FeatureEncoder,
    pub model: ModelKind,
}

impl ModelBundle {
    pub fn new(encoder: FeatureEncoder, model: ModelKind) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            encoder,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: ModelBundle = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        if bundle.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                bundle.format_version
            )));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Human-readable dump of coefficients or trees.
    pub fn inspect(&self) -> String {
        let mut out = format!(
            "format_version: {}\nmodel_type: {}\nfeatures: {}\nencoded inputs: {}\n",
            self.format_version,
            self.model_type(),
            self.encoder.features().join(", "),
            self.encoder.encoded_names().len()
        );
        match &self.model {
            ModelKind::Glm(m) => {
                out.push_str(&format!(
                    "converged: {} after {} iterations (ridge {})\n",
                    m.converged, m.iterations, m.ridge
                ));
                out.push_str(&format!(
                    "{:<24} {:>14}\n",
                    "(Intercept)",
                    format!("{:.6}", m.intercept)
                ));
                for (name, b) in m.feature_names.iter().zip(&m.coefficients) {
                    out.push_str(&format!("{name:<24} {:>14}\n", format!("{b:.6}")));
                }
            }
            ModelKind::Gbt(m) => {
                let c = &m.config;
                out.push_str(&format!(
                    "base_score: {:.6}\ntrees: {} (learning_rate {}, max_depth {}, lambda {}, gamma {}, min_child_weight {})\n",
                    m.base_score,
                    m.trees.len(),
                    c.learning_rate,
                    c.max_depth,
                    c.lambda,
                    c.gamma,
                    c.min_child_weight
                ));
                out.push_str(&m.render_trees());
            }
        }
        out
    }
}

impl Predictor for ModelBundle {
    fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        let encoded = self.encoder.encode_row(row)?;
        self.model.as_predictor().predict_proba(&encoded)
    }

    fn feature_names(&self) -> &[String] {
        self.encoder.features()
    }

    fn model_type(&self) -> &str {
        self.model.as_predictor().model_type()
    }
}
