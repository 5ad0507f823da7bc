use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Delimiter, SplitSpec, DEFAULT_SPARSITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::explain::LimeConfig;
use crate::impute::MiceConfig;
use crate::models::{GbtConfig, GlmConfig, TuneMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// `.psv` files are pipe-delimited, everything else comma-delimited.
    #[default]
    Auto,
    Csv,
    Psv,
}

impl InputFormat {
    pub fn delimiter_for(self, path: &Path) -> Delimiter {
        match self {
            InputFormat::Csv => Delimiter::Comma,
            InputFormat::Psv => Delimiter::Pipe,
            InputFormat::Auto if path.is_dir() => {
                let psv = std::fs::read_dir(path)
                    .into_iter()
                    .flatten()
                    .flatten()
                    .any(|e| e.path().extension().is_some_and(|x| x == "psv"));
                if psv {
                    Delimiter::Pipe
                } else {
                    Delimiter::Comma
                }
            }
            InputFormat::Auto => Delimiter::from_extension(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    /// A delimited file, or a directory of files sharing one header.
    pub path: PathBuf,
    pub format: InputFormat,
    pub label: String,
    pub drop_missing_label: bool,
    /// Columns removed right after loading (identifiers, timestamps).
    pub drop_columns: Vec<String>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            format: InputFormat::Auto,
            label: "SepsisLabel".into(),
            drop_missing_label: true,
            drop_columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ImputeConfig {
    #[serde(flatten)]
    pub mice: MiceConfig,
    /// Impute the whole table before splitting, as a single pass over all
    /// rows. Test rows then inform the imputation model.
    pub paper_faithful: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    pub alpha: f64,
    /// Force-include the built-in clinical feature list.
    pub clinical_whitelist: bool,
    /// Extra names to force-include.
    pub whitelist: Vec<String>,
    pub max_features: Option<usize>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            clinical_whitelist: true,
            whitelist: Vec::new(),
            max_features: None,
        }
    }
}

impl SelectConfig {
    pub fn whitelist_names(&self) -> Vec<String> {
        let mut names: Vec<String> = if self.clinical_whitelist {
            crate::stats::CLINICAL_WHITELIST.iter().map(|s| s.to_string()).collect()
        } else {
            Vec::new()
        };
        for w in &self.whitelist {
            if !names.contains(w) {
                names.push(w.clone());
            }
        }
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Glm,
    Gbt,
    #[default]
    Both,
}

impl ModelChoice {
    pub fn fits_glm(self) -> bool {
        matches!(self, ModelChoice::Glm | ModelChoice::Both)
    }

    pub fn fits_gbt(self) -> bool {
        matches!(self, ModelChoice::Gbt | ModelChoice::Both)
    }
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glm" => Ok(ModelChoice::Glm),
            "gbt" => Ok(ModelChoice::Gbt),
            "both" => Ok(ModelChoice::Both),
            other => Err(Error::param(
                "model",
                format!("expected glm, gbt or both, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelChoice,
    pub glm: GlmConfig,
    pub gbt: GbtConfig,
    /// Pick hyperparameters on the validation split before the final fit.
    pub tune: bool,
    pub tune_metric: TuneMetric,
    pub glm_grid: Vec<GlmConfig>,
    pub gbt_grid: Vec<GbtConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelChoice::Both,
            glm: GlmConfig::default(),
            gbt: GbtConfig::default(),
            tune: false,
            tune_metric: TuneMetric::LogLoss,
            glm_grid: [1e-4, 1e-2, 1.0]
                .iter()
                .map(|&ridge| GlmConfig {
                    ridge,
                    ..GlmConfig::default()
                })
                .collect(),
            gbt_grid: [1, 2, 4]
                .iter()
                .flat_map(|&max_depth| {
                    [0.1, 0.3].into_iter().flat_map(move |learning_rate| {
                        [200, 500].map(|n_trees| GbtConfig {
                            n_trees,
                            max_depth,
                            learning_rate,
                            ..GbtConfig::default()
                        })
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub lime: LimeConfig,
    /// Randomly sampled test cases to explain.
    pub n_cases: usize,
    /// Row ids (0-based data rows of the input) that must be explained.
    pub case_ids: Vec<usize>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            lime: LimeConfig::default(),
            n_cases: 5,
            case_ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// When set, replaces every stage seed.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub input: InputConfig,
    pub sparsity_threshold: f64,
    pub split: SplitSpec,
    pub impute: ImputeConfig,
    pub select: SelectConfig,
    pub model: ModelConfig,
    pub explain: ExplainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("out"),
            input: InputConfig::default(),
            sparsity_threshold: DEFAULT_SPARSITY_THRESHOLD,
            split: SplitSpec::default(),
            impute: ImputeConfig::default(),
            select: SelectConfig::default(),
            model: ModelConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

fn nested(field: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidParameter { field: inner, reason } => Error::InvalidParameter {
            field: format!("{field}.{inner}"),
            reason,
        },
        other => other,
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Copies the global seed into every stage configuration.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        if let Some(seed) = self.seed {
            cfg.split.seed = seed;
            cfg.impute.mice.seed = seed;
            cfg.model.gbt.seed = seed;
            cfg.model.gbt_grid.iter_mut().for_each(|g| g.seed = seed);
            cfg.explain.lime.seed = seed;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.path.as_os_str().is_empty() {
            return Err(Error::param("input.path", "must be set"));
        }
        if self.input.label.is_empty() {
            return Err(Error::param("input.label", "must be set"));
        }
        if !(self.sparsity_threshold > 0.0 && self.sparsity_threshold <= 1.0) {
            return Err(Error::param("sparsity_threshold", "must lie in (0, 1]"));
        }
        self.split.validate().map_err(nested("split"))?;
        self.impute.mice.validate().map_err(nested("impute"))?;
        if !(self.select.alpha > 0.0 && self.select.alpha < 1.0) {
            return Err(Error::param("select.alpha", "must lie in (0, 1)"));
        }
        if self.select.max_features == Some(0) {
            return Err(Error::param("select.max_features", "must be at least 1"));
        }
        let m = &self.model;
        if !(m.glm.ridge >= 0.0) {
            return Err(Error::param("model.glm.ridge", "must be >= 0"));
        }
        m.gbt.validate().map_err(nested("model.gbt"))?;
        if m.tune {
            if m.kind.fits_glm() && m.glm_grid.is_empty() {
                return Err(Error::param("model.glm_grid", "must not be empty when tuning"));
            }
            if m.kind.fits_gbt() && m.gbt_grid.is_empty() {
                return Err(Error::param("model.gbt_grid", "must not be empty when tuning"));
            }
            for g in &m.gbt_grid {
                g.validate().map_err(nested("model.gbt_grid"))?;
            }
        }
        self.explain.lime.validate().map_err(nested("explain.lime"))?;
        Ok(())
    }
}
