//! Stage building blocks shared by the full run and the CLI subcommands.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{InputConfig, ModelConfig};
use crate::dataset::{sparsity_profile, ColumnKind, Dataset, Delimiter, FeatureEncoder, TableReader};
use crate::error::{Error, Result};
use crate::explain::{explain_instance, fit_discretizer, Discretizer, Explanation, LimeConfig};
use crate::metrics::{confusion, report, ClassificationReport};
use crate::models::{
    gbt_fit, glm_fit, predict_all, tune_gbt, tune_glm, GbtConfig, GlmConfig, ModelBundle, ModelKind, TuneResult,
};
use crate::stats::{correlation_matrix, describe_column};

pub fn load_input(cfg: &InputConfig) -> Result<Dataset> {
    let reader = TableReader::new(cfg.format.delimiter_for(&cfg.path))
        .label(cfg.label.clone())
        .drop_missing_label(cfg.drop_missing_label);
    let ds = if cfg.path.is_dir() {
        reader.read_dir(&cfg.path)?
    } else {
        reader.read(&cfg.path)?
    };
    if cfg.drop_columns.is_empty() {
        return Ok(ds);
    }
    for c in &cfg.drop_columns {
        ds.require(c)?;
    }
    let keep: Vec<String> = ds
        .column_names()
        .into_iter()
        .filter(|n| !cfg.drop_columns.contains(n))
        .collect();
    ds.select_columns(&keep)
}

pub fn table_bytes(ds: &Dataset, delimiter: Delimiter) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    crate::dataset::write_table(ds, &mut buf, delimiter)?;
    Ok(buf)
}

/// `column,kind,missing_fraction,status` for every column, most sparse
/// first.
pub fn profile_table(ds: &Dataset, threshold: f64) -> String {
    let mut out = String::from("column,kind,missing_fraction,status\n");
    for (name, frac) in sparsity_profile(ds) {
        let kind = ds.column(&name).map_or(ColumnKind::Numeric, |c| c.kind());
        let status = if kind == ColumnKind::Label {
            "label"
        } else if frac <= threshold {
            "kept"
        } else {
            "dropped"
        };
        let kind = match kind {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Label => "label",
        };
        out.push_str(&format!("{name},{kind},{frac:.6},{status}\n"));
    }
    out
}

/// Descriptive statistics of every numeric column, one row each.
pub fn describe_table(ds: &Dataset) -> Result<String> {
    let mut out = String::from("column,n,mean,sd,min,q1,median,q3,max\n");
    for col in ds.columns().iter().filter(|c| c.kind() == ColumnKind::Numeric) {
        let s = describe_column(col)?;
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            col.name(),
            s.n,
            s.mean,
            s.sd,
            s.min,
            s.q1,
            s.median,
            s.q3,
            s.max
        ));
    }
    Ok(out)
}

pub fn correlation_table(ds: &Dataset) -> Result<String> {
    let numeric: Vec<String> = ds
        .columns()
        .iter()
        .filter(|c| c.kind() == ColumnKind::Numeric)
        .map(|c| c.name().to_string())
        .collect();
    Ok(correlation_matrix(ds, &numeric)?.to_delimited(b','))
}

/// Fitted model plus its tuning record, if any.
pub struct Fitted {
    pub bundle: ModelBundle,
    pub tuning: Option<String>,
}

fn tuning_json<C: serde::Serialize>(t: &TuneResult<C>) -> Result<String> {
    serde_json::to_string_pretty(t).map_err(|e| Error::Serde(e.to_string()))
}

pub fn fit_glm(
    encoder: &FeatureEncoder,
    train: &Dataset,
    validation: Option<&Dataset>,
    cfg: &ModelConfig,
) -> Result<Fitted> {
    let x = encoder.transform(train)?;
    let y = train.labels()?;
    let mut chosen: GlmConfig = cfg.glm.clone();
    let mut tuning = None;
    if let (true, Some(val)) = (cfg.tune, validation) {
        let vx = encoder.transform(val)?;
        let vy = val.labels()?;
        let t = tune_glm((&x, &y), (&vx, &vy), &cfg.glm_grid, cfg.tune_metric)?;
        chosen = t.best_config.clone();
        tuning = Some(tuning_json(&t)?);
    }
    let model = glm_fit(&x, &y, &chosen)?;
    Ok(Fitted {
        bundle: ModelBundle::new(encoder.clone(), ModelKind::Glm(model)),
        tuning,
    })
}

pub fn fit_gbt(
    encoder: &FeatureEncoder,
    train: &Dataset,
    validation: Option<&Dataset>,
    cfg: &ModelConfig,
) -> Result<Fitted> {
    let x = encoder.transform(train)?;
    let y = train.labels()?;
    let mut chosen: GbtConfig = cfg.gbt.clone();
    let mut tuning = None;
    if let (true, Some(val)) = (cfg.tune, validation) {
        let vx = encoder.transform(val)?;
        let vy = val.labels()?;
        let t = tune_gbt((&x, &y), (&vx, &vy), &cfg.gbt_grid, cfg.tune_metric)?;
        chosen = t.best_config.clone();
        tuning = Some(tuning_json(&t)?);
    }
    let model = gbt_fit(&x, &y, &chosen)?;
    Ok(Fitted {
        bundle: ModelBundle::new(encoder.clone(), ModelKind::Gbt(model)),
        tuning,
    })
}

pub struct Evaluation {
    pub report: ClassificationReport,
    /// `row_id,label,probability,prediction`.
    pub predictions: String,
}

/// Scores `ds` with the bundle at threshold 0.5.
pub fn evaluate(bundle: &ModelBundle, ds: &Dataset) -> Result<Evaluation> {
    let x = bundle.encoder.transform(ds)?;
    let p = predict_all(bundle.model.as_predictor(), &x)?;
    let y = ds.labels()?;
    let yhat: Vec<u8> = p.iter().map(|&q| u8::from(q >= 0.5)).collect();
    let cm = confusion(&y, &yhat)?;
    let mut predictions = String::from("row_id,label,probability,prediction\n");
    for (i, id) in ds.row_ids().iter().enumerate() {
        predictions.push_str(&format!("{id},{},{},{}\n", y[i], p[i], yhat[i]));
    }
    Ok(Evaluation {
        report: report(&cm)?,
        predictions,
    })
}

/// Row positions within `ds` to explain: `n` sampled rows plus the
/// requested row ids, ascending and without duplicates.
pub fn choose_cases(ds: &Dataset, n: usize, requested: &[usize], seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amount = n.min(ds.n_rows());
    let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, ds.n_rows(), amount).into_vec();
    for id in requested {
        let pos = ds.row_ids().iter().position(|r| r == id).ok_or_else(|| {
            Error::param(
                "explain.case_ids",
                format!("row {id} is not in the explained partition"),
            )
        })?;
        rows.push(pos);
    }
    rows.sort_unstable();
    rows.dedup();
    Ok(rows)
}

pub fn discretizer_for(bundle: &ModelBundle, train: &Dataset) -> Result<Discretizer> {
    fit_discretizer(train, bundle.encoder.features())
}

/// Explains the given row positions of `ds`; cases run concurrently.
pub fn explain_rows(
    bundle: &ModelBundle,
    disc: &Discretizer,
    ds: &Dataset,
    rows: &[usize],
    cfg: &LimeConfig,
) -> Result<Vec<Explanation>> {
    let raw = bundle.encoder.raw_matrix(ds)?;
    crate::par::try_map_slice(rows, |&r| {
        let id = ds.row_ids()[r].to_string();
        explain_instance(bundle, raw.row(r), disc, cfg, &id)
    })
}
