use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::stages::{
    choose_cases, correlation_table, describe_table, discretizer_for, evaluate, explain_rows, fit_gbt, fit_glm,
    load_input, profile_table, table_bytes,
};
use crate::dataset::{drop_sparse_columns, split, Dataset, Delimiter, FeatureEncoder};
use crate::error::{Error, Result};
use crate::explain::{write_explanations, Explanation};
use crate::impute::{apply_imputation, mice_fit_transform};
use crate::models::MODEL_FORMAT_VERSION;
use crate::stats::select_features;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub rows: usize,
    pub columns: usize,
}

/// Hashes of the row-id sets each fitting stage consumed, and how many test
/// rows each one saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageCheck {
    pub test_rows_digest: String,
    pub imputation_fit_rows_digest: String,
    pub model_fit_rows_digest: String,
    pub tuning_rows_digest: Option<String>,
    pub test_rows_in_imputation_fit: usize,
    pub test_rows_in_model_fit: usize,
    pub test_rows_in_tuning: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_type: String,
    pub test_accuracy: f64,
    pub kappa: f64,
    pub model_file: String,
    pub report_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub model_format_version: u32,
    pub parallel: bool,
    /// `complete`, or `failed` with the stage and error below.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// Configuration after the global seed was applied. The output
    /// directory is omitted so runs into different directories compare
    /// equal.
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub selected_features: Vec<String>,
    pub leakage: Option<LeakageCheck>,
    pub models: Vec<ModelSummary>,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a row-id set, independent of order.
pub fn rows_digest(ids: &BTreeSet<usize>) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update((*id as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    stage: &'static str,
    started: Instant,
}

impl Run {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.manifest.outputs.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn begin(&mut self, stage: &'static str) {
        self.stage = stage;
        self.started = Instant::now();
    }

    fn end(&mut self, ds: Option<&Dataset>) {
        self.manifest
            .timings
            .insert(self.stage.to_string(), self.started.elapsed().as_secs_f64());
        if let Some(ds) = ds {
            self.manifest.stages.push(StageRecord {
                stage: self.stage.to_string(),
                rows: ds.n_rows(),
                columns: ds.n_columns(),
            });
        }
    }

    fn finish(&mut self) -> Result<()> {
        let json = self.manifest.to_json()?;
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Runs every stage and writes the artifacts plus `manifest.json` into
/// `cfg.output_dir`. On failure the manifest records the failing stage and
/// the error is returned wrapped with the stage name.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut echo = cfg.clone();
    echo.output_dir = PathBuf::new();
    let mut run = Run {
        dir,
        manifest: RunManifest {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            model_format_version: MODEL_FORMAT_VERSION,
            parallel: crate::par::is_parallel(),
            status: "running".into(),
            failed_stage: None,
            error: None,
            config: echo,
            stages: Vec::new(),
            selected_features: Vec::new(),
            leakage: None,
            models: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        },
        stage: "setup",
        started: Instant::now(),
    };
    match stages(&cfg, &mut run) {
        Ok(()) => {
            run.manifest.status = "complete".into();
            run.finish()?;
            Ok(run.manifest)
        }
        Err(e) => {
            run.manifest.status = "failed".into();
            run.manifest.failed_stage = Some(run.stage.to_string());
            run.manifest.error = Some(e.to_string());
            run.finish()?;
            Err(Error::Stage {
                stage: run.stage,
                source: Box::new(e),
            })
        }
    }
}

fn ids(ds: &Dataset) -> BTreeSet<usize> {
    ds.row_ids().iter().copied().collect()
}

fn first_completed(mut completed: Vec<Dataset>) -> Dataset {
    completed.swap_remove(0)
}

fn stages(cfg: &PipelineConfig, run: &mut Run) -> Result<()> {
    let out_delim = Delimiter::Comma;

    run.begin("load");
    let raw = load_input(&cfg.input)?;
    run.end(Some(&raw));

    run.begin("drop_sparse");
    run.write("profile.csv", profile_table(&raw, cfg.sparsity_threshold).as_bytes())?;
    let cleaned = drop_sparse_columns(&raw, cfg.sparsity_threshold)?;
    run.end(Some(&cleaned));

    let (train, validation, test, mice_rows, mice_model) = if cfg.impute.paper_faithful {
        run.begin("impute");
        let (completed, model) = mice_fit_transform(&cleaned, &cfg.impute.mice)?;
        let imputed = first_completed(completed);
        run.end(Some(&imputed));
        run.begin("split");
        let parts = split(&imputed, &cfg.split)?;
        run.end(Some(&parts.train));
        (parts.train, parts.validation, parts.test, ids(&cleaned), model)
    } else {
        run.begin("split");
        let parts = split(&cleaned, &cfg.split)?;
        run.end(Some(&parts.train));
        run.begin("impute");
        let (completed, model) = mice_fit_transform(&parts.train, &cfg.impute.mice)?;
        let train = first_completed(completed);
        let validation = apply_imputation(&model, &parts.validation)?;
        let test = apply_imputation(&model, &parts.test)?;
        run.end(Some(&train));
        let rows = ids(&parts.train);
        (train, validation, test, rows, model)
    };
    let mut assignment = String::from("row_id,partition\n");
    let mut rows: Vec<(usize, &str)> = Vec::with_capacity(cleaned.n_rows());
    for (ds, name) in [(&train, "train"), (&validation, "validation"), (&test, "test")] {
        rows.extend(ds.row_ids().iter().map(|&r| (r, name)));
    }
    rows.sort_unstable();
    for (r, name) in rows {
        assignment.push_str(&format!("{r},{name}\n"));
    }
    run.write("split_assignment.csv", assignment.as_bytes())?;
    run.write("imputation_summary.txt", mice_model.summary().as_bytes())?;
    run.write(
        "imputation_model.json",
        serde_json::to_string_pretty(&mice_model)
            .map_err(|e| Error::Serde(e.to_string()))?
            .as_bytes(),
    )?;
    run.write("train_imputed.csv", &table_bytes(&train, out_delim)?)?;

    run.begin("eda");
    run.write("descriptive_stats.csv", describe_table(&train)?.as_bytes())?;
    run.write("correlation.csv", correlation_table(&train)?.as_bytes())?;
    run.end(None);

    run.begin("select");
    let whitelist = cfg.select.whitelist_names();
    let selection = select_features(&train, cfg.select.alpha, Some(&whitelist), cfg.select.max_features)?;
    if selection.selected.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    run.write("selection.txt", selection.to_table().as_bytes())?;
    run.manifest.selected_features = selection.selected.clone();
    let train = train.select_columns(&selection.selected)?;
    let validation = validation.select_columns(&selection.selected)?;
    let test = test.select_columns(&selection.selected)?;
    run.end(Some(&train));

    run.begin("fit");
    let encoder = FeatureEncoder::fit(&train, &selection.selected)?;
    let mut fitted = Vec::new();
    if cfg.model.kind.fits_glm() {
        fitted.push(fit_glm(&encoder, &train, Some(&validation), &cfg.model)?);
    }
    if cfg.model.kind.fits_gbt() {
        fitted.push(fit_gbt(&encoder, &train, Some(&validation), &cfg.model)?);
    }
    for f in &fitted {
        let kind = f.bundle.model.as_predictor().model_type().to_string();
        run.write(&format!("model_{kind}.json"), f.bundle.to_json()?.as_bytes())?;
        if let Some(t) = &f.tuning {
            run.write(&format!("tuning_{kind}.json"), t.as_bytes())?;
        }
    }
    run.end(Some(&train));

    let test_ids = ids(&test);
    let count_test = |set: &BTreeSet<usize>| set.intersection(&test_ids).count();
    let fit_rows = ids(&train);
    let tuning_rows = cfg.model.tune.then(|| ids(&validation));
    let leakage = LeakageCheck {
        test_rows_digest: rows_digest(&test_ids),
        imputation_fit_rows_digest: rows_digest(&mice_rows),
        model_fit_rows_digest: rows_digest(&fit_rows),
        tuning_rows_digest: tuning_rows.as_ref().map(rows_digest),
        test_rows_in_imputation_fit: count_test(&mice_rows),
        test_rows_in_model_fit: count_test(&fit_rows),
        test_rows_in_tuning: tuning_rows.as_ref().map_or(0, count_test),
        passed: false,
    };
    run.manifest.leakage = Some(LeakageCheck {
        passed: leakage.test_rows_in_imputation_fit == 0
            && leakage.test_rows_in_model_fit == 0
            && leakage.test_rows_in_tuning == 0,
        ..leakage
    });

    run.begin("evaluate");
    for f in &fitted {
        let kind = f.bundle.model.as_predictor().model_type().to_string();
        let eval = evaluate(&f.bundle, &test)?;
        run.write(&format!("report_{kind}.txt"), eval.report.render().as_bytes())?;
        run.write(&format!("report_{kind}.json"), eval.report.to_json()?.as_bytes())?;
        run.write(&format!("predictions_{kind}.csv"), eval.predictions.as_bytes())?;
        run.manifest.models.push(ModelSummary {
            model_type: kind.clone(),
            test_accuracy: eval.report.accuracy,
            kappa: eval.report.kappa,
            model_file: format!("model_{kind}.json"),
            report_file: format!("report_{kind}.txt"),
        });
    }
    run.end(Some(&test));

    run.begin("explain");
    let cases = choose_cases(&test, cfg.explain.n_cases, &cfg.explain.case_ids, cfg.explain.lime.seed)?;
    let mut explanations: Vec<Explanation> = Vec::new();
    for f in &fitted {
        let disc = discretizer_for(&f.bundle, &train)?;
        explanations.extend(explain_rows(&f.bundle, &disc, &test, &cases, &cfg.explain.lime)?);
    }
    let mut table = Vec::new();
    write_explanations(&explanations, &mut table, b',')?;
    run.write("explanations.csv", &table)?;
    let text: String = explanations.iter().map(|e| e.render() + "\n").collect();
    run.write("explanations.txt", text.as_bytes())?;
    run.end(None);
    Ok(())
}
