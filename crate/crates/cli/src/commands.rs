use std::io::Write;
use std::path::{Path, PathBuf};

use sepsis_xai::dataset::{split, Dataset, Delimiter, FeatureEncoder};
use sepsis_xai::explain::{write_explanations, KFeatures};
use sepsis_xai::impute::{apply_imputation, mice_fit_transform, ImputationModel};
use sepsis_xai::models::{ModelBundle, TuneMetric};
use sepsis_xai::pipeline::stages::{
    choose_cases, correlation_table, describe_table, discretizer_for, evaluate, explain_rows, fit_gbt, fit_glm,
    load_input, profile_table, table_bytes, Fitted,
};
use sepsis_xai::pipeline::{run_pipeline, InputFormat, PipelineConfig};
use sepsis_xai::stats::select_features;
use sepsis_xai::synth::{generate_synthetic, write_synthetic, SynthSpec};
use sepsis_xai::{Error, Result};

use crate::{Cli, Command, Format, InputArgs, ModelAction};

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn apply_input(cfg: &mut PipelineConfig, input: &InputArgs) -> Result<()> {
    if let Some(path) = &input.input {
        cfg.input.path = path.clone();
    }
    if let Some(label) = &input.label {
        cfg.input.label = label.clone();
    }
    if let Some(fmt) = &input.input_format {
        cfg.input.format = match fmt.as_str() {
            "csv" => InputFormat::Csv,
            "psv" => InputFormat::Psv,
            _ => InputFormat::Auto,
        };
    }
    if cfg.input.path.as_os_str().is_empty() {
        return Err(Error::InvalidParameter {
            field: "input".into(),
            reason: "give an input path or set input.path in the config".into(),
        });
    }
    Ok(())
}

fn load(cfg: &PipelineConfig) -> Result<Dataset> {
    load_input(&cfg.input)
}

fn load_path(cfg: &PipelineConfig, path: &Path) -> Result<Dataset> {
    let mut input = cfg.input.clone();
    input.path = path.to_path_buf();
    load_input(&input)
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))
}

fn emit(format: Format, text: &str, value: serde_json::Value) -> Result<()> {
    let body = match format {
        Format::Text => text.to_string(),
        Format::Json => json(&value)? + "\n",
    };
    let mut out = std::io::stdout().lock();
    match out.write_all(body.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn features_or_all(ds: &Dataset, features: &Option<Vec<String>>) -> Vec<String> {
    features.clone().unwrap_or_else(|| ds.feature_names())
}

fn save_fitted(dir: &Path, fitted: &Fitted, format: Format) -> Result<()> {
    let kind = fitted.bundle.model.as_predictor().model_type().to_string();
    let model_path = write(dir, &format!("model_{kind}.json"), fitted.bundle.to_json()?.as_bytes())?;
    let mut value = serde_json::json!({ "model": model_path });
    if let Some(t) = &fitted.tuning {
        let p = write(dir, &format!("tuning_{kind}.json"), t.as_bytes())?;
        value["tuning"] = serde_json::json!(p);
    }
    let text = format!("wrote {}\n", model_path.display());
    emit(format, &text, value)
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = base_config(cli)?;
    let format = cli.format;
    match &cli.command {
        Command::Ingest(input) => {
            apply_input(&mut cfg, input)?;
            let ds = load(&cfg)?;
            let dir = out_dir(&cfg)?;
            let path = write(&dir, "ingested.csv", &table_bytes(&ds, Delimiter::Comma)?)?;
            let schema: Vec<_> = ds
                .columns()
                .iter()
                .map(|c| serde_json::json!({ "column": c.name(), "kind": c.kind(), "missing_fraction": c.meta().missing_fraction }))
                .collect();
            let mut text = format!(
                "{} rows, {} columns -> {}\n",
                ds.n_rows(),
                ds.n_columns(),
                path.display()
            );
            for c in ds.columns() {
                text.push_str(&format!(
                    "  {:<24} {:?} {:.4}\n",
                    c.name(),
                    c.kind(),
                    c.meta().missing_fraction
                ));
            }
            emit(
                format,
                &text,
                serde_json::json!({ "rows": ds.n_rows(), "output": path, "schema": schema }),
            )
        }
        Command::Profile { input, threshold } => {
            apply_input(&mut cfg, input)?;
            if let Some(t) = threshold {
                cfg.sparsity_threshold = *t;
            }
            if !(cfg.sparsity_threshold > 0.0 && cfg.sparsity_threshold <= 1.0) {
                return Err(Error::InvalidParameter {
                    field: "threshold".into(),
                    reason: "must lie in (0, 1]".into(),
                });
            }
            let ds = load(&cfg)?;
            let table = profile_table(&ds, cfg.sparsity_threshold);
            write(&out_dir(&cfg)?, "profile.csv", table.as_bytes())?;
            let rows: Vec<_> = sepsis_xai::dataset::sparsity_profile(&ds)
                .into_iter()
                .map(|(c, f)| serde_json::json!({ "column": c, "missing_fraction": f }))
                .collect();
            emit(format, &table, serde_json::json!(rows))
        }
        Command::Impute {
            input,
            max_iterations,
            apply,
        } => {
            apply_input(&mut cfg, input)?;
            if let Some(m) = max_iterations {
                cfg.impute.mice.max_iterations = *m;
            }
            let cfg = cfg.resolved();
            let ds = load(&cfg)?;
            if let Some(path) = apply {
                let model = ImputationModel::load(path)?;
                let imputed = apply_imputation(&model, &ds)?;
                let written = write(
                    &out_dir(&cfg)?,
                    "imputed.csv",
                    &table_bytes(&imputed, Delimiter::Comma)?,
                )?;
                return emit(
                    format,
                    &format!("applied {} -> {}\n", path.display(), written.display()),
                    serde_json::json!({ "model": path, "output": written, "rows": imputed.n_rows() }),
                );
            }
            let (completed, model) = mice_fit_transform(&ds, &cfg.impute.mice)?;
            let dir = out_dir(&cfg)?;
            for (i, d) in completed.iter().enumerate() {
                let name = if completed.len() == 1 {
                    "imputed.csv".to_string()
                } else {
                    format!("imputed_{}.csv", i + 1)
                };
                write(&dir, &name, &table_bytes(d, Delimiter::Comma)?)?;
            }
            write(&dir, "imputation_model.json", json(&model)?.as_bytes())?;
            emit(
                format,
                &model.summary(),
                serde_json::to_value(&model).map_err(|e| Error::Serde(e.to_string()))?,
            )
        }
        Command::Split {
            input,
            train,
            validation,
            test,
            no_stratify,
        } => {
            apply_input(&mut cfg, input)?;
            let spec = &mut cfg.split;
            if let Some(f) = train {
                spec.train_fraction = *f;
            }
            if let Some(f) = validation {
                spec.validation_fraction = *f;
            }
            if let Some(f) = test {
                spec.test_fraction = *f;
            }
            if *no_stratify {
                spec.stratified = false;
            }
            let cfg = cfg.resolved();
            let ds = load(&cfg)?;
            let parts = split(&ds, &cfg.split)?;
            let dir = out_dir(&cfg)?;
            let mut text = String::new();
            let mut value = serde_json::Map::new();
            for (name, part) in [
                ("train", &parts.train),
                ("validation", &parts.validation),
                ("test", &parts.test),
            ] {
                let path = write(&dir, &format!("{name}.csv"), &table_bytes(part, Delimiter::Comma)?)?;
                text.push_str(&format!("{name}: {} rows -> {}\n", part.n_rows(), path.display()));
                value.insert(name.into(), serde_json::json!({ "rows": part.n_rows(), "path": path }));
            }
            emit(format, &text, value.into())
        }
        Command::Eda(input) => {
            apply_input(&mut cfg, input)?;
            let ds = load(&cfg)?;
            let stats = describe_table(&ds)?;
            let corr = correlation_table(&ds)?;
            let dir = out_dir(&cfg)?;
            write(&dir, "descriptive_stats.csv", stats.as_bytes())?;
            write(&dir, "correlation.csv", corr.as_bytes())?;
            emit(
                format,
                &format!("{stats}\n{corr}"),
                serde_json::json!({ "descriptive_stats": stats, "correlation": corr }),
            )
        }
        Command::Select {
            input,
            alpha,
            no_whitelist,
            max_features,
        } => {
            apply_input(&mut cfg, input)?;
            if let Some(a) = alpha {
                cfg.select.alpha = *a;
            }
            if *no_whitelist {
                cfg.select.clinical_whitelist = false;
            }
            if max_features.is_some() {
                cfg.select.max_features = *max_features;
            }
            let ds = load(&cfg)?;
            let whitelist = cfg.select.whitelist_names();
            let sel = select_features(&ds, cfg.select.alpha, Some(&whitelist), cfg.select.max_features)?;
            write(&out_dir(&cfg)?, "selection.txt", sel.to_table().as_bytes())?;
            emit(
                format,
                &sel.to_table(),
                serde_json::to_value(&sel).map_err(|e| Error::Serde(e.to_string()))?,
            )
        }
        Command::Train { input, model, features } => {
            apply_input(&mut cfg, input)?;
            let cfg = cfg.resolved();
            let ds = load(&cfg)?;
            let encoder = FeatureEncoder::fit(&ds, &features_or_all(&ds, features))?;
            let fitted = if model == "glm" {
                fit_glm(&encoder, &ds, None, &cfg.model)?
            } else {
                fit_gbt(&encoder, &ds, None, &cfg.model)?
            };
            save_fitted(&out_dir(&cfg)?, &fitted, format)
        }
        Command::Tune {
            input,
            validation,
            model,
            metric,
            features,
        } => {
            apply_input(&mut cfg, input)?;
            if let Some(m) = metric {
                cfg.model.tune_metric = m.parse::<TuneMetric>()?;
            }
            cfg.model.tune = true;
            let cfg = cfg.resolved();
            let train = load(&cfg)?;
            let val = load_path(&cfg, validation)?;
            let encoder = FeatureEncoder::fit(&train, &features_or_all(&train, features))?;
            let fitted = if model == "glm" {
                fit_glm(&encoder, &train, Some(&val), &cfg.model)?
            } else {
                fit_gbt(&encoder, &train, Some(&val), &cfg.model)?
            };
            save_fitted(&out_dir(&cfg)?, &fitted, format)
        }
        Command::Evaluate { model, input } => {
            apply_input(&mut cfg, input)?;
            let bundle = ModelBundle::load(model)?;
            let ds = load(&cfg)?;
            let eval = evaluate(&bundle, &ds)?;
            let dir = out_dir(&cfg)?;
            let kind = bundle.model.as_predictor().model_type().to_string();
            write(&dir, &format!("report_{kind}.txt"), eval.report.render().as_bytes())?;
            write(&dir, &format!("report_{kind}.json"), eval.report.to_json()?.as_bytes())?;
            write(&dir, &format!("predictions_{kind}.csv"), eval.predictions.as_bytes())?;
            emit(
                format,
                &eval.report.render(),
                serde_json::to_value(&eval.report).map_err(|e| Error::Serde(e.to_string()))?,
            )
        }
        Command::Explain {
            model,
            train,
            input,
            cases,
            n_cases,
            k,
            samples,
        } => {
            apply_input(&mut cfg, input)?;
            if let Some(k) = k {
                cfg.explain.lime.k_features = k.parse::<KFeatures>()?;
            }
            if let Some(s) = samples {
                cfg.explain.lime.n_samples = *s;
            }
            cfg.explain.n_cases = n_cases.unwrap_or(if cases.is_empty() { cfg.explain.n_cases } else { 0 });
            cfg.explain.case_ids.extend(cases.iter().copied());
            let cfg = cfg.resolved();
            cfg.explain.lime.validate()?;
            let bundle = ModelBundle::load(model)?;
            let train_ds = load_path(&cfg, train)?;
            let ds = load(&cfg)?;
            let disc = discretizer_for(&bundle, &train_ds)?;
            let rows = choose_cases(&ds, cfg.explain.n_cases, &cfg.explain.case_ids, cfg.explain.lime.seed)?;
            let explanations = explain_rows(&bundle, &disc, &ds, &rows, &cfg.explain.lime)?;
            let mut table = Vec::new();
            write_explanations(&explanations, &mut table, b',')?;
            let dir = out_dir(&cfg)?;
            write(&dir, "explanations.csv", &table)?;
            let text: String = explanations.iter().map(|e| e.render() + "\n").collect();
            write(&dir, "explanations.txt", text.as_bytes())?;
            emit(
                format,
                &text,
                serde_json::to_value(&explanations).map_err(|e| Error::Serde(e.to_string()))?,
            )
        }
        Command::Run {
            input,
            model,
            tune,
            paper_faithful,
        } => {
            if input.input.is_some() || input.label.is_some() || input.input_format.is_some() {
                apply_input(&mut cfg, input)?;
            }
            if let Some(m) = model {
                cfg.model.kind = m.parse()?;
            }
            if *tune {
                cfg.model.tune = true;
            }
            if *paper_faithful {
                cfg.impute.paper_faithful = true;
            }
            let manifest = run_pipeline(&cfg)?;
            let mut text = format!("run complete -> {}\n", cfg.output_dir.display());
            for m in &manifest.models {
                text.push_str(&format!(
                    "  {}: test accuracy {:.4}, kappa {:.4} ({})\n",
                    m.model_type, m.test_accuracy, m.kappa, m.report_file
                ));
            }
            if let Some(l) = &manifest.leakage {
                text.push_str(&format!(
                    "  leakage check: {}\n",
                    if l.passed { "passed" } else { "FAILED" }
                ));
            }
            emit(
                format,
                &text,
                serde_json::to_value(&manifest).map_err(|e| Error::Serde(e.to_string()))?,
            )
        }
        Command::Synth {
            n,
            missing_rate,
            correlation,
            prevalence,
            signal,
            psv,
        } => {
            let d = SynthSpec::default();
            let spec = SynthSpec {
                n: n.unwrap_or(d.n),
                missing_rate: missing_rate.unwrap_or(d.missing_rate),
                correlation: correlation.unwrap_or(d.correlation),
                prevalence: prevalence.unwrap_or(d.prevalence),
                signal: signal.unwrap_or(d.signal),
                seed: cfg.seed.unwrap_or(d.seed),
                ..d
            };
            let synth = generate_synthetic(&spec)?;
            let delim = if *psv { Delimiter::Pipe } else { Delimiter::Comma };
            let (data, truth) = write_synthetic(&synth, &out_dir(&cfg)?, "synthetic", delim)?;
            let text = format!(
                "wrote {} ({} rows, prevalence {:.4}, Bayes accuracy {:.4}, {:.4} from observed cells) and {}\n",
                data.display(),
                spec.n,
                synth.truth.empirical_prevalence,
                synth.truth.bayes_accuracy,
                synth.truth.observed_bayes_accuracy,
                truth.display()
            );
            emit(format, &text, serde_json::json!({ "data": data, "truth": truth }))
        }
        Command::Model {
            action: ModelAction::Inspect { model },
        } => {
            let bundle = ModelBundle::load(model)?;
            emit(
                format,
                &bundle.inspect(),
                serde_json::to_value(&bundle).map_err(|e| Error::Serde(e.to_string()))?,
            )
        }
    }
}
