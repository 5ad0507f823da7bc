//! Multiple imputation by chained equations.
//!
//! Each sweep visits the incomplete columns in ascending order of
//! missingness. A numeric column is regressed (ridge-stabilised least
//! squares) on the current values of every other feature column, and its
//! imputed cells are replaced by the predictions; a categorical column takes
//! its observed mode. Sweeps stop once no imputed numeric cell moves by more
//! than the tolerance. The label column never acts as a predictor, so the
//! fitted model can be applied to held-out rows without reading their labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, Dataset, Values};
use crate::error::{Error, Result};
use crate::linalg::{weighted_ridge, RidgeFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiceConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub ridge: f64,
    /// No residual noise; every completed dataset is identical.
    pub deterministic: bool,
    pub seed: u64,
    pub imputation_count: usize,
}

impl Default for MiceConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            tolerance: 1e-4,
            ridge: 1e-6,
            deterministic: true,
            seed: 0,
            imputation_count: 1,
        }
    }
}

impl MiceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::param("ridge", "must be non-negative"));
        }
        if self.imputation_count < 1 {
            return Err(Error::param("imputation_count", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnFit {
    Linear {
        column: String,
        /// Encoded predictor names (categoricals as `name=level`).
        predictors: Vec<String>,
        coefficients: Vec<f64>,
        intercept: f64,
        residual_sd: f64,
    },
    Mode {
        column: String,
        token: String,
    },
}

impl ColumnFit {
    pub fn column(&self) -> &str {
        match self {
            ColumnFit::Linear { column, .. } | ColumnFit::Mode { column, .. } => column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    /// Feature columns the model was fitted on, in table order.
    pub columns: Vec<String>,
    /// Incomplete columns, ascending by missing fraction.
    pub visit_order: Vec<String>,
    /// Starting value per column: observed mean, or the modal token.
    pub initial_fill: Vec<InitialFill>,
    /// Categorical level lists used to encode predictors.
    pub dictionaries: Vec<Vec<String>>,
    /// Final-sweep fit per `visit_order` entry.
    pub per_column_fit: Vec<ColumnFit>,
    pub imputed_counts: Vec<usize>,
    /// Last-sweep max change per `visit_order` entry (0 for categoricals).
    pub column_deltas: Vec<f64>,
    pub delta_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub final_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialFill {
    Mean { value: f64 },
    Mode { token: String },
}

impl ImputationModel {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Aligned per-column summary: cells imputed, final delta, sweeps.
    pub fn summary(&self) -> String {
        let width = self.visit_order.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!(
            "{:<width$}  {:>9}  {:>12}  {:>10}\n",
            "column", "imputed", "final_delta", "iterations"
        );
        for (i, name) in self.visit_order.iter().enumerate() {
            out.push_str(&format!(
                "{:<width$}  {:>9}  {:>12.3e}  {:>10}\n",
                name, self.imputed_counts[i], self.column_deltas[i], self.iterations_run
            ));
        }
        out.push_str(&format!(
            "converged: {}  sweeps: {}  final_delta: {:.3e}\n",
            self.converged, self.iterations_run, self.final_delta
        ));
        out
    }
}

/// Mean-fills numeric and mode-fills categorical cells (ties to the lowest
/// code). The result has no masked cells.
pub fn initial_fill(ds: &Dataset) -> Result<Dataset> {
    let columns = ds
        .columns()
        .iter()
        .map(|col| {
            if col.missing_count() == 0 {
                return Ok(col.clone());
            }
            if col.kind() == ColumnKind::Label {
                return Err(Error::column(col.name(), "label column has missing entries"));
            }
            let fill = fill_value(col)?;
            Ok(fill_constant(col, &fill))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.replace_columns(columns))
}

fn fill_value(col: &Column) -> Result<InitialFill> {
    match col.values() {
        Values::Numeric(_) => {
            let obs = col.observed_numeric();
            if obs.is_empty() {
                return Err(Error::column(col.name(), "no observed cells to impute from"));
            }
            Ok(InitialFill::Mean {
                value: obs.iter().sum::<f64>() / obs.len() as f64,
            })
        }
        Values::Codes(codes) => {
            let code = mode_code(codes, col.missing_mask(), col.meta().dictionary.len())
                .ok_or_else(|| Error::column(col.name(), "no observed cells to impute from"))?;
            Ok(InitialFill::Mode {
                token: col.meta().dictionary[code as usize].clone(),
            })
        }
    }
}

fn mode_code(codes: &[u32], missing: &[bool], levels: usize) -> Option<u32> {
    let mut counts = vec![0usize; levels];
    for (&c, &m) in codes.iter().zip(missing) {
        if !m {
            counts[c as usize] += 1;
        }
    }
    let best = counts.iter().copied().max().filter(|&b| b > 0)?;
    counts.iter().position(|&c| c == best).map(|p| p as u32)
}

fn fill_constant(col: &Column, fill: &InitialFill) -> Column {
    match (col.values(), fill) {
        (Values::Numeric(v), InitialFill::Mean { value }) => {
            let vals = v
                .iter()
                .zip(col.missing_mask())
                .map(|(&x, &m)| if m { *value } else { x })
                .collect();
            col.completed(Values::Numeric(vals), None)
        }
        (Values::Codes(c), InitialFill::Mode { token }) => {
            let mut dict = col.meta().dictionary.clone();
            let code = dict.iter().position(|d| d == token).unwrap_or_else(|| {
                dict.push(token.clone());
                dict.len() - 1
            }) as u32;
            let vals = c
                .iter()
                .zip(col.missing_mask())
                .map(|(&x, &m)| if m { code } else { x })
                .collect();
            col.completed(Values::Codes(vals), Some(dict))
        }
        _ => unreachable!("fill kind follows column kind"),
    }
}

/// Working copy of the feature columns: every cell as `f64`, categorical
/// codes expressed in the model's dictionaries (`levels` = unseen).
struct State {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    dictionaries: Vec<Vec<String>>,
    values: Vec<Vec<f64>>,
    missing: Vec<Vec<bool>>,
}

impl State {
    fn predictors(&self, target: usize) -> Vec<String> {
        let mut out = Vec::new();
        for j in (0..self.names.len()).filter(|&j| j != target) {
            match self.kinds[j] {
                ColumnKind::Categorical => {
                    out.extend(
                        self.dictionaries[j]
                            .iter()
                            .skip(1)
                            .map(|l| format!("{}={l}", self.names[j])),
                    );
                }
                _ => out.push(self.names[j].clone()),
            }
        }
        out
    }

    fn encode_row(&self, target: usize, row: usize, out: &mut Vec<f64>) {
        out.clear();
        for j in (0..self.names.len()).filter(|&j| j != target) {
            let v = self.values[j][row];
            match self.kinds[j] {
                ColumnKind::Categorical => {
                    let code = v as usize;
                    out.extend((1..self.dictionaries[j].len()).map(|l| if l == code { 1.0 } else { 0.0 }));
                }
                _ => out.push(v),
            }
        }
    }

    fn design(&self, target: usize, rows: impl Iterator<Item = usize>) -> Vec<Vec<f64>> {
        let mut buf = Vec::new();
        rows.map(|r| {
            self.encode_row(target, r, &mut buf);
            buf.clone()
        })
        .collect()
    }
}

fn feature_columns(ds: &Dataset) -> Vec<&Column> {
    ds.columns().iter().filter(|c| c.kind() != ColumnKind::Label).collect()
}

/// Runs chained-equation sweeps and returns `imputation_count` completed
/// datasets plus the fitted model. Observed cells are never altered.
pub fn mice_fit_transform(ds: &Dataset, cfg: &MiceConfig) -> Result<(Vec<Dataset>, ImputationModel)> {
    cfg.validate()?;
    if ds.n_columns() < 2 {
        return Err(Error::param("dataset", "imputation needs at least two columns"));
    }
    let cols = feature_columns(ds);
    let mut fills = Vec::with_capacity(cols.len());
    for col in &cols {
        fills.push(fill_value(col).or_else(|e| {
            if col.missing_count() == 0 {
                Ok(InitialFill::Mean { value: 0.0 })
            } else {
                Err(e)
            }
        })?);
    }
    let mut order: Vec<usize> = (0..cols.len()).filter(|&j| cols[j].missing_count() > 0).collect();
    order.sort_by(|&a, &b| {
        cols[a]
            .meta()
            .missing_fraction
            .total_cmp(&cols[b].meta().missing_fraction)
            .then(a.cmp(&b))
    });

    let chains = if cfg.deterministic { 1 } else { cfg.imputation_count };
    let mut completed = Vec::with_capacity(cfg.imputation_count);
    let mut model = None;
    for chain in 0..chains {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(chain as u64));
        let mut state = initial_state(&cols, &fills);
        let run = run_sweeps(&mut state, &order, cfg, &mut rng)?;
        completed.push(materialise(ds, &state));
        if model.is_none() {
            model = Some(ImputationModel {
                columns: state.names.clone(),
                visit_order: order.iter().map(|&j| state.names[j].clone()).collect(),
                initial_fill: fills.clone(),
                dictionaries: state.dictionaries.clone(),
                per_column_fit: run.fits,
                imputed_counts: order.iter().map(|&j| cols[j].missing_count()).collect(),
                column_deltas: run.column_deltas,
                delta_trace: run.trace,
                iterations_run: run.iterations,
                converged: run.converged,
                final_delta: run.final_delta,
            });
        }
    }
    while completed.len() < cfg.imputation_count {
        completed.push(completed[0].clone());
    }
    Ok((completed, model.expect("at least one chain")))
}

fn initial_state(cols: &[&Column], fills: &[InitialFill]) -> State {
    let mut state = State {
        names: cols.iter().map(|c| c.name().to_string()).collect(),
        kinds: cols.iter().map(|c| c.kind()).collect(),
        dictionaries: cols.iter().map(|c| c.meta().dictionary.clone()).collect(),
        values: Vec::with_capacity(cols.len()),
        missing: cols.iter().map(|c| c.missing_mask().to_vec()).collect(),
    };
    for (j, col) in cols.iter().enumerate() {
        let fill = match &fills[j] {
            InitialFill::Mean { value } => *value,
            InitialFill::Mode { token } => state.dictionaries[j].iter().position(|d| d == token).unwrap_or(0) as f64,
        };
        state
            .values
            .push((0..col.len()).map(|r| col.get(r).unwrap_or(fill)).collect());
    }
    state
}

struct SweepRun {
    fits: Vec<ColumnFit>,
    column_deltas: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    final_delta: f64,
}

fn run_sweeps(state: &mut State, order: &[usize], cfg: &MiceConfig, rng: &mut ChaCha8Rng) -> Result<SweepRun> {
    let mut run = SweepRun {
        fits: Vec::new(),
        column_deltas: vec![0.0; order.len()],
        trace: Vec::new(),
        iterations: 0,
        converged: true,
        final_delta: 0.0,
    };
    if order.is_empty() {
        return Ok(run);
    }
    run.converged = false;
    for _ in 0..cfg.max_iterations {
        run.iterations += 1;
        let mut fits = Vec::with_capacity(order.len());
        let mut sweep_delta = 0.0f64;
        for (slot, &j) in order.iter().enumerate() {
            let fit = fit_column(state, j, cfg.ridge)?;
            let noise = match &fit {
                ColumnFit::Linear { residual_sd, .. } if !cfg.deterministic && *residual_sd > 0.0 => {
                    Some(Normal::new(0.0, *residual_sd).expect("positive sd"))
                }
                _ => None,
            };
            let delta = apply_fit(state, j, &fit, |v| v + noise.map_or(0.0, |n| n.sample(&mut *rng)));
            run.column_deltas[slot] = delta;
            if state.kinds[j] == ColumnKind::Numeric {
                sweep_delta = sweep_delta.max(delta);
            }
            fits.push(fit);
        }
        run.fits = fits;
        run.trace.push(sweep_delta);
        run.final_delta = sweep_delta;
        if sweep_delta < cfg.tolerance {
            run.converged = true;
            break;
        }
    }
    Ok(run)
}

fn fit_column(state: &State, j: usize, ridge: f64) -> Result<ColumnFit> {
    let name = state.names[j].clone();
    if state.kinds[j] == ColumnKind::Categorical {
        let codes: Vec<u32> = state.values[j].iter().map(|&v| v as u32).collect();
        let levels = state.dictionaries[j].len() + 1;
        let code = mode_code(&codes, &state.missing[j], levels)
            .ok_or_else(|| Error::column(&name, "no observed cells to impute from"))?;
        return Ok(ColumnFit::Mode {
            column: name,
            token: state.dictionaries[j][code as usize].clone(),
        });
    }
    let observed: Vec<usize> = (0..state.values[j].len()).filter(|&r| !state.missing[j][r]).collect();
    let x = state.design(j, observed.iter().copied());
    let y: Vec<f64> = observed.iter().map(|&r| state.values[j][r]).collect();
    let RidgeFit {
        coefficients,
        intercept,
    } = weighted_ridge(&x, &y, None, ridge).ok_or_else(|| Error::SingularRegression(name.clone()))?;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(row, &t)| (t - intercept - crate::linalg::dot(&coefficients, row)).powi(2))
        .sum();
    let dof = (y.len() as f64 - coefficients.len() as f64 - 1.0).max(1.0);
    if coefficients.iter().any(|c| !c.is_finite()) || !intercept.is_finite() {
        return Err(Error::SingularRegression(name));
    }
    Ok(ColumnFit::Linear {
        column: name,
        predictors: state.predictors(j),
        coefficients,
        intercept,
        residual_sd: (rss / dof).sqrt(),
    })
}

/// Overwrites the imputed cells of column `j`; returns the max change.
fn apply_fit(state: &mut State, j: usize, fit: &ColumnFit, perturb: impl FnMut(f64) -> f64) -> f64 {
    let mut perturb = perturb;
    let rows: Vec<usize> = (0..state.values[j].len()).filter(|&r| state.missing[j][r]).collect();
    let new: Vec<f64> = match fit {
        ColumnFit::Linear {
            coefficients,
            intercept,
            ..
        } => {
            let x = state.design(j, rows.iter().copied());
            x.iter()
                .map(|row| perturb(intercept + crate::linalg::dot(coefficients, row)))
                .collect()
        }
        ColumnFit::Mode { token, .. } => {
            let code = state.dictionaries[j].iter().position(|d| d == token).unwrap_or(0) as f64;
            vec![code; rows.len()]
        }
    };
    let mut delta = 0.0f64;
    for (&r, v) in rows.iter().zip(new) {
        delta = delta.max((v - state.values[j][r]).abs());
        state.values[j][r] = v;
    }
    delta
}

fn materialise(ds: &Dataset, state: &State) -> Dataset {
    let columns = ds
        .columns()
        .iter()
        .map(|col| {
            let Some(j) = state.names.iter().position(|n| n == col.name()) else {
                return col.clone();
            };
            if col.missing_count() == 0 {
                return col.clone();
            }
            match col.values() {
                Values::Numeric(_) => col.completed(Values::Numeric(state.values[j].clone()), None),
                Values::Codes(orig) => {
                    // State codes are in the model dictionary; map back by token.
                    let mut dict = col.meta().dictionary.clone();
                    let codes = orig
                        .iter()
                        .enumerate()
                        .map(|(r, &c)| {
                            if !col.is_missing(r) {
                                return c;
                            }
                            let token = &state.dictionaries[j][state.values[j][r] as usize];
                            dict.iter().position(|d| d == token).unwrap_or_else(|| {
                                dict.push(token.clone());
                                dict.len() - 1
                            }) as u32
                        })
                        .collect();
                    col.completed(Values::Codes(codes), Some(dict))
                }
            }
        })
        .collect();
    ds.replace_columns(columns)
}

/// One pass over `ds` with the frozen fits of `model`: masked cells start
/// from the model's fill values and are then predicted in visit order.
/// Incomplete columns that were complete at fit time keep the fill value.
pub fn apply_imputation(model: &ImputationModel, ds: &Dataset) -> Result<Dataset> {
    let cols = feature_columns(ds);
    let mut names: Vec<&str> = cols.iter().map(|c| c.name()).collect();
    let mut expected: Vec<&str> = model.columns.iter().map(String::as_str).collect();
    names.sort_unstable();
    expected.sort_unstable();
    if names != expected {
        return Err(Error::param(
            "columns",
            format!("dataset columns {names:?} do not match imputation model {expected:?}"),
        ));
    }
    let mut state = State {
        names: model.columns.clone(),
        kinds: Vec::new(),
        dictionaries: model.dictionaries.clone(),
        values: Vec::new(),
        missing: Vec::new(),
    };
    for (j, name) in model.columns.iter().enumerate() {
        let col = ds.require(name)?;
        state.kinds.push(col.kind());
        state.missing.push(col.missing_mask().to_vec());
        let dict = &model.dictionaries[j];
        let fill = &model.initial_fill[j];
        let values = (0..col.len())
            .map(|r| match (col.get(r), fill) {
                (None, InitialFill::Mean { value }) => Ok(*value),
                (None, InitialFill::Mode { token }) => Ok(dict.iter().position(|d| d == token).unwrap_or(0) as f64),
                (Some(v), _) if col.kind() == ColumnKind::Categorical => {
                    let token = &col.meta().dictionary[v as usize];
                    Ok(dict.iter().position(|d| d == token).unwrap_or(dict.len()) as f64)
                }
                (Some(v), _) => Ok(v),
            })
            .collect::<Result<Vec<f64>>>()?;
        state.values.push(values);
    }
    for fit in &model.per_column_fit {
        let j = state
            .names
            .iter()
            .position(|n| n == fit.column())
            .expect("fit columns belong to the model");
        apply_fit(&mut state, j, fit, |v| v);
    }
    Ok(materialise(ds, &state))
}
