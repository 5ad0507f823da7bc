//! Logistic regression fitted by iteratively reweighted least squares, i.e.
//! Newton's method on the ridge-penalised log-likelihood. The intercept is
//! never penalised.

use serde::{Deserialize, Serialize};

use super::{clamp_prob, log1p_exp, sigmoid, Predictor};
use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlmConfig {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-4,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
    pub ridge: f64,
}

/// Penalised log-likelihood
/// `sum_i [y_i eta_i - ln(1 + e^eta_i)] - ridge/2 |b|^2` over parameters
/// laid out as `[intercept, b_1, .., b_p]`.
pub struct GlmObjective<'a> {
    pub x: &'a Matrix,
    pub y: &'a [u8],
    pub ridge: f64,
}

impl GlmObjective<'_> {
    fn eta(&self, params: &[f64], i: usize) -> f64 {
        params[0] + dot(&params[1..], self.x.row(i))
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let ll: f64 = (0..self.x.n_rows())
            .map(|i| {
                let eta = self.eta(params, i);
                f64::from(self.y[i]) * eta - log1p_exp(eta)
            })
            .sum();
        ll - 0.5 * self.ridge * params[1..].iter().map(|b| b * b).sum::<f64>()
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; params.len()];
        for i in 0..self.x.n_rows() {
            let r = f64::from(self.y[i]) - sigmoid(self.eta(params, i));
            g[0] += r;
            for (gj, &xj) in g[1..].iter_mut().zip(self.x.row(i)) {
                *gj += r * xj;
            }
        }
        for (gj, &b) in g[1..].iter_mut().zip(&params[1..]) {
            *gj -= self.ridge * b;
        }
        g
    }

    /// Negative Hessian `X' W X + ridge * I` (intercept block unpenalised).
    fn information(&self, params: &[f64]) -> Vec<f64> {
        let k = params.len();
        let mut h = vec![0.0; k * k];
        let mut z = vec![0.0; k];
        z[0] = 1.0;
        for i in 0..self.x.n_rows() {
            let p = sigmoid(self.eta(params, i));
            let w = p * (1.0 - p);
            if w == 0.0 {
                continue;
            }
            z[1..].copy_from_slice(self.x.row(i));
            for a in 0..k {
                let wa = w * z[a];
                for b in 0..=a {
                    h[a * k + b] += wa * z[b];
                }
            }
        }
        for a in 0..k {
            if a > 0 {
                h[a * k + a] += self.ridge;
            }
            for b in 0..a {
                h[b * k + a] = h[a * k + b];
            }
        }
        h
    }
}

/// Fits `P(y = 1 | x) = logistic(intercept + coefficients . x)`.
pub fn glm_fit(x: &Matrix, y: &[u8], cfg: &GlmConfig) -> Result<GlmModel> {
    if x.n_rows() != y.len() || y.is_empty() {
        return Err(Error::LengthMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    if !(cfg.ridge >= 0.0) || !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::param("glm", "need ridge >= 0, tol > 0, max_iter >= 1"));
    }
    let obj = GlmObjective { x, y, ridge: cfg.ridge };
    let mut params = vec![0.0; x.n_cols() + 1];
    let mut current = obj.value(&params);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        let grad = obj.gradient(&params);
        let info = obj.information(&params);
        let step = cholesky_solve(&info, &grad)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(Error::NonFiniteUpdate { iteration: it })?;
        // Newton step with halving until the objective does not decrease.
        let mut scale = 1.0;
        let mut next: Vec<f64>;
        loop {
            next = params.iter().zip(&step).map(|(p, s)| p + scale * s).collect();
            let v = obj.value(&next);
            if v.is_finite() && v >= current - 1e-12 * current.abs().max(1.0) {
                current = v;
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Err(Error::NonFiniteUpdate { iteration: it });
            }
        }
        let change = step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max);
        params = next;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteUpdate { iteration: it });
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(GlmModel {
        feature_names: x.names().to_vec(),
        intercept: params[0],
        coefficients: params[1..].to_vec(),
        converged,
        iterations,
        ridge: cfg.ridge,
    })
}

pub fn glm_predict_proba(model: &GlmModel, row: &[f64]) -> Result<f64> {
    if row.len() != model.coefficients.len() {
        return Err(Error::LengthMismatch {
            expected: model.coefficients.len(),
            found: row.len(),
        });
    }
    if let Some(j) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::MissingInput(model.feature_names[j].clone()));
    }
    Ok(clamp_prob(sigmoid(model.intercept + dot(&model.coefficients, row))))
}

impl GlmModel {
    pub fn params(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.coefficients.iter().copied())
            .collect()
    }
}

impl Predictor for GlmModel {
    fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        glm_predict_proba(self, row)
    }

    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn model_type(&self) -> &str {
        "glm"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Matrix {
        Matrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn intercept_only_is_logit_of_mean() {
        let x = Matrix::new(4, 0, vec![]).unwrap();
        let m = glm_fit(
            &x,
            &[1, 1, 1, 0],
            &GlmConfig {
                ridge: 0.0,
                ..GlmConfig::default()
            },
        )
        .unwrap();
        assert!((m.intercept - 3f64.ln()).abs() < 1e-9);
        assert!((m.predict_proba(&[]).unwrap() - 0.75).abs() < 1e-9);
        assert!(m.converged);
    }

    #[test]
    fn symmetric_design_has_zero_intercept() {
        let x = column(&[-2.0, -1.0, 1.0, 2.0, -0.5, 0.5]);
        let y = [0, 1, 0, 1, 1, 0];
        let m = glm_fit(&x, &y, &GlmConfig::default()).unwrap();
        assert!(m.intercept.abs() < 1e-6);
    }

    #[test]
    fn separable_data_needs_ridge() {
        let x = column(&[0.0, 1.0]);
        let y = [0, 1];
        assert!(matches!(
            glm_fit(
                &x,
                &y,
                &GlmConfig {
                    ridge: 0.0,
                    ..GlmConfig::default()
                }
            ),
            Err(Error::NonFiniteUpdate { .. })
        ));
        let cfg = GlmConfig {
            ridge: 1e-2,
            ..GlmConfig::default()
        };
        let m = glm_fit(&x, &y, &cfg).unwrap();
        assert!(m.coefficients[0].is_finite() && m.intercept.is_finite());
        // No point of a coarse grid beats the fitted optimum.
        let obj = GlmObjective {
            x: &x,
            y: &y,
            ridge: cfg.ridge,
        };
        let best = obj.value(&m.params());
        for i in 0..21 {
            for j in 0..21 {
                let b0 = -20.0 + 2.0 * i as f64;
                let b1 = -20.0 + 4.0 * j as f64;
                assert!(obj.value(&[b0, b1]) <= best + 1e-9);
            }
        }
    }

    #[test]
    fn prediction_contract() {
        let m = GlmModel {
            feature_names: vec!["a".into()],
            coefficients: vec![0.0],
            intercept: 0.0,
            converged: true,
            iterations: 0,
            ridge: 0.0,
        };
        assert_eq!(glm_predict_proba(&m, &[3.0]).unwrap(), 0.5);
        assert!(glm_predict_proba(&m, &[1.0, 2.0]).is_err());
        assert!(matches!(
            glm_predict_proba(&m, &[f64::NAN]),
            Err(Error::MissingInput(_))
        ));
        let pos = GlmModel {
            coefficients: vec![0.7],
            ..m
        };
        let mut last = 0.0;
        for v in -10..10 {
            let p = glm_predict_proba(&pos, &[v as f64]).unwrap();
            assert!(p >= last);
            last = p;
        }
    }
}
