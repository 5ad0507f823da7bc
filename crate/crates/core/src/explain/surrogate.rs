use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;

/// Weighted linear fit on a subset of interpretable features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    /// Feature indices in selection order.
    pub selected: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Weighted R² clamped to `[0, 1]`.
    pub r2: f64,
    pub r2_raw: f64,
}

impl Surrogate {
    /// Surrogate output at the all-ones interpretable vector.
    pub fn prediction_at_case(&self) -> f64 {
        self.intercept + self.coefficients.iter().sum::<f64>()
    }
}

/// Weighted, centred cross products.
struct Moments {
    d: usize,
    means: Vec<f64>,
    y_mean: f64,
    sxx: Vec<f64>,
    sxy: Vec<f64>,
    syy: f64,
    /// Scale used to decide that `syy` is zero.
    y_scale: f64,
}

impl Moments {
    fn new(z: &Matrix, y: &[f64], w: &[f64]) -> Self {
        let d = z.n_cols();
        let total: f64 = w.iter().sum();
        let mut means = vec![0.0; d];
        let mut y_mean = 0.0;
        for (i, row) in z.rows().enumerate() {
            for (m, &x) in means.iter_mut().zip(row) {
                *m += w[i] * x;
            }
            y_mean += w[i] * y[i];
        }
        means.iter_mut().for_each(|m| *m /= total);
        y_mean /= total;
        let mut sxx = vec![0.0; d * d];
        let mut sxy = vec![0.0; d];
        let mut syy = 0.0;
        let mut y_scale = 0.0;
        let mut centred = vec![0.0; d];
        for (i, row) in z.rows().enumerate() {
            for ((c, &x), &m) in centred.iter_mut().zip(row).zip(&means) {
                *c = x - m;
            }
            let dy = y[i] - y_mean;
            for a in 0..d {
                let wa = w[i] * centred[a];
                sxy[a] += wa * dy;
                for b in 0..=a {
                    sxx[a * d + b] += wa * centred[b];
                }
            }
            syy += w[i] * dy * dy;
            y_scale += w[i] * y[i] * y[i];
        }
        for a in 0..d {
            for b in 0..a {
                sxx[b * d + a] = sxx[a * d + b];
            }
        }
        Self {
            d,
            means,
            y_mean,
            sxx,
            sxy,
            syy,
            y_scale,
        }
    }

    /// Ridge solution on `subset` and its weighted residual sum of squares.
    fn solve(&self, subset: &[usize], ridge: f64) -> Result<(Vec<f64>, f64)> {
        let k = subset.len();
        let mut a = vec![0.0; k * k];
        let mut c = vec![0.0; k];
        for (p, &i) in subset.iter().enumerate() {
            c[p] = self.sxy[i];
            for (q, &j) in subset.iter().enumerate() {
                a[p * k + q] = self.sxx[i * self.d + j];
            }
            a[p * k + p] += ridge;
        }
        let b = cholesky_solve(&a, &c)
            .ok_or_else(|| Error::SingularRegression("surrogate normal equations are not positive definite".into()))?;
        let mut rss = self.syy;
        for p in 0..k {
            rss -= 2.0 * b[p] * c[p];
            for q in 0..k {
                rss += b[p] * (a[p * k + q] - if p == q { ridge } else { 0.0 }) * b[q];
            }
        }
        Ok((b, rss.max(0.0)))
    }

    fn r2(&self, rss: f64) -> f64 {
        if self.syy <= f64::EPSILON * f64::EPSILON * self.y_scale || self.syy == 0.0 {
            0.0
        } else {
            1.0 - rss / self.syy
        }
    }
}

/// Forward selection of `k` columns by weighted residual reduction, then a
/// weighted ridge fit on them with an unpenalised intercept. Weights are
/// rescaled to mean one, so multiplying them by a constant changes nothing.
pub fn fit_surrogate(z: &Matrix, y: &[f64], weights: &[f64], k: usize, ridge: f64) -> Result<Surrogate> {
    let n = z.n_rows();
    if y.len() != n || weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: if y.len() != n { y.len() } else { weights.len() },
        });
    }
    if k == 0 || k > z.n_cols() {
        return Err(Error::param("k_features", format!("{k} is outside 1..={}", z.n_cols())));
    }
    if !(ridge >= 0.0) {
        return Err(Error::param("surrogate_ridge", "must be >= 0"));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::param("weights", "must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::param("weights", "must not all be zero"));
    }
    let mean = total / n as f64;
    let w: Vec<f64> = weights.iter().map(|v| v / mean).collect();
    let m = Moments::new(z, y, &w);

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut fit = (Vec::new(), m.syy);
    while selected.len() < k {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for j in (0..m.d).filter(|j| !selected.contains(j)) {
            let mut trial = selected.clone();
            trial.push(j);
            let (b, rss) = m.solve(&trial, ridge)?;
            if best.as_ref().is_none_or(|(_, _, r)| rss < *r) {
                best = Some((j, b, rss));
            }
        }
        let (j, b, rss) = best.expect("candidates remain while selected.len() < k <= d");
        selected.push(j);
        fit = (b, rss);
    }
    let (coefficients, rss) = fit;
    let intercept = m.y_mean
        - selected
            .iter()
            .zip(&coefficients)
            .map(|(&j, b)| b * m.means[j])
            .sum::<f64>();
    let r2_raw = m.r2(rss);
    Ok(Surrogate {
        selected,
        coefficients,
        intercept,
        r2: r2_raw.clamp(0.0, 1.0),
        r2_raw,
    })
}
