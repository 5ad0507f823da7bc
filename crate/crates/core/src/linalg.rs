//! Small dense solvers. Matrices are row-major `Vec<f64>` of size `n * n`.

/// Solves `a x = b` for symmetric positive-definite `a` by Cholesky
/// factorisation. Returns `None` when a pivot is not strictly positive.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// Weighted ridge regression with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, row)
    }
}

/// Minimises `sum_i w_i (y_i - b0 - x_i . b)^2 + ridge * |b|^2`.
///
/// `rows` yields the predictor row for each observation; `weights == None`
/// means unit weights. The problem is solved on weighted-mean-centred data so
/// the intercept is never shrunk.
pub fn weighted_ridge(rows: &[Vec<f64>], y: &[f64], weights: Option<&[f64]>, ridge: f64) -> Option<RidgeFit> {
    let n = y.len();
    let p = rows.first().map_or(0, Vec::len);
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total_w: f64 = (0..n).map(w).sum();
    if !(total_w > 0.0) {
        return None;
    }
    let mut x_mean = vec![0.0; p];
    let mut y_mean = 0.0;
    for i in 0..n {
        let wi = w(i);
        y_mean += wi * y[i];
        for (m, &v) in x_mean.iter_mut().zip(&rows[i]) {
            *m += wi * v;
        }
    }
    y_mean /= total_w;
    x_mean.iter_mut().for_each(|m| *m /= total_w);
    if p == 0 {
        return Some(RidgeFit {
            coefficients: Vec::new(),
            intercept: y_mean,
        });
    }
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut centred = vec![0.0; p];
    for i in 0..n {
        let wi = w(i);
        if wi == 0.0 {
            continue;
        }
        for (c, (&v, &m)) in centred.iter_mut().zip(rows[i].iter().zip(&x_mean)) {
            *c = v - m;
        }
        let dy = y[i] - y_mean;
        for a in 0..p {
            let wa = wi * centred[a];
            rhs[a] += wa * dy;
            for b in 0..=a {
                gram[a * p + b] += wa * centred[b];
            }
        }
    }
    for a in 0..p {
        gram[a * p + a] += ridge;
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }
    let coefficients = cholesky_solve(&gram, &rhs)?;
    let intercept = y_mean - dot(&coefficients, &x_mean);
    Some(RidgeFit {
        coefficients,
        intercept,
    })
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
