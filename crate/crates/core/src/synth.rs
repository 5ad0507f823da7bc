//! Seeded synthetic vitals/labs with a known logistic ground truth, for
//! demos and oracle tests.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{write_table, Column, Dataset, Delimiter};
use crate::error::{Error, Result};
use crate::models::sigmoid;

pub const LABEL_COLUMN: &str = "SepsisLabel";

/// Numeric features: name, mean, standard deviation and default logit
/// weight per standard deviation.
const NUMERIC: [(&str, f64, f64, f64); 9] = [
    ("HR", 85.0, 15.0, 2.8),
    ("O2Sat", 96.5, 2.5, -2.0),
    ("Temp", 37.0, 0.7, 1.8),
    ("SBP", 120.0, 18.0, -1.2),
    ("MAP", 82.0, 12.0, -1.6),
    ("Resp", 18.5, 4.0, 2.4),
    ("Age", 62.0, 16.0, 1.0),
    ("WBC", 10.5, 4.0, 2.0),
    ("Lactate", 2.0, 1.0, 3.2),
];

const CATEGORICAL: &str = "Gender";
const GENDER_LEVELS: [&str; 2] = ["F", "M"];
const GENDER_WEIGHT: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n: usize,
    /// Number of numeric features taken from the built-in list (at most 9),
    /// plus one binary categorical.
    pub numeric_features: usize,
    pub include_categorical: bool,
    /// Equicorrelation of the numeric features on the standardised scale.
    pub correlation: f64,
    /// Fraction of feature cells masked completely at random.
    pub missing_rate: f64,
    /// Target positive rate; the intercept is solved for it.
    pub prevalence: f64,
    /// Multiplies every logit weight.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            numeric_features: 9,
            include_categorical: true,
            correlation: 0.5,
            missing_rate: 0.10,
            prevalence: 0.5,
            signal: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::param("n", "must be at least 10"));
        }
        if self.numeric_features == 0 || self.numeric_features > NUMERIC.len() {
            return Err(Error::param(
                "numeric_features",
                format!("must lie in 1..={}", NUMERIC.len()),
            ));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::param("correlation", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::param("missing_rate", "must lie in [0, 1)"));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::param("prevalence", "must lie in (0, 1)"));
        }
        if !(self.signal >= 0.0) || !self.signal.is_finite() {
            return Err(Error::param("signal", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTruth {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Logit weight per standard deviation.
    pub weight_std: f64,
    /// Logit weight per raw unit.
    pub weight_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub label_column: String,
    /// Intercept on the standardised scale.
    pub intercept_std: f64,
    /// Intercept on the raw scale (with `Gender = F`).
    pub intercept_raw: f64,
    pub features: Vec<FeatureTruth>,
    pub categorical: Option<(String, Vec<String>, f64)>,
    pub empirical_prevalence: f64,
    /// Mean of `max(p, 1 - p)` under the true probabilities: the expected
    /// accuracy of the Bayes classifier on this sample.
    pub bayes_accuracy: f64,
    /// The same bound when the classifier only sees the unmasked cells:
    /// masked features are integrated out under the generating Gaussian.
    /// Uses the probit approximation to the logistic-normal mean.
    pub observed_bayes_accuracy: f64,
    pub masked_cells: usize,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    /// Table with MCAR masks applied.
    pub dataset: Dataset,
    /// The same table before masking.
    pub complete: Dataset,
    /// True positive-class probability per row.
    pub probabilities: Vec<f64>,
    pub truth: GroundTruth,
}

/// `E[sigmoid(X)]` for `X ~ N(mean, var)`.
fn logistic_normal_mean(mean: f64, var: f64) -> f64 {
    sigmoid(mean / (1.0 + std::f64::consts::PI * var / 8.0).sqrt())
}

/// Posterior positive probability given only the observed cells of row `i`.
struct ObservedPosterior<'a> {
    z: &'a [f64],
    gender: &'a [u32],
    weights: &'a [f64],
    gender_weight: f64,
    intercept: f64,
    rho: f64,
}

impl ObservedPosterior<'_> {
    fn at(&self, i: usize, numeric_mask: &[&[bool]], gender_mask: Option<&[bool]>) -> f64 {
        let d = self.weights.len();
        let row = &self.z[i * d..(i + 1) * d];
        let (mut sum_obs, mut k, mut lin) = (0.0, 0usize, self.intercept);
        let (mut w_miss_sq, mut w_miss_sum) = (0.0, 0.0);
        for j in 0..d {
            if numeric_mask[j][i] {
                w_miss_sq += self.weights[j] * self.weights[j];
                w_miss_sum += self.weights[j];
            } else {
                sum_obs += row[j];
                k += 1;
                lin += self.weights[j] * row[j];
            }
        }
        let rho = self.rho;
        let denom = 1.0 - rho + k as f64 * rho;
        let cond_mean = if k == 0 { 0.0 } else { rho * sum_obs / denom };
        let shrink = if k == 0 {
            rho
        } else {
            rho - rho * rho * k as f64 / denom
        };
        let mean = lin + w_miss_sum * cond_mean;
        let var = (1.0 - rho) * w_miss_sq + shrink * w_miss_sum * w_miss_sum;
        match gender_mask {
            Some(m) if m[i] => {
                0.5 * (logistic_normal_mean(mean, var) + logistic_normal_mean(mean + self.gender_weight, var))
            }
            _ => logistic_normal_mean(mean + self.gender_weight * f64::from(self.gender[i]), var),
        }
    }
}

/// Intercept such that the mean true probability equals `target`.
fn solve_intercept(eta: &[f64], target: f64) -> f64 {
    let mean_p = |b: f64| eta.iter().map(|e| sigmoid(b + e)).sum::<f64>() / eta.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let d = spec.numeric_features;
    let shared = spec.correlation.sqrt();
    let own = (1.0 - spec.correlation).sqrt();
    let mut z = vec![0.0; n * d];
    let mut gender = vec![0u32; n];
    for i in 0..n {
        let common: f64 = StandardNormal.sample(&mut rng);
        for j in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            z[i * d + j] = shared * common + own * e;
        }
        gender[i] = u32::from(rng.random_bool(0.5));
    }
    let weights: Vec<f64> = NUMERIC[..d].iter().map(|f| f.3 * spec.signal).collect();
    let gender_weight = if spec.include_categorical {
        GENDER_WEIGHT * spec.signal
    } else {
        0.0
    };
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            let lin: f64 = (0..d).map(|j| weights[j] * z[i * d + j]).sum();
            lin + gender_weight * f64::from(gender[i])
        })
        .collect();
    let intercept_std = solve_intercept(&eta, spec.prevalence);
    let probabilities: Vec<f64> = eta.iter().map(|e| sigmoid(intercept_std + e)).collect();
    let labels: Vec<u8> = probabilities
        .iter()
        .map(|&p| u8::from(rng.random::<f64>() < p))
        .collect();

    let mut columns = Vec::with_capacity(d + 2);
    let mut complete = Vec::with_capacity(d + 2);
    let mut masked_cells = 0;
    let mut mask_column = |rng: &mut ChaCha8Rng| -> Vec<bool> {
        let m: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < spec.missing_rate).collect();
        masked_cells += m.iter().filter(|&&b| b).count();
        m
    };
    let mut features = Vec::with_capacity(d);
    let mut numeric_masks = Vec::with_capacity(d);
    for (j, &(name, mean, sd, _)) in NUMERIC[..d].iter().enumerate() {
        let raw: Vec<f64> = (0..n).map(|i| mean + sd * z[i * d + j]).collect();
        let mask = mask_column(&mut rng);
        complete.push(Column::numeric(name, raw.iter().map(|&v| Some(v)).collect()));
        columns.push(Column::numeric(
            name,
            raw.iter().zip(&mask).map(|(&v, &m)| (!m).then_some(v)).collect(),
        ));
        numeric_masks.push(mask);
        features.push(FeatureTruth {
            name: name.to_string(),
            mean,
            sd,
            weight_std: weights[j],
            weight_raw: weights[j] / sd,
        });
    }
    let mut categorical = None;
    let mut gender_mask = None;
    if spec.include_categorical {
        let tokens: Vec<&str> = gender.iter().map(|&g| GENDER_LEVELS[g as usize]).collect();
        let mask = mask_column(&mut rng);
        complete.push(Column::categorical(
            CATEGORICAL,
            tokens.iter().map(|t| Some(*t)).collect(),
        ));
        columns.push(Column::categorical(
            CATEGORICAL,
            tokens.iter().zip(&mask).map(|(t, &m)| (!m).then_some(*t)).collect(),
        ));
        gender_mask = Some(mask);
        categorical = Some((
            CATEGORICAL.to_string(),
            GENDER_LEVELS.iter().map(|s| s.to_string()).collect(),
            gender_weight,
        ));
    }
    columns.push(Column::label(LABEL_COLUMN, labels.clone())?);
    complete.push(Column::label(LABEL_COLUMN, labels.clone())?);

    let intercept_raw = intercept_std - features.iter().map(|f| f.weight_raw * f.mean).sum::<f64>();
    let posterior = ObservedPosterior {
        z: &z,
        gender: &gender,
        weights: &weights,
        gender_weight,
        intercept: intercept_std,
        rho: spec.correlation,
    };
    let mask_refs: Vec<&[bool]> = numeric_masks.iter().map(Vec::as_slice).collect();
    let observed_bayes_accuracy = (0..n)
        .map(|i| {
            let q = posterior.at(i, &mask_refs, gender_mask.as_deref());
            q.max(1.0 - q)
        })
        .sum::<f64>()
        / n as f64;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let truth = GroundTruth {
        spec: spec.clone(),
        label_column: LABEL_COLUMN.to_string(),
        intercept_std,
        intercept_raw,
        features,
        categorical,
        empirical_prevalence: positives as f64 / n as f64,
        bayes_accuracy: probabilities.iter().map(|&p| p.max(1.0 - p)).sum::<f64>() / n as f64,
        observed_bayes_accuracy,
        masked_cells,
    };
    Ok(Synthetic {
        dataset: Dataset::new(columns, Some(LABEL_COLUMN))?,
        complete: Dataset::new(complete, Some(LABEL_COLUMN))?,
        probabilities,
        truth,
    })
}

/// Writes `<stem>.<csv|psv>` and `<stem>_truth.json` into `dir`; returns
/// both paths.
pub fn write_synthetic(synth: &Synthetic, dir: &Path, stem: &str, delimiter: Delimiter) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match delimiter {
        Delimiter::Comma => "csv",
        Delimiter::Pipe => "psv",
    };
    let data_path = dir.join(format!("{stem}.{ext}"));
    let file = std::fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    write_table(&synth.dataset, std::io::BufWriter::new(file), delimiter)?;
    let truth_path = dir.join(format!("{stem}_truth.json"));
    let json = serde_json::to_string_pretty(&synth.truth).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&truth_path, json + "\n").map_err(|e| Error::io(&truth_path, e))?;
    Ok((data_path, truth_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_missingness_means_no_masks() {
        let s = generate_synthetic(&SynthSpec {
            missing_rate: 0.0,
            n: 200,
            ..SynthSpec::default()
        })
        .unwrap();
        assert!(!s.dataset.has_missing());
        assert_eq!(s.truth.masked_cells, 0);
        assert_eq!(s.dataset, s.complete);
    }

    #[test]
    fn prevalence_is_calibrated() {
        let s = generate_synthetic(&SynthSpec {
            n: 10_000,
            seed: 3,
            ..SynthSpec::default()
        })
        .unwrap();
        let prev = s.truth.empirical_prevalence;
        assert!((0.48..=0.52).contains(&prev), "{prev}");
        let mean_p = s.probabilities.iter().sum::<f64>() / 10_000.0;
        assert!((mean_p - 0.5).abs() < 1e-9);
        assert!(s.truth.bayes_accuracy > 0.85);
    }

    #[test]
    fn observed_bound_matches_monte_carlo_and_full_data() {
        let full = generate_synthetic(&SynthSpec {
            missing_rate: 0.0,
            n: 500,
            ..SynthSpec::default()
        })
        .unwrap();
        assert!((full.truth.observed_bayes_accuracy - full.truth.bayes_accuracy).abs() < 1e-12);

        // Monte Carlo over the masked cells for a handful of rows.
        let s = generate_synthetic(&SynthSpec {
            n: 400,
            missing_rate: 0.4,
            include_categorical: false,
            seed: 8,
            ..SynthSpec::default()
        })
        .unwrap();
        let rho = s.truth.spec.correlation;
        let names: Vec<&str> = s.truth.features.iter().map(|f| f.name.as_str()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..20 {
            let obs: Vec<Option<f64>> = names
                .iter()
                .zip(&s.truth.features)
                .map(|(n, f)| s.dataset.column(n).unwrap().get(i).map(|v| (v - f.mean) / f.sd))
                .collect();
            // Rejection-free draw: sample the common factor given the observed cells.
            let k = obs.iter().flatten().count() as f64;
            let sum: f64 = obs.iter().flatten().sum();
            let (post_mean, post_var) = if k == 0.0 {
                (0.0, 1.0)
            } else {
                let prec = 1.0 + k * rho / (1.0 - rho);
                (rho.sqrt() * sum / (1.0 - rho) / prec, 1.0 / prec)
            };
            let draws = 40_000;
            let mut acc = 0.0;
            for _ in 0..draws {
                let u: f64 = StandardNormal.sample(&mut rng);
                let c = post_mean + post_var.sqrt() * u;
                let mut eta = s.truth.intercept_std;
                for (j, f) in s.truth.features.iter().enumerate() {
                    let zj = obs[j].unwrap_or_else(|| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        rho.sqrt() * c + (1.0 - rho).sqrt() * e
                    });
                    eta += f.weight_std * zj;
                }
                acc += sigmoid(eta);
            }
            let mc = acc / draws as f64;
            let mask_rows: Vec<Vec<bool>> = names
                .iter()
                .map(|n| s.dataset.column(n).unwrap().missing_mask().to_vec())
                .collect();
            let refs: Vec<&[bool]> = mask_rows.iter().map(Vec::as_slice).collect();
            let complete = &s.complete;
            let z: Vec<f64> = (0..s.truth.spec.n)
                .flat_map(|r| {
                    names
                        .iter()
                        .zip(&s.truth.features)
                        .map(move |(n, f)| (complete.column(n).unwrap().get(r).unwrap() - f.mean) / f.sd)
                })
                .collect();
            let weights: Vec<f64> = s.truth.features.iter().map(|f| f.weight_std).collect();
            let post = ObservedPosterior {
                z: &z,
                gender: &vec![0; s.truth.spec.n],
                weights: &weights,
                gender_weight: 0.0,
                intercept: s.truth.intercept_std,
                rho,
            };
            let q = post.at(i, &refs, None);
            assert!((q - mc).abs() < 0.02, "row {i}: closed form {q} vs monte carlo {mc}");
        }
        assert!(s.truth.observed_bayes_accuracy < s.truth.bayes_accuracy);
    }

    #[test]
    fn masks_hit_the_requested_rate() {
        let s = generate_synthetic(&SynthSpec::default()).unwrap();
        let cells = 2000 * 10;
        let rate = s.truth.masked_cells as f64 / cells as f64;
        assert!((rate - 0.10).abs() < 0.01, "{rate}");
        assert_eq!(s.dataset.column(LABEL_COLUMN).unwrap().missing_count(), 0);
    }

    #[test]
    fn equal_seeds_equal_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n: 100,
            ..SynthSpec::default()
        };
        let a = write_synthetic(
            &generate_synthetic(&spec).unwrap(),
            &dir.path().join("a"),
            "s",
            Delimiter::Comma,
        )
        .unwrap();
        let b = write_synthetic(
            &generate_synthetic(&spec).unwrap(),
            &dir.path().join("b"),
            "s",
            Delimiter::Comma,
        )
        .unwrap();
        assert_eq!(std::fs::read(&a.0).unwrap(), std::fs::read(&b.0).unwrap());
        assert_eq!(std::fs::read(&a.1).unwrap(), std::fs::read(&b.1).unwrap());
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(generate_synthetic(&SynthSpec {
            n: 5,
            ..SynthSpec::default()
        })
        .is_err());
        assert!(generate_synthetic(&SynthSpec {
            prevalence: 1.0,
            ..SynthSpec::default()
        })
        .is_err());
        assert!(generate_synthetic(&SynthSpec {
            correlation: 1.0,
            ..SynthSpec::default()
        })
        .is_err());
    }
}
