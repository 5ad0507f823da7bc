//! LIME explanations for tabular cases: quartile discretisation,
//! perturbation sampling around a case, an exponential locality kernel and a
//! sparse weighted linear surrogate.

mod discretize;
mod surrogate;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::par;

pub use discretize::{fit_discretizer, Discretizer, FeatureBins};
pub use surrogate::{fit_surrogate, Surrogate};

/// Header of the explanation table, one row per (case, feature).
pub const EXPLANATION_COLUMNS: [&str; 13] = [
    "model_type",
    "case",
    "label",
    "label_prob",
    "model_r2",
    "model_intercept",
    "model_prediction",
    "feature",
    "feature_value",
    "feature_weight",
    "feature_desc",
    "data",
    "prediction",
];

pub const MIN_SAMPLES: usize = 10;

/// Surrogate size: a fixed count or every feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KSpec", into = "KSpec")]
pub enum KFeatures {
    Count(usize),
    All,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KSpec {
    Count(usize),
    Word(String),
}

impl TryFrom<KSpec> for KFeatures {
    type Error = String;

    fn try_from(k: KSpec) -> std::result::Result<Self, String> {
        match k {
            KSpec::Count(n) => Ok(KFeatures::Count(n)),
            KSpec::Word(w) => w.parse().map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<KFeatures> for KSpec {
    fn from(k: KFeatures) -> Self {
        match k {
            KFeatures::Count(n) => KSpec::Count(n),
            KFeatures::All => KSpec::Word("all".into()),
        }
    }
}

impl std::str::FromStr for KFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(KFeatures::All);
        }
        s.parse()
            .map(KFeatures::Count)
            .map_err(|_| Error::param("k_features", format!("expected a count or \"all\", got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// `None` uses `0.75 * sqrt(d)`.
    pub kernel_width: Option<f64>,
    /// Counts above the feature count are capped at it.
    pub k_features: KFeatures,
    pub surrogate_ridge: f64,
    /// Name reported in the `label` column for the positive class.
    pub label: String,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_width: None,
            k_features: KFeatures::Count(10),
            surrogate_ridge: 1e-3,
            label: "1".into(),
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < MIN_SAMPLES {
            return Err(Error::param("n_samples", format!("must be at least {MIN_SAMPLES}")));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::param("kernel_width", "must be positive"));
            }
        }
        if self.k_features == KFeatures::Count(0) {
            return Err(Error::param("k_features", "must be at least 1"));
        }
        if !(self.surrogate_ridge >= 0.0) {
            return Err(Error::param("surrogate_ridge", "must be >= 0"));
        }
        Ok(())
    }

    pub fn width_for(&self, d: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (d as f64).sqrt())
    }

    pub fn k_for(&self, d: usize) -> usize {
        match self.k_features {
            KFeatures::All => d,
            KFeatures::Count(k) => k.min(d),
        }
    }
}

/// `exp(-distance² / width²)`.
pub fn kernel_weight(distance: f64, width: f64) -> f64 {
    (-(distance * distance) / (width * width)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    /// 1 where the sample shares the case's bin.
    pub interpretable: Matrix,
    pub raw: Matrix,
}

/// Independent stream per feature name so reordering features reorders the
/// columns but leaves each column's draws unchanged.
fn feature_stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    rng.set_stream(h);
    rng
}

fn draw_level(rng: &mut ChaCha8Rng, frequencies: &[f64]) -> usize {
    let total: f64 = frequencies.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..frequencies.len());
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, f) in frequencies.iter().enumerate() {
        acc += f;
        if u < acc {
            return i;
        }
    }
    frequencies.iter().rposition(|&f| f > 0.0).unwrap_or(0)
}

/// Draws `n` rows around `case`; row 0 is the case itself.
pub fn sample_perturbations(case: &[f64], disc: &Discretizer, n: usize, seed: u64) -> Result<Perturbations> {
    if n < MIN_SAMPLES {
        return Err(Error::param("n_samples", format!("must be at least {MIN_SAMPLES}")));
    }
    let d = disc.n_features();
    if case.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            found: case.len(),
        });
    }
    if let Some(j) = case.iter().position(|v| !v.is_finite()) {
        return Err(Error::MissingInput(disc.names[j].clone()));
    }
    let mut z = vec![1.0; n * d];
    let mut raw = vec![0.0; n * d];
    raw[..d].copy_from_slice(case);
    for (j, bins) in disc.bins.iter().enumerate() {
        let mut rng = feature_stream(seed, &disc.names[j]);
        let case_bin = bins.bin_of(case[j]);
        for i in 1..n {
            let (bin, value) = match bins {
                FeatureBins::Quartiles { cuts, min, max } => {
                    let b = rng.random_range(0..4);
                    let lo = if b == 0 { *min } else { cuts[b - 1] };
                    let hi = if b == 3 { *max } else { cuts[b] };
                    (b, lo + rng.random::<f64>() * (hi - lo))
                }
                FeatureBins::Levels {
                    values, frequencies, ..
                } => {
                    let b = draw_level(&mut rng, frequencies);
                    (b, values[b])
                }
            };
            z[i * d + j] = if bin == case_bin { 1.0 } else { 0.0 };
            raw[i * d + j] = value;
        }
    }
    Ok(Perturbations {
        interpretable: Matrix::new(n, d, z)?.with_names(disc.names.clone())?,
        raw: Matrix::new(n, d, raw)?.with_names(disc.names.clone())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub feature: String,
    pub feature_value: String,
    pub feature_weight: f64,
    pub feature_desc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub model_type: String,
    pub case_id: String,
    pub label: String,
    pub label_prob: f64,
    pub model_r2: f64,
    pub model_r2_raw: f64,
    pub model_intercept: f64,
    pub model_prediction: f64,
    /// Sorted by descending absolute weight.
    pub rows: Vec<ExplanationRow>,
    /// Case values as `(feature, value)` in input order.
    pub data: Vec<(String, String)>,
    pub prediction: u8,
}

/// Explains one case. Only `predictor.predict_proba` is consulted, so any
/// model with matching feature names works.
pub fn explain_instance<P: Predictor + ?Sized>(
    predictor: &P,
    case: &[f64],
    disc: &Discretizer,
    cfg: &LimeConfig,
    case_id: &str,
) -> Result<Explanation> {
    cfg.validate()?;
    if predictor.feature_names() != disc.names.as_slice() {
        return Err(Error::param(
            "features",
            "predictor and discretizer were fitted on different features",
        ));
    }
    let d = disc.n_features();
    let samples = sample_perturbations(case, disc, cfg.n_samples, cfg.seed)?;
    let probs = par::try_map_range(cfg.n_samples, |i| predictor.predict_proba(samples.raw.row(i)))?;
    let width = cfg.width_for(d);
    let weights: Vec<f64> = samples
        .interpretable
        .rows()
        .map(|r| {
            let off = r.iter().filter(|&&v| v == 0.0).count();
            kernel_weight((off as f64).sqrt(), width)
        })
        .collect();
    let sur = fit_surrogate(
        &samples.interpretable,
        &probs,
        &weights,
        cfg.k_for(d),
        cfg.surrogate_ridge,
    )?;
    let mut order: Vec<usize> = (0..sur.selected.len()).collect();
    order.sort_by(|&a, &b| {
        sur.coefficients[b]
            .abs()
            .total_cmp(&sur.coefficients[a].abs())
            .then(a.cmp(&b))
    });
    let rows = order
        .into_iter()
        .map(|p| {
            let j = sur.selected[p];
            ExplanationRow {
                feature: disc.names[j].clone(),
                feature_value: disc.bins[j].label(case[j]),
                feature_weight: sur.coefficients[p],
                feature_desc: disc.describe(j, case[j]),
            }
        })
        .collect();
    let label_prob = probs[0];
    Ok(Explanation {
        model_type: predictor.model_type().to_string(),
        case_id: case_id.to_string(),
        label: cfg.label.clone(),
        label_prob,
        model_r2: sur.r2,
        model_r2_raw: sur.r2_raw,
        model_intercept: sur.intercept,
        model_prediction: sur.prediction_at_case(),
        rows,
        data: disc
            .names
            .iter()
            .zip(&disc.bins)
            .zip(case)
            .map(|((n, b), &v)| (n.clone(), b.label(v)))
            .collect(),
        prediction: u8::from(label_prob >= 0.5),
    })
}

impl Explanation {
    fn data_field(&self) -> String {
        self.data
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Readable summary: header lines then `feature_desc → weight`.
    pub fn render(&self) -> String {
        let mut out = format!(
            "case {} ({}): P(label {}) = {:.4}, prediction {}\nsurrogate: R² {:.4}, intercept {:.4}, prediction {:.4}\n",
            self.case_id,
            self.model_type,
            self.label,
            self.label_prob,
            self.prediction,
            self.model_r2,
            self.model_intercept,
            self.model_prediction
        );
        for r in &self.rows {
            out.push_str(&format!("  {} → {:+.6}\n", r.feature_desc, r.feature_weight));
        }
        out
    }
}

/// Writes explanations as one delimited table with [`EXPLANATION_COLUMNS`].
pub fn write_explanations<W: Write>(explanations: &[Explanation], out: W, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    w.write_record(EXPLANATION_COLUMNS)?;
    for e in explanations {
        let data = e.data_field();
        for r in &e.rows {
            w.write_record([
                e.model_type.as_str(),
                &e.case_id,
                &e.label,
                &e.label_prob.to_string(),
                &e.model_r2.to_string(),
                &e.model_intercept.to_string(),
                &e.model_prediction.to_string(),
                &r.feature,
                &r.feature_value,
                &r.feature_weight.to_string(),
                &r.feature_desc,
                &data,
                &e.prediction.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("explanations", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Dataset};
    use crate::models::{sigmoid, GlmModel};

    fn train(n: usize) -> Dataset {
        let a: Vec<Option<f64>> = (0..n).map(|i| Some((i % 97) as f64)).collect();
        let b: Vec<Option<f64>> = (0..n).map(|i| Some(((i * 31) % 53) as f64)).collect();
        let c: Vec<Option<&str>> = (0..n).map(|i| Some(if i % 3 == 0 { "x" } else { "y" })).collect();
        Dataset::new(
            vec![
                Column::numeric("a", a),
                Column::numeric("b", b),
                Column::categorical("c", c),
            ],
            None,
        )
        .unwrap()
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    fn glm(coefs: Vec<f64>) -> GlmModel {
        GlmModel {
            feature_names: names(),
            coefficients: coefs,
            intercept: -2.0,
            converged: true,
            iterations: 1,
            ridge: 0.0,
        }
    }

    struct PassThrough<'a>(&'a GlmModel);

    impl Predictor for PassThrough<'_> {
        fn predict_proba(&self, row: &[f64]) -> Result<f64> {
            self.0.predict_proba(row)
        }
        fn feature_names(&self) -> &[String] {
            self.0.feature_names()
        }
        fn model_type(&self) -> &str {
            self.0.model_type()
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_weight(0.0, 1.3), 1.0);
        assert!((kernel_weight(2.0, 2.0) - (-1f64).exp()).abs() < 1e-15);
        assert!(kernel_weight(1.0, 1.0) > kernel_weight(1.1, 1.0));
    }

    #[test]
    fn perturbation_contract() {
        let disc = fit_discretizer(&train(400), &names()).unwrap();
        let case = [50.0, 10.0, 1.0];
        let p = sample_perturbations(&case, &disc, 10_000, 9).unwrap();
        assert!(p.interpretable.row(0).iter().all(|&v| v == 1.0));
        assert_eq!(p.raw.row(0), &case);
        for j in 0..2 {
            let freq = p.interpretable.column(j).iter().sum::<f64>() / 10_000.0;
            assert!((freq - 0.25).abs() < 0.02, "feature {j}: {freq}");
        }
        // Raw draws land in the bin that the interpretable flag reports.
        for i in 1..200 {
            let inside = disc.bins[0].bin_of(p.raw.get(i, 0)) == disc.bins[0].bin_of(case[0]);
            assert_eq!(inside, p.interpretable.get(i, 0) == 1.0);
        }
        assert_eq!(p, sample_perturbations(&case, &disc, 10_000, 9).unwrap());
        assert!(sample_perturbations(&case, &disc, 9, 9).is_err());
        assert!(sample_perturbations(&[f64::NAN, 1.0, 0.0], &disc, 10, 9).is_err());
    }

    #[test]
    fn monotone_feature_ranks_first() {
        let disc = fit_discretizer(&train(400), &names()).unwrap();
        let model = glm(vec![0.08, 0.0, 0.0]);
        let cfg = LimeConfig::default();
        let e = explain_instance(&model, &[95.0, 10.0, 1.0], &disc, &cfg, "7").unwrap();
        assert_eq!(e.rows.len(), 3);
        assert_eq!(e.rows[0].feature, "a");
        assert!(e.rows[0].feature_weight > 0.0);
        let mut a: Vec<f64> = (0..400).map(|i| (i % 97) as f64).collect();
        a.sort_by(f64::total_cmp);
        let q3 = a[299] + 0.25 * (a[300] - a[299]);
        assert_eq!(e.rows[0].feature_desc, format!("a > {}", discretize::fmt_value(q3)));
        let sum: f64 = e.rows.iter().map(|r| r.feature_weight).sum();
        assert!((e.model_prediction - (e.model_intercept + sum)).abs() < 1e-9);
        assert!((e.label_prob - sigmoid(-2.0 + 0.08 * 95.0)).abs() < 1e-12);
    }

    #[test]
    fn linear_logit_on_indicators_is_locally_linear() {
        let n = 500;
        let cols = (0..4)
            .map(|j| Column::numeric(format!("f{j}"), (0..n).map(|i| Some(((i >> j) & 1) as f64)).collect()))
            .collect();
        let ds = Dataset::new(cols, None).unwrap();
        let names: Vec<String> = (0..4).map(|j| format!("f{j}")).collect();
        let disc = fit_discretizer(&ds, &names).unwrap();
        let model = GlmModel {
            feature_names: names,
            coefficients: vec![0.4, -0.3, 0.2, -0.1],
            intercept: 0.0,
            converged: true,
            iterations: 1,
            ridge: 0.0,
        };
        let cfg = LimeConfig {
            k_features: KFeatures::All,
            ..LimeConfig::default()
        };
        let e = explain_instance(&model, &[1.0, 1.0, 0.0, 0.0], &disc, &cfg, "0").unwrap();
        assert!(e.model_r2 >= 0.99, "R² {}", e.model_r2);
        // Matching a case value of 0 flips the direction of the effect.
        let signs: Vec<(String, bool)> = e
            .rows
            .iter()
            .map(|r| (r.feature.clone(), r.feature_weight > 0.0))
            .collect();
        for (name, positive) in signs {
            let expected = matches!(name.as_str(), "f0" | "f3");
            assert_eq!(positive, expected, "{name}");
        }
    }

    #[test]
    fn adapter_and_repeat_are_bit_identical() {
        let disc = fit_discretizer(&train(300), &names()).unwrap();
        let model = glm(vec![0.03, -0.05, 0.7]);
        let cfg = LimeConfig {
            n_samples: 800,
            ..LimeConfig::default()
        };
        let case = [20.0, 40.0, 0.0];
        let a = explain_instance(&model, &case, &disc, &cfg, "1").unwrap();
        let b = explain_instance(&PassThrough(&model), &case, &disc, &cfg, "1").unwrap();
        assert_eq!(a, b);
        assert_eq!(a, explain_instance(&model, &case, &disc, &cfg, "1").unwrap());
    }

    #[test]
    fn table_has_thirteen_columns() {
        let disc = fit_discretizer(&train(300), &names()).unwrap();
        let model = glm(vec![0.03, -0.05, 0.7]);
        let cfg = LimeConfig {
            n_samples: 200,
            k_features: KFeatures::Count(2),
            ..LimeConfig::default()
        };
        let e = explain_instance(&model, &[20.0, 40.0, 0.0], &disc, &cfg, "1").unwrap();
        let mut buf = Vec::new();
        write_explanations(std::slice::from_ref(&e), &mut buf, b',').unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), EXPLANATION_COLUMNS.join(","));
        assert_eq!(lines.count(), 2);
        assert!(e.render().contains(" → "));
    }

    #[test]
    fn k_features_parse() {
        assert_eq!("all".parse::<KFeatures>().unwrap(), KFeatures::All);
        assert_eq!("4".parse::<KFeatures>().unwrap(), KFeatures::Count(4));
        assert!("x".parse::<KFeatures>().is_err());
        let cfg: LimeConfig = toml::from_str("k_features = \"all\"").unwrap();
        assert_eq!(cfg.k_features, KFeatures::All);
        let cfg: LimeConfig = toml::from_str("k_features = 3").unwrap();
        assert_eq!(cfg.k_for(2), 2);
    }
}
