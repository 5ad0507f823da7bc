//! Confusion matrix and classification statistics with exact intervals and
//! tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{beta_quantile, binomial_ln_sf, binomial_sf, chi_squared_sf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub positive_label: String,
    pub negative_label: String,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<Self> {
        if tp + fp + fn_ + tn == 0 {
            return Err(Error::param("confusion", "total count must be at least 1"));
        }
        Ok(Self {
            tp,
            fp,
            fn_,
            tn,
            positive_label: "1".into(),
            negative_label: "0".into(),
        })
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same predictions with the other class treated as positive.
    pub fn relabeled(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
            positive_label: self.negative_label.clone(),
            negative_label: self.positive_label.clone(),
        }
    }
}

/// Counts agreement between reference labels and predictions, class 1
/// positive.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => return Err(Error::param("labels", format!("expected 0 or 1, got ({t}, {p})"))),
        }
    }
    ConfusionMatrix::new(tp, fp, fn_, tn)
}

/// Exact two-sided `1 - alpha` interval for a binomial proportion.
pub fn clopper_pearson_ci(successes: u64, n: u64, alpha: f64) -> Result<(f64, f64)> {
    if successes > n || n == 0 {
        return Err(Error::param("successes", format!("{successes} of {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", "must lie in (0, 1)"));
    }
    let x = successes as f64;
    let nf = n as f64;
    let low = if successes == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, x, nf - x + 1.0)
    };
    let high = if successes == n {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, x + 1.0, nf - x)
    };
    Ok((low, high))
}

/// `P[X >= successes]` for `X ~ Binomial(n, p0)`.
pub fn binomial_test_greater(successes: u64, n: u64, p0: f64) -> Result<f64> {
    if successes > n {
        return Err(Error::param("successes", format!("{successes} of {n}")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::param("p0", "must lie in (0, 1)"));
    }
    Ok(binomial_sf(successes, n, p0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement is 1, so the ratio is undefined and reported as 0.
    pub degenerate: bool,
}

pub fn cohen_kappa(cm: &ConfusionMatrix) -> Kappa {
    let n = u128::from(cm.total());
    let pred_pos = u128::from(cm.tp + cm.fp);
    let ref_pos = u128::from(cm.tp + cm.fn_);
    let chance = pred_pos * ref_pos + (n - pred_pos) * (n - ref_pos);
    let nn = n * n;
    if chance == nn {
        return Kappa {
            value: 0.0,
            degenerate: true,
        };
    }
    let po = (cm.tp + cm.tn) as f64 / n as f64;
    let pe = chance as f64 / nn as f64;
    Kappa {
        value: (po - pe) / (1.0 - pe),
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub statistic: f64,
    pub p_value: f64,
    /// No discordant pairs.
    pub degenerate: bool,
}

/// Continuity-corrected McNemar test on the discordant counts.
pub fn mcnemar_test(cm: &ConfusionMatrix) -> McNemar {
    let discordant = cm.fp + cm.fn_;
    if discordant == 0 {
        return McNemar {
            statistic: 0.0,
            p_value: 1.0,
            degenerate: true,
        };
    }
    let diff = cm.fp.abs_diff(cm.fn_) as f64;
    let statistic = (diff - 1.0).powi(2) / discordant as f64;
    McNemar {
        statistic,
        p_value: chi_squared_sf(statistic, 1.0),
        degenerate: false,
    }
}

/// Full statistics block. Ratios whose denominator is zero are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub accuracy_ci_low: f64,
    pub accuracy_ci_high: f64,
    pub nir: f64,
    pub p_acc_gt_nir: f64,
    /// Natural log of `p_acc_gt_nir`, finite where the value underflows.
    pub ln_p_acc_gt_nir: f64,
    pub kappa: f64,
    pub kappa_degenerate: bool,
    pub mcnemar_statistic: f64,
    pub mcnemar_p: f64,
    pub mcnemar_degenerate: bool,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub prevalence: f64,
    pub detection_rate: f64,
    pub detection_prevalence: f64,
    pub balanced_accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::param("confusion", "total count must be at least 1"));
    }
    let nf = n as f64;
    let correct = cm.tp + cm.tn;
    let (accuracy_ci_low, accuracy_ci_high) = clopper_pearson_ci(correct, n, 0.05)?;
    let ref_pos = cm.tp + cm.fn_;
    let nir = ref_pos.max(n - ref_pos) as f64 / nf;
    let ln_p_acc_gt_nir = if nir < 1.0 {
        binomial_test_greater(correct, n, nir)?;
        binomial_ln_sf(correct, n, nir)
    } else {
        // One reference class only; the test degenerates to P[X >= k | p = 1].
        0.0
    };
    let p_acc_gt_nir = ln_p_acc_gt_nir.exp();
    let kappa = cohen_kappa(cm);
    let mcnemar = mcnemar_test(cm);
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let specificity = ratio(cm.tn, cm.tn + cm.fp);
    Ok(ClassificationReport {
        confusion: cm.clone(),
        accuracy: correct as f64 / nf,
        accuracy_ci_low,
        accuracy_ci_high,
        nir,
        p_acc_gt_nir,
        ln_p_acc_gt_nir,
        kappa: kappa.value,
        kappa_degenerate: kappa.degenerate,
        mcnemar_statistic: mcnemar.statistic,
        mcnemar_p: mcnemar.p_value,
        mcnemar_degenerate: mcnemar.degenerate,
        sensitivity,
        specificity,
        ppv: ratio(cm.tp, cm.tp + cm.fp),
        npv: ratio(cm.tn, cm.tn + cm.fn_),
        prevalence: ref_pos as f64 / nf,
        detection_rate: cm.tp as f64 / nf,
        detection_prevalence: (cm.tp + cm.fp) as f64 / nf,
        balanced_accuracy: sensitivity.zip(specificity).map(|(a, b)| (a + b) / 2.0),
    })
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt4)
}

fn fmt_p(p: f64) -> String {
    if p < f64::EPSILON {
        "<2e-16".to_string()
    } else {
        fmt4(p)
    }
}

impl ClassificationReport {
    /// Text block with the confusion table (rows = prediction, columns =
    /// reference) and every statistic at four decimals.
    pub fn render(&self) -> String {
        let cm = &self.confusion;
        let (neg, pos) = (&cm.negative_label, &cm.positive_label);
        let label_w = neg.chars().count().max(pos.chars().count());
        let w = [cm.tp, cm.fp, cm.fn_, cm.tn]
            .iter()
            .map(|c| c.to_string().len())
            .chain([neg.len(), pos.len()])
            .max()
            .unwrap_or(1)
            + 1;
        let mut out = String::from("Confusion Matrix and Statistics\n\n");
        out.push_str(&format!("{:label_w$}{neg:>w$}{pos:>w$}\n", ""));
        out.push_str(&format!("{neg:<label_w$}{:>w$}{:>w$}\n", cm.tn, cm.fn_));
        out.push_str(&format!("{pos:<label_w$}{:>w$}{:>w$}\n\n", cm.fp, cm.tp));
        out.push_str(&format!("Accuracy : {}\n", fmt4(self.accuracy)));
        out.push_str(&format!(
            " 95% CI : ({}, {})\n",
            fmt4(self.accuracy_ci_low),
            fmt4(self.accuracy_ci_high)
        ));
        out.push_str(&format!("No Information Rate : {}\n", fmt4(self.nir)));
        out.push_str(&format!("P-Value [Acc > NIR] : {}\n\n", fmt_p(self.p_acc_gt_nir)));
        out.push_str(&format!("Kappa : {}\n\n", fmt4(self.kappa)));
        out.push_str(&format!("McNemar's Test P-Value : {}\n\n", fmt_p(self.mcnemar_p)));
        for (name, v) in [
            ("Sensitivity", self.sensitivity),
            ("Specificity", self.specificity),
            ("Pos Pred Value", self.ppv),
            ("Neg Pred Value", self.npv),
            ("Prevalence", Some(self.prevalence)),
            ("Detection Rate", Some(self.detection_rate)),
            ("Detection Prevalence", Some(self.detection_prevalence)),
            ("Balanced Accuracy", self.balanced_accuracy),
        ] {
            out.push_str(&format!("{name} : {}\n", fmt_opt(v)));
        }
        out.push_str(&format!("\n'Positive' Class : {pos}\n"));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }
}
