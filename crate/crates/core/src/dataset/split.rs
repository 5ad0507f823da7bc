use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.70,
            validation_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, f) in [
            ("train_fraction", self.train_fraction),
            ("validation_fraction", self.validation_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::param(field, format!("{f} not in (0, 1)")));
            }
        }
        let sum = self.train_fraction + self.validation_fraction + self.test_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param("fractions", format!("sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Partition sizes (train, validation, test). Validation and test take
    /// `floor(n * fraction)`; train absorbs the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let val = (n as f64 * self.validation_fraction).floor() as usize;
        let test = (n as f64 * self.test_fraction).floor() as usize;
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Seeded train/validation/test partition. The permutation comes from
/// ChaCha8 seeded with `spec.seed`, so assignments are stable across
/// platforms. Rows within each partition keep their original order.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let n = ds.n_rows();
    let sizes = spec.sizes(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    if spec.stratified {
        let labels = ds.labels()?;
        let mut by_class: [Vec<usize>; 2] = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        let zero_counts = apportion_class(by_class[0].len(), n, [sizes.0, sizes.1, sizes.2]);
        for (class, rows) in by_class.iter_mut().enumerate() {
            rows.shuffle(&mut rng);
            let mut offset = 0;
            for (p, part) in parts.iter_mut().enumerate() {
                let size = [sizes.0, sizes.1, sizes.2][p];
                let take = if class == 0 {
                    zero_counts[p]
                } else {
                    size - zero_counts[p]
                };
                part.extend_from_slice(&rows[offset..offset + take]);
                offset += take;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        parts[0] = order[..sizes.0].to_vec();
        parts[1] = order[sizes.0..sizes.0 + sizes.1].to_vec();
        parts[2] = order[sizes.0 + sizes.1..].to_vec();
    }
    for (part, name) in parts.iter_mut().zip(["train", "validation", "test"]) {
        if part.is_empty() {
            return Err(Error::EmptyPartition(name));
        }
        part.sort_unstable();
    }
    Ok(Splits {
        train: ds.take_rows(&parts[0]),
        validation: ds.take_rows(&parts[1]),
        test: ds.take_rows(&parts[2]),
    })
}

/// Number of class-0 rows per partition. Each count is the floor or ceiling
/// of its proportional share, so both classes stay within one row of their
/// expected count in every partition. Leftover rows go to the partitions
/// with the largest fractional share, earliest partition first on ties.
fn apportion_class(n_zero: usize, n: usize, sizes: [usize; 3]) -> [usize; 3] {
    let share: Vec<f64> = sizes.iter().map(|&s| s as f64 * n_zero as f64 / n as f64).collect();
    let mut counts = [0usize; 3];
    for p in 0..3 {
        counts[p] = (share[p].floor() as usize).min(sizes[p]);
    }
    let mut left = n_zero - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = share[a] - share[a].floor();
        let fb = share[b] - share[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    while left > 0 {
        let mut progressed = false;
        for &p in &order {
            if left > 0 && counts[p] < sizes[p] {
                counts[p] += 1;
                left -= 1;
                progressed = true;
            }
        }
        debug_assert!(progressed);
        if !progressed {
            break;
        }
    }
    counts
}
