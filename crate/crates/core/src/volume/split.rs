//! Seeded train/validation/test split of case ids.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio::from_parts(8.0, 1.0, 1.0)
    }
}

impl SplitRatio {
    /// Normalises arbitrary positive weights, e.g. `8:1:1`.
    pub fn from_parts(train: f64, val: f64, test: f64) -> Self {
        let s = train + val + test;
        SplitRatio {
            train: train / s,
            val: val / s,
            test: test / s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::Config(format!("split ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffles the (sorted) ids with `seed` and cuts them by `ratio`.
///
/// Validation and test sizes are `floor(n * r)`; the remainder goes to
/// train. Each returned list is sorted.
pub fn split_dataset(case_ids: &[String], ratio: SplitRatio, seed: u64) -> Result<DatasetSplit> {
    ratio.validate()?;
    let mut ids = case_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != case_ids.len() {
        return Err(Error::Data("duplicate case ids in split input".into()));
    }
    let n = ids.len();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 cases to split, got {n}")));
    }
    let floor = |r: f64| (n as f64 * r + 1e-9).floor() as usize;
    let n_val = floor(ratio.val);
    let n_test = floor(ratio.test);
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test: Vec<String> = ids.split_off(n - n_test);
    let mut val: Vec<String> = ids.split_off(n - n_test - n_val);
    let mut train = ids;
    train.sort();
    val.sort();
    test.sort();
    Ok(DatasetSplit { train, val, test, seed })
}
