use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config(format!(
                "split ratios must be non-negative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

// Guards floor() against products like 0.29 * 100 = 28.999999999999996.
const FLOOR_SLACK: f64 = 1e-9;

/// Shuffles `0..n` with `seed`, then slices validation and test off the
/// front of the permutation.
///
/// Validation and test sizes are `floor(ratio * n)`; every remaining sample
/// goes to train.
pub fn split_dataset(n: usize, ratios: SplitRatios, seed: u64) -> Result<SplitIndices> {
    ratios.validate()?;
    let n_val = (ratios.validation * n as f64 + FLOOR_SLACK).floor() as usize;
    let n_test = (ratios.test * n as f64 + FLOOR_SLACK).floor() as usize;
    let n_val = n_val.min(n);
    let n_test = n_test.min(n - n_val);

    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);

    let test = order[..n_test].to_vec();
    let validation = order[n_test..n_test + n_val].to_vec();
    let train = order[n_test + n_val..].to_vec();
    Ok(SplitIndices {
        train,
        validation,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eighty_ten_ten() {
        let s = split_dataset(10, SplitRatios::default(), 1).unwrap();
        assert_eq!(s.sizes(), (8, 1, 1));
    }

    #[test]
    fn remainder_goes_to_train() {
        // floor(0.5) = 0 for both held-out splits.
        let s = split_dataset(5, SplitRatios::default(), 1).unwrap();
        assert_eq!(s.sizes(), (5, 0, 0));
        let s = split_dataset(604, SplitRatios::default(), 1).unwrap();
        assert_eq!(s.sizes(), (484, 60, 60));
    }

    #[test]
    fn deterministic_by_seed() {
        let a = split_dataset(37, SplitRatios::default(), 9).unwrap();
        let b = split_dataset(37, SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(37, SplitRatios::default(), 10).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn rejects_bad_ratios() {
        let bad = SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.2,
        };
        assert!(matches!(split_dataset(10, bad, 0), Err(Error::Config(_))));
        let neg = SplitRatios {
            train: 1.2,
            validation: -0.1,
            test: -0.1,
        };
        assert!(split_dataset(10, neg, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn splits_partition_all_indices(n in 0usize..300, seed in any::<u64>()) {
            let s = split_dataset(n, SplitRatios::default(), seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(s.validation.len(), (0.1 * n as f64 + 1e-9).floor() as usize);
        }
    }
}
