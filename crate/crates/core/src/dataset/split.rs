use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::round_half_up;

/// Subject-level train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SubjectSplit {
    pub fn partition_of(&self, subject: &str) -> Option<&'static str> {
        let has = |v: &[String]| v.iter().any(|s| s == subject);
        if has(&self.train) {
            Some("train")
        } else if has(&self.val) {
            Some("val")
        } else if has(&self.test) {
            Some("test")
        } else {
            None
        }
    }
}

/// Partitions subject IDs so that no subject appears in two partitions.
///
/// IDs are sorted before a seeded shuffle, so the result does not depend on
/// input order. Train and validation sizes round half up from their
/// fractions; test receives the remainder. Each partition gets at least one
/// subject.
pub fn split_subjects(ids: &[String], spec: &SplitSpec) -> Result<SubjectSplit> {
    let fr = [spec.train, spec.val, spec.test];
    if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fr:?} must be positive and sum to 1"
        )));
    }
    let mut ids: Vec<String> = ids.to_vec();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    if n < 3 {
        return Err(Error::TooFewSubjects { needed: 3, got: n });
    }
    let n_val = round_half_up(spec.val * n as f64).max(1);
    let n_train = round_half_up(spec.train * n as f64).clamp(1, n - n_val - 1);
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(SubjectSplit {
        train: ids,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("subject_{i:03}")).collect()
    }

    #[test]
    fn sizes() {
        for (n, want) in [(45, (36, 5, 4)), (10, (8, 1, 1)), (3, (1, 1, 1)), (40, (32, 4, 4)), (100, (80, 10, 10))] {
            let s = split_subjects(&ids(n), &SplitSpec::default()).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), want, "n = {n}");
        }
    }

    #[test]
    fn too_few() {
        assert!(matches!(
            split_subjects(&ids(2), &SplitSpec::default()),
            Err(Error::TooFewSubjects { needed: 3, got: 2 })
        ));
        let bad = SplitSpec { train: 0.9, ..Default::default() };
        assert!(split_subjects(&ids(10), &bad).is_err());
    }

    #[test]
    fn order_independent_and_seeded() {
        let a = ids(20);
        let mut b = a.clone();
        b.reverse();
        let spec = SplitSpec { seed: 9, ..Default::default() };
        assert_eq!(split_subjects(&a, &spec).unwrap(), split_subjects(&b, &spec).unwrap());
        let other = SplitSpec { seed: 10, ..Default::default() };
        assert_ne!(split_subjects(&a, &spec).unwrap(), split_subjects(&a, &other).unwrap());
    }

    proptest! {
        #[test]
        fn disjoint_and_covering(n in 3usize..120, seed in any::<u64>()) {
            let all = ids(n);
            let s = split_subjects(&all, &SplitSpec { seed, ..Default::default() }).unwrap();
            let mut joined: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
            joined.sort();
            prop_assert_eq!(joined, all);
            prop_assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
        }
    }
}
