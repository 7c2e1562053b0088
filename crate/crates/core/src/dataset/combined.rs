use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::round_half_up;

/// Per-dataset subsampling used to build a combined training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedSpec {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for CombinedSpec {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            seed: 0,
        }
    }
}

/// Draws `round_half_up(fraction * len)` items without replacement from each
/// part, keeps them in their original order, and concatenates the parts.
///
/// Each part has its own random stream, so adding a dataset does not change
/// what is drawn from the others.
pub fn build_combined<S: Clone>(parts: &[Vec<S>], spec: &CombinedSpec) -> Result<Vec<S>> {
    if !(spec.fraction > 0.0 && spec.fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling fraction {} must lie in (0, 1]",
            spec.fraction
        )));
    }
    let mut out = vec![];
    for (i, part) in parts.iter().enumerate() {
        let n = round_half_up(spec.fraction * part.len() as f64).min(part.len());
        let stream = spec.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let mut idx = rand::seq::index::sample(&mut rng, part.len(), n).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|k| part[k].clone()));
    }
    if out.is_empty() {
        return Err(Error::Empty("combined training set"));
    }
    Ok(out)
}
