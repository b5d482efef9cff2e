use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract_err, Result};

/// 369 training cases out of 494.
pub const DEFAULT_TRAIN_FRACTION: f64 = 369.0 / 494.0;

/// Seeded shuffle of case ids into `(train, val)`; `round(n * fraction)` cases
/// go to training, clamped so both sides are nonempty.
pub fn split_dataset(ids: &[String], train_fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if ids.len() < 2 {
        return Err(contract_err!("need at least 2 cases to split, got {}", ids.len()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(contract_err!("train fraction {train_fraction} must lie in (0, 1)"));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(contract_err!("duplicate case id {dup}"));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ids.len() as f64 * train_fraction).round() as usize).clamp(1, ids.len() - 1);
    let val = shuffled.split_off(n_train);
    Ok((shuffled, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_inputs() {
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        let (t, v) = split_dataset(&ids, 0.99, 0).unwrap();
        assert_eq!((t.len(), v.len()), (1, 1));
        assert!(split_dataset(&ids[..1], 0.5, 0).is_err());
        assert!(split_dataset(&ids, 1.0, 0).is_err());
        assert!(split_dataset(&["a".to_string(), "a".to_string()], 0.5, 0).is_err());
    }
}
