//! Robustness metrics comparing models before and after attack or defense.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

use super::RatingPredictions;

/// Mean shift of predicted target-item ratings from the clean model to the
/// attacked model, over matching (user, item) pairs.
pub fn prediction_shift(
    pre: &RatingPredictions,
    post: &RatingPredictions,
    target_items: &BTreeSet<u32>,
) -> Result<f64> {
    let pre_map: HashMap<(u32, u32), f64> = pre
        .entries
        .iter()
        .filter(|e| target_items.contains(&e.item))
        .map(|e| ((e.user, e.item), e.predicted))
        .collect();
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in &post.entries {
        if !target_items.contains(&e.item) {
            continue;
        }
        match pre_map.get(&(e.user, e.item)) {
            Some(&p) => {
                sum += e.predicted - p;
                n += 1;
            }
            None => {
                return Err(Error::Metric(format!(
                    "prediction shift: pair (user {}, item {}) missing from pre-attack predictions",
                    e.user, e.item
                )))
            }
        }
    }
    if n == 0 {
        return Err(Error::Metric(
            "prediction shift: no target-item pairs to compare".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// How much of the attack's hit-rate damage a defense recovered:
/// 1 − (HR_defense − HR_origin)/(HR_attack − HR_origin). None when the
/// attack did not move the hit rate at all.
pub fn rank_improvement(hr_origin: f64, hr_attack: f64, hr_defense: f64) -> Option<f64> {
    if hr_attack == hr_origin {
        return None;
    }
    Some(1.0 - (hr_defense - hr_origin) / (hr_attack - hr_origin))
}

/// Relative performance drop (P_I − P_N)/P_I.
pub fn drop_rate(p_i: f64, p_n: f64) -> Result<f64> {
    if p_i <= 0.0 {
        return Err(Error::Metric(format!(
            "drop rate undefined for non-positive baseline {p_i}"
        )));
    }
    Ok((p_i - p_n) / p_i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::PredEntry;
    use approx::assert_abs_diff_eq;

    fn preds(entries: &[(u32, u32, f64)]) -> RatingPredictions {
        RatingPredictions {
            entries: entries
                .iter()
                .map(|&(user, item, predicted)| PredEntry {
                    user,
                    item,
                    predicted,
                    actual: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn identical_models_shift_zero() {
        let p = preds(&[(0, 5, 3.0), (1, 5, 4.0)]);
        let targets = BTreeSet::from([5]);
        assert_eq!(prediction_shift(&p, &p, &targets).unwrap(), 0.0);
    }

    #[test]
    fn constant_shift_recovered() {
        let pre = preds(&[(0, 5, 3.0), (1, 5, 4.0), (1, 9, 2.0)]);
        let post = preds(&[(0, 5, 3.5), (1, 5, 4.5), (1, 9, 9.0)]);
        let targets = BTreeSet::from([5]);
        // item 9 is not a target and must not contribute
        assert_abs_diff_eq!(
            prediction_shift(&pre, &post, &targets).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn missing_pair_is_an_error() {
        let pre = preds(&[(0, 5, 3.0)]);
        let post = preds(&[(1, 5, 4.0)]);
        assert!(prediction_shift(&pre, &post, &BTreeSet::from([5])).is_err());
    }

    #[test]
    fn rank_improvement_boundaries() {
        assert_eq!(rank_improvement(0.1, 0.5, 0.1), Some(1.0));
        assert_eq!(rank_improvement(0.1, 0.5, 0.5), Some(0.0));
        assert_eq!(rank_improvement(0.0, 0.4, 0.2), Some(0.5));
        assert_eq!(rank_improvement(0.3, 0.3, 0.1), None);
    }

    #[test]
    fn drop_rate_hand_cases() {
        assert_eq!(drop_rate(0.4, 0.4).unwrap(), 0.0);
        assert_abs_diff_eq!(drop_rate(0.5, 0.25).unwrap(), 0.5, epsilon = 1e-15);
        assert!(drop_rate(0.0, 0.1).is_err());
    }
}
