//! Rating prediction error.

use crate::error::{Error, Result};

use super::RatingPredictions;

/// Mean absolute error over the evaluated pairs.
///
/// The denominator is the number of pairs, not the number of users.
pub fn mae(preds: &RatingPredictions) -> Result<f64> {
    nonempty(preds)?;
    let sum: f64 = preds
        .entries
        .iter()
        .map(|e| (e.predicted - e.actual).abs())
        .sum();
    Ok(sum / preds.entries.len() as f64)
}

/// Root mean squared error over the evaluated pairs (per-pair denominator).
pub fn rmse(preds: &RatingPredictions) -> Result<f64> {
    nonempty(preds)?;
    let sum: f64 = preds
        .entries
        .iter()
        .map(|e| (e.predicted - e.actual) * (e.predicted - e.actual))
        .sum();
    Ok((sum / preds.entries.len() as f64).sqrt())
}

fn nonempty(preds: &RatingPredictions) -> Result<()> {
    if preds.entries.is_empty() {
        Err(Error::Metric("no prediction pairs to evaluate".into()))
    } else {
        Ok(())
    }
}
