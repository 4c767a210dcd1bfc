//! Top-K recommendation from any scorer.

use std::collections::BTreeSet;

use super::{RankedList, Scorer};

/// Rank every item the user has not trained on and keep the best `k`.
/// Ordering is score descending with ties going to the lower item id, so a
/// ranked list is a pure function of the scores. When fewer than `k`
/// candidates exist the list is simply shorter (and logged).
pub fn recommend_topk<S: Scorer + ?Sized>(
    scorer: &S,
    user: u32,
    k: usize,
    exclude: &BTreeSet<u32>,
) -> RankedList {
    let scores = scorer.scores_for_user(user);
    let mut ranked: Vec<(u32, f64)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| (i as u32, s))
        .filter(|(i, _)| !exclude.contains(i))
        .collect();
    ranked.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    if ranked.len() < k {
        log::debug!(
            "user {user}: only {} candidates for a top-{k} list",
            ranked.len()
        );
    }
    RankedList {
        user,
        items: ranked.iter().map(|&(i, _)| i).collect(),
        scores: ranked.iter().map(|&(_, s)| s).collect(),
    }
}
