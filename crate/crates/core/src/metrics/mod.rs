//! Rating-error, top-K ranking and robustness metrics.
//!
//! Every function here is pure and deterministic: identical inputs produce
//! identical bytes. Per-user work folds in ascending user order.

mod rating;
mod report;
mod robust;
mod topk;

pub use rating::{mae, rmse};
pub use report::{render_table, EvalReport, ReportMeta};
pub use robust::{drop_rate, prediction_shift, rank_improvement};
pub use topk::{
    failure_rate, f1_at_k, hit_rate, map_at_k, mrr, ndcg_at_k, precision_at_k, recall_at_k,
    HitRateVariant,
};

use std::collections::BTreeSet;

/// Predicted against actual ratings for a set of (user, item) pairs.
#[derive(Clone, Debug, Default)]
pub struct RatingPredictions {
    pub entries: Vec<PredEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredEntry {
    pub user: u32,
    pub item: u32,
    pub predicted: f64,
    pub actual: f64,
}

/// One user's recommendation list against their relevant set.
#[derive(Clone, Debug)]
pub struct UserEval {
    pub user: u32,
    /// Top-K recommendation in rank order, length at most K.
    pub ranked: Vec<u32>,
    /// Relevant items T(u); may be empty.
    pub relevant: BTreeSet<u32>,
}

/// Ranked lists and ground truth for a population of users.
#[derive(Clone, Debug)]
pub struct TopKGroundTruth {
    pub k: usize,
    pub users: Vec<UserEval>,
    /// The attack's target set, present when target-item hit rate is wanted.
    pub target_set: Option<BTreeSet<u32>>,
}

impl TopKGroundTruth {
    pub fn new(k: usize, mut users: Vec<UserEval>) -> Self {
        for u in &users {
            assert!(
                u.ranked.len() <= k,
                "user {} has {} ranked items for K={k}",
                u.user,
                u.ranked.len()
            );
        }
        users.sort_by_key(|u| u.user);
        TopKGroundTruth {
            k,
            users,
            target_set: None,
        }
    }

    pub fn with_target_set(mut self, targets: impl IntoIterator<Item = u32>) -> Self {
        self.target_set = Some(targets.into_iter().collect());
        self
    }

    /// Users whose relevant set is empty (excluded from NDCG).
    pub fn empty_relevant_count(&self) -> usize {
        self.users.iter().filter(|u| u.relevant.is_empty()).count()
    }
}
