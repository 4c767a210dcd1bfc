//! Top-K list quality metrics.

use std::collections::BTreeSet;

use super::TopKGroundTruth;

/// Which relevant set hit rate counts against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitRateVariant {
    /// A user hits when their list intersects their own test items.
    TestHit,
    /// A user hits when their list contains any attack target; the caller
    /// restricts `gt` to genuine users for the usual attack reading.
    TargetItem,
}

/// Micro-averaged precision: Σ|R(u) ∩ T(u)| / Σ|R(u)|.
pub fn precision_at_k(gt: &TopKGroundTruth) -> f64 {
    let (hits, rec, _) = totals(gt);
    ratio(hits, rec)
}

/// Micro-averaged recall: Σ|R(u) ∩ T(u)| / Σ|T(u)|.
pub fn recall_at_k(gt: &TopKGroundTruth) -> f64 {
    let (hits, _, rel) = totals(gt);
    ratio(hits, rel)
}

pub fn f1_at_k(gt: &TopKGroundTruth) -> f64 {
    let p = precision_at_k(gt);
    let r = recall_at_k(gt);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Share of users whose list contains at least one relevant item.
pub fn hit_rate(gt: &TopKGroundTruth, variant: HitRateVariant) -> f64 {
    if gt.users.is_empty() {
        return 0.0;
    }
    let target_set: Option<&BTreeSet<u32>> = match variant {
        HitRateVariant::TestHit => None,
        HitRateVariant::TargetItem => Some(
            gt.target_set
                .as_ref()
                .expect("target_item hit rate needs a target set"),
        ),
    };
    let hits = gt
        .users
        .iter()
        .filter(|u| {
            let relevant = target_set.unwrap_or(&u.relevant);
            u.ranked.iter().any(|i| relevant.contains(i))
        })
        .count();
    hits as f64 / gt.users.len() as f64
}

/// NDCG with binary gains, averaged over users with a non-empty relevant
/// set. Use [`TopKGroundTruth::empty_relevant_count`] for how many users the
/// average excluded.
pub fn ndcg_at_k(gt: &TopKGroundTruth) -> f64 {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for u in &gt.users {
        if u.relevant.is_empty() {
            continue;
        }
        counted += 1;
        let dcg: f64 = u
            .ranked
            .iter()
            .enumerate()
            .filter(|(_, item)| u.relevant.contains(item))
            .map(|(pos, _)| 1.0 / ((pos + 2) as f64).log2())
            .sum();
        // ideal list front-loads every relevant item; binary gains make
        // 2^rel − 1 and rel coincide
        let ideal_len = u.relevant.len().min(gt.k);
        let idcg: f64 = (0..ideal_len).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
        sum += dcg / idcg;
    }
    if counted == 0 {
        0.0
    } else {
        sum / counted as f64
    }
}

/// Mean reciprocal rank of the first relevant item; a miss contributes 0.
pub fn mrr(gt: &TopKGroundTruth) -> f64 {
    if gt.users.is_empty() {
        return 0.0;
    }
    let sum: f64 = gt
        .users
        .iter()
        .map(|u| {
            u.ranked
                .iter()
                .position(|i| u.relevant.contains(i))
                .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
        })
        .sum();
    sum / gt.users.len() as f64
}

/// Mean average precision with the fixed-K denominator: AP@K for one user is
/// Σ_{n=1..K} Precision@n · rel(n) divided by K itself.
pub fn map_at_k(gt: &TopKGroundTruth) -> f64 {
    if gt.users.is_empty() {
        return 0.0;
    }
    let sum: f64 = gt
        .users
        .iter()
        .map(|u| {
            let mut hits = 0usize;
            let mut ap = 0.0;
            for (pos, item) in u.ranked.iter().enumerate() {
                if u.relevant.contains(item) {
                    hits += 1;
                    ap += hits as f64 / (pos + 1) as f64;
                }
            }
            ap / gt.k as f64
        })
        .sum();
    sum / gt.users.len() as f64
}

/// Percentage of users with zero hits; complements test-hit rate.
pub fn failure_rate(gt: &TopKGroundTruth) -> f64 {
    100.0 * (1.0 - hit_rate(gt, HitRateVariant::TestHit))
}

fn totals(gt: &TopKGroundTruth) -> (usize, usize, usize) {
    let mut hits = 0;
    let mut recommended = 0;
    let mut relevant = 0;
    for u in &gt.users {
        hits += u.ranked.iter().filter(|i| u.relevant.contains(i)).count();
        recommended += u.ranked.len();
        relevant += u.relevant.len();
    }
    (hits, recommended, relevant)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
