//! Train/test holdout splitting.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

use super::{Interaction, InteractionDataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum SplitStrategy {
    /// Seeded shuffle, then the first floor(train_fraction * n) interactions
    /// go to train.
    RatioRandom { train_fraction: f64 },
    /// k seeded-random interactions per user go to test; users with fewer
    /// than k + 1 interactions stay entirely in train.
    LeaveKOut { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub strategy: SplitStrategy,
    pub seed: u64,
}

/// Partition a dataset into disjoint train and test sides. Both sides share
/// the parent's user and item index space, and interaction order within each
/// side follows the parent's order.
pub fn split_holdout(
    d: &InteractionDataset,
    spec: &SplitSpec,
) -> Result<(InteractionDataset, InteractionDataset)> {
    let n = d.n_interactions();
    let mut in_test = vec![false; n];

    match spec.strategy {
        SplitStrategy::RatioRandom { train_fraction } => {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "train_fraction must be in (0, 1), got {train_fraction}"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut substream(spec.seed, "split_ratio", 0));
            let train_len = (train_fraction * n as f64).floor() as usize;
            for &idx in &order[train_len..] {
                in_test[idx] = true;
            }
        }
        SplitStrategy::LeaveKOut { k } => {
            if k == 0 {
                return Err(Error::InvalidArgument("leave_k_out requires k >= 1".into()));
            }
            let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); d.n_users()];
            for (idx, it) in d.interactions().iter().enumerate() {
                per_user[it.user as usize].push(idx);
            }
            let mut skipped = 0usize;
            for (u, rows) in per_user.iter().enumerate() {
                if rows.is_empty() {
                    continue;
                }
                if rows.len() < k + 1 {
                    skipped += 1;
                    continue;
                }
                let mut rng = substream(spec.seed, "leave_k_out", u as u64);
                // Floyd-style sampling of k distinct positions
                let mut chosen = std::collections::BTreeSet::new();
                while chosen.len() < k {
                    chosen.insert(rng.gen_range(0..rows.len()));
                }
                for pos in chosen {
                    in_test[rows[pos]] = true;
                }
            }
            if skipped > 0 {
                log::info!(
                    "leave_{k}_out: {skipped} users with fewer than {} interactions kept fully in train",
                    k + 1
                );
            }
        }
    }

    let part = |keep_test: bool| -> Vec<Interaction> {
        d.interactions()
            .iter()
            .enumerate()
            .filter(|(idx, _)| in_test[*idx] == keep_test)
            .map(|(_, it)| *it)
            .collect()
    };

    let make = |interactions: Vec<Interaction>| {
        InteractionDataset::from_parts(
            d.name().to_string(),
            d.user_ids().to_vec(),
            d.item_ids().to_vec(),
            interactions,
            d.feedback(),
            d.scale(),
            d.origin().map(|o| o.to_vec()),
        )
    };

    Ok((make(part(false))?, make(part(true))?))
}
