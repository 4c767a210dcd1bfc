//! Item-based k-nearest-neighbor recommender with cosine similarity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};

use super::Scorer;

/// Neighborhood model: per-item top-k similarity lists plus the training
/// profile of every user. Scoring sums the similarities between a candidate
/// item's neighbors and the items the user has interacted with.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ItemKnnModel {
    pub n_users: usize,
    pub n_items: usize,
    pub k: usize,
    /// Per item: (neighbor, similarity), similarity descending, ties by id.
    pub neighbors: Vec<Vec<(u32, f64)>>,
    /// Per user: sorted training item ids.
    pub user_items: Vec<Vec<u32>>,
}

/// Build the model. Similarities are cosine between item rating columns;
/// implicit data reduces to co-occurrence cosine since every rating is 1.
/// Item pairs no user co-rated have similarity zero and are left out.
pub fn train_itemknn(train: &InteractionDataset, k_neighbors: usize) -> Result<ItemKnnModel> {
    if k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be at least 1".into()));
    }
    if train.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut norms_sq = vec![0.0f64; train.n_items()];
    let mut user_items: Vec<Vec<(u32, f64)>> = vec![Vec::new(); train.n_users()];
    for x in train.interactions() {
        norms_sq[x.item as usize] += x.rating * x.rating;
        user_items[x.user as usize].push((x.item, x.rating));
    }
    for items in user_items.iter_mut() {
        items.sort_unstable_by_key(|&(i, _)| i);
    }

    // co-rating dot products, keyed by (low item, high item)
    let mut dots: HashMap<(u32, u32), f64> = HashMap::new();
    for items in &user_items {
        for a in 0..items.len() {
            for b in (a + 1)..items.len() {
                let (ia, ra) = items[a];
                let (ib, rb) = items[b];
                *dots.entry((ia, ib)).or_insert(0.0) += ra * rb;
            }
        }
    }

    let mut neighbors: Vec<Vec<(u32, f64)>> = vec![Vec::new(); train.n_items()];
    for (&(a, b), &dot) in &dots {
        let denom = (norms_sq[a as usize] * norms_sq[b as usize]).sqrt();
        if denom <= 0.0 {
            continue;
        }
        let sim = dot / denom;
        neighbors[a as usize].push((b, sim));
        neighbors[b as usize].push((a, sim));
    }
    for list in neighbors.iter_mut() {
        list.sort_unstable_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        list.truncate(k_neighbors);
    }

    Ok(ItemKnnModel {
        n_users: train.n_users(),
        n_items: train.n_items(),
        k: k_neighbors,
        neighbors,
        user_items: user_items
            .into_iter()
            .map(|items| items.into_iter().map(|(i, _)| i).collect())
            .collect(),
    })
}

impl ItemKnnModel {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        super::save_model(&super::ModelDump::ItemKnn(self.clone()), path)
    }
}

impl Scorer for ItemKnnModel {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score(&self, user: u32, item: u32) -> f64 {
        let profile = &self.user_items[user as usize];
        self.neighbors[item as usize]
            .iter()
            .filter(|(j, _)| profile.binary_search(j).is_ok())
            .map(|&(_, sim)| sim)
            .sum()
    }
}
