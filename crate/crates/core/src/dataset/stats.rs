//! Dataset statistics consumed by the attack generators.

use crate::dataset::InteractionDataset;

/// Global and per-entity rating statistics. Standard deviations are
/// population deviations; items with at most one rating report 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub global_mean: f64,
    pub global_std: f64,
    pub per_item_mean: Vec<f64>,
    pub per_item_std: Vec<f64>,
    pub per_item_count: Vec<u64>,
    pub per_user_count: Vec<u64>,
    pub avg_actions_per_user: f64,
    pub avg_actions_per_item: f64,
}

pub fn compute_stats(d: &InteractionDataset) -> DatasetStats {
    let ni = d.n_items();
    let nu = d.n_users();

    // Welford accumulators, one global plus one per item.
    let mut g = Welford::default();
    let mut per_item: Vec<Welford> = vec![Welford::default(); ni];
    let mut per_user_count = vec![0u64; nu];

    for it in d.interactions() {
        g.push(it.rating);
        per_item[it.item as usize].push(it.rating);
        per_user_count[it.user as usize] += 1;
    }

    let n = d.n_interactions() as f64;
    DatasetStats {
        global_mean: g.mean(),
        global_std: g.population_std(),
        per_item_mean: per_item.iter().map(Welford::mean).collect(),
        per_item_std: per_item.iter().map(Welford::population_std).collect(),
        per_item_count: per_item.iter().map(|w| w.count).collect(),
        per_user_count,
        avg_actions_per_user: if nu == 0 { 0.0 } else { n / nu as f64 },
        avg_actions_per_item: if ni == 0 { 0.0 } else { n / ni as f64 },
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.mean
        }
    }

    fn population_std(&self) -> f64 {
        if self.count <= 1 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }
}
