//! Seeded synthetic datasets.
//!
//! The harness deliberately ships no real rating data. These generators
//! produce datasets with the popularity skew and latent taste structure the
//! pipeline needs, at any scale, from a single seed. `ml100k_like` matches
//! the shape of the classic MovieLens-100K file (943 users, 1,682 items,
//! 100,000 integer ratings in 1..5) for tests and demos that want a
//! realistically proportioned corpus.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{FeedbackKind, Interaction, InteractionDataset, RatingScale, TieBreak};
use crate::rng::substream;

/// Uniform-random distinct pairs with uniform integer ratings in 1..=5.
/// No structure at all; good for invariant and determinism tests.
pub fn uniform_explicit(
    name: &str,
    n_users: usize,
    n_items: usize,
    n_interactions: usize,
    seed: u64,
) -> InteractionDataset {
    assert!(n_interactions <= n_users * n_items);
    let mut rng = substream(seed, "synth_uniform", 0);
    let mut seen = HashSet::with_capacity(n_interactions);
    let mut interactions = Vec::with_capacity(n_interactions);
    while interactions.len() < n_interactions {
        let user = rng.gen_range(0..n_users) as u32;
        let item = rng.gen_range(0..n_items) as u32;
        if !seen.insert((user, item)) {
            continue;
        }
        interactions.push(Interaction {
            user,
            item,
            rating: rng.gen_range(1..=5) as f64,
            timestamp: Some(interactions.len() as i64),
        });
    }
    finish(name, n_users, n_items, interactions)
}

/// Knobs for [`latent_explicit`].
#[derive(Clone, Debug)]
pub struct LatentConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    /// Latent taste dimensionality.
    pub dim: usize,
    /// Zipf exponent for item popularity; 0 disables the skew.
    pub popularity_exponent: f64,
    /// Lognormal sigma of per-user activity; 0 gives near-equal activity.
    pub activity_sigma: f64,
    /// Minimum interactions per user (capped by feasibility).
    pub min_per_user: usize,
    /// Rating noise standard deviation in star units.
    pub noise: f64,
}

/// Ratings drawn from a low-rank taste model plus user/item bias and noise,
/// with Zipf item popularity and lognormal user activity. Integer ratings
/// in 1..=5.
pub fn latent_explicit(name: &str, cfg: &LatentConfig, seed: u64) -> InteractionDataset {
    let LatentConfig {
        n_users,
        n_items,
        n_interactions,
        dim,
        ..
    } = *cfg;
    assert!(n_interactions <= n_users * n_items);
    assert!(n_users > 0 && n_items > 0);

    let scale = RatingScale {
        min: 1.0,
        max: 5.0,
        integral: true,
    };

    // latent factors and biases
    let mut frng = substream(seed, "synth_factors", 0);
    let factor = Normal::new(0.0, (0.45 / (dim as f64).sqrt()).max(1e-9)).unwrap();
    let p: Vec<Vec<f64>> = (0..n_users)
        .map(|_| (0..dim).map(|_| factor.sample(&mut frng)).collect())
        .collect();
    let q: Vec<Vec<f64>> = (0..n_items)
        .map(|_| (0..dim).map(|_| factor.sample(&mut frng)).collect())
        .collect();
    let user_bias = Normal::new(0.0, 0.28).unwrap();
    let item_bias = Normal::new(0.0, 0.4).unwrap();
    let bu: Vec<f64> = (0..n_users).map(|_| user_bias.sample(&mut frng)).collect();
    let bi: Vec<f64> = (0..n_items).map(|_| item_bias.sample(&mut frng)).collect();

    // popularity: items get a shuffled Zipf rank
    let mut ranks: Vec<usize> = (0..n_items).collect();
    {
        use rand::seq::SliceRandom;
        ranks.shuffle(&mut substream(seed, "synth_popularity", 0));
    }
    let weights: Vec<f64> = ranks
        .iter()
        .map(|&r| 1.0 / ((r + 1) as f64).powf(cfg.popularity_exponent))
        .collect();
    let mut cumulative = Vec::with_capacity(n_items);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let total_weight = acc;

    // per-user interaction counts: lognormal activity, fixed total
    let mut arng = substream(seed, "synth_activity", 0);
    let activity = Normal::new(0.0, cfg.activity_sigma.max(1e-9)).unwrap();
    let raw: Vec<f64> = (0..n_users)
        .map(|_| activity.sample(&mut arng).exp())
        .collect();
    let raw_sum: f64 = raw.iter().sum();
    let min_per_user = cfg.min_per_user.min(n_items).min(n_interactions / n_users);
    let mut counts: Vec<usize> = raw
        .iter()
        .map(|w| {
            ((w / raw_sum * n_interactions as f64).round() as usize)
                .clamp(min_per_user, n_items)
        })
        .collect();
    // nudge counts until they sum to the requested total
    let mut diff = n_interactions as i64 - counts.iter().sum::<usize>() as i64;
    let mut cursor = 0usize;
    while diff != 0 {
        let u = cursor % n_users;
        if diff > 0 && counts[u] < n_items {
            counts[u] += 1;
            diff -= 1;
        } else if diff < 0 && counts[u] > min_per_user {
            counts[u] -= 1;
            diff += 1;
        }
        cursor += 1;
    }

    let mut interactions = Vec::with_capacity(n_interactions);
    for u in 0..n_users {
        let mut rng = substream(seed, "synth_user", u as u64);
        let mut chosen: HashSet<u32> = HashSet::with_capacity(counts[u]);
        while chosen.len() < counts[u] {
            let x: f64 = rng.gen_range(0.0..total_weight);
            let i = cumulative.partition_point(|&c| c < x).min(n_items - 1);
            if !chosen.insert(i as u32) {
                continue;
            }
            let dot: f64 = p[u].iter().zip(&q[i]).map(|(a, b)| a * b).sum();
            let noise: f64 = Normal::new(0.0, cfg.noise.max(1e-9)).unwrap().sample(&mut rng);
            let star = 3.55 + bu[u] + bi[i] + 2.2 * dot + noise;
            interactions.push(Interaction {
                user: u as u32,
                item: i as u32,
                rating: scale.discretize(star, TieBreak::Down),
                timestamp: Some(interactions.len() as i64),
            });
        }
    }

    finish(name, n_users, n_items, interactions)
}

/// A dataset with MovieLens-100K proportions: 943 users, 1,682 items,
/// 100,000 integer ratings, long-tailed item popularity, every user with at
/// least 20 ratings.
pub fn ml100k_like(seed: u64) -> InteractionDataset {
    latent_explicit(
        "ml100k-synth",
        &LatentConfig {
            n_users: 943,
            n_items: 1682,
            n_interactions: 100_000,
            dim: 6,
            popularity_exponent: 0.78,
            activity_sigma: 0.75,
            min_per_user: 20,
            noise: 0.85,
        },
        seed,
    )
}

fn finish(
    name: &str,
    n_users: usize,
    n_items: usize,
    interactions: Vec<Interaction>,
) -> InteractionDataset {
    InteractionDataset::from_parts(
        name,
        (0..n_users).map(|u| format!("u{u}")).collect(),
        (0..n_items).map(|i| format!("i{i}")).collect(),
        interactions,
        FeedbackKind::Explicit,
        RatingScale {
            min: 1.0,
            max: 5.0,
            integral: true,
        },
        None,
    )
    .expect("synthetic dataset violates its own invariants")
}
