//! Bayesian personalized ranking on matrix factorization.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{FeedbackKind, InteractionDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, softplus};
use crate::rng::substream;

use super::{EmbeddingModel, LossKind, Task, TrainConfig};

/// Gradient of one triple loss
///   l = -ln sigma(x) + lambda (|p_u|^2 + |q_i|^2 + |q_j|^2),
///   x = p_u . (q_i - q_j)
/// at the current parameters. Returns (loss, d/dp_u, d/dq_i, d/dq_j).
pub fn bpr_sample_grad(
    p_u: &[f64],
    q_i: &[f64],
    q_j: &[f64],
    l2_reg: f64,
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let x = dot(p_u, q_i) - dot(p_u, q_j);
    let loss = softplus(-x) + l2_reg * (dot(p_u, p_u) + dot(q_i, q_i) + dot(q_j, q_j));
    let g = sigmoid(-x);
    let gp = p_u
        .iter()
        .zip(q_i.iter().zip(q_j))
        .map(|(p, (i, j))| -g * (i - j) + 2.0 * l2_reg * p)
        .collect();
    let gi = q_i
        .iter()
        .zip(p_u)
        .map(|(qi, p)| -g * p + 2.0 * l2_reg * qi)
        .collect();
    let gj = q_j
        .iter()
        .zip(p_u)
        .map(|(qj, p)| g * p + 2.0 * l2_reg * qj)
        .collect();
    (loss, gp, gi, gj)
}

/// Per-user positive item sets, reused by samplers and evaluation.
pub(crate) fn positive_sets(train: &InteractionDataset) -> Vec<BTreeSet<u32>> {
    let mut pos = vec![BTreeSet::new(); train.n_users()];
    for x in train.interactions() {
        pos[x.user as usize].insert(x.item);
    }
    pos
}

/// Draw one item outside `pos` uniformly by rejection. Returns None when the
/// user has interacted with everything.
fn sample_negative(rng: &mut impl Rng, n_items: usize, pos: &BTreeSet<u32>) -> Option<u32> {
    if pos.len() >= n_items {
        return None;
    }
    loop {
        let j = rng.gen_range(0..n_items as u32);
        if !pos.contains(&j) {
            return Some(j);
        }
    }
}

/// Train BPR-MF on an implicit dataset. One SGD step per (positive,
/// negative) pair, negatives resampled uniformly every epoch.
pub fn train_bpr(train: &InteractionDataset, cfg: &TrainConfig) -> Result<EmbeddingModel> {
    cfg.validate()?;
    if cfg.task != Task::Ranking || cfg.loss != LossKind::BprPairwise {
        return Err(Error::Config(
            "train_bpr expects task=ranking, loss=bpr_pairwise".into(),
        ));
    }
    if train.feedback() != FeedbackKind::Implicit {
        return Err(Error::InvalidArgument("BPR needs implicit feedback".into()));
    }
    if train.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    if cfg.negatives_per_positive == 0 {
        return Err(Error::Config("negatives_per_positive must be at least 1".into()));
    }

    let mut model = EmbeddingModel::new(
        Task::Ranking,
        train.n_users(),
        train.n_items(),
        cfg.d,
        cfg.seed,
        train.scale(),
    );
    let pos = positive_sets(train);
    let n_items = train.n_items();
    let d = cfg.d;

    let mut order: Vec<usize> = (0..train.n_interactions()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = substream(cfg.seed, "epoch_order", epoch as u64);
        order.shuffle(&mut rng);
        let mut neg_rng = substream(cfg.seed, "negatives", epoch as u64);
        let mut epoch_loss = 0.0;
        let mut n_steps = 0usize;
        for &idx in &order {
            let x = &train.interactions()[idx];
            let u = x.user as usize;
            let i = x.item as usize;
            for _ in 0..cfg.negatives_per_positive {
                let Some(j) = sample_negative(&mut neg_rng, n_items, &pos[u]) else {
                    continue;
                };
                let j = j as usize;
                let (loss, gp, gi, gj) = bpr_sample_grad(
                    &model.user_factors[u * d..(u + 1) * d],
                    &model.item_factors[i * d..(i + 1) * d],
                    &model.item_factors[j * d..(j + 1) * d],
                    cfg.l2_reg,
                );
                epoch_loss += loss;
                n_steps += 1;
                for f in 0..d {
                    model.user_factors[u * d + f] -= cfg.learning_rate * gp[f];
                    model.item_factors[i * d + f] -= cfg.learning_rate * gi[f];
                    model.item_factors[j * d + f] -= cfg.learning_rate * gj[f];
                }
            }
        }
        let mean_loss = if n_steps > 0 {
            epoch_loss / n_steps as f64
        } else {
            0.0
        };
        log::debug!("bpr epoch {epoch}: mean loss {mean_loss:.6}");
        if !mean_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "BPR loss became non-finite at epoch {epoch}"
            )));
        }
        model.train_loss.push(mean_loss);
    }
    model.assert_finite("BPR parameters after training")?;
    model.finalize();
    Ok(model)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::{Interaction, Origin, RatingScale};
    use crate::recommender::gradcheck::max_grad_rel_err;
    use crate::recommender::Scorer;

    /// Two user blocks, each interacting only inside its own item block.
    /// `density` of the block's items go to train; the callers can probe the
    /// rest as held-out positives.
    pub(crate) fn block_dataset(seed: u64, density: f64) -> InteractionDataset {
        let (n_users, n_items) = (50u32, 100u32);
        let mut rows = Vec::new();
        let mut rng = substream(seed, "block_data", 0);
        for u in 0..n_users {
            let block = if u < 25 { 0..50u32 } else { 50..100u32 };
            for i in block {
                if rng.gen_bool(density) {
                    rows.push(Interaction {
                        user: u,
                        item: i,
                        rating: 1.0,
                        timestamp: None,
                    });
                }
            }
        }
        InteractionDataset::from_parts(
            "blocks",
            (0..n_users).map(|u| u.to_string()).collect(),
            (0..n_items).map(|i| i.to_string()).collect(),
            rows,
            FeedbackKind::Implicit,
            RatingScale {
                min: 1.0,
                max: 1.0,
                integral: true,
            },
            Some(vec![Origin::Genuine; n_users as usize]),
        )
        .unwrap()
    }

    #[test]
    fn separable_blocks_reach_high_auc() {
        let data = block_dataset(3, 0.4);
        let cfg = TrainConfig {
            d: 8,
            learning_rate: 0.05,
            l2_reg: 1e-4,
            epochs: 80,
            seed: 1,
            ..TrainConfig::ranking()
        };
        let model = train_bpr(&data, &cfg).unwrap();
        let pos = positive_sets(&data);
        // held-out positives: in-block items never interacted with
        let mut wins = 0usize;
        let mut total = 0usize;
        for u in 0..50u32 {
            let block = if u < 25 { 0..50u32 } else { 50..100u32 };
            let out_block = if u < 25 { 50..100u32 } else { 0..50u32 };
            for i in block.clone() {
                if pos[u as usize].contains(&i) {
                    continue;
                }
                for j in out_block.clone() {
                    total += 1;
                    if model.score(u, i) > model.score(u, j) {
                        wins += 1;
                    }
                }
            }
        }
        let auc = wins as f64 / total as f64;
        assert!(auc > 0.9, "held-out AUC {auc} not above 0.9");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = substream(41, "gradcheck", 0);
        let d = 6;
        for trial in 0..10 {
            let draw = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let p = draw(&mut rng);
            let qi = draw(&mut rng);
            let qj = draw(&mut rng);
            let (_, gp, gi, gj) = bpr_sample_grad(&p, &qi, &qj, 0.02);
            let mut analytic = gp.clone();
            analytic.extend(gi);
            analytic.extend(gj);
            let mut x0 = p.clone();
            x0.extend(qi);
            x0.extend(qj);
            let rel = max_grad_rel_err(
                &mut |v: &[f64]| {
                    bpr_sample_grad(&v[..d], &v[d..2 * d], &v[2 * d..], 0.02).0
                },
                &x0,
                &analytic,
                1e-5,
            );
            assert!(rel <= 1e-4, "trial {trial}: rel err {rel}");
        }
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let data = block_dataset(9, 0.3);
        let cfg = TrainConfig {
            epochs: 5,
            d: 4,
            ..TrainConfig::ranking()
        };
        let a = train_bpr(&data, &cfg).unwrap();
        let b = train_bpr(&data, &cfg).unwrap();
        assert_eq!(a.user_factors, b.user_factors);
        assert_eq!(a.item_factors, b.item_factors);
    }

    #[test]
    fn stronger_regularization_never_grows_parameters() {
        let data = block_dataset(17, 0.3);
        let mut norms = Vec::new();
        for &l2 in &[0.0, 1e-3, 1e-2, 1e-1] {
            let cfg = TrainConfig {
                epochs: 20,
                d: 4,
                l2_reg: l2,
                seed: 6,
                ..TrainConfig::ranking()
            };
            let m = train_bpr(&data, &cfg).unwrap();
            let norm: f64 = m
                .user_factors
                .iter()
                .chain(&m.item_factors)
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            norms.push(norm);
        }
        for w in norms.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "parameter norm grew with lambda: {norms:?}"
            );
        }
    }

    #[test]
    fn rejects_explicit_input() {
        let data = crate::synth::uniform_explicit("exp", 6, 6, 20, 1);
        let err = train_bpr(&data, &TrainConfig::ranking()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
