//! LightGCN: BPR loss on graph-propagated embeddings.
//!
//! The user-item graph is symmetric, so backpropagation through the layer
//! averaging is the same propagation operator applied to the upstream
//! gradient. Training is full-batch per epoch: accumulate the BPR gradient
//! in final-embedding space over every (positive, sampled negative) pair,
//! push it back through the graph once, then take a single step.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeedbackKind, InteractionDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, softplus};
use crate::rng::substream;

use super::bpr::{positive_sets, train_bpr};
use super::{EmbeddingModel, LossKind, Task, TrainConfig};

/// Symmetrically normalized bipartite adjacency. Edge (u, i) carries weight
/// 1/sqrt(deg(u) * deg(i)); neighbor lists are sorted by id so accumulation
/// order, and therefore every float bit, is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormAdjacency {
    pub user_edges: Vec<Vec<(u32, f64)>>,
    pub item_edges: Vec<Vec<(u32, f64)>>,
}

pub fn build_norm_adjacency(train: &InteractionDataset) -> NormAdjacency {
    let mut user_deg = vec![0usize; train.n_users()];
    let mut item_deg = vec![0usize; train.n_items()];
    for x in train.interactions() {
        user_deg[x.user as usize] += 1;
        item_deg[x.item as usize] += 1;
    }
    let mut user_edges = vec![Vec::new(); train.n_users()];
    let mut item_edges = vec![Vec::new(); train.n_items()];
    for x in train.interactions() {
        let w = 1.0 / ((user_deg[x.user as usize] * item_deg[x.item as usize]) as f64).sqrt();
        user_edges[x.user as usize].push((x.item, w));
        item_edges[x.item as usize].push((x.user, w));
    }
    for edges in user_edges.iter_mut().chain(item_edges.iter_mut()) {
        edges.sort_unstable_by_key(|&(id, _)| id);
    }
    NormAdjacency {
        user_edges,
        item_edges,
    }
}

impl NormAdjacency {
    /// One application of the normalized adjacency to stacked embeddings.
    pub fn propagate(
        &self,
        user_emb: &[f64],
        item_emb: &[f64],
        d: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut next_user = vec![0.0; user_emb.len()];
        let mut next_item = vec![0.0; item_emb.len()];
        for (u, edges) in self.user_edges.iter().enumerate() {
            let row = &mut next_user[u * d..(u + 1) * d];
            for &(i, w) in edges {
                let src = &item_emb[i as usize * d..(i as usize + 1) * d];
                for f in 0..d {
                    row[f] += w * src[f];
                }
            }
        }
        for (i, edges) in self.item_edges.iter().enumerate() {
            let row = &mut next_item[i * d..(i + 1) * d];
            for &(u, w) in edges {
                let src = &user_emb[u as usize * d..(u as usize + 1) * d];
                for f in 0..d {
                    row[f] += w * src[f];
                }
            }
        }
        (next_user, next_item)
    }

    /// Mean of propagation layers 0..=layers.
    pub fn propagate_mean(
        &self,
        user_emb: &[f64],
        item_emb: &[f64],
        d: usize,
        layers: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut sum_user = user_emb.to_vec();
        let mut sum_item = item_emb.to_vec();
        let mut cur_user = user_emb.to_vec();
        let mut cur_item = item_emb.to_vec();
        for _ in 0..layers {
            let (nu, ni) = self.propagate(&cur_user, &cur_item, d);
            cur_user = nu;
            cur_item = ni;
            for (s, c) in sum_user.iter_mut().zip(&cur_user) {
                *s += c;
            }
            for (s, c) in sum_item.iter_mut().zip(&cur_item) {
                *s += c;
            }
        }
        let scale = 1.0 / (layers + 1) as f64;
        sum_user.iter_mut().for_each(|x| *x *= scale);
        sum_item.iter_mut().for_each(|x| *x *= scale);
        (sum_user, sum_item)
    }
}

/// Full gradient of one triple loss with respect to the base embeddings,
/// propagation included:
///   l = -ln sigma(p~_u . (q~_i - q~_j))
///       + lambda (|e_u|^2 + |e_i|^2 + |e_j|^2)
/// where p~, q~ are the layer-averaged embeddings and e the base rows.
/// Returns (loss, d/d user_emb, d/d item_emb) as dense matrices.
#[allow(clippy::too_many_arguments)]
pub fn lightgcn_sample_grad(
    user_emb: &[f64],
    item_emb: &[f64],
    d: usize,
    adj: &NormAdjacency,
    layers: usize,
    triple: (u32, u32, u32),
    l2_reg: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let (u, i, j) = triple;
    let (pu, qi) = adj.propagate_mean(user_emb, item_emb, d, layers);
    let p = &pu[u as usize * d..(u as usize + 1) * d];
    let q_i = &qi[i as usize * d..(i as usize + 1) * d];
    let q_j = &qi[j as usize * d..(j as usize + 1) * d];
    let x = dot(p, q_i) - dot(p, q_j);
    let g = sigmoid(-x);

    // gradient in final-embedding space, nonzero on three rows only
    let mut g_user = vec![0.0; user_emb.len()];
    let mut g_item = vec![0.0; item_emb.len()];
    for f in 0..d {
        g_user[u as usize * d + f] = -g * (q_i[f] - q_j[f]);
        g_item[i as usize * d + f] = -g * p[f];
        g_item[j as usize * d + f] = g * p[f];
    }
    let (mut d_user, mut d_item) = backprop_mean(adj, &g_user, &g_item, d, layers);

    // regularization acts on the base rows of the triple
    for f in 0..d {
        d_user[u as usize * d + f] += 2.0 * l2_reg * user_emb[u as usize * d + f];
        d_item[i as usize * d + f] += 2.0 * l2_reg * item_emb[i as usize * d + f];
        d_item[j as usize * d + f] += 2.0 * l2_reg * item_emb[j as usize * d + f];
    }
    fn base(emb: &[f64], r: u32, d: usize) -> &[f64] {
        &emb[r as usize * d..(r as usize + 1) * d]
    }
    let reg = dot(base(user_emb, u, d), base(user_emb, u, d))
        + dot(base(item_emb, i, d), base(item_emb, i, d))
        + dot(base(item_emb, j, d), base(item_emb, j, d));

    (softplus(-x) + l2_reg * reg, d_user, d_item)
}

/// Pull a gradient in final-embedding space back to the base embeddings.
/// The stacked adjacency is symmetric, so this is the forward layer mean
/// applied to the gradient.
fn backprop_mean(
    adj: &NormAdjacency,
    g_user: &[f64],
    g_item: &[f64],
    d: usize,
    layers: usize,
) -> (Vec<f64>, Vec<f64>) {
    adj.propagate_mean(g_user, g_item, d, layers)
}

/// Train LightGCN with `n_layers` propagation layers. Zero layers is exactly
/// BPR-MF and is delegated so the two share every code path.
pub fn train_lightgcn(
    train: &InteractionDataset,
    cfg: &TrainConfig,
    n_layers: usize,
) -> Result<EmbeddingModel> {
    if n_layers == 0 {
        return train_bpr(train, cfg);
    }
    cfg.validate()?;
    if cfg.task != Task::Ranking || cfg.loss != LossKind::BprPairwise {
        return Err(Error::Config(
            "train_lightgcn expects task=ranking, loss=bpr_pairwise".into(),
        ));
    }
    if train.feedback() != FeedbackKind::Implicit {
        return Err(Error::InvalidArgument(
            "LightGCN needs implicit feedback".into(),
        ));
    }
    if train.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut model = EmbeddingModel::new(
        Task::Ranking,
        train.n_users(),
        train.n_items(),
        cfg.d,
        cfg.seed,
        train.scale(),
    );
    let adj = build_norm_adjacency(train);
    let pos = positive_sets(train);
    let d = cfg.d;
    let n_items = train.n_items();

    let mut order: Vec<usize> = (0..train.n_interactions()).collect();
    for epoch in 0..cfg.epochs {
        let (pu, qi) = adj.propagate_mean(&model.user_factors, &model.item_factors, d, n_layers);

        let mut rng = substream(cfg.seed, "epoch_order", epoch as u64);
        order.shuffle(&mut rng);
        let mut neg_rng = substream(cfg.seed, "negatives", epoch as u64);

        let mut g_user = vec![0.0; model.user_factors.len()];
        let mut g_item = vec![0.0; model.item_factors.len()];
        let mut reg_user = vec![0.0; model.user_factors.len()];
        let mut reg_item = vec![0.0; model.item_factors.len()];
        let mut epoch_loss = 0.0;
        let mut n_steps = 0usize;
        for &idx in &order {
            let x = &train.interactions()[idx];
            let u = x.user as usize;
            let i = x.item as usize;
            for _ in 0..cfg.negatives_per_positive {
                use rand::Rng;
                let j = loop {
                    if pos[u].len() >= n_items {
                        break None;
                    }
                    let cand = neg_rng.gen_range(0..n_items as u32);
                    if !pos[u].contains(&cand) {
                        break Some(cand as usize);
                    }
                };
                let Some(j) = j else { continue };
                let p = &pu[u * d..(u + 1) * d];
                let q_i = &qi[i * d..(i + 1) * d];
                let q_j = &qi[j * d..(j + 1) * d];
                let x = dot(p, q_i) - dot(p, q_j);
                let g = sigmoid(-x);
                for f in 0..d {
                    g_user[u * d + f] += -g * (q_i[f] - q_j[f]);
                    g_item[i * d + f] += -g * p[f];
                    g_item[j * d + f] += g * p[f];
                    reg_user[u * d + f] += 2.0 * cfg.l2_reg * model.user_factors[u * d + f];
                    reg_item[i * d + f] += 2.0 * cfg.l2_reg * model.item_factors[i * d + f];
                    reg_item[j * d + f] += 2.0 * cfg.l2_reg * model.item_factors[j * d + f];
                }
                epoch_loss += softplus(-x);
                n_steps += 1;
            }
        }
        if n_steps == 0 {
            model.train_loss.push(0.0);
            continue;
        }
        let (mut d_user, mut d_item) = backprop_mean(&adj, &g_user, &g_item, d, n_layers);
        let inv = 1.0 / n_steps as f64;
        for (dst, reg) in d_user.iter_mut().zip(&reg_user) {
            *dst = (*dst + reg) * inv;
        }
        for (dst, reg) in d_item.iter_mut().zip(&reg_item) {
            *dst = (*dst + reg) * inv;
        }
        for (w, g) in model.user_factors.iter_mut().zip(&d_user) {
            *w -= cfg.learning_rate * g;
        }
        for (w, g) in model.item_factors.iter_mut().zip(&d_item) {
            *w -= cfg.learning_rate * g;
        }
        let mean_loss = epoch_loss * inv;
        log::debug!("lightgcn epoch {epoch}: mean loss {mean_loss:.6}");
        if !mean_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "LightGCN loss became non-finite at epoch {epoch}"
            )));
        }
        model.train_loss.push(mean_loss);
    }
    model.assert_finite("LightGCN parameters after training")?;
    model.n_layers = n_layers;
    model.norm_adjacency = Some(adj);
    model.finalize();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Interaction, Origin, RatingScale};
    use crate::recommender::bpr::tests::block_dataset;
    use crate::recommender::gradcheck::max_grad_rel_err;
    use crate::recommender::Scorer;
    use approx::assert_abs_diff_eq;

    fn implicit(rows: Vec<(u32, u32)>, n_users: u32, n_items: u32) -> InteractionDataset {
        InteractionDataset::from_parts(
            "graph",
            (0..n_users).map(|u| u.to_string()).collect(),
            (0..n_items).map(|i| i.to_string()).collect(),
            rows.into_iter()
                .map(|(u, i)| Interaction {
                    user: u,
                    item: i,
                    rating: 1.0,
                    timestamp: None,
                })
                .collect(),
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
    fn adjacency_weights_match_hand_computation() {
        // 2 users, 2 items; edges u0-i0, u0-i1, u1-i0
        let data = implicit(vec![(0, 0), (0, 1), (1, 0)], 2, 2);
        let adj = build_norm_adjacency(&data);
        // deg(u0)=2, deg(u1)=1, deg(i0)=2, deg(i1)=1
        assert_eq!(adj.user_edges[0].len(), 2);
        assert_abs_diff_eq!(adj.user_edges[0][0].1, 0.5, epsilon = 1e-15); // u0-i0
        assert_abs_diff_eq!(
            adj.user_edges[0][1].1,
            1.0 / 2f64.sqrt(),
            epsilon = 1e-15
        ); // u0-i1
        assert_abs_diff_eq!(
            adj.user_edges[1][0].1,
            1.0 / 2f64.sqrt(),
            epsilon = 1e-15
        ); // u1-i0
        assert_eq!(adj.item_edges[0].len(), 2);
        assert_eq!(adj.item_edges[1], vec![(0, 1.0 / 2f64.sqrt())]);
    }

    #[test]
    fn zero_layers_is_exactly_bpr() {
        let data = block_dataset(5, 0.3);
        let cfg = TrainConfig {
            epochs: 8,
            d: 4,
            seed: 3,
            ..TrainConfig::ranking()
        };
        let gcn = train_lightgcn(&data, &cfg, 0).unwrap();
        let bpr = train_bpr(&data, &cfg).unwrap();
        for u in 0..10u32 {
            for i in 0..20u32 {
                assert_eq!(gcn.score(u, i), bpr.score(u, i));
            }
        }
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        // 5 users, 6 items, a loosely connected graph
        let data = implicit(
            vec![
                (0, 0),
                (0, 1),
                (1, 1),
                (1, 2),
                (2, 2),
                (2, 3),
                (3, 3),
                (3, 4),
                (4, 4),
                (4, 5),
                (0, 5),
            ],
            5,
            6,
        );
        let adj = build_norm_adjacency(&data);
        let d = 3;
        let mut rng = substream(77, "lightgcn_fd", 0);
        use rand::Rng;
        let user_emb: Vec<f64> = (0..5 * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let item_emb: Vec<f64> = (0..6 * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        for &triple in &[(0u32, 0u32, 3u32), (2, 3, 5), (4, 5, 0)] {
            let (_, gu, gi) =
                lightgcn_sample_grad(&user_emb, &item_emb, d, &adj, 2, triple, 0.01);
            let mut analytic = gu.clone();
            analytic.extend(gi);
            let mut x0 = user_emb.clone();
            x0.extend(item_emb.clone());
            let rel = max_grad_rel_err(
                &mut |v: &[f64]| {
                    lightgcn_sample_grad(&v[..5 * d], &v[5 * d..], d, &adj, 2, triple, 0.01).0
                },
                &x0,
                &analytic,
                1e-5,
            );
            assert!(rel <= 1e-4, "triple {triple:?}: rel err {rel}");
        }
    }

    #[test]
    fn training_separates_blocks() {
        let data = block_dataset(21, 0.4);
        let cfg = TrainConfig {
            d: 8,
            learning_rate: 12.0,
            l2_reg: 1e-4,
            epochs: 150,
            seed: 2,
            ..TrainConfig::ranking()
        };
        let model = train_lightgcn(&data, &cfg, 2).unwrap();
        let pos = positive_sets(&data);
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
        // loss should be broadly decreasing
        let first = model.train_loss[0];
        let last = *model.train_loss.last().unwrap();
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn propagated_scores_survive_a_dump_reload() {
        let data = block_dataset(8, 0.3);
        let cfg = TrainConfig {
            epochs: 10,
            d: 4,
            learning_rate: 8.0,
            ..TrainConfig::ranking()
        };
        let model = train_lightgcn(&data, &cfg, 2).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("gcn.json");
        model.save(&path).unwrap();
        let crate::recommender::ModelDump::Embedding(back) =
            crate::recommender::load_model(&path).unwrap()
        else {
            panic!("wrong kind")
        };
        for u in 0..50u32 {
            for i in 0..100u32 {
                assert_eq!(model.score(u, i), back.score(u, i));
            }
        }
    }
}
