//! Pointwise matrix factorization trained with SGD on squared error.

use rand::seq::SliceRandom;

use crate::dataset::{FeedbackKind, InteractionDataset};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::substream;

use super::{EmbeddingModel, LossKind, Task, TrainConfig};

#[cfg(test)]
use super::gradcheck::max_grad_rel_err;

/// Gradient of one sample loss
///   l = (r - r_hat)^2 + lambda (b_u^2 + b_i^2 + |p_u|^2 + |q_i|^2)
/// with r_hat = mu + b_u + b_i + p_u . q_i, taken at the current parameters.
#[derive(Clone, Debug)]
pub struct PointwiseGrad {
    pub loss: f64,
    pub b_u: f64,
    pub b_i: f64,
    pub p_u: Vec<f64>,
    pub q_i: Vec<f64>,
}

pub fn pointwise_sample_grad(
    model: &EmbeddingModel,
    user: u32,
    item: u32,
    rating: f64,
    l2_reg: f64,
) -> PointwiseGrad {
    let p = model.user_vec(user);
    let q = model.item_vec(item);
    let b_u = model.user_bias[user as usize];
    let b_i = model.item_bias[item as usize];
    let pred = model.global_mean + b_u + b_i + dot(p, q);
    let err = rating - pred;
    let reg = b_u * b_u + b_i * b_i + dot(p, p) + dot(q, q);
    PointwiseGrad {
        loss: err * err + l2_reg * reg,
        b_u: -2.0 * err + 2.0 * l2_reg * b_u,
        b_i: -2.0 * err + 2.0 * l2_reg * b_i,
        p_u: p
            .iter()
            .zip(q)
            .map(|(pf, qf)| -2.0 * err * qf + 2.0 * l2_reg * pf)
            .collect(),
        q_i: q
            .iter()
            .zip(p)
            .map(|(qf, pf)| -2.0 * err * pf + 2.0 * l2_reg * qf)
            .collect(),
    }
}

/// Train a biased MF model on explicit feedback. Sample order is reshuffled
/// each epoch from the config seed, so runs are reproducible.
pub fn train_mf_pointwise(train: &InteractionDataset, cfg: &TrainConfig) -> Result<EmbeddingModel> {
    cfg.validate()?;
    if cfg.task != Task::Rating || cfg.loss != LossKind::SquaredPointwise {
        return Err(Error::Config(
            "train_mf_pointwise expects task=rating, loss=squared_pointwise".into(),
        ));
    }
    if train.feedback() != FeedbackKind::Explicit {
        return Err(Error::InvalidArgument(
            "pointwise MF needs explicit feedback".into(),
        ));
    }
    if train.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut model = EmbeddingModel::new(
        Task::Rating,
        train.n_users(),
        train.n_items(),
        cfg.d,
        cfg.seed,
        train.scale(),
    );
    model.global_mean = train
        .interactions()
        .iter()
        .map(|x| x.rating)
        .sum::<f64>()
        / train.n_interactions() as f64;

    let mut order: Vec<usize> = (0..train.n_interactions()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = substream(cfg.seed, "epoch_order", epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &idx in &order {
            let x = &train.interactions()[idx];
            let g = pointwise_sample_grad(&model, x.user, x.item, x.rating, cfg.l2_reg);
            epoch_loss += g.loss;
            let u = x.user as usize;
            let i = x.item as usize;
            model.user_bias[u] -= cfg.learning_rate * g.b_u;
            model.item_bias[i] -= cfg.learning_rate * g.b_i;
            let d = model.d;
            for f in 0..d {
                model.user_factors[u * d + f] -= cfg.learning_rate * g.p_u[f];
                model.item_factors[i * d + f] -= cfg.learning_rate * g.q_i[f];
            }
        }
        let mean_loss = epoch_loss / train.n_interactions() as f64;
        log::debug!("mf epoch {epoch}: mean loss {mean_loss:.6}");
        if !mean_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "pointwise MF loss became non-finite at epoch {epoch}"
            )));
        }
        model.train_loss.push(mean_loss);
    }
    model.assert_finite("pointwise MF parameters after training")?;
    model.finalize();
    Ok(model)
}
