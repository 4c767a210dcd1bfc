//! Optimization-based attacks against a locally trained surrogate model.
//!
//! Two flavors. The single-level attack trains the surrogate once on clean
//! data and then, with model parameters frozen, runs projected gradient
//! descent on each fake user's continuous rating (or interaction-weight)
//! vector. With the parameters frozen the genuine users' predictions cannot
//! move, so the adversarial loss is evaluated on the fake users themselves
//! through a fold-in embedding: ridge regression onto the item factors for
//! rating models, a weighted mean of item factors for ranking models. The
//! bi-level attack instead keeps the fake users inside an extended surrogate
//! and alternates inner training epochs with one outer hypergradient step on
//! the fake interaction weights, using a one-virtual-step approximation of
//! the training dynamics.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{compute_stats, FeedbackKind, InteractionDataset, RatingScale};
use crate::error::{Error, Result};
use crate::linalg::{dot, ridge_solve, sigmoid, softplus};
use crate::recommender::{train_bpr, train_mf_pointwise, EmbeddingModel, Task, TrainConfig};
use crate::rng::substream;

use super::{AttackIntent, AttackParams, FakeProfile, FakeProfileSet, OutputKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    MfPointwise,
    BprMf,
}

/// How to build and attack the local proxy model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub model: SurrogateKind,
    pub train: TrainConfig,
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub outer_step_size: f64,
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::Config("inner_steps must be at least 1".into()));
        }
        if self.outer_steps == 0 {
            return Err(Error::Config("outer_steps must be at least 1".into()));
        }
        // 0 is tolerated as a null optimizer (useful as a baseline and for
        // tests); negative steps are nonsense
        if self.outer_step_size < 0.0 {
            return Err(Error::Config(format!(
                "outer_step_size must be non-negative, got {}",
                self.outer_step_size
            )));
        }
        self.train.validate()
    }
}

/// Adversarial loss and its gradient with respect to one fake user's
/// continuous rating vector `v`, the surrogate's parameters held fixed.
///
/// The fake user is folded into the model: a rating-task surrogate solves
/// the ridge problem p = (Q'Q + lambda I)^-1 Q'(v - mu - b) and scores
/// mu + b_i + p.q_i; a ranking surrogate uses the v-weighted mean of item
/// factors and scores p.q_i. Push loss is sum over targets of
/// softplus(best_non_target - s_t); nuke mirrors the sign.
pub fn single_level_adv_grad(
    model: &EmbeddingModel,
    targets: &BTreeSet<u32>,
    v: &[f64],
    fold_lambda: f64,
    intent: AttackIntent,
) -> (f64, Vec<f64>) {
    let d = model.d;
    let n = model.n_items();
    assert_eq!(v.len(), n, "rating vector length mismatch");
    let q = |i: usize| &model.item_factors[i * d..(i + 1) * d];

    // fold the fake user in
    let (p_hat, mean_denom) = match model.task {
        Task::Rating => {
            let mut gram = vec![0.0; d * d];
            for i in 0..n {
                let qi = q(i);
                for a in 0..d {
                    for b in 0..d {
                        gram[a * d + b] += qi[a] * qi[b];
                    }
                }
            }
            let mut rhs = vec![0.0; d];
            for i in 0..n {
                let resid = v[i] - model.global_mean - model.item_bias[i];
                for (r, qf) in rhs.iter_mut().zip(q(i)) {
                    *r += resid * qf;
                }
            }
            (ridge_solve(&gram, d, fold_lambda, &rhs), 0.0)
        }
        Task::Ranking => {
            let denom = v.iter().sum::<f64>() + 1e-9;
            let mut p = vec![0.0; d];
            for i in 0..n {
                for (pf, qf) in p.iter_mut().zip(q(i)) {
                    *pf += v[i] * qf;
                }
            }
            p.iter_mut().for_each(|x| *x /= denom);
            (p, denom)
        }
    };

    let score = |i: usize| match model.task {
        Task::Rating => model.global_mean + model.item_bias[i] + dot(&p_hat, q(i)),
        Task::Ranking => dot(&p_hat, q(i)),
    };
    let (mut best, mut best_s) = (usize::MAX, f64::NEG_INFINITY);
    for i in 0..n {
        if targets.contains(&(i as u32)) {
            continue;
        }
        let s = score(i);
        if s > best_s {
            best_s = s;
            best = i;
        }
    }
    assert!(best != usize::MAX, "no non-target item to rank against");

    // z accumulates the loss gradient in item-factor space
    let mut loss = 0.0;
    let mut z = vec![0.0; d];
    for &t in targets {
        let s_t = score(t as usize);
        let (margin, sign) = match intent {
            AttackIntent::Push => (best_s - s_t, 1.0),
            AttackIntent::Nuke => (s_t - best_s, -1.0),
        };
        loss += softplus(margin);
        let w = sigmoid(margin) * sign;
        for (zf, (qb, qt)) in z.iter_mut().zip(q(best).iter().zip(q(t as usize))) {
            *zf += w * (qb - qt);
        }
    }

    // chain rule back to v
    let grad = match model.task {
        Task::Rating => {
            let mut gram = vec![0.0; d * d];
            for i in 0..n {
                let qi = q(i);
                for a in 0..d {
                    for b in 0..d {
                        gram[a * d + b] += qi[a] * qi[b];
                    }
                }
            }
            let w = ridge_solve(&gram, d, fold_lambda, &z);
            (0..n).map(|i| dot(q(i), &w)).collect()
        }
        Task::Ranking => {
            let pz = dot(&p_hat, &z);
            (0..n)
                .map(|i| (dot(q(i), &z) - pz) / mean_denom)
                .collect()
        }
    };
    (loss, grad)
}

/// Continuous initialization for one fake user's full rating vector:
/// average-attack style draws (per-item normal with a global fallback) for
/// rating surrogates, jittered normalized popularity for ranking.
pub(crate) fn single_level_init(
    train: &InteractionDataset,
    params: &AttackParams,
    idx: usize,
) -> Vec<f64> {
    let stats = compute_stats(train);
    let scale = train.scale();
    let mut rng = substream(params.seed, "sl_init", idx as u64);
    match params.output_kind {
        OutputKind::ExplicitTriplets => (0..train.n_items())
            .map(|i| {
                let (mean, std) = if stats.per_item_count[i] > 0 {
                    (stats.per_item_mean[i], stats.per_item_std[i])
                } else {
                    (stats.global_mean, stats.global_std)
                };
                let r = if std > 0.0 {
                    use rand_distr::Distribution;
                    rand_distr::Normal::new(mean, std).expect("valid normal").sample(&mut rng)
                } else {
                    mean
                };
                scale.clip(r)
            })
            .collect(),
        OutputKind::ImplicitPairs => {
            let max_count = stats.per_item_count.iter().copied().max().unwrap_or(1).max(1);
            (0..train.n_items())
                .map(|i| {
                    let base = stats.per_item_count[i] as f64 / max_count as f64;
                    (base + rng.gen_range(0.0..0.05)).min(1.0)
                })
                .collect()
        }
    }
}

fn optimization_bounds(params: &AttackParams, scale: RatingScale) -> (f64, f64) {
    match params.output_kind {
        OutputKind::ExplicitTriplets => (scale.min, scale.max),
        OutputKind::ImplicitPairs => (0.0, 1.0),
    }
}

/// Keep the filler_size largest-magnitude optimized entries (ties to the
/// lower id), skipping reserved items.
fn top_magnitude(v: &[f64], reserved: &BTreeSet<u32>, count: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..v.len() as u32).filter(|i| !reserved.contains(i)).collect();
    idx.sort_by(|&a, &b| {
        v[b as usize]
            .abs()
            .total_cmp(&v[a as usize].abs())
            .then(a.cmp(&b))
    });
    idx.truncate(count);
    idx
}

fn finish_profile(
    v: &[f64],
    params: &AttackParams,
    scale: RatingScale,
) -> Result<FakeProfile> {
    let reserved = params.reserved_items();
    let filler_items = top_magnitude(v, &reserved, params.filler_size);
    let filler = filler_items
        .into_iter()
        .map(|i| {
            let r = match params.output_kind {
                OutputKind::ExplicitTriplets => {
                    let clipped = scale.clip(v[i as usize]);
                    if scale.integral {
                        scale.discretize(clipped, params.intent.tie_break())
                    } else {
                        clipped
                    }
                }
                OutputKind::ImplicitPairs => 1.0,
            };
            (i, r)
        })
        .collect();
    let target_rating = match params.output_kind {
        OutputKind::ExplicitTriplets => params.intent.target_rating(scale),
        OutputKind::ImplicitPairs => 1.0,
    };
    let selected = match (&params.selected_items, params.output_kind) {
        (Some(sel), OutputKind::ExplicitTriplets) => sel
            .iter()
            .map(|&(i, r)| {
                let clipped = scale.clip(r);
                (
                    i,
                    if scale.integral {
                        scale.discretize(clipped, params.intent.tie_break())
                    } else {
                        clipped
                    },
                )
            })
            .collect(),
        (Some(sel), OutputKind::ImplicitPairs) => {
            sel.iter().map(|&(i, _)| (i, 1.0)).collect()
        }
        (None, _) => Vec::new(),
    };
    Ok(FakeProfile {
        filler,
        selected,
        targets: params
            .target_items
            .iter()
            .map(|&t| (t, target_rating))
            .collect(),
    })
}

fn check_kind(train: &InteractionDataset, params: &AttackParams) -> Result<()> {
    let ok = matches!(
        (params.output_kind, train.feedback()),
        (OutputKind::ExplicitTriplets, FeedbackKind::Explicit)
            | (OutputKind::ImplicitPairs, FeedbackKind::Implicit)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "attack output kind {:?} does not match dataset feedback {:?}",
            params.output_kind,
            train.feedback()
        )))
    }
}

/// Single-level attack: surrogate trained once, fake vectors optimized by
/// projected gradient descent against the frozen model.
pub fn gen_single_level_gradient_attack(
    train: &InteractionDataset,
    surrogate: &SurrogateSpec,
    params: &AttackParams,
) -> Result<FakeProfileSet> {
    surrogate.validate()?;
    params.validate(train.n_items())?;
    check_kind(train, params)?;

    let model = match surrogate.model {
        SurrogateKind::MfPointwise => train_mf_pointwise(train, &surrogate.train)?,
        SurrogateKind::BprMf => train_bpr(train, &surrogate.train)?,
    };
    let scale = train.scale();
    let targets = params.target_set();
    let (lo, hi) = optimization_bounds(params, scale);
    let target_pin = match params.output_kind {
        OutputKind::ExplicitTriplets => params.intent.target_rating(scale),
        OutputKind::ImplicitPairs => 1.0,
    };
    let fold_lambda = surrogate.train.l2_reg.max(1e-6);

    let mut profiles = Vec::with_capacity(params.attack_size);
    for idx in 0..params.attack_size {
        let mut v = single_level_init(train, params, idx);
        for &t in &targets {
            v[t as usize] = target_pin;
        }
        for step in 0..surrogate.outer_steps {
            let (loss, grad) = single_level_adv_grad(&model, &targets, &v, fold_lambda, params.intent);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Attack(format!(
                    "non-finite adversarial gradient at profile {idx}, step {step}"
                )));
            }
            for (i, value) in v.iter_mut().enumerate() {
                if targets.contains(&(i as u32)) {
                    continue;
                }
                *value = (*value - surrogate.outer_step_size * grad[i]).clamp(lo, hi);
            }
        }
        profiles.push(finish_profile(&v, params, scale)?);
    }
    Ok(FakeProfileSet {
        profiles,
        generator_name: "single_level_grad".to_string(),
        params: params.clone(),
    })
}

/// Bi-level attack state: an extended surrogate holding both genuine and
/// fake users, plus per-fake continuous weights over a candidate item pool.
struct BilevelState {
    model: EmbeddingModel,
    pool: Vec<u32>,
    /// attack_size x pool.len(), clamped to the optimization box.
    weights: Vec<f64>,
    n_genuine: usize,
}

/// Genuine users sampled for evaluating the adversarial loss.
fn adv_user_sample(n_genuine: usize, seed: u64) -> Vec<u32> {
    let take = n_genuine.min(200);
    let mut ids: Vec<u32> = (0..n_genuine as u32).collect();
    let mut rng = substream(seed, "adv_users", 0);
    for k in 0..take {
        let j = rng.gen_range(k..ids.len());
        ids.swap(k, j);
    }
    ids.truncate(take);
    ids
}

/// L_adv over the sampled genuine users at the current parameters, together
/// with its gradient with respect to the target and pool item factors.
/// Returns (loss, grad_targets[d * targets], grad_pool[d * pool]).
fn genuine_adv_loss_grad(
    model: &EmbeddingModel,
    users: &[u32],
    targets: &[u32],
    pool: &[u32],
    intent: AttackIntent,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = model.d;
    let n = model.n_items();
    let target_set: BTreeSet<u32> = targets.iter().copied().collect();
    let mut loss = 0.0;
    let mut g_t = vec![0.0; d * targets.len()];
    let mut g_pool = vec![0.0; d * pool.len()];
    let pool_pos: std::collections::HashMap<u32, usize> =
        pool.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    for &u in users {
        let p_u = model.user_vec(u);
        let (mut best, mut best_s) = (0usize, f64::NEG_INFINITY);
        for i in 0..n {
            if target_set.contains(&(i as u32)) {
                continue;
            }
            let s = model.raw_score(u, i as u32);
            if s > best_s {
                best_s = s;
                best = i;
            }
        }
        for (tk, &t) in targets.iter().enumerate() {
            let s_t = model.raw_score(u, t);
            let (margin, sign) = match intent {
                AttackIntent::Push => (best_s - s_t, 1.0),
                AttackIntent::Nuke => (s_t - best_s, -1.0),
            };
            loss += softplus(margin);
            let w = sigmoid(margin) * sign;
            // d loss / d q_t = -w * p_u ; d loss / d q_best = +w * p_u
            for f in 0..d {
                g_t[tk * d + f] -= w * p_u[f];
            }
            if let Some(&bk) = pool_pos.get(&(best as u32)) {
                for f in 0..d {
                    g_pool[bk * d + f] += w * p_u[f];
                }
            }
        }
    }
    (loss, g_t, g_pool)
}

/// One weighted training epoch over genuine interactions plus the fake
/// users' continuous candidate weights.
fn bilevel_inner_epoch(
    state: &mut BilevelState,
    train: &InteractionDataset,
    params: &AttackParams,
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<f64> {
    let d = cfg.d;
    let n_items = train.n_items();
    let targets = params.target_set();
    let pool_len = state.pool.len();

    // sample index space: genuine interactions, then fake (user, pool slot),
    // then fake targets
    #[derive(Clone, Copy)]
    enum Sample {
        Genuine(usize),
        FakePool(usize, usize),
        FakeTarget(usize, u32),
    }
    let mut samples: Vec<Sample> = (0..train.n_interactions()).map(Sample::Genuine).collect();
    for f in 0..params.attack_size {
        for k in 0..pool_len {
            samples.push(Sample::FakePool(f, k));
        }
        for &t in &targets {
            samples.push(Sample::FakeTarget(f, t));
        }
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = substream(cfg.seed, "bilevel_order", epoch);
    order.shuffle(&mut rng);
    let mut neg_rng = substream(cfg.seed, "bilevel_neg", epoch);

    // per-user positive sets for negative sampling
    let mut pos: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); state.model.n_users()];
    for x in train.interactions() {
        pos[x.user as usize].insert(x.item);
    }
    for f in 0..params.attack_size {
        let u = state.n_genuine + f;
        for &i in &state.pool {
            pos[u].insert(i);
        }
        for &t in &targets {
            pos[u].insert(t);
        }
    }

    let mut epoch_loss = 0.0;
    let mut n_steps = 0usize;

    match train.feedback() {
        FeedbackKind::Implicit => {
            for &s in &order {
                let (u, i, w) = match samples[s] {
                    Sample::Genuine(idx) => {
                        let x = &train.interactions()[idx];
                        (x.user as usize, x.item as usize, 1.0)
                    }
                    Sample::FakePool(f, k) => (
                        state.n_genuine + f,
                        state.pool[k] as usize,
                        state.weights[f * pool_len + k],
                    ),
                    Sample::FakeTarget(f, t) => (state.n_genuine + f, t as usize, 1.0),
                };
                if pos[u].len() >= n_items {
                    continue;
                }
                let j = loop {
                    let cand = neg_rng.gen_range(0..n_items as u32);
                    if !pos[u].contains(&cand) {
                        break cand as usize;
                    }
                };
                let m = &mut state.model;
                let x = dot(m.user_vec(u as u32), m.item_vec(i as u32))
                    - dot(m.user_vec(u as u32), m.item_vec(j as u32));
                let g = sigmoid(-x);
                epoch_loss += w * softplus(-x);
                n_steps += 1;
                let lr = cfg.learning_rate * w;
                for f in 0..d {
                    let pu = m.user_factors[u * d + f];
                    let qi = m.item_factors[i * d + f];
                    let qj = m.item_factors[j * d + f];
                    m.user_factors[u * d + f] -=
                        lr * (-g * (qi - qj) + 2.0 * cfg.l2_reg * pu);
                    m.item_factors[i * d + f] -= lr * (-g * pu + 2.0 * cfg.l2_reg * qi);
                    m.item_factors[j * d + f] -= lr * (g * pu + 2.0 * cfg.l2_reg * qj);
                }
            }
        }
        FeedbackKind::Explicit => {
            for &s in &order {
                let (u, i, r, w) = match samples[s] {
                    Sample::Genuine(idx) => {
                        let x = &train.interactions()[idx];
                        (x.user as usize, x.item as usize, x.rating, 1.0)
                    }
                    Sample::FakePool(f, k) => (
                        state.n_genuine + f,
                        state.pool[k] as usize,
                        state.weights[f * pool_len + k],
                        1.0,
                    ),
                    Sample::FakeTarget(f, t) => (
                        state.n_genuine + f,
                        t as usize,
                        params.intent.target_rating(train.scale()),
                        1.0,
                    ),
                };
                let m = &mut state.model;
                let pred = m.global_mean
                    + m.user_bias[u]
                    + m.item_bias[i]
                    + dot(m.user_vec(u as u32), m.item_vec(i as u32));
                let err = r - pred;
                epoch_loss += w * err * err;
                n_steps += 1;
                let lr = cfg.learning_rate * w;
                m.user_bias[u] -= lr * (-2.0 * err + 2.0 * cfg.l2_reg * m.user_bias[u]);
                m.item_bias[i] -= lr * (-2.0 * err + 2.0 * cfg.l2_reg * m.item_bias[i]);
                for f in 0..d {
                    let pu = m.user_factors[u * d + f];
                    let qi = m.item_factors[i * d + f];
                    m.user_factors[u * d + f] -= lr * (-2.0 * err * qi + 2.0 * cfg.l2_reg * pu);
                    m.item_factors[i * d + f] -= lr * (-2.0 * err * pu + 2.0 * cfg.l2_reg * qi);
                }
            }
        }
    }

    let mean = if n_steps > 0 {
        epoch_loss / n_steps as f64
    } else {
        0.0
    };
    if !mean.is_finite() {
        return Err(Error::Diverged(format!(
            "bi-level inner training loss became non-finite at epoch {epoch}"
        )));
    }
    Ok(mean)
}

/// Bi-level attack with the adversarial loss trace over outer steps
/// exposed, one entry per outer iteration (evaluated after that iteration's
/// inner training).
pub fn gen_bilevel_attack_with_trace(
    train: &InteractionDataset,
    surrogate: &SurrogateSpec,
    params: &AttackParams,
) -> Result<(FakeProfileSet, Vec<f64>)> {
    surrogate.validate()?;
    params.validate(train.n_items())?;
    check_kind(train, params)?;

    let empty = |trace: Vec<f64>| {
        (
            FakeProfileSet {
                profiles: Vec::new(),
                generator_name: "bilevel".to_string(),
                params: params.clone(),
            },
            trace,
        )
    };
    if params.attack_size == 0 {
        return Ok(empty(Vec::new()));
    }

    let scale = train.scale();
    let stats = compute_stats(train);
    let reserved = params.reserved_items();
    let targets: Vec<u32> = params.target_items.clone();

    // candidate pool: the most popular unreserved items, 4x the filler
    // budget wide so the optimizer has room to choose
    let mut by_count: Vec<u32> = (0..train.n_items() as u32)
        .filter(|i| !reserved.contains(i))
        .collect();
    by_count.sort_by(|&a, &b| {
        stats.per_item_count[b as usize]
            .cmp(&stats.per_item_count[a as usize])
            .then(a.cmp(&b))
    });
    by_count.truncate((4 * params.filler_size).max(1));
    let pool = by_count;
    let pool_len = pool.len();

    // extended model over genuine + fake users
    let n_genuine = train.n_users();
    let mut model = EmbeddingModel::new(
        match surrogate.model {
            SurrogateKind::MfPointwise => Task::Rating,
            SurrogateKind::BprMf => Task::Ranking,
        },
        n_genuine + params.attack_size,
        train.n_items(),
        surrogate.train.d,
        surrogate.train.seed,
        scale,
    );
    if surrogate.model == SurrogateKind::MfPointwise {
        model.global_mean = stats.global_mean;
    }

    let (lo, hi) = optimization_bounds(params, scale);
    let mut weights = Vec::with_capacity(params.attack_size * pool_len);
    for f in 0..params.attack_size {
        let mut rng = substream(params.seed, "bilevel_init", f as u64);
        for &i in &pool {
            let base = match params.output_kind {
                OutputKind::ImplicitPairs => {
                    let max_count =
                        stats.per_item_count.iter().copied().max().unwrap_or(1).max(1) as f64;
                    stats.per_item_count[i as usize] as f64 / max_count
                }
                OutputKind::ExplicitTriplets => {
                    if stats.per_item_count[i as usize] > 0 {
                        stats.per_item_mean[i as usize]
                    } else {
                        stats.global_mean
                    }
                }
            };
            weights.push((base + rng.gen_range(-0.02..0.02)).clamp(lo, hi));
        }
    }

    let mut state = BilevelState {
        model,
        pool,
        weights,
        n_genuine,
    };
    let adv_users = adv_user_sample(n_genuine, params.seed);
    let eta = surrogate.train.learning_rate;
    let mut trace = Vec::with_capacity(surrogate.outer_steps);
    let mut epoch_counter = 0u64;

    // construct the proxy: train the extended model to (near) convergence on
    // clean data plus the initialized fake profiles before alternating
    for _ in 0..surrogate.train.epochs {
        bilevel_inner_epoch(&mut state, train, params, &surrogate.train, epoch_counter)?;
        epoch_counter += 1;
    }

    for outer in 0..surrogate.outer_steps {
        for _ in 0..surrogate.inner_steps {
            bilevel_inner_epoch(&mut state, train, params, &surrogate.train, epoch_counter)?;
            epoch_counter += 1;
        }

        let (loss, g_t, g_pool) = genuine_adv_loss_grad(
            &state.model,
            &adv_users,
            &targets,
            &state.pool,
            params.intent,
        );
        trace.push(loss);

        // hypergradient through one virtual inner step; explicit pointwise
        // updates carry a factor 2 from the squared loss
        let d = state.model.d;
        let step_scale = match surrogate.model {
            SurrogateKind::MfPointwise => 2.0,
            SurrogateKind::BprMf => 1.0,
        };
        let mut grad = vec![0.0; state.weights.len()];
        for f in 0..params.attack_size {
            let p_f = state
                .model
                .user_vec((state.n_genuine + f) as u32)
                .to_vec();
            // coupling strengths of the fake user toward each target: the
            // sigmoid of the BPR score, or the pointwise residual on the
            // pinned target rating
            let fake_u = (state.n_genuine + f) as u32;
            let target_couple: Vec<f64> = targets
                .iter()
                .map(|&t| match surrogate.model {
                    SurrogateKind::BprMf => sigmoid(-dot(&p_f, state.model.item_vec(t))),
                    SurrogateKind::MfPointwise => {
                        params.intent.target_rating(scale) - state.model.raw_score(fake_u, t)
                    }
                })
                .collect();
            for (k, &i) in state.pool.iter().enumerate() {
                let q_i = state.model.item_vec(i);
                let couple = match surrogate.model {
                    SurrogateKind::BprMf => sigmoid(-dot(&p_f, q_i)),
                    SurrogateKind::MfPointwise => 1.0,
                };
                // one-hop: raising w pulls q_i toward p_f
                let mut g = eta * step_scale * couple * dot(&g_pool[k * d..(k + 1) * d], &p_f);
                // two-hop: w moves p_f, p_f moves q_t on the next pass
                for (tk, tc) in target_couple.iter().enumerate() {
                    g += eta * eta * step_scale * step_scale * tc * couple
                        * dot(&g_t[tk * d..(tk + 1) * d], q_i);
                }
                grad[f * pool_len + k] = g;
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Attack(format!(
                "non-finite hypergradient at outer step {outer}"
            )));
        }
        for (w, g) in state.weights.iter_mut().zip(&grad) {
            *w = (*w - surrogate.outer_step_size * g).clamp(lo, hi);
        }
    }

    // harden: per fake user, keep the heaviest filler_size pool entries
    let mut profiles = Vec::with_capacity(params.attack_size);
    for f in 0..params.attack_size {
        let mut full = vec![0.0; train.n_items()];
        for (k, &i) in state.pool.iter().enumerate() {
            full[i as usize] = state.weights[f * pool_len + k];
        }
        profiles.push(finish_profile(&full, params, scale)?);
    }
    let set = FakeProfileSet {
        profiles,
        generator_name: "bilevel".to_string(),
        params: params.clone(),
    };
    Ok((set, trace))
}

pub fn gen_bilevel_attack(
    train: &InteractionDataset,
    surrogate: &SurrogateSpec,
    params: &AttackParams,
) -> Result<FakeProfileSet> {
    gen_bilevel_attack_with_trace(train, surrogate, params).map(|(set, _)| set)
}
