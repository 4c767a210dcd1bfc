//! Victim recommendation models with hand-derived gradients.
//!
//! Four models: pointwise matrix factorization for rating prediction, BPR-MF
//! and LightGCN for implicit ranking, and an ItemKNN baseline. Training is
//! single-threaded seeded SGD, so identical inputs give identical parameters.

pub mod gradcheck;

mod bpr;
mod knn;
mod lightgcn;
mod mf;
mod topk;

pub use bpr::{bpr_sample_grad, train_bpr};
pub use knn::{train_itemknn, ItemKnnModel};
pub use lightgcn::{build_norm_adjacency, lightgcn_sample_grad, train_lightgcn, NormAdjacency};
pub use mf::{pointwise_sample_grad, train_mf_pointwise, PointwiseGrad};
pub use topk::recommend_topk;

use serde::{Deserialize, Serialize};

use crate::dataset::RatingScale;
use crate::error::{Error, Result};
use crate::rng::substream;

use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Rating,
    Ranking,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredPointwise,
    BprPairwise,
}

/// Hyperparameters shared by the embedding trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: Task,
    pub loss: LossKind,
    pub d: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Ranking,
            loss: LossKind::BprPairwise,
            d: 32,
            learning_rate: 0.01,
            l2_reg: 1e-4,
            epochs: 50,
            negatives_per_positive: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn rating() -> Self {
        TrainConfig {
            task: Task::Rating,
            loss: LossKind::SquaredPointwise,
            ..TrainConfig::default()
        }
    }

    pub fn ranking() -> Self {
        TrainConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.l2_reg < 0.0 {
            return Err(Error::Config(format!(
                "l2_reg must be non-negative, got {}",
                self.l2_reg
            )));
        }
        if self.d == 0 {
            return Err(Error::Config("latent dimension d must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Anything that can score (user, item) pairs for ranking or prediction.
pub trait Scorer {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn score(&self, user: u32, item: u32) -> f64;

    /// Scores for every item for one user; override when a batch form is
    /// cheaper than item-by-item calls.
    fn scores_for_user(&self, user: u32) -> Vec<f64> {
        (0..self.n_items() as u32).map(|i| self.score(user, i)).collect()
    }
}

/// Latent-factor model: biases plus factor matrices, optionally with
/// LightGCN propagation on top.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub task: Task,
    pub global_mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    /// Flat n_users * d, row per user.
    pub user_factors: Vec<f64>,
    /// Flat n_items * d, row per item.
    pub item_factors: Vec<f64>,
    pub d: usize,
    pub n_layers: usize,
    pub norm_adjacency: Option<NormAdjacency>,
    pub scale: RatingScale,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Propagated embeddings, rebuilt on load; None when n_layers = 0.
    #[serde(skip)]
    propagated: Option<(Vec<f64>, Vec<f64>)>,
}

impl EmbeddingModel {
    pub(crate) fn new(
        task: Task,
        n_users: usize,
        n_items: usize,
        d: usize,
        seed: u64,
        scale: RatingScale,
    ) -> Self {
        let (user_factors, item_factors) = init_factors(seed, n_users, n_items, d);
        EmbeddingModel {
            task,
            global_mean: 0.0,
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            user_factors,
            item_factors,
            d,
            n_layers: 0,
            norm_adjacency: None,
            scale,
            train_loss: Vec::new(),
            propagated: None,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_bias.len()
    }

    pub fn user_vec(&self, u: u32) -> &[f64] {
        let u = u as usize;
        &self.user_factors[u * self.d..(u + 1) * self.d]
    }

    pub fn item_vec(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.item_factors[i * self.d..(i + 1) * self.d]
    }

    /// Recompute the propagated embedding cache. Must be called after
    /// training or deserializing a model with n_layers >= 1; a no-op
    /// otherwise.
    pub fn finalize(&mut self) {
        self.propagated = match (&self.norm_adjacency, self.n_layers) {
            (Some(adj), layers) if layers >= 1 => Some(adj.propagate_mean(
                &self.user_factors,
                &self.item_factors,
                self.d,
                layers,
            )),
            _ => None,
        };
    }

    fn effective_vecs(&self, user: u32, item: u32) -> (&[f64], &[f64]) {
        match &self.propagated {
            Some((pu, qi)) => {
                let u = user as usize;
                let i = item as usize;
                (
                    &pu[u * self.d..(u + 1) * self.d],
                    &qi[i * self.d..(i + 1) * self.d],
                )
            }
            None => (self.user_vec(user), self.item_vec(item)),
        }
    }

    /// Unclipped model output: μ + b_u + b_i + P_u·Q_i for rating models,
    /// the (propagated) dot product for ranking models.
    pub fn raw_score(&self, user: u32, item: u32) -> f64 {
        let (p, q) = self.effective_vecs(user, item);
        let dot = crate::linalg::dot(p, q);
        match self.task {
            Task::Rating => {
                self.global_mean
                    + self.user_bias[user as usize]
                    + self.item_bias[item as usize]
                    + dot
            }
            Task::Ranking => dot,
        }
    }

    /// Predicted rating clipped to the dataset bounds, for metric use.
    pub fn predict_rating(&self, user: u32, item: u32) -> Result<f64> {
        if user as usize >= self.n_users() || item as usize >= self.n_items() {
            return Err(Error::InvalidArgument(format!(
                "prediction for (user {user}, item {item}) outside model shape {}x{}",
                self.n_users(),
                self.n_items()
            )));
        }
        Ok(self.scale.clip(self.raw_score(user, item)))
    }

    pub fn assert_finite(&self, context: &str) -> Result<()> {
        let finite = self.user_bias.iter().all(|x| x.is_finite())
            && self.item_bias.iter().all(|x| x.is_finite())
            && self.user_factors.iter().all(|x| x.is_finite())
            && self.item_factors.iter().all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::Diverged(context.to_string()))
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        save_model(&ModelDump::Embedding(self.clone()), path)
    }
}

impl Scorer for EmbeddingModel {
    fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    fn n_items(&self) -> usize {
        self.item_bias.len()
    }

    fn score(&self, user: u32, item: u32) -> f64 {
        self.raw_score(user, item)
    }

    fn scores_for_user(&self, user: u32) -> Vec<f64> {
        let d = self.d;
        let (p, items) = match &self.propagated {
            Some((pu, qi)) => (&pu[user as usize * d..(user as usize + 1) * d], &qi[..]),
            None => (self.user_vec(user), &self.item_factors[..]),
        };
        let mut out = Vec::with_capacity(self.n_items());
        for i in 0..self.n_items() {
            let dot = crate::linalg::dot(p, &items[i * d..(i + 1) * d]);
            out.push(match self.task {
                Task::Rating => {
                    self.global_mean + self.user_bias[user as usize] + self.item_bias[i] + dot
                }
                Task::Ranking => dot,
            });
        }
        out
    }
}

/// Factor init shared by every embedding trainer: Normal(0, 0.1/sqrt(d)),
/// users drawn before items.
fn init_factors(seed: u64, n_users: usize, n_items: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let sd = 0.1 / (d as f64).sqrt();
    let dist = Normal::new(0.0, sd).expect("valid normal");
    let mut rng = substream(seed, "factor_init", 0);
    let users = (0..n_users * d).map(|_| dist.sample(&mut rng)).collect();
    let items = (0..n_items * d).map(|_| dist.sample(&mut rng)).collect();
    (users, items)
}

/// One ranked recommendation list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: u32,
    pub items: Vec<u32>,
    pub scores: Vec<f64>,
}

/// Versioned on-disk model dump.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDump {
    Embedding(EmbeddingModel),
    ItemKnn(ItemKnnModel),
}

#[derive(Serialize, Deserialize)]
struct DumpEnvelope {
    version: u32,
    #[serde(flatten)]
    model: ModelDump,
}

const MODEL_DUMP_VERSION: u32 = 1;

pub fn save_model(model: &ModelDump, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let env = DumpEnvelope {
        version: MODEL_DUMP_VERSION,
        model: match model {
            ModelDump::Embedding(m) => ModelDump::Embedding(m.clone()),
            ModelDump::ItemKnn(m) => ModelDump::ItemKnn(m.clone()),
        },
    };
    let json = serde_json::to_string(&env).map_err(|e| Error::Cache(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<std::path::Path>) -> Result<ModelDump> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: DumpEnvelope =
        serde_json::from_str(&text).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
    if env.version != MODEL_DUMP_VERSION {
        return Err(Error::Cache(format!(
            "{}: model dump version {} unsupported",
            path.display(),
            env.version
        )));
    }
    let mut model = env.model;
    if let ModelDump::Embedding(m) = &mut model {
        m.finalize();
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scale() -> RatingScale {
        RatingScale {
            min: 1.0,
            max: 5.0,
            integral: true,
        }
    }

    #[test]
    fn zeroed_model_predicts_global_mean() {
        let mut m = EmbeddingModel::new(Task::Rating, 3, 4, 2, 0, scale());
        m.user_factors.iter_mut().for_each(|x| *x = 0.0);
        m.item_factors.iter_mut().for_each(|x| *x = 0.0);
        m.global_mean = 3.5;
        assert_eq!(m.predict_rating(0, 0).unwrap(), 3.5);
    }

    #[test]
    fn predict_clips_to_bounds() {
        let mut m = EmbeddingModel::new(Task::Rating, 1, 1, 1, 0, scale());
        m.global_mean = 3.5;
        m.item_bias[0] = 2.7; // raw 6.2
        assert_eq!(m.predict_rating(0, 0).unwrap(), 5.0);
        m.item_bias[0] = -9.0;
        assert_eq!(m.predict_rating(0, 0).unwrap(), 1.0);
    }

    #[test]
    fn raw_score_matches_manual_dot() {
        let mut m = EmbeddingModel::new(Task::Rating, 2, 2, 3, 9, scale());
        m.global_mean = 3.0;
        m.user_bias[1] = 0.25;
        m.item_bias[0] = -0.5;
        let manual = 3.0 + 0.25 - 0.5
            + m.user_vec(1)
                .iter()
                .zip(m.item_vec(0))
                .map(|(a, b)| a * b)
                .sum::<f64>();
        assert_abs_diff_eq!(m.raw_score(1, 0), manual, epsilon = 1e-15);
    }

    #[test]
    fn unknown_id_is_an_error() {
        let m = EmbeddingModel::new(Task::Rating, 2, 2, 2, 0, scale());
        assert!(m.predict_rating(2, 0).is_err());
        assert!(m.predict_rating(0, 5).is_err());
    }

    #[test]
    fn dump_round_trip_reproduces_scores() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("model.json");
        let mut m = EmbeddingModel::new(Task::Ranking, 4, 5, 3, 11, scale());
        m.global_mean = 0.1;
        m.save(&path).unwrap();
        let ModelDump::Embedding(back) = load_model(&path).unwrap() else {
            panic!("wrong model kind")
        };
        for u in 0..4 {
            for i in 0..5 {
                assert_eq!(m.raw_score(u, i), back.raw_score(u, i));
            }
        }
    }

    #[test]
    fn batch_scores_match_single_scores() {
        let m = EmbeddingModel::new(Task::Rating, 3, 7, 4, 5, scale());
        for u in 0..3u32 {
            let batch = m.scores_for_user(u);
            for i in 0..7u32 {
                assert_eq!(batch[i as usize], m.score(u, i));
            }
        }
    }
}
