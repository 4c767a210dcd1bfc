//! Layered experiment configuration.
//!
//! A run is described by one YAML tree. Resolution is a four-layer merge:
//! built-in defaults, the top-level file, per-dataset and per-model files
//! found next to it (datasets/<name>.yaml, models/<model>.yaml), and
//! finally command-line overrides. The fully merged tree deserializes into
//! the typed [`ExperimentConfig`]; unknown keys and type mismatches are
//! rejected with the offending field spelled out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use crate::attack::{AttackIntent, PopularityRule, SurrogateKind, TargetMode};
use crate::dataset::{LoadSchema, SplitSpec, SplitStrategy};
use crate::error::{Error, Result};
use crate::metrics::HitRateVariant;
use crate::recommender::{LossKind, Task, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictimKind {
    MfPointwise,
    BprMf,
    Lightgcn,
    ItemKnn,
}

impl VictimKind {
    pub fn key(self) -> &'static str {
        match self {
            VictimKind::MfPointwise => "mf_pointwise",
            VictimKind::BprMf => "bpr_mf",
            VictimKind::Lightgcn => "lightgcn",
            VictimKind::ItemKnn => "item_knn",
        }
    }

    /// The prediction task this victim serves. Pointwise MF predicts
    /// ratings; everything else ranks.
    pub fn task(self) -> Task {
        match self {
            VictimKind::MfPointwise => Task::Rating,
            _ => Task::Ranking,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackName {
    None,
    Random,
    Average,
    Bandwagon,
    Lovehate,
    Segment,
    SingleLevel,
    Bilevel,
}

impl AttackName {
    pub fn key(self) -> &'static str {
        match self {
            AttackName::None => "none",
            AttackName::Random => "random",
            AttackName::Average => "average",
            AttackName::Bandwagon => "bandwagon",
            AttackName::Lovehate => "lovehate",
            AttackName::Segment => "segment",
            AttackName::SingleLevel => "single_level",
            AttackName::Bilevel => "bilevel",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseKind {
    None,
    Identity,
    Oracle,
    PcaVarselect,
}

impl DefenseKind {
    pub fn key(self) -> &'static str {
        match self {
            DefenseKind::None => "none",
            DefenseKind::Identity => "identity",
            DefenseKind::Oracle => "oracle",
            DefenseKind::PcaVarselect => "pca_varselect",
        }
    }
}

/// Holdout split description; seed defaults to the experiment seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub strategy: String,
    pub train_fraction: f64,
    pub k: usize,
    pub seed: Option<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            strategy: "ratio_random".into(),
            train_fraction: 0.8,
            k: 1,
            seed: None,
        }
    }
}

impl SplitSection {
    pub fn to_spec(&self, default_seed: u64) -> Result<SplitSpec> {
        let strategy = match self.strategy.as_str() {
            "ratio_random" => SplitStrategy::RatioRandom {
                train_fraction: self.train_fraction,
            },
            "leave_k_out" => SplitStrategy::LeaveKOut { k: self.k },
            other => {
                return Err(Error::Config(format!(
                    "unknown split strategy {other:?}; expected ratio_random or leave_k_out"
                )))
            }
        };
        Ok(SplitSpec {
            strategy,
            seed: self.seed.unwrap_or(default_seed),
        })
    }
}

/// Synthetic-generator knobs; only consulted when dataset.source is
/// synthetic and the named generator takes a size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_users: 60,
            n_items: 40,
            n_interactions: 1200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Names the dataset for reports and selects datasets/<name>.yaml.
    /// With a synthetic source the name also picks the generator:
    /// "ml100k_like" or "uniform".
    pub name: String,
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub schema: LoadSchema,
    pub synth_seed: u64,
    pub synth: SynthSection,
    /// Convert explicit ratings to implicit interactions after loading.
    pub implicit: bool,
    pub implicit_threshold: Option<f64>,
    pub split: SplitSection,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            name: "ml100k_like".into(),
            source: DataSource::Synthetic,
            path: None,
            schema: LoadSchema::default(),
            synth_seed: 0,
            synth: SynthSection::default(),
            implicit: false,
            implicit_threshold: None,
            split: SplitSection::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    /// None applies the task default: popular for explicit data, random
    /// for implicit.
    pub mode: Option<TargetMode>,
    /// Number of targets to pick; None applies the task default
    /// (⌊attack_size/3⌋ popular for explicit, max(1, ⌊0.005·attack_size⌋)
    /// random for implicit).
    pub count: Option<usize>,
    /// Explicit target item ids; overrides mode and count when non-empty.
    pub items: Vec<u32>,
}

/// Numeric training knobs shared by victims and surrogates. Task and loss
/// are derived from the model kind, never configured directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainKnobs {
    pub d: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub seed: Option<u64>,
}

impl Default for TrainKnobs {
    fn default() -> Self {
        TrainKnobs {
            d: 32,
            learning_rate: 0.01,
            l2_reg: 1e-4,
            epochs: 50,
            negatives_per_positive: 1,
            seed: None,
        }
    }
}

impl TrainKnobs {
    pub fn to_train_config(&self, task: Task, default_seed: u64) -> TrainConfig {
        let base = match task {
            Task::Rating => TrainConfig::rating(),
            Task::Ranking => TrainConfig::ranking(),
        };
        TrainConfig {
            d: self.d,
            learning_rate: self.learning_rate,
            l2_reg: self.l2_reg,
            epochs: self.epochs,
            negatives_per_positive: self.negatives_per_positive,
            seed: self.seed.unwrap_or(default_seed),
            ..base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSection {
    pub model: SurrogateKind,
    pub train: TrainKnobs,
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub outer_step_size: f64,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        SurrogateSection {
            model: SurrogateKind::MfPointwise,
            train: TrainKnobs {
                d: 16,
                epochs: 30,
                ..TrainKnobs::default()
            },
            inner_steps: 1,
            outer_steps: 10,
            outer_step_size: 0.5,
        }
    }
}

impl SurrogateSection {
    pub fn to_spec(&self, default_seed: u64) -> crate::attack::SurrogateSpec {
        let task = match self.model {
            SurrogateKind::MfPointwise => Task::Rating,
            SurrogateKind::BprMf => Task::Ranking,
        };
        crate::attack::SurrogateSpec {
            model: self.model,
            train: self.train.to_train_config(task, default_seed),
            inner_steps: self.inner_steps,
            outer_steps: self.outer_steps,
            outer_step_size: self.outer_step_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub name: AttackName,
    /// Fake users to inject; None applies ⌊0.20 · n_users⌋.
    pub attack_size: Option<usize>,
    /// Filler items per profile; None applies round(avg actions per user).
    pub filler_size: Option<usize>,
    pub intent: AttackIntent,
    pub seed: Option<u64>,
    pub targets: TargetSection,
    pub selected_items: Option<Vec<(u32, f64)>>,
    pub popular_fraction: f64,
    pub popularity_rule: PopularityRule,
    pub segment_items: Vec<u32>,
    pub surrogate: SurrogateSection,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            name: AttackName::None,
            attack_size: None,
            filler_size: None,
            intent: AttackIntent::Push,
            seed: None,
            targets: TargetSection::default(),
            selected_items: None,
            popular_fraction: 0.5,
            popularity_rule: PopularityRule::ByCount,
            segment_items: Vec::new(),
            surrogate: SurrogateSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VictimSection {
    pub model: VictimKind,
    pub train: TrainKnobs,
    /// LightGCN propagation depth.
    pub n_layers: usize,
    /// ItemKNN neighborhood size.
    pub knn_k: usize,
}

impl Default for VictimSection {
    fn default() -> Self {
        VictimSection {
            model: VictimKind::MfPointwise,
            train: TrainKnobs::default(),
            n_layers: 2,
            knn_k: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSection {
    pub k_list: Vec<usize>,
    /// Ranking metric families beyond the always-on ndcg/hr pair.
    pub extra: Vec<String>,
    pub hr_variant: HitRateVariant,
    /// Explicit ratings at or above this count as relevant in ranking
    /// evaluation; None treats every held-out interaction as relevant.
    pub relevance_threshold: Option<f64>,
}

impl Default for MetricSection {
    fn default() -> Self {
        MetricSection {
            k_list: vec![10, 50],
            extra: Vec::new(),
            hr_variant: HitRateVariant::TestHit,
            relevance_threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseSection {
    pub kind: DefenseKind,
    /// None applies clamp(n_users / 4, 3, 50).
    pub n_components: Option<usize>,
    /// None applies the resolved attack_size.
    pub flag_count: Option<usize>,
}

impl Default for DefenseSection {
    fn default() -> Self {
        DefenseSection {
            kind: DefenseKind::None,
            n_components: None,
            flag_count: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Attacked-dataset cache root; None falls back to the cache
    /// environment variable and then to <out_dir>/cache.
    pub cache_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub attack: AttackSection,
    pub victim: VictimSection,
    pub metrics: MetricSection,
    pub defense: DefenseSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            cache_dir: None,
            dataset: DatasetSection::default(),
            attack: AttackSection::default(),
            victim: VictimSection::default(),
            metrics: MetricSection::default(),
            defense: DefenseSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// The resolved snapshot written into every run directory. Identical
    /// configs produce identical bytes.
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    /// Loss the victim trains with, for logging.
    pub fn victim_loss(&self) -> LossKind {
        match self.victim.model.task() {
            Task::Rating => LossKind::SquaredPointwise,
            Task::Ranking => LossKind::BprPairwise,
        }
    }
}

/// Deep merge: maps merge key-wise, everything else is replaced by the
/// later layer.
fn merge_value(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Mapping(b), Value::Mapping(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge_value(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, other) => *slot = other,
    }
}

/// Set a dotted path like "attack.seed" to a scalar parsed from YAML.
fn set_dotted(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value: Value = serde_yaml::from_str(raw)
        .map_err(|e| Error::Config(format!("override {path}={raw}: unparseable value: {e}")))?;
    let mut slot = root;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("override path {path:?} has an empty segment")));
    }
    for seg in &segments[..segments.len() - 1] {
        let map = slot.as_mapping_mut().ok_or_else(|| {
            Error::Config(format!("override path {path:?}: {seg:?} is not a section"))
        })?;
        let key = Value::String((*seg).to_string());
        slot = map.entry(key).or_insert(Value::Mapping(Default::default()));
        if !slot.is_mapping() {
            *slot = Value::Mapping(Default::default());
        }
    }
    let map = slot.as_mapping_mut().ok_or_else(|| {
        Error::Config(format!("override path {path:?} does not lead into a section"))
    })?;
    map.insert(
        Value::String(segments[segments.len() - 1].to_string()),
        value,
    );
    Ok(())
}

fn read_yaml_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Value::Mapping(Default::default()));
    }
    serde_yaml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn typed(merged: Value) -> Result<ExperimentConfig> {
    serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("config field {path}: {}", e.inner()))
    })
}

/// Peek at string-valued keys of a partially merged tree without full
/// validation, to decide which per-dataset/per-model layers apply.
fn peek(merged: &Value, path: &[&str]) -> Option<String> {
    let mut v = merged;
    for seg in path {
        v = v.get(seg)?;
    }
    v.as_str().map(|s| s.to_string())
}

/// Layered load: defaults < top-level file < datasets/<name>.yaml and
/// models/<model>.yaml next to it < overrides. The dataset and model names
/// that select the middle layers are themselves resolved with overrides
/// applied, so `--set victim.model=...` picks up that model's file.
pub fn load_config(top_level: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let defaults = serde_yaml::to_value(ExperimentConfig::default())
        .map_err(|e| Error::Config(format!("internal defaults: {e}")))?;
    let top = read_yaml_file(top_level)?;

    // first pass to learn which middle-layer files apply
    let mut probe = defaults.clone();
    merge_value(&mut probe, top.clone());
    for (k, v) in overrides {
        set_dotted(&mut probe, k, v)?;
    }
    let dataset_name = peek(&probe, &["dataset", "name"]).unwrap_or_default();
    let model_name = peek(&probe, &["victim", "model"]).unwrap_or_default();

    let mut merged = defaults;
    merge_value(&mut merged, top);
    let dir = top_level.parent().unwrap_or_else(|| Path::new("."));
    for layer in [
        dir.join("datasets").join(format!("{dataset_name}.yaml")),
        dir.join("models").join(format!("{model_name}.yaml")),
    ] {
        if layer.is_file() {
            merge_value(&mut merged, read_yaml_file(&layer)?);
        }
    }
    for (k, v) in overrides {
        set_dotted(&mut merged, k, v)?;
    }
    typed(merged)
}

/// Expand `--grid key=v1,v2` arguments into the cross product of override
/// lists, in deterministic order (first key slowest).
pub fn expand_grid(grid: &[(String, String)]) -> Result<Vec<Vec<(String, String)>>> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grid {
        let options: Vec<&str> = values.split(',').filter(|s| !s.is_empty()).collect();
        if options.is_empty() {
            return Err(Error::Config(format!("grid key {key:?} has no values")));
        }
        let mut next = Vec::with_capacity(cells.len() * options.len());
        for cell in &cells {
            for opt in &options {
                let mut c = cell.clone();
                c.push((key.clone(), (*opt).to_string()));
                next.push(c);
            }
        }
        cells = next;
    }
    Ok(cells)
}
