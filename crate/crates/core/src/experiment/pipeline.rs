//! Run orchestration: load, split, attack, train, evaluate, defend, report.
//!
//! Every stage is deterministic given the resolved config, so identical
//! configs reproduce identical reports byte for byte. Expensive artifacts
//! (attacked datasets, trained models) are cached under content keys; a
//! cache hit is logged and never changes a downstream number.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::attack::{
    gen_average_attack, gen_bandwagon_attack, gen_bilevel_attack, gen_lovehate_attack,
    gen_random_attack, gen_segment_attack, gen_single_level_gradient_attack, inject,
    AttackParams, FakeProfileSet, OutputKind, SurrogateSpec, TargetMode,
};
use crate::dataset::{
    compute_stats, convert_to_implicit, load_explicit, split_holdout, CacheKey, DatasetCache,
    DatasetStats, FeedbackKind, InteractionDataset, Origin,
};
use crate::defense::{confusion_counts, filter_users, pca_varselect, SuspectReport};
use crate::error::{Error, Result};
use crate::metrics::{
    f1_at_k, hit_rate, mae, map_at_k, mrr, ndcg_at_k, precision_at_k, prediction_shift,
    rank_improvement, recall_at_k, rmse, failure_rate, EvalReport, HitRateVariant, PredEntry,
    RatingPredictions, ReportMeta, TopKGroundTruth, UserEval,
};
use crate::recommender::{
    load_model, recommend_topk, save_model, train_bpr, train_itemknn, train_lightgcn,
    train_mf_pointwise, EmbeddingModel, ItemKnnModel, ModelDump, Scorer, Task,
};

use super::config::{AttackName, DataSource, DefenseKind, ExperimentConfig, VictimKind};
use super::report::write_run_files;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageFailure {
    pub stage: String,
    pub error: String,
}

/// Everything one run produced. `failure` is set when a stage aborted; the
/// files written up to that point are preserved and listed.
#[derive(Debug)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub resolved_config: String,
    pub reports: Vec<EvalReport>,
    pub attack_cache_key: Option<String>,
    pub attacked_data: Option<PathBuf>,
    pub files: Vec<PathBuf>,
    pub failure: Option<StageFailure>,
}

struct Staged {
    stage: &'static str,
    err: Error,
}

trait StageExt<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Staged>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Staged> {
        self.map_err(|err| Staged { stage: name, err })
    }
}

/// Shared mutable run state: the log that lands in run.log and the list of
/// files written so far.
struct Ctx {
    log: Vec<String>,
    files: Vec<PathBuf>,
}

impl Ctx {
    fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        log::info!("{line}");
        self.log.push(line);
    }
}

enum Victim {
    Embedding(EmbeddingModel),
    Knn(ItemKnnModel),
}

impl Victim {
    fn scorer(&self) -> &dyn Scorer {
        match self {
            Victim::Embedding(m) => m,
            Victim::Knn(m) => m,
        }
    }

    fn to_dump(&self) -> ModelDump {
        match self {
            Victim::Embedding(m) => ModelDump::Embedding(m.clone()),
            Victim::Knn(m) => ModelDump::ItemKnn(m.clone()),
        }
    }

    fn from_dump(dump: ModelDump) -> Victim {
        match dump {
            ModelDump::Embedding(m) => Victim::Embedding(m),
            ModelDump::ItemKnn(m) => Victim::Knn(m),
        }
    }

    fn embedding(&self) -> Result<&EmbeddingModel> {
        match self {
            Victim::Embedding(m) => Ok(m),
            Victim::Knn(_) => Err(Error::InvalidArgument(
                "rating prediction needs an embedding model".into(),
            )),
        }
    }
}

fn load_base(cfg: &ExperimentConfig) -> Result<InteractionDataset> {
    let ds = &cfg.dataset;
    let mut base = match ds.source {
        DataSource::Synthetic => match ds.name.as_str() {
            "ml100k_like" => crate::synth::ml100k_like(ds.synth_seed),
            "uniform" => crate::synth::uniform_explicit(
                "uniform",
                ds.synth.n_users,
                ds.synth.n_items,
                ds.synth.n_interactions,
                ds.synth_seed,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown synthetic dataset {other:?}; expected ml100k_like or uniform"
                )))
            }
        },
        DataSource::File => {
            let path = ds.path.as_ref().ok_or_else(|| {
                Error::Config("dataset.path is required when dataset.source is file".into())
            })?;
            load_explicit(path, &ds.schema)?
        }
    };
    base.set_name(ds.name.clone());
    if ds.implicit {
        base = convert_to_implicit(&base, ds.implicit_threshold)?;
    }
    Ok(base)
}

/// Attack parameters with the data-dependent defaults applied.
struct ResolvedAttack {
    params: AttackParams,
    surrogate: SurrogateSpec,
}

fn resolve_attack(
    cfg: &ExperimentConfig,
    train: &InteractionDataset,
    stats: &DatasetStats,
    ctx: &mut Ctx,
) -> Result<ResolvedAttack> {
    let a = &cfg.attack;
    let n_users = train.n_users();
    let attack_size = a
        .attack_size
        .unwrap_or_else(|| (0.20 * n_users as f64).floor() as usize);
    let filler_size = a.filler_size.unwrap_or_else(|| {
        (train.n_interactions() as f64 / n_users as f64).round() as usize
    });
    let seed = a.seed.unwrap_or(cfg.seed);
    let implicit = train.feedback() == FeedbackKind::Implicit;

    let target_items = if !a.targets.items.is_empty() {
        a.targets.items.clone()
    } else if a.name == AttackName::None {
        Vec::new()
    } else {
        let mode = a.targets.mode.unwrap_or(if implicit {
            TargetMode::Random
        } else {
            TargetMode::Popular
        });
        let count = a.targets.count.unwrap_or(if implicit {
            (0.005 * attack_size as f64).floor().max(1.0) as usize
        } else {
            (attack_size / 3).max(1)
        });
        crate::attack::select_targets(train, stats, count, mode, seed)?
    };

    let params = AttackParams {
        attack_size,
        filler_size,
        target_items,
        selected_items: a.selected_items.clone(),
        intent: a.intent,
        seed,
        output_kind: if implicit {
            OutputKind::ImplicitPairs
        } else {
            OutputKind::ExplicitTriplets
        },
    };
    ctx.note(format!(
        "attack: {} attack_size={} filler_size={} targets={:?} intent={:?} seed={}",
        a.name.key(),
        params.attack_size,
        params.filler_size,
        params.target_items,
        params.intent,
        params.seed
    ));
    Ok(ResolvedAttack {
        params,
        surrogate: a.surrogate.to_spec(cfg.seed),
    })
}

fn generate_fakes(
    cfg: &ExperimentConfig,
    train: &InteractionDataset,
    stats: &DatasetStats,
    resolved: &ResolvedAttack,
) -> Result<FakeProfileSet> {
    let a = &cfg.attack;
    let scale = train.scale();
    let params = &resolved.params;
    match a.name {
        AttackName::None => Ok(FakeProfileSet {
            profiles: Vec::new(),
            generator_name: "none".into(),
            params: params.clone(),
        }),
        AttackName::Random => gen_random_attack(stats, scale, params),
        AttackName::Average => gen_average_attack(stats, scale, params),
        AttackName::Bandwagon => gen_bandwagon_attack(
            stats,
            scale,
            params,
            a.popular_fraction,
            a.popularity_rule,
        ),
        AttackName::Lovehate => gen_lovehate_attack(scale, train.n_items(), params),
        AttackName::Segment => {
            gen_segment_attack(scale, train.n_items(), params, &a.segment_items)
        }
        AttackName::SingleLevel => {
            gen_single_level_gradient_attack(train, &resolved.surrogate, params)
        }
        AttackName::Bilevel => gen_bilevel_attack(train, &resolved.surrogate, params),
    }
}

fn train_victim(cfg: &ExperimentConfig, train: &InteractionDataset) -> Result<Victim> {
    let v = &cfg.victim;
    let tc = v.train.to_train_config(v.model.task(), cfg.seed);
    Ok(match v.model {
        VictimKind::MfPointwise => Victim::Embedding(train_mf_pointwise(train, &tc)?),
        VictimKind::BprMf => Victim::Embedding(train_bpr(train, &tc)?),
        VictimKind::Lightgcn => Victim::Embedding(train_lightgcn(train, &tc, v.n_layers)?),
        VictimKind::ItemKnn => Victim::Knn(train_itemknn(train, v.knn_k)?),
    })
}

/// Write a model dump under the cache atomically: scratch file first, then
/// rename, so a concurrent reader never sees a partial dump.
fn cache_model(dir: &Path, key: &CacheKey, dump: &ModelDump) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let final_path = dir.join(format!("{}.json", key.as_str()));
    if final_path.exists() {
        return Ok(final_path);
    }
    let scratch = dir.join(format!(".{}.tmp-{}", key.as_str(), std::process::id()));
    save_model(dump, &scratch)?;
    std::fs::rename(&scratch, &final_path).map_err(|e| Error::io(&final_path, e))?;
    Ok(final_path)
}

/// Train a victim or reuse a cached dump. The dump round-trips scores
/// bit-exactly, so hits and cold runs are indistinguishable downstream.
fn train_or_load(
    cfg: &ExperimentConfig,
    train: &InteractionDataset,
    cache_models: &Path,
    key: &CacheKey,
    label: &'static str,
    ctx: &mut Ctx,
) -> Result<Victim> {
    let path = cache_models.join(format!("{}.json", key.as_str()));
    if path.is_file() {
        ctx.note(format!("{label}: cache hit {}", key.as_str()));
        return Ok(Victim::from_dump(load_model(&path)?));
    }
    ctx.note(format!("{label}: training (cache miss)"));
    let victim = train_victim(cfg, train)?;
    cache_model(cache_models, key, &victim.to_dump())?;
    Ok(victim)
}

/// Held-out relevant sets per user: every test interaction, or only those
/// at or above the relevance threshold for explicit data.
fn relevant_sets(
    test: &InteractionDataset,
    threshold: Option<f64>,
) -> Vec<(u32, BTreeSet<u32>)> {
    let mut per_user: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for x in test.interactions() {
        if let Some(t) = threshold {
            if x.rating < t {
                continue;
            }
        }
        per_user.entry(x.user).or_default().insert(x.item);
    }
    per_user.into_iter().filter(|(_, s)| !s.is_empty()).collect()
}

fn ranking_metrics(
    scorer: &dyn Scorer,
    remap: &dyn Fn(u32) -> Option<u32>,
    exclude: &[BTreeSet<u32>],
    evals: &[(u32, BTreeSet<u32>)],
    cfg: &ExperimentConfig,
    targets: &BTreeSet<u32>,
) -> BTreeMap<String, f64> {
    let m = &cfg.metrics;
    let k_max = m.k_list.iter().copied().max().unwrap_or(10);
    let ranked: Vec<(u32, Vec<u32>)> = evals
        .iter()
        .map(|(u, _)| match remap(*u) {
            Some(mu) => (*u, recommend_topk(scorer, mu, k_max, &exclude[*u as usize]).items),
            // a user filtered out by the defense gets no recommendations
            None => (*u, Vec::new()),
        })
        .collect();

    let mut out = BTreeMap::new();
    for &k in &m.k_list {
        let users: Vec<UserEval> = ranked
            .iter()
            .zip(evals)
            .map(|((u, items), (_, relevant))| UserEval {
                user: *u,
                ranked: items[..k.min(items.len())].to_vec(),
                relevant: relevant.clone(),
            })
            .collect();
        let gt = TopKGroundTruth::new(k, users);
        out.insert(format!("ndcg@{k}"), ndcg_at_k(&gt));
        out.insert(format!("hr@{k}"), hit_rate(&gt, m.hr_variant));
        for fam in &m.extra {
            let value = match fam.as_str() {
                "precision" => precision_at_k(&gt),
                "recall" => recall_at_k(&gt),
                "f1" => f1_at_k(&gt),
                "map" => map_at_k(&gt),
                "mrr" => mrr(&gt),
                "failure_rate" => failure_rate(&gt),
                other => {
                    log::warn!("unknown extra metric {other:?} ignored");
                    continue;
                }
            };
            out.insert(format!("{fam}@{k}"), value);
        }
        if !targets.is_empty() {
            let gt = gt.with_target_set(targets.iter().copied());
            out.insert(
                format!("target_hr@{k}"),
                hit_rate(&gt, HitRateVariant::TargetItem),
            );
        }
    }
    out
}

fn rating_metrics(
    model: &EmbeddingModel,
    test: &InteractionDataset,
) -> Result<BTreeMap<String, f64>> {
    let entries = test
        .interactions()
        .iter()
        .map(|x| {
            Ok(PredEntry {
                user: x.user,
                item: x.item,
                predicted: model.predict_rating(x.user, x.item)?,
                actual: x.rating,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let preds = RatingPredictions { entries };
    let mut out = BTreeMap::new();
    out.insert("mae".to_string(), mae(&preds)?);
    out.insert("rmse".to_string(), rmse(&preds)?);
    Ok(out)
}

/// Predicted ratings for every (genuine user, target item) pair, the input
/// to the prediction-shift delta.
fn target_predictions(
    model: &EmbeddingModel,
    n_genuine: usize,
    targets: &BTreeSet<u32>,
) -> Result<RatingPredictions> {
    let mut entries = Vec::with_capacity(n_genuine * targets.len());
    for u in 0..n_genuine as u32 {
        for &t in targets {
            entries.push(PredEntry {
                user: u,
                item: t,
                predicted: model.predict_rating(u, t)?,
                actual: 0.0,
            });
        }
    }
    Ok(RatingPredictions { entries })
}

fn report_for(
    cfg: &ExperimentConfig,
    condition: &str,
    metrics: BTreeMap<String, f64>,
) -> EvalReport {
    EvalReport {
        meta: ReportMeta {
            dataset_key: cfg.dataset.name.clone(),
            attack_key: cfg.attack.name.key().to_string(),
            model_key: cfg.victim.model.key().to_string(),
            seed: cfg.seed,
            k_values: cfg.metrics.k_list.clone(),
            condition: condition.to_string(),
        },
        metrics,
    }
}

fn canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("canonical key serializes")
}

/// The whole pipeline; `with_defense` adds the defended condition and the
/// rank-improvement accounting on top of the attack evaluation.
fn run_pipeline(cfg: &ExperimentConfig, with_defense: bool) -> Result<RunArtifacts> {
    if with_defense {
        if cfg.victim.model.task() != Task::Ranking {
            return Err(Error::Config(
                "robustness evaluation needs a ranking victim (bpr_mf, lightgcn or item_knn)"
                    .into(),
            ));
        }
        if cfg.defense.kind == DefenseKind::None {
            return Err(Error::Config(
                "robustness evaluation needs defense.kind set (identity, oracle or pca_varselect)"
                    .into(),
            ));
        }
    }

    // the run directory must be writable before any stage runs
    let run_dir = cfg.out_dir.join(format!(
        "{}_{}_{}_seed{}",
        cfg.dataset.name,
        cfg.attack.name.key(),
        cfg.victim.model.key(),
        cfg.seed
    ));
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let resolved = cfg.to_yaml();
    let snapshot = run_dir.join("resolved_config.yaml");
    std::fs::write(&snapshot, &resolved).map_err(|e| Error::io(&snapshot, e))?;

    let mut ctx = Ctx {
        log: Vec::new(),
        files: vec![snapshot],
    };
    let mut artifacts = RunArtifacts {
        run_dir: run_dir.clone(),
        resolved_config: resolved,
        reports: Vec::new(),
        attack_cache_key: None,
        attacked_data: None,
        files: Vec::new(),
        failure: None,
    };

    let outcome = execute_stages(cfg, with_defense, &run_dir, &mut ctx, &mut artifacts);
    if let Err(staged) = outcome {
        ctx.note(format!("stage {} failed: {}", staged.stage, staged.err));
        artifacts.failure = Some(StageFailure {
            stage: staged.stage.to_string(),
            error: staged.err.to_string(),
        });
    }
    let written = write_run_files(
        &run_dir,
        &artifacts.reports,
        &ctx.log,
        artifacts.failure.as_ref(),
    )?;
    ctx.files.extend(written);
    artifacts.files = ctx.files;
    Ok(artifacts)
}

fn execute_stages(
    cfg: &ExperimentConfig,
    with_defense: bool,
    run_dir: &Path,
    ctx: &mut Ctx,
    artifacts: &mut RunArtifacts,
) -> std::result::Result<(), Staged> {
    // load
    let base = load_base(cfg).stage("load")?;
    ctx.note(format!(
        "load: {} users={} items={} interactions={} feedback={:?}",
        base.name(),
        base.n_users(),
        base.n_items(),
        base.n_interactions(),
        base.feedback()
    ));

    // split
    let split_spec = cfg.dataset.split.to_spec(cfg.seed).stage("split")?;
    let (train, test) = split_holdout(&base, &split_spec).stage("split")?;
    ctx.note(format!(
        "split: train={} test={} interactions",
        train.n_interactions(),
        test.n_interactions()
    ));

    // stats and parameter resolution
    let stats = compute_stats(&train);
    ctx.note(format!(
        "stats: global_mean={:.4} global_std={:.4}",
        stats.global_mean, stats.global_std
    ));
    let resolved = resolve_attack(cfg, &train, &stats, ctx).stage("stats")?;
    let targets: BTreeSet<u32> = resolved.params.target_items.iter().copied().collect();

    // content keys for caching
    let dataset_id = format!(
        "{}|u{}|i{}|n{}",
        base.name(),
        base.n_users(),
        base.n_items(),
        base.n_interactions()
    );
    let preprocessing = format!(
        "source={:?};synth_seed={};synth={}x{}x{};implicit={};threshold={:?};split={:?}",
        cfg.dataset.source,
        cfg.dataset.synth_seed,
        cfg.dataset.synth.n_users,
        cfg.dataset.synth.n_items,
        cfg.dataset.synth.n_interactions,
        cfg.dataset.implicit,
        cfg.dataset.implicit_threshold,
        split_spec
    );
    let attack_canon = canonical_json(&(
        &resolved.params,
        &resolved.surrogate,
        cfg.attack.popular_fraction,
        cfg.attack.popularity_rule,
        &cfg.attack.segment_items,
    ));
    let attack_key = CacheKey::for_attack(
        &dataset_id,
        &preprocessing,
        cfg.attack.name.key(),
        &attack_canon,
        resolved.params.seed,
    );
    let victim_canon = canonical_json(&(&cfg.victim, cfg.seed));
    let clean_model_key =
        CacheKey::from_parts("model", &[&dataset_id, &preprocessing, &victim_canon]);
    let attacked_model_key =
        CacheKey::from_parts("model", &[attack_key.as_str(), &victim_canon]);

    let cache_root = match &cfg.cache_dir {
        Some(dir) => DatasetCache::new(dir.clone()),
        None => DatasetCache::from_env(cfg.out_dir.join("cache")),
    };
    let cache_models = cache_root.root().join("models");
    artifacts.attack_cache_key = Some(attack_key.as_str().to_string());

    // evaluation fixtures shared by all conditions
    let task = cfg.victim.model.task();
    let exclude: Vec<BTreeSet<u32>> = train
        .user_items()
        .into_iter()
        .map(|items| items.into_iter().map(|(i, _)| i).collect())
        .collect();
    let evals = relevant_sets(&test, cfg.metrics.relevance_threshold);
    ctx.note(format!("eval: {} users with held-out relevants", evals.len()));

    // clean condition
    let clean = train_or_load(cfg, &train, &cache_models, &clean_model_key, "train_clean", ctx)
        .stage("train_clean")?;
    let clean_dump_path = run_dir.join("model_clean.json");
    save_model(&clean.to_dump(), &clean_dump_path).stage("train_clean")?;
    ctx.files.push(clean_dump_path);
    let clean_metrics = match task {
        Task::Rating => rating_metrics(clean.embedding().stage("eval_clean")?, &test)
            .stage("eval_clean")?,
        Task::Ranking => {
            ranking_metrics(clean.scorer(), &|u| Some(u), &exclude, &evals, cfg, &targets)
        }
    };
    artifacts.reports.push(report_for(cfg, "clean", clean_metrics.clone()));
    ctx.note("eval_clean: done".to_string());

    // attack and injection, cached by content key
    let injected = if cfg.attack.name == AttackName::None {
        ctx.note("attack: none (null attack)".to_string());
        let empty = FakeProfileSet {
            profiles: Vec::new(),
            generator_name: "none".into(),
            params: resolved.params.clone(),
        };
        inject(&train, &empty).stage("attack")?
    } else if let Some(hit) = cache_root.load_cached(&attack_key) {
        ctx.note(format!("attack: cache hit {}", attack_key.as_str()));
        artifacts.attacked_data = Some(cache_root.root().join(attack_key.as_str()));
        hit
    } else {
        let fakes = generate_fakes(cfg, &train, &stats, &resolved).stage("attack")?;
        fakes.check_invariants(train.scale()).stage("attack")?;
        let injected = inject(&train, &fakes).stage("attack")?;
        cache_root.persist_attacked(&injected, &attack_key).stage("attack")?;
        ctx.note(format!(
            "attack: generated {} profiles, {} interactions (cache miss)",
            fakes.profiles.len(),
            fakes.n_interactions()
        ));
        artifacts.attacked_data = Some(cache_root.root().join(attack_key.as_str()));
        injected
    };

    // attacked condition
    let attacked = train_or_load(
        cfg,
        &injected,
        &cache_models,
        &attacked_model_key,
        "train_attacked",
        ctx,
    )
    .stage("train_attacked")?;
    let attacked_dump_path = run_dir.join("model_attacked.json");
    save_model(&attacked.to_dump(), &attacked_dump_path).stage("train_attacked")?;
    ctx.files.push(attacked_dump_path);
    let attacked_metrics = match task {
        Task::Rating => rating_metrics(attacked.embedding().stage("eval_attacked")?, &test)
            .stage("eval_attacked")?,
        Task::Ranking => {
            ranking_metrics(attacked.scorer(), &|u| Some(u), &exclude, &evals, cfg, &targets)
        }
    };
    artifacts
        .reports
        .push(report_for(cfg, "attacked", attacked_metrics.clone()));
    ctx.note("eval_attacked: done".to_string());

    // deltas
    let mut delta: BTreeMap<String, f64> = BTreeMap::new();
    for (name, clean_v) in &clean_metrics {
        if let Some(attacked_v) = attacked_metrics.get(name) {
            delta.insert(name.clone(), attacked_v - clean_v);
        }
    }
    if task == Task::Rating && !targets.is_empty() {
        let n_genuine = train.n_users();
        let pre = target_predictions(clean.embedding().stage("deltas")?, n_genuine, &targets)
            .stage("deltas")?;
        let post = target_predictions(attacked.embedding().stage("deltas")?, n_genuine, &targets)
            .stage("deltas")?;
        let ps = prediction_shift(&pre, &post, &targets).stage("deltas")?;
        delta.insert("prediction_shift".to_string(), ps);
    }
    artifacts.reports.push(report_for(cfg, "delta", delta));

    if !with_defense {
        return Ok(());
    }

    // defense: flag, filter, retrain
    let n_attacked_users = injected.n_users();
    let flag_count = cfg
        .defense
        .flag_count
        .unwrap_or(resolved.params.attack_size);
    let n_components = cfg
        .defense
        .n_components
        .unwrap_or_else(|| (n_attacked_users / 4).clamp(3, 50));
    ctx.note(format!(
        "defense: {} n_components={} flag_count={}",
        cfg.defense.kind.key(),
        n_components,
        flag_count
    ));
    let suspects = match cfg.defense.kind {
        DefenseKind::None => unreachable!("checked before any stage ran"),
        DefenseKind::Identity => {
            let flagged = BTreeSet::new();
            SuspectReport {
                confusion: injected.origin().map(|o| confusion_counts(o, &flagged)),
                flagged_users: flagged,
                scores: vec![0.0; n_attacked_users],
                n_components,
                flag_count: 0,
            }
        }
        DefenseKind::Oracle => {
            let flagged: BTreeSet<u32> = injected
                .origin()
                .map(|o| {
                    o.iter()
                        .enumerate()
                        .filter(|(_, &x)| x == Origin::Fake)
                        .map(|(u, _)| u as u32)
                        .collect()
                })
                .unwrap_or_default();
            SuspectReport {
                confusion: injected.origin().map(|o| confusion_counts(o, &flagged)),
                flag_count: flagged.len(),
                flagged_users: flagged,
                scores: vec![0.0; n_attacked_users],
                n_components,
            }
        }
        DefenseKind::PcaVarselect => {
            pca_varselect(&injected, n_components, flag_count).stage("defense")?
        }
    };
    if let Some(c) = &suspects.confusion {
        ctx.note(format!(
            "defense: flagged={} tp={} fp={} fn={} tn={}",
            suspects.flagged_users.len(),
            c.true_positive,
            c.false_positive,
            c.false_negative,
            c.true_negative
        ));
    }
    let suspects_path = run_dir.join("suspects.json");
    let suspects_json =
        serde_json::to_string_pretty(&suspects).map_err(|e| Error::Cache(e.to_string()));
    std::fs::write(&suspects_path, suspects_json.stage("defense")? + "\n")
        .map_err(|e| Error::io(&suspects_path, e))
        .stage("defense")?;
    ctx.files.push(suspects_path);

    let (defended_train, kept) = filter_users(&injected, &suspects).stage("defense")?;
    ctx.note(format!(
        "defense: retained {} of {} users",
        kept.len(),
        n_attacked_users
    ));
    let defense_canon = canonical_json(&(
        cfg.defense.kind.key(),
        n_components,
        flag_count,
        &suspects.flagged_users,
    ));
    let defended_model_key = CacheKey::from_parts(
        "model",
        &[attack_key.as_str(), &victim_canon, &defense_canon],
    );
    let defended = train_or_load(
        cfg,
        &defended_train,
        &cache_models,
        &defended_model_key,
        "train_defended",
        ctx,
    )
    .stage("train_defended")?;
    let defended_dump_path = run_dir.join("model_defended.json");
    save_model(&defended.to_dump(), &defended_dump_path).stage("train_defended")?;
    ctx.files.push(defended_dump_path);

    // original user index -> index in the filtered training set
    let mut new_index = vec![None; n_attacked_users];
    for (new, &old) in kept.iter().enumerate() {
        new_index[old as usize] = Some(new as u32);
    }
    let mut defended_metrics = ranking_metrics(
        defended.scorer(),
        &|u| new_index[u as usize],
        &exclude,
        &evals,
        cfg,
        &targets,
    );

    // rank improvement at the largest cutoff
    let k_ri = cfg.metrics.k_list.iter().copied().max().unwrap_or(10);
    let hr_name = format!("target_hr@{k_ri}");
    if targets.is_empty() {
        ctx.note("rank_improvement: not applicable (no target items)".to_string());
    } else {
        let hr_origin = clean_metrics.get(&hr_name).copied().unwrap_or(0.0);
        let hr_attack = attacked_metrics.get(&hr_name).copied().unwrap_or(0.0);
        let hr_defense = defended_metrics.get(&hr_name).copied().unwrap_or(0.0);
        match rank_improvement(hr_origin, hr_attack, hr_defense) {
            Some(ri) => {
                defended_metrics.insert("rank_improvement".to_string(), ri);
                ctx.note(format!(
                    "rank_improvement: {ri} (origin={hr_origin} attack={hr_attack} defense={hr_defense})"
                ));
            }
            None => ctx.note(format!(
                "rank_improvement: not applicable (attack left {hr_name} at {hr_attack})"
            )),
        }
    }
    artifacts
        .reports
        .push(report_for(cfg, "defended", defended_metrics));
    ctx.note("eval_defended: done".to_string());
    Ok(())
}

/// Clean-versus-attacked evaluation per the configured attack and victim.
pub fn run_attack_eval(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    run_pipeline(cfg, false)
}

/// Attack evaluation plus detector filtering, retraining and the
/// rank-improvement score. Needs a ranking victim and a configured defense.
pub fn run_robustness_eval(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    run_pipeline(cfg, true)
}

/// Generate and inject fake profiles without training anything, exporting
/// the attacked dataset as a delimited file with origin labels.
pub fn attack_only(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let base = load_base(cfg)?;
    let split_spec = cfg.dataset.split.to_spec(cfg.seed)?;
    let (train, _) = split_holdout(&base, &split_spec)?;
    let stats = compute_stats(&train);
    let mut ctx = Ctx {
        log: Vec::new(),
        files: Vec::new(),
    };
    let resolved = resolve_attack(cfg, &train, &stats, &mut ctx)?;
    let fakes = generate_fakes(cfg, &train, &stats, &resolved)?;
    fakes.check_invariants(train.scale())?;
    let injected = inject(&train, &fakes)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join(format!(
        "{}_{}_seed{}_attacked.tsv",
        cfg.dataset.name,
        cfg.attack.name.key(),
        resolved.params.seed
    ));
    crate::dataset::export_delimited(&injected, &path)?;
    Ok(path)
}
