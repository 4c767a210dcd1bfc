//! Fake-profile synthesis and injection.
//!
//! Generators come in two families: heuristic profiles built from dataset
//! statistics (random, average, bandwagon, love/hate, segment) and
//! optimization-based profiles tuned against a locally trained surrogate
//! model (single-level and bi-level). All of them produce a
//! [`FakeProfileSet`] that [`inject`] appends to a training split as new
//! users carrying fake origin labels.

mod adversarial;
mod heuristics;

pub use adversarial::{
    gen_bilevel_attack, gen_bilevel_attack_with_trace, gen_single_level_gradient_attack,
    single_level_adv_grad, SurrogateKind, SurrogateSpec,
};
pub use heuristics::{
    gen_average_attack, gen_bandwagon_attack, gen_lovehate_attack, gen_random_attack,
    gen_segment_attack, nearest_items_by_cosine, select_targets, PopularityRule, TargetMode,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::dataset::{FeedbackKind, Interaction, InteractionDataset, Origin, RatingScale, TieBreak};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackIntent {
    Push,
    Nuke,
}

impl AttackIntent {
    /// Rating given to every target item in the explicit case.
    pub fn target_rating(self, scale: RatingScale) -> f64 {
        match self {
            AttackIntent::Push => scale.max,
            AttackIntent::Nuke => scale.min,
        }
    }

    /// Grid rounding for sampled ratings: ties break toward the intent.
    pub fn tie_break(self) -> TieBreak {
        match self {
            AttackIntent::Push => TieBreak::Up,
            AttackIntent::Nuke => TieBreak::Down,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    ExplicitTriplets,
    ImplicitPairs,
}

/// Shared knobs for every attack generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    pub attack_size: usize,
    pub filler_size: usize,
    pub target_items: Vec<u32>,
    #[serde(default)]
    pub selected_items: Option<Vec<(u32, f64)>>,
    pub intent: AttackIntent,
    pub seed: u64,
    pub output_kind: OutputKind,
}

impl AttackParams {
    /// Sanity-check against a dataset shape. attack_size 0 is accepted as an
    /// explicit "no attack" degenerate so null-attack pipelines stay runnable.
    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.attack_size == 0 {
            log::warn!("attack_size 0: generators will produce an empty profile set");
        }
        if self.target_items.is_empty() {
            return Err(Error::InvalidArgument("target_items must be non-empty".into()));
        }
        let targets: BTreeSet<u32> = self.target_items.iter().copied().collect();
        if targets.len() != self.target_items.len() {
            return Err(Error::InvalidArgument("duplicate target items".into()));
        }
        if let Some(bad) = self.target_items.iter().find(|&&t| t as usize >= n_items) {
            return Err(Error::InvalidArgument(format!(
                "target item {bad} outside item index (n_items {n_items})"
            )));
        }
        if let Some(selected) = &self.selected_items {
            for &(item, _) in selected {
                if item as usize >= n_items {
                    return Err(Error::InvalidArgument(format!(
                        "selected item {item} outside item index (n_items {n_items})"
                    )));
                }
                if targets.contains(&item) {
                    return Err(Error::InvalidArgument(format!(
                        "selected item {item} collides with a target"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn target_set(&self) -> BTreeSet<u32> {
        self.target_items.iter().copied().collect()
    }

    /// Items a generator must never pick as fillers.
    pub fn reserved_items(&self) -> BTreeSet<u32> {
        let mut reserved = self.target_set();
        if let Some(selected) = &self.selected_items {
            reserved.extend(selected.iter().map(|&(i, _)| i));
        }
        reserved
    }
}

/// One fake user: disjoint filler / selected / target sections, each a list
/// of (item, rating).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FakeProfile {
    pub filler: Vec<(u32, f64)>,
    pub selected: Vec<(u32, f64)>,
    pub targets: Vec<(u32, f64)>,
}

impl FakeProfile {
    pub fn n_entries(&self) -> usize {
        self.filler.len() + self.selected.len() + self.targets.len()
    }

    /// All entries merged and sorted by item id.
    pub fn entries(&self) -> Vec<(u32, f64)> {
        let mut all: Vec<(u32, f64)> = self
            .filler
            .iter()
            .chain(&self.selected)
            .chain(&self.targets)
            .copied()
            .collect();
        all.sort_unstable_by_key(|&(i, _)| i);
        all
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FakeProfileSet {
    pub profiles: Vec<FakeProfile>,
    pub generator_name: String,
    pub params: AttackParams,
}

impl FakeProfileSet {
    pub fn n_interactions(&self) -> usize {
        self.profiles.iter().map(|p| p.n_entries()).sum()
    }

    /// Check the structural invariants every generator must uphold:
    /// pairwise-disjoint sections, on-grid ratings, intent-consistent target
    /// ratings in the explicit case.
    pub fn check_invariants(&self, scale: RatingScale) -> Result<()> {
        let expected_target = self.params.intent.target_rating(scale);
        for (idx, p) in self.profiles.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &(item, rating) in p.filler.iter().chain(&p.selected).chain(&p.targets) {
                if !seen.insert(item) {
                    return Err(Error::Attack(format!(
                        "profile {idx}: item {item} appears in two sections"
                    )));
                }
                if !(scale.min..=scale.max).contains(&rating) {
                    return Err(Error::Attack(format!(
                        "profile {idx}: rating {rating} for item {item} outside bounds"
                    )));
                }
                if scale.integral && rating.fract() != 0.0 {
                    return Err(Error::Attack(format!(
                        "profile {idx}: rating {rating} for item {item} off the grid"
                    )));
                }
            }
            if self.params.output_kind == OutputKind::ExplicitTriplets {
                for &(item, rating) in &p.targets {
                    if rating != expected_target {
                        return Err(Error::Attack(format!(
                            "profile {idx}: target {item} rated {rating}, expected {expected_target}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Append the fake users to a training set. Fake users get fresh dense ids
/// after the genuine ones and unique raw id strings; the item index is
/// shared, so profiles may only reference existing items.
pub fn inject(train: &InteractionDataset, fakes: &FakeProfileSet) -> Result<InteractionDataset> {
    let compatible = matches!(
        (fakes.params.output_kind, train.feedback()),
        (OutputKind::ExplicitTriplets, FeedbackKind::Explicit)
            | (OutputKind::ImplicitPairs, FeedbackKind::Implicit)
    );
    if !compatible {
        return Err(Error::InvalidArgument(format!(
            "attack output kind {:?} does not match dataset feedback {:?}",
            fakes.params.output_kind,
            train.feedback()
        )));
    }

    let n_items = train.n_items();
    let mut user_ids = train.user_ids().to_vec();
    let existing: BTreeSet<String> = user_ids.iter().cloned().collect();
    let mut interactions = train.interactions().to_vec();
    let mut origin = train
        .origin()
        .map(|o| o.to_vec())
        .unwrap_or_else(|| vec![Origin::Genuine; train.n_users()]);

    for (idx, profile) in fakes.profiles.iter().enumerate() {
        let user = user_ids.len() as u32;
        let mut raw = format!("fake_{idx:04}");
        let mut salt = 0;
        while existing.contains(&raw) {
            raw = format!("fake_{idx:04}_{salt}");
            salt += 1;
        }
        user_ids.push(raw);
        origin.push(Origin::Fake);
        for (item, rating) in profile.entries() {
            if item as usize >= n_items {
                return Err(Error::InvalidArgument(format!(
                    "fake profile {idx} references item {item} outside the item index"
                )));
            }
            interactions.push(Interaction {
                user,
                item,
                rating,
                timestamp: None,
            });
        }
    }

    let mut injected = InteractionDataset::from_parts(
        train.name(),
        user_ids,
        train.item_ids().to_vec(),
        interactions,
        train.feedback(),
        train.scale(),
        Some(origin),
    )?;
    injected.set_name(&format!("{}+{}", train.name(), fakes.generator_name));
    Ok(injected)
}
