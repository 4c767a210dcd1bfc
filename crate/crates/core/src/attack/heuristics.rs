//! Statistics-based fake-profile generators.
//!
//! These need no access to any trained model: they imitate genuine rating
//! behavior from dataset statistics (random, average, bandwagon) or use
//! fixed extreme patterns (love/hate, segment). Each profile gets its own
//! RNG substream keyed by profile index, so a profile's content depends
//! only on (seed, index), never on how many profiles came before it.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetStats, InteractionDataset, RatingScale};
use crate::error::{Error, Result};
use crate::rng::substream;

use super::{AttackParams, FakeProfile, FakeProfileSet, OutputKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    Popular,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularityRule {
    ByCount,
    ByMeanRating,
}

/// Pick attack targets: the most-rated items, or a seeded uniform sample.
pub fn select_targets(
    d: &InteractionDataset,
    stats: &DatasetStats,
    count: usize,
    mode: TargetMode,
    seed: u64,
) -> Result<Vec<u32>> {
    if count == 0 {
        return Err(Error::InvalidArgument("target count must be positive".into()));
    }
    if count > d.n_items() {
        return Err(Error::InvalidArgument(format!(
            "target count {count} exceeds item count {}",
            d.n_items()
        )));
    }
    match mode {
        TargetMode::Popular => {
            let mut by_count: Vec<u32> = (0..d.n_items() as u32).collect();
            by_count.sort_by(|&a, &b| {
                stats.per_item_count[b as usize]
                    .cmp(&stats.per_item_count[a as usize])
                    .then(a.cmp(&b))
            });
            Ok(by_count[..count].to_vec())
        }
        TargetMode::Random => {
            let mut rng = substream(seed, "select_targets", 0);
            let mut ids: Vec<u32> = (0..d.n_items() as u32).collect();
            for k in 0..count {
                let j = rng.gen_range(k..ids.len());
                ids.swap(k, j);
            }
            Ok(ids[..count].to_vec())
        }
    }
}

/// Uniform filler sample without replacement, skipping reserved items.
/// Falls back to every available item (with a warning) when the request is
/// larger than the pool.
fn sample_fillers(
    rng: &mut ChaCha12Rng,
    n_items: usize,
    reserved: &BTreeSet<u32>,
    count: usize,
) -> Vec<u32> {
    let mut pool: Vec<u32> = (0..n_items as u32).filter(|i| !reserved.contains(i)).collect();
    if count >= pool.len() {
        if count > pool.len() {
            log::warn!(
                "filler_size {count} exceeds the {} available items; using all of them",
                pool.len()
            );
        }
        return pool;
    }
    for k in 0..count {
        let j = rng.gen_range(k..pool.len());
        pool.swap(k, j);
    }
    pool.truncate(count);
    pool
}

/// Clip a sampled value to bounds and snap it onto the rating grid, rounding
/// ties toward the attack intent.
fn onto_grid(value: f64, scale: RatingScale, params: &AttackParams) -> f64 {
    let clipped = scale.clip(value);
    if scale.integral {
        scale.discretize(clipped, params.intent.tie_break())
    } else {
        clipped
    }
}

fn draw_normal(rng: &mut ChaCha12Rng, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(mean, std).expect("valid normal").sample(rng)
    } else {
        mean
    }
}

fn target_section(params: &AttackParams, scale: RatingScale) -> Vec<(u32, f64)> {
    let rating = match params.output_kind {
        OutputKind::ExplicitTriplets => params.intent.target_rating(scale),
        OutputKind::ImplicitPairs => 1.0,
    };
    params.target_items.iter().map(|&t| (t, rating)).collect()
}

fn user_selected_section(params: &AttackParams, scale: RatingScale) -> Vec<(u32, f64)> {
    match (&params.selected_items, params.output_kind) {
        (Some(sel), OutputKind::ExplicitTriplets) => sel
            .iter()
            .map(|&(i, r)| (i, onto_grid(r, scale, params)))
            .collect(),
        (Some(sel), OutputKind::ImplicitPairs) => sel.iter().map(|&(i, _)| (i, 1.0)).collect(),
        (None, _) => Vec::new(),
    }
}

/// Build a profile set where `fill` produces the filler section for one
/// profile from its private RNG.
fn build_profiles(
    name: &str,
    params: &AttackParams,
    scale: RatingScale,
    mut fill: impl FnMut(&mut ChaCha12Rng) -> Vec<(u32, f64)>,
    extra_selected: &[(u32, f64)],
) -> FakeProfileSet {
    let mut profiles = Vec::with_capacity(params.attack_size);
    for idx in 0..params.attack_size {
        let mut rng = substream(params.seed, "profile", idx as u64);
        let mut selected = user_selected_section(params, scale);
        selected.extend_from_slice(extra_selected);
        profiles.push(FakeProfile {
            filler: fill(&mut rng),
            selected,
            targets: target_section(params, scale),
        });
    }
    FakeProfileSet {
        profiles,
        generator_name: name.to_string(),
        params: params.clone(),
    }
}

/// Fillers chosen uniformly, rated from the global rating distribution.
pub fn gen_random_attack(
    stats: &DatasetStats,
    scale: RatingScale,
    params: &AttackParams,
) -> Result<FakeProfileSet> {
    let n_items = stats.per_item_mean.len();
    params.validate(n_items)?;
    let reserved = params.reserved_items();
    Ok(build_profiles(
        "random",
        params,
        scale,
        |rng| {
            sample_fillers(rng, n_items, &reserved, params.filler_size)
                .into_iter()
                .map(|i| {
                    let r = match params.output_kind {
                        OutputKind::ExplicitTriplets => onto_grid(
                            draw_normal(rng, stats.global_mean, stats.global_std),
                            scale,
                            params,
                        ),
                        OutputKind::ImplicitPairs => 1.0,
                    };
                    (i, r)
                })
                .collect()
        },
        &[],
    ))
}

/// Fillers rated from each item's own rating distribution; items nobody has
/// rated fall back to the global distribution.
pub fn gen_average_attack(
    stats: &DatasetStats,
    scale: RatingScale,
    params: &AttackParams,
) -> Result<FakeProfileSet> {
    let n_items = stats.per_item_mean.len();
    params.validate(n_items)?;
    let reserved = params.reserved_items();
    Ok(build_profiles(
        "average",
        params,
        scale,
        |rng| {
            sample_fillers(rng, n_items, &reserved, params.filler_size)
                .into_iter()
                .map(|i| {
                    let r = match params.output_kind {
                        OutputKind::ExplicitTriplets => {
                            let (mean, std) = if stats.per_item_count[i as usize] > 0 {
                                (stats.per_item_mean[i as usize], stats.per_item_std[i as usize])
                            } else {
                                (stats.global_mean, stats.global_std)
                            };
                            onto_grid(draw_normal(rng, mean, std), scale, params)
                        }
                        OutputKind::ImplicitPairs => 1.0,
                    };
                    (i, r)
                })
                .collect()
        },
        &[],
    ))
}

/// A fixed share of the profile goes to the most popular items at the top
/// rating; the rest behaves like the random attack.
pub fn gen_bandwagon_attack(
    stats: &DatasetStats,
    scale: RatingScale,
    params: &AttackParams,
    popular_fraction: f64,
    popularity_rule: PopularityRule,
) -> Result<FakeProfileSet> {
    let n_items = stats.per_item_mean.len();
    params.validate(n_items)?;
    if !(0.0..=1.0).contains(&popular_fraction) {
        return Err(Error::InvalidArgument(format!(
            "popular_fraction {popular_fraction} outside [0, 1]"
        )));
    }
    let mut reserved = params.reserved_items();

    let slots = (popular_fraction * params.filler_size as f64).floor() as usize;
    let mut ranking: Vec<u32> = (0..n_items as u32).filter(|i| !reserved.contains(i)).collect();
    match popularity_rule {
        PopularityRule::ByCount => ranking.sort_by(|&a, &b| {
            stats.per_item_count[b as usize]
                .cmp(&stats.per_item_count[a as usize])
                .then(a.cmp(&b))
        }),
        PopularityRule::ByMeanRating => ranking.sort_by(|&a, &b| {
            stats.per_item_mean[b as usize]
                .total_cmp(&stats.per_item_mean[a as usize])
                .then(a.cmp(&b))
        }),
    }
    ranking.truncate(slots);
    // popular picks are rated at the top of the scale so the profile looks
    // like a mainstream fan, whatever the intent for the target is
    let popular_rating = match params.output_kind {
        OutputKind::ExplicitTriplets => scale.max,
        OutputKind::ImplicitPairs => 1.0,
    };
    let popular: Vec<(u32, f64)> = ranking.iter().map(|&i| (i, popular_rating)).collect();
    reserved.extend(ranking.iter().copied());

    let random_share = params.filler_size - slots;
    Ok(build_profiles(
        "bandwagon",
        params,
        scale,
        |rng| {
            sample_fillers(rng, n_items, &reserved, random_share)
                .into_iter()
                .map(|i| {
                    let r = match params.output_kind {
                        OutputKind::ExplicitTriplets => onto_grid(
                            draw_normal(rng, stats.global_mean, stats.global_std),
                            scale,
                            params,
                        ),
                        OutputKind::ImplicitPairs => 1.0,
                    };
                    (i, r)
                })
                .collect()
        },
        &popular,
    ))
}

/// Fillers at one extreme, targets at the other.
pub fn gen_lovehate_attack(
    scale: RatingScale,
    n_items: usize,
    params: &AttackParams,
) -> Result<FakeProfileSet> {
    params.validate(n_items)?;
    let filler_rating = match (params.output_kind, params.intent) {
        (OutputKind::ImplicitPairs, _) => 1.0,
        (OutputKind::ExplicitTriplets, super::AttackIntent::Push) => scale.min,
        (OutputKind::ExplicitTriplets, super::AttackIntent::Nuke) => scale.max,
    };
    let reserved = params.reserved_items();
    Ok(build_profiles(
        "lovehate",
        params,
        scale,
        |rng| {
            sample_fillers(rng, n_items, &reserved, params.filler_size)
                .into_iter()
                .map(|i| (i, filler_rating))
                .collect()
        },
        &[],
    ))
}

/// Segment items loved, everything else hated, targets per intent. The
/// segment list does not count toward filler_size.
pub fn gen_segment_attack(
    scale: RatingScale,
    n_items: usize,
    params: &AttackParams,
    segment_items: &[u32],
) -> Result<FakeProfileSet> {
    params.validate(n_items)?;
    if segment_items.is_empty() {
        return Err(Error::InvalidArgument("segment_items must be non-empty".into()));
    }
    let targets = params.target_set();
    if let Some(bad) = segment_items.iter().find(|i| targets.contains(i)) {
        return Err(Error::InvalidArgument(format!(
            "segment item {bad} collides with a target"
        )));
    }
    if let Some(bad) = segment_items.iter().find(|&&i| i as usize >= n_items) {
        return Err(Error::InvalidArgument(format!(
            "segment item {bad} outside item index"
        )));
    }
    let (love, hate) = match params.output_kind {
        OutputKind::ExplicitTriplets => (scale.max, scale.min),
        OutputKind::ImplicitPairs => (1.0, 1.0),
    };
    let segment: Vec<(u32, f64)> = segment_items.iter().map(|&i| (i, love)).collect();
    let mut reserved = params.reserved_items();
    reserved.extend(segment_items.iter().copied());
    Ok(build_profiles(
        "segment",
        params,
        scale,
        |rng| {
            sample_fillers(rng, n_items, &reserved, params.filler_size)
                .into_iter()
                .map(|i| (i, hate))
                .collect()
        },
        &segment,
    ))
}

/// The `count` items most similar to `item` by co-rating cosine, similarity
/// descending with ties broken by lower id. Items sharing no rater with
/// `item` are excluded, so the list may be shorter than requested.
pub fn nearest_items_by_cosine(d: &InteractionDataset, item: u32, count: usize) -> Vec<u32> {
    let mut norms_sq = vec![0.0f64; d.n_items()];
    for x in d.interactions() {
        norms_sq[x.item as usize] += x.rating * x.rating;
    }
    let mut dots = vec![0.0f64; d.n_items()];
    let user_items = d.user_items();
    for items in &user_items {
        if let Some(&(_, target_r)) = items.iter().find(|&&(i, _)| i == item) {
            for &(other, r) in items {
                if other != item {
                    dots[other as usize] += r * target_r;
                }
            }
        }
    }
    let mut sims: Vec<(u32, f64)> = dots
        .iter()
        .enumerate()
        .filter(|&(i, &dot)| {
            i as u32 != item && dot > 0.0 && norms_sq[i] > 0.0 && norms_sq[item as usize] > 0.0
        })
        .map(|(i, &dot)| {
            (
                i as u32,
                dot / (norms_sq[i] * norms_sq[item as usize]).sqrt(),
            )
        })
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(count);
    sims.into_iter().map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackIntent;
    use crate::dataset::{compute_stats, FeedbackKind, Interaction, Origin};

    fn scale() -> RatingScale {
        RatingScale {
            min: 1.0,
            max: 5.0,
            integral: true,
        }
    }

    fn push_params(targets: Vec<u32>, attack_size: usize, filler_size: usize) -> AttackParams {
        AttackParams {
            attack_size,
            filler_size,
            target_items: targets,
            selected_items: None,
            intent: AttackIntent::Push,
            seed: 11,
            output_kind: OutputKind::ExplicitTriplets,
        }
    }

    fn dataset_from(rows: &[(u32, u32, f64)], n_users: u32, n_items: u32) -> InteractionDataset {
        InteractionDataset::from_parts(
            "hand",
            (0..n_users).map(|u| u.to_string()).collect(),
            (0..n_items).map(|i| i.to_string()).collect(),
            rows.iter()
                .map(|&(user, item, rating)| Interaction {
                    user,
                    item,
                    rating,
                    timestamp: None,
                })
                .collect(),
            FeedbackKind::Explicit,
            scale(),
            Some(vec![Origin::Genuine; n_users as usize]),
        )
        .unwrap()
    }

    #[test]
    fn popular_targets_are_the_most_rated() {
        // i0: 3 ratings, i1: 2, i2: 1
        let d = dataset_from(
            &[
                (0, 0, 4.0),
                (1, 0, 3.0),
                (2, 0, 5.0),
                (0, 1, 2.0),
                (1, 1, 4.0),
                (2, 2, 1.0),
            ],
            3,
            3,
        );
        let stats = compute_stats(&d);
        assert_eq!(
            select_targets(&d, &stats, 1, TargetMode::Popular, 0).unwrap(),
            vec![0]
        );
        assert_eq!(
            select_targets(&d, &stats, 2, TargetMode::Popular, 0).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn popular_targets_match_a_counting_scan() {
        let d = crate::synth::ml100k_like(4);
        let stats = compute_stats(&d);
        let got = select_targets(&d, &stats, 3, TargetMode::Popular, 0).unwrap();
        // independent scan
        let mut counts = vec![0usize; d.n_items()];
        for x in d.interactions() {
            counts[x.item as usize] += 1;
        }
        let mut ids: Vec<u32> = (0..d.n_items() as u32).collect();
        ids.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        assert_eq!(got, ids[..3].to_vec());
    }

    #[test]
    fn random_targets_exhaust_all_items() {
        let d = dataset_from(&[(0, 0, 3.0), (0, 1, 3.0), (0, 2, 3.0)], 1, 3);
        let stats = compute_stats(&d);
        let mut got = select_targets(&d, &stats, 3, TargetMode::Random, 5).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2]);
        assert!(select_targets(&d, &stats, 0, TargetMode::Random, 5).is_err());
        assert!(select_targets(&d, &stats, 4, TargetMode::Random, 5).is_err());
    }

    #[test]
    fn random_attack_degenerate_std_gives_the_mean() {
        // every rating is 3 -> global std 0
        let d = dataset_from(&[(0, 0, 3.0), (1, 1, 3.0), (2, 2, 3.0), (0, 3, 3.0)], 3, 4);
        let stats = compute_stats(&d);
        let set = gen_random_attack(&stats, scale(), &push_params(vec![0], 4, 2)).unwrap();
        set.check_invariants(scale()).unwrap();
        for p in &set.profiles {
            assert_eq!(p.filler.len(), 2);
            assert!(p.filler.iter().all(|&(_, r)| r == 3.0));
            assert_eq!(p.targets, vec![(0, 5.0)]);
        }
    }

    #[test]
    fn random_attack_sample_mean_tracks_global_mean() {
        // uniform ratings center the distribution so clipping cancels out
        let d = crate::synth::uniform_explicit("u", 60, 300, 9000, 3);
        let stats = compute_stats(&d);
        let params = push_params(vec![0], 50, 40);
        let set = gen_random_attack(&stats, scale(), &params).unwrap();
        set.check_invariants(scale()).unwrap();
        let samples: Vec<f64> = set
            .profiles
            .iter()
            .flat_map(|p| p.filler.iter().map(|&(_, r)| r))
            .collect();
        let n = samples.len() as f64;
        assert_eq!(samples.len(), 50 * 40);
        let mean = samples.iter().sum::<f64>() / n;
        let bound = 3.0 * stats.global_std / n.sqrt();
        assert!(
            (mean - stats.global_mean).abs() <= bound,
            "sample mean {mean} vs global {} (bound {bound})",
            stats.global_mean
        );
    }

    #[test]
    fn average_attack_single_rating_item_is_exact() {
        // item 1 rated once with 2 -> per-item std 0
        let d = dataset_from(&[(0, 0, 4.0), (1, 0, 2.0), (2, 1, 2.0)], 3, 2);
        let stats = compute_stats(&d);
        let mut params = push_params(vec![0], 5, 1);
        params.filler_size = 1;
        let set = gen_average_attack(&stats, scale(), &params).unwrap();
        for p in &set.profiles {
            // only item 1 is available as filler
            assert_eq!(p.filler, vec![(1, 2.0)]);
        }
    }

    #[test]
    fn average_attack_unrated_item_falls_back_to_global() {
        // item 2 exists in the index but has no ratings; global is degenerate
        // at 3 so the fallback is observable exactly
        let d = dataset_from(&[(0, 0, 3.0), (1, 1, 3.0)], 2, 3);
        let stats = compute_stats(&d);
        assert_eq!(stats.per_item_count[2], 0);
        let params = push_params(vec![0], 3, 2);
        let set = gen_average_attack(&stats, scale(), &params).unwrap();
        for p in &set.profiles {
            for &(i, r) in &p.filler {
                if i == 2 {
                    assert_eq!(r, 3.0, "unrated item should sample the global mean");
                }
            }
        }
    }

    #[test]
    fn average_attack_concentrates_on_the_item_mean() {
        // item 1: ratings {4,5} -> mean 4.5, population std 0.5
        let mut rows = vec![(0, 1, 4.0), (1, 1, 5.0)];
        for u in 0..2u32 {
            rows.push((u, 0, 3.0));
        }
        let d = dataset_from(&rows, 2, 2);
        let stats = compute_stats(&d);
        let params = push_params(vec![0], 400, 1);
        let set = gen_average_attack(&stats, scale(), &params).unwrap();
        let samples: Vec<f64> = set
            .profiles
            .iter()
            .flat_map(|p| p.filler.iter().filter(|&&(i, _)| i == 1).map(|&(_, r)| r))
            .collect();
        assert_eq!(samples.len(), 400);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!((mean - 4.5).abs() < 0.15, "sample mean {mean}");
        let in_range = samples.iter().filter(|&&r| r == 4.0 || r == 5.0).count();
        assert!(in_range as f64 / samples.len() as f64 > 0.9);
    }

    #[test]
    fn bandwagon_floor_rule_and_boundaries() {
        let d = crate::synth::uniform_explicit("b", 40, 60, 1500, 7);
        let stats = compute_stats(&d);
        let params = push_params(vec![2], 6, 10);

        let half = gen_bandwagon_attack(&stats, scale(), &params, 0.5, PopularityRule::ByCount)
            .unwrap();
        half.check_invariants(scale()).unwrap();
        for p in &half.profiles {
            assert_eq!(p.selected.len(), 5, "floor(0.5 * 10) popular slots");
            assert_eq!(p.filler.len(), 5);
            assert!(p.selected.iter().all(|&(_, r)| r == 5.0));
        }

        let all = gen_bandwagon_attack(&stats, scale(), &params, 1.0, PopularityRule::ByCount)
            .unwrap();
        for p in &all.profiles {
            assert_eq!(p.selected.len(), 10);
            assert!(p.filler.is_empty());
        }

        let none = gen_bandwagon_attack(&stats, scale(), &params, 0.0, PopularityRule::ByCount)
            .unwrap();
        for p in &none.profiles {
            assert!(p.selected.is_empty());
            assert_eq!(p.filler.len(), 10);
        }

        assert!(
            gen_bandwagon_attack(&stats, scale(), &params, 1.5, PopularityRule::ByCount).is_err()
        );
    }

    #[test]
    fn bandwagon_popular_slots_are_the_top_of_the_ranking() {
        let d = crate::synth::uniform_explicit("b2", 30, 40, 900, 9);
        let stats = compute_stats(&d);
        let params = push_params(vec![0], 2, 6);
        let set = gen_bandwagon_attack(&stats, scale(), &params, 0.5, PopularityRule::ByCount)
            .unwrap();
        let mut expect: Vec<u32> = (1..40u32).collect(); // target 0 excluded
        expect.sort_by(|&a, &b| {
            stats.per_item_count[b as usize]
                .cmp(&stats.per_item_count[a as usize])
                .then(a.cmp(&b))
        });
        let expect: Vec<u32> = expect[..3].to_vec();
        for p in &set.profiles {
            assert_eq!(p.selected.iter().map(|&(i, _)| i).collect::<Vec<_>>(), expect);
        }
    }

    #[test]
    fn lovehate_rates_extremes() {
        let params = push_params(vec![4], 3, 4);
        let set = gen_lovehate_attack(scale(), 20, &params).unwrap();
        set.check_invariants(scale()).unwrap();
        for p in &set.profiles {
            assert_eq!(p.filler.len(), 4);
            assert!(p.filler.iter().all(|&(_, r)| r == 1.0));
            assert_eq!(p.targets, vec![(4, 5.0)]);
        }

        let mut nuke = push_params(vec![4], 3, 4);
        nuke.intent = AttackIntent::Nuke;
        let set = gen_lovehate_attack(scale(), 20, &nuke).unwrap();
        for p in &set.profiles {
            assert!(p.filler.iter().all(|&(_, r)| r == 5.0));
            assert_eq!(p.targets, vec![(4, 1.0)]);
        }

        let mut bare = push_params(vec![4], 2, 0);
        bare.filler_size = 0;
        let set = gen_lovehate_attack(scale(), 20, &bare).unwrap();
        for p in &set.profiles {
            assert!(p.filler.is_empty());
            assert_eq!(p.n_entries(), 1);
        }
    }

    #[test]
    fn segment_attack_rules_and_errors() {
        let params = push_params(vec![0], 2, 2);
        let set = gen_segment_attack(scale(), 20, &params, &[3, 7]).unwrap();
        set.check_invariants(scale()).unwrap();
        for p in &set.profiles {
            assert_eq!(p.selected, vec![(3, 5.0), (7, 5.0)]);
            assert_eq!(p.filler.len(), 2);
            assert!(p.filler.iter().all(|&(_, r)| r == 1.0));
            assert_eq!(p.targets, vec![(0, 5.0)]);
        }
        assert!(gen_segment_attack(scale(), 20, &params, &[]).is_err());
        assert!(gen_segment_attack(scale(), 20, &params, &[0, 3]).is_err());
        assert!(gen_segment_attack(scale(), 20, &params, &[25]).is_err());
    }

    #[test]
    fn nearest_by_cosine_matches_brute_force() {
        let d = crate::synth::uniform_explicit("sim", 25, 20, 260, 15);
        let got = nearest_items_by_cosine(&d, 5, 10);

        let mut cols = vec![vec![0.0f64; 25]; 20];
        for x in d.interactions() {
            cols[x.item as usize][x.user as usize] = x.rating;
        }
        let cosine = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        };
        let mut expect: Vec<(u32, f64)> = (0..20u32)
            .filter(|&j| j != 5)
            .map(|j| (j, cosine(&cols[5], &cols[j as usize])))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        expect.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        expect.truncate(10);
        assert_eq!(got, expect.into_iter().map(|(i, _)| i).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let d = crate::synth::uniform_explicit("det", 30, 50, 800, 21);
        let stats = compute_stats(&d);
        let params = push_params(vec![1, 2], 10, 8);
        let a = gen_average_attack(&stats, scale(), &params).unwrap();
        let b = gen_average_attack(&stats, scale(), &params).unwrap();
        assert_eq!(a, b);
        let mut other = params.clone();
        other.seed = 12;
        let c = gen_average_attack(&stats, scale(), &other).unwrap();
        assert_ne!(a.profiles, c.profiles);
    }

    #[test]
    fn implicit_output_uses_unit_ratings() {
        let d = crate::synth::uniform_explicit("imp", 30, 50, 800, 2);
        let stats = compute_stats(&d);
        let mut params = push_params(vec![1], 4, 6);
        params.output_kind = OutputKind::ImplicitPairs;
        let set = gen_random_attack(&stats, scale(), &params).unwrap();
        for p in &set.profiles {
            assert!(p.filler.iter().all(|&(_, r)| r == 1.0));
            assert_eq!(p.targets, vec![(1, 1.0)]);
        }
    }

    #[test]
    fn fillers_avoid_reserved_items() {
        let d = crate::synth::uniform_explicit("res", 30, 30, 500, 8);
        let stats = compute_stats(&d);
        let mut params = push_params(vec![3, 4], 20, 10);
        params.selected_items = Some(vec![(9, 4.0)]);
        let set = gen_random_attack(&stats, scale(), &params).unwrap();
        set.check_invariants(scale()).unwrap();
        for p in &set.profiles {
            for &(i, _) in &p.filler {
                assert!(![3u32, 4, 9].contains(&i));
            }
            assert_eq!(p.selected, vec![(9, 4.0)]);
        }
    }
}
