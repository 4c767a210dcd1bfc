//! Unsupervised fake-user detection and filtering.
//!
//! One detector: PCA-VarSelect. Fake profiles stamped from a common recipe
//! are nearly collinear, so they carry almost no weight in the principal
//! directions of the user covariance beyond the single direction they share.
//! Scoring every user by the squared loadings on the top components and
//! flagging the smallest scores separates stamped profiles from organically
//! diverse ones.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, Origin};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix};

/// How a flagged set lines up against origin labels, when the dataset
/// carries them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuspectReport {
    pub flagged_users: BTreeSet<u32>,
    /// One suspicion score per user; smaller means more suspicious.
    pub scores: Vec<f64>,
    pub n_components: usize,
    pub flag_count: usize,
    /// Present when the input dataset carried origin labels.
    pub confusion: Option<ConfusionCounts>,
}

impl ConfusionCounts {
    pub fn recall(&self) -> f64 {
        let actual = self.true_positive + self.false_negative;
        if actual == 0 {
            return 0.0;
        }
        self.true_positive as f64 / actual as f64
    }
}

/// Per-user z-score over observed entries, then a dense zero-filled matrix.
/// Users with degenerate spread (one rating, all ratings equal) normalize
/// to zero rows rather than blowing up.
fn zscored_matrix(train: &InteractionDataset) -> Vec<f64> {
    let n = train.n_users();
    let m = train.n_items();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut count = vec![0usize; n];
    for x in train.interactions() {
        let u = x.user as usize;
        sum[u] += x.rating;
        sum_sq[u] += x.rating * x.rating;
        count[u] += 1;
    }
    let mut mat = vec![0.0; n * m];
    for x in train.interactions() {
        let u = x.user as usize;
        let c = count[u] as f64;
        let mean = sum[u] / c;
        let var = (sum_sq[u] / c - mean * mean).max(0.0);
        let std = var.sqrt();
        mat[u * m + x.item as usize] = if std > 1e-12 {
            (x.rating - mean) / std
        } else {
            0.0
        };
    }
    mat
}

/// Top principal directions of the user covariance, as user-space loading
/// vectors. Works on whichever Gram matrix is smaller: X Xᵀ directly, or
/// Xᵀ X mapped back through u = X v / σ.
fn user_loadings(mat: &[f64], n: usize, m: usize, k: usize) -> Vec<Vec<f64>> {
    let k = k.min(n).min(m);
    if n <= m {
        let mut c = SymMatrix::zeros(n);
        for a in 0..n {
            for b in a..n {
                let mut s = 0.0;
                for i in 0..m {
                    s += mat[a * m + i] * mat[b * m + i];
                }
                c.set(a, b, s);
            }
        }
        let (_, vecs) = sym_eigen(&c);
        vecs.into_iter().take(k).collect()
    } else {
        let mut g = SymMatrix::zeros(m);
        for a in 0..m {
            for b in a..m {
                let mut s = 0.0;
                for u in 0..n {
                    s += mat[u * m + a] * mat[u * m + b];
                }
                g.set(a, b, s);
            }
        }
        let (vals, vecs) = sym_eigen(&g);
        let floor = vals.first().copied().unwrap_or(0.0).max(0.0) * 1e-12;
        let mut out = Vec::with_capacity(k);
        for (lambda, v) in vals.into_iter().zip(vecs).take(k) {
            if lambda <= floor {
                break;
            }
            let sigma = lambda.sqrt();
            let mut u = vec![0.0; n];
            for (r, row) in u.iter_mut().enumerate() {
                let mut s = 0.0;
                for i in 0..m {
                    s += mat[r * m + i] * v[i];
                }
                *row = s / sigma;
            }
            out.push(u);
        }
        out
    }
}

/// Tally a flag set against origin labels: fakes are the positive class.
pub fn confusion_counts(origin: &[Origin], flagged: &BTreeSet<u32>) -> ConfusionCounts {
    let mut c = ConfusionCounts {
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for (u, o) in origin.iter().enumerate() {
        let hit = flagged.contains(&(u as u32));
        match (o, hit) {
            (Origin::Fake, true) => c.true_positive += 1,
            (Origin::Fake, false) => c.false_negative += 1,
            (Origin::Genuine, true) => c.false_positive += 1,
            (Origin::Genuine, false) => c.true_negative += 1,
        }
    }
    c
}

/// PCA-VarSelect detector. Scores every user by the summed squared loadings
/// on the top `n_components` principal directions of the z-scored,
/// zero-filled user-item matrix and flags the `flag_count` lowest scorers.
pub fn pca_varselect(
    train: &InteractionDataset,
    n_components: usize,
    flag_count: usize,
) -> Result<SuspectReport> {
    if n_components == 0 {
        return Err(Error::InvalidArgument(
            "pca_varselect needs at least one component".into(),
        ));
    }
    let n = train.n_users();
    let m = train.n_items();
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "pca_varselect needs a non-empty dataset".into(),
        ));
    }
    let flag_count = if flag_count > n {
        log::warn!(
            "flag_count {flag_count} exceeds the {n} users in {:?}; flagging everyone",
            train.name()
        );
        n
    } else {
        flag_count
    };

    let mat = zscored_matrix(train);
    let loadings = user_loadings(&mat, n, m, n_components);
    let mut scores = vec![0.0; n];
    for comp in &loadings {
        for (s, x) in scores.iter_mut().zip(comp) {
            *s += x * x;
        }
    }

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| scores[a as usize].total_cmp(&scores[b as usize]).then(a.cmp(&b)));
    let flagged: BTreeSet<u32> = order.into_iter().take(flag_count).collect();
    let confusion = train.origin().map(|o| confusion_counts(o, &flagged));

    Ok(SuspectReport {
        flagged_users: flagged,
        scores,
        n_components,
        flag_count,
        confusion,
    })
}

/// Drop every interaction of the flagged users and re-index the survivors.
/// Returns the filtered dataset together with the kept users' original
/// indices (new index -> old index).
pub fn filter_users(
    train: &InteractionDataset,
    suspects: &SuspectReport,
) -> Result<(InteractionDataset, Vec<u32>)> {
    let n = train.n_users();
    if let Some(&bad) = suspects.flagged_users.iter().find(|&&u| u as usize >= n) {
        return Err(Error::InvalidArgument(format!(
            "flagged user {bad} does not exist in {:?}",
            train.name()
        )));
    }
    let kept: Vec<u32> = (0..n as u32)
        .filter(|u| !suspects.flagged_users.contains(u))
        .collect();
    let mut new_index = vec![u32::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        new_index[old as usize] = new as u32;
    }
    let user_ids: Vec<String> = kept
        .iter()
        .map(|&u| train.user_ids()[u as usize].clone())
        .collect();
    let interactions = train
        .interactions()
        .iter()
        .filter(|x| new_index[x.user as usize] != u32::MAX)
        .map(|x| crate::dataset::Interaction {
            user: new_index[x.user as usize],
            ..*x
        })
        .collect();
    let origin = train
        .origin()
        .map(|o| kept.iter().map(|&u| o[u as usize]).collect());
    let mut out = InteractionDataset::from_parts(
        format!("{}~filtered", train.name()),
        user_ids,
        train.item_ids().to_vec(),
        interactions,
        train.feedback(),
        train.scale(),
        origin,
    )?;
    out.set_name(format!("{}~filtered", train.name()));
    Ok((out, kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{inject, AttackIntent, AttackParams, FakeProfile, FakeProfileSet, OutputKind};
    use crate::rng::substream;
    use rand::Rng;

    fn random_genuine(n_users: usize, n_items: usize, per_user: usize, seed: u64) -> InteractionDataset {
        let mut interactions = Vec::new();
        for u in 0..n_users {
            let mut rng = substream(seed, "genuine", u as u64);
            let mut items: Vec<u32> = (0..n_items as u32).collect();
            for k in 0..per_user {
                let j = rng.gen_range(k..items.len());
                items.swap(k, j);
            }
            items.truncate(per_user);
            items.sort_unstable();
            for i in items {
                interactions.push(crate::dataset::Interaction {
                    user: u as u32,
                    item: i,
                    rating: rng.gen_range(1..=5) as f64,
                    timestamp: None,
                });
            }
        }
        InteractionDataset::from_parts(
            "genuine".to_string(),
            (0..n_users).map(|u| format!("u{u}")).collect(),
            (0..n_items).map(|i| format!("i{i}")).collect(),
            interactions,
            crate::dataset::FeedbackKind::Explicit,
            crate::dataset::RatingScale {
                min: 1.0,
                max: 5.0,
                integral: true,
            },
            None,
        )
        .unwrap()
    }

    /// Twenty byte-identical love/hate profiles: the stamped-attack shape
    /// the detector is built for.
    fn identical_lovehate(count: usize, target: u32, fillers: &[u32]) -> FakeProfileSet {
        let profile = FakeProfile {
            filler: fillers.iter().map(|&i| (i, 1.0)).collect(),
            selected: Vec::new(),
            targets: vec![(target, 5.0)],
        };
        FakeProfileSet {
            profiles: vec![profile; count],
            generator_name: "lovehate".to_string(),
            params: AttackParams {
                attack_size: count,
                filler_size: fillers.len(),
                target_items: vec![target],
                selected_items: None,
                intent: AttackIntent::Push,
                seed: 0,
                output_kind: OutputKind::ExplicitTriplets,
            },
        }
    }

    #[test]
    fn flag_count_zero_flags_nobody() {
        let d = random_genuine(12, 20, 6, 1);
        let report = pca_varselect(&d, 3, 0).unwrap();
        assert!(report.flagged_users.is_empty());
        assert_eq!(report.scores.len(), 12);
        assert!(report.scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn flag_count_above_user_count_flags_everyone() {
        let d = random_genuine(8, 15, 5, 2);
        let report = pca_varselect(&d, 3, 99).unwrap();
        assert_eq!(report.flagged_users.len(), 8);
        assert_eq!(report.flag_count, 8);
    }

    #[test]
    fn stamped_lovehate_profiles_are_caught() {
        let clean = random_genuine(100, 60, 30, 3);
        let fakes = identical_lovehate(20, 7, &[11, 14, 19, 23, 28, 31, 37, 42, 49, 55]);
        let attacked = inject(&clean, &fakes).unwrap();
        let report = pca_varselect(&attacked, 30, 20).unwrap();
        let confusion = report.confusion.expect("origin labels exist after inject");
        assert!(
            confusion.recall() >= 0.9,
            "recall {} too low: {confusion:?}",
            confusion.recall()
        );
    }

    #[test]
    fn small_side_trick_matches_dense_eigendecomposition() {
        // 10 users x 8 items forces the item-side Gram path; the oracle
        // diagonalizes the full user covariance with nalgebra
        let d = random_genuine(10, 8, 5, 4);
        let mat = zscored_matrix(&d);
        let k = 3;
        let ours = user_loadings(&mat, 10, 8, k);
        assert_eq!(ours.len(), k);

        let x = nalgebra::DMatrix::from_row_slice(10, 8, &mat);
        let cov = &x * x.transpose();
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut idx: Vec<usize> = (0..10).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let oracle: Vec<Vec<f64>> = idx[..k]
            .iter()
            .map(|&j| eig.eigenvectors.column(j).iter().copied().collect())
            .collect();

        // compare spanned subspaces: project our vectors out of the oracle
        // basis and measure what is left
        let mut residual = 0.0;
        for u in &ours {
            let mut r = u.clone();
            for o in &oracle {
                let c = crate::linalg::dot(u, o);
                for (ri, oi) in r.iter_mut().zip(o) {
                    *ri -= c * oi;
                }
            }
            residual += r.iter().map(|x| x * x).sum::<f64>();
        }
        assert!(
            residual.sqrt() <= 1e-8,
            "subspace residual {} too large",
            residual.sqrt()
        );
    }

    #[test]
    fn scores_ignore_item_relabeling() {
        let d = random_genuine(15, 25, 8, 5);
        let base = pca_varselect(&d, 5, 0).unwrap();

        // reverse the item index
        let m = d.n_items();
        let interactions: Vec<_> = d
            .interactions()
            .iter()
            .map(|x| crate::dataset::Interaction {
                item: (m as u32 - 1) - x.item,
                ..*x
            })
            .collect();
        let mut item_ids = d.item_ids().to_vec();
        item_ids.reverse();
        let permuted = InteractionDataset::from_parts(
            "permuted".to_string(),
            d.user_ids().to_vec(),
            item_ids,
            interactions,
            d.feedback(),
            d.scale(),
            None,
        )
        .unwrap();
        let perm = pca_varselect(&permuted, 5, 0).unwrap();
        for (a, b) in base.scores.iter().zip(&perm.scores) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let clean = random_genuine(40, 30, 10, 6);
        let fakes = identical_lovehate(8, 3, &[10, 12, 15, 20, 25]);
        let attacked = inject(&clean, &fakes).unwrap();
        let a = pca_varselect(&attacked, 10, 8).unwrap();
        let b = pca_varselect(&attacked, 10, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filtering_nothing_keeps_the_dataset() {
        let d = random_genuine(10, 12, 4, 7);
        let report = pca_varselect(&d, 3, 0).unwrap();
        let (filtered, kept) = filter_users(&d, &report).unwrap();
        assert_eq!(kept, (0..10).collect::<Vec<u32>>());
        assert_eq!(filtered.interactions(), d.interactions());
        assert_eq!(filtered.user_ids(), d.user_ids());
    }

    #[test]
    fn filtering_oracle_labels_undoes_injection() {
        let clean = random_genuine(30, 25, 8, 8);
        let fakes = identical_lovehate(6, 2, &[5, 9, 13]);
        let attacked = inject(&clean, &fakes).unwrap();
        let flagged: BTreeSet<u32> = attacked
            .origin()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(_, &o)| o == Origin::Fake)
            .map(|(u, _)| u as u32)
            .collect();
        let report = SuspectReport {
            flag_count: flagged.len(),
            flagged_users: flagged,
            scores: vec![0.0; attacked.n_users()],
            n_components: 1,
            confusion: None,
        };
        let (filtered, kept) = filter_users(&attacked, &report).unwrap();
        assert_eq!(kept.len(), 30);
        assert_eq!(filtered.user_ids(), clean.user_ids());
        assert_eq!(filtered.interactions(), clean.interactions());
        assert!(filtered.origin().unwrap().iter().all(|&o| o == Origin::Genuine));
    }

    #[test]
    fn filtering_removes_exactly_the_flagged_interactions() {
        let d = random_genuine(20, 18, 6, 9);
        let flagged: BTreeSet<u32> = [2u32, 7, 11].into_iter().collect();
        let removed: usize = d
            .interactions()
            .iter()
            .filter(|x| flagged.contains(&x.user))
            .count();
        let report = SuspectReport {
            flag_count: flagged.len(),
            flagged_users: flagged,
            scores: vec![0.0; 20],
            n_components: 1,
            confusion: None,
        };
        let (filtered, kept) = filter_users(&d, &report).unwrap();
        assert_eq!(kept.len(), 17);
        assert_eq!(filtered.n_interactions(), d.n_interactions() - removed);
    }

    #[test]
    fn report_round_trips_through_json() {
        let clean = random_genuine(25, 20, 6, 10);
        let fakes = identical_lovehate(5, 1, &[4, 8, 12]);
        let attacked = inject(&clean, &fakes).unwrap();
        let report = pca_varselect(&attacked, 6, 5).unwrap();
        assert!(report.confusion.is_some());
        let text = serde_json::to_string(&report).unwrap();
        let back: SuspectReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report, back);
    }
}
