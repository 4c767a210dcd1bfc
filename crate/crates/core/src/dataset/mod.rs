//! Interaction datasets: loading, conversion, splitting, statistics and the
//! on-disk cache for attacked variants.

mod cache;
mod convert;
mod load;
mod split;
mod stats;

pub use cache::{export_delimited, CacheKey, DatasetCache, CACHE_ROOT_ENV};
pub use convert::convert_to_implicit;
pub use load::{load_explicit, ColumnRef, LoadSchema};
pub use split::{split_holdout, SplitSpec, SplitStrategy};
pub use stats::{compute_stats, DatasetStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed user-item event in dense index space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Explicit,
    Implicit,
}

/// Provenance of a user row after an injection step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Genuine,
    Fake,
}

/// Which way a .5 fraction rounds when snapping to the rating grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieBreak {
    Up,
    Down,
}

/// Rating bounds plus whether observed ratings sit on the integer grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    pub integral: bool,
}

impl RatingScale {
    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    /// Clip to bounds and, for integral scales, round to the nearest grid
    /// point. Exact .5 fractions round per `tie` so a push attack can prefer
    /// the high neighbor and a nuke attack the low one.
    pub fn discretize(&self, x: f64, tie: TieBreak) -> f64 {
        let x = self.clip(x);
        if !self.integral {
            return x;
        }
        let lo = x.floor();
        let frac = x - lo;
        let snapped = if frac > 0.5 {
            lo + 1.0
        } else if frac < 0.5 {
            lo
        } else {
            match tie {
                TieBreak::Up => lo + 1.0,
                TieBreak::Down => lo,
            }
        };
        self.clip(snapped)
    }
}

/// A set of interactions over densely indexed users and items.
///
/// Index space is part of the dataset's identity: splits share their parent's
/// user and item tables, so a model trained on one side scores the other
/// without remapping. `origin` is present once fake profiles were injected.
#[derive(Clone, Debug)]
pub struct InteractionDataset {
    name: String,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    interactions: Vec<Interaction>,
    feedback: FeedbackKind,
    scale: RatingScale,
    origin: Option<Vec<Origin>>,
}

impl InteractionDataset {
    /// Build a dataset and check every structural invariant.
    pub fn from_parts(
        name: impl Into<String>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        interactions: Vec<Interaction>,
        feedback: FeedbackKind,
        scale: RatingScale,
        origin: Option<Vec<Origin>>,
    ) -> Result<Self> {
        let d = InteractionDataset {
            name: name.into(),
            user_ids,
            item_ids,
            interactions,
            feedback,
            scale,
            origin,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let nu = self.user_ids.len();
        let ni = self.item_ids.len();
        if let Some(origin) = &self.origin {
            if origin.len() != nu {
                return Err(Error::InvalidArgument(format!(
                    "origin labels cover {} users, dataset has {}",
                    origin.len(),
                    nu
                )));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(self.interactions.len());
        for it in &self.interactions {
            if it.user as usize >= nu || it.item as usize >= ni {
                return Err(Error::InvalidArgument(format!(
                    "interaction ({}, {}) outside index space {}x{}",
                    it.user, it.item, nu, ni
                )));
            }
            if !seen.insert((it.user, it.item)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate interaction for user {} item {}",
                    it.user, it.item
                )));
            }
            match self.feedback {
                FeedbackKind::Explicit => {
                    if it.rating < self.scale.min || it.rating > self.scale.max {
                        return Err(Error::InvalidArgument(format!(
                            "rating {} outside [{}, {}]",
                            it.rating, self.scale.min, self.scale.max
                        )));
                    }
                }
                FeedbackKind::Implicit => {
                    if it.rating != 1.0 {
                        return Err(Error::InvalidArgument(format!(
                            "implicit dataset carries rating {}, expected 1",
                            it.rating
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.interactions.len()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn feedback(&self) -> FeedbackKind {
        self.feedback
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn origin(&self) -> Option<&[Origin]> {
        self.origin.as_deref()
    }

    /// Dense user indices labeled genuine. Without labels every user counts
    /// as genuine.
    pub fn genuine_users(&self) -> Vec<u32> {
        match &self.origin {
            None => (0..self.n_users() as u32).collect(),
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, o)| **o == Origin::Genuine)
                .map(|(u, _)| u as u32)
                .collect(),
        }
    }

    /// Per-user interaction lists, indexed by dense user id.
    pub fn user_items(&self) -> Vec<Vec<(u32, f64)>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for it in &self.interactions {
            out[it.user as usize].push((it.item, it.rating));
        }
        out
    }

    /// Per-item interaction lists, indexed by dense item id.
    pub fn item_users(&self) -> Vec<Vec<(u32, f64)>> {
        let mut out = vec![Vec::new(); self.n_items()];
        for it in &self.interactions {
            out[it.item as usize].push((it.user, it.rating));
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny(feedback: FeedbackKind) -> InteractionDataset {
        let rating = |r: f64| match feedback {
            FeedbackKind::Explicit => r,
            FeedbackKind::Implicit => 1.0,
        };
        InteractionDataset::from_parts(
            "tiny",
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into(), "z".into()],
            vec![
                Interaction {
                    user: 0,
                    item: 0,
                    rating: rating(4.0),
                    timestamp: None,
                },
                Interaction {
                    user: 1,
                    item: 2,
                    rating: rating(2.0),
                    timestamp: None,
                },
            ],
            feedback,
            RatingScale {
                min: 1.0,
                max: 5.0,
                integral: true,
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn duplicate_pair_rejected() {
        let err = InteractionDataset::from_parts(
            "d",
            vec!["a".into()],
            vec!["x".into()],
            vec![
                Interaction {
                    user: 0,
                    item: 0,
                    rating: 3.0,
                    timestamp: None,
                },
                Interaction {
                    user: 0,
                    item: 0,
                    rating: 4.0,
                    timestamp: None,
                },
            ],
            FeedbackKind::Explicit,
            RatingScale {
                min: 1.0,
                max: 5.0,
                integral: true,
            },
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn out_of_bounds_rating_rejected() {
        let err = InteractionDataset::from_parts(
            "d",
            vec!["a".into()],
            vec!["x".into()],
            vec![Interaction {
                user: 0,
                item: 0,
                rating: 6.0,
                timestamp: None,
            }],
            FeedbackKind::Explicit,
            RatingScale {
                min: 1.0,
                max: 5.0,
                integral: true,
            },
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn implicit_requires_unit_ratings() {
        let err = InteractionDataset::from_parts(
            "d",
            vec!["a".into()],
            vec!["x".into()],
            vec![Interaction {
                user: 0,
                item: 0,
                rating: 3.0,
                timestamp: None,
            }],
            FeedbackKind::Implicit,
            RatingScale {
                min: 1.0,
                max: 1.0,
                integral: true,
            },
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("implicit"));
    }

    #[test]
    fn discretize_rounds_and_breaks_ties_by_rule() {
        let scale = RatingScale {
            min: 1.0,
            max: 5.0,
            integral: true,
        };
        assert_eq!(scale.discretize(3.2, TieBreak::Up), 3.0);
        assert_eq!(scale.discretize(3.8, TieBreak::Down), 4.0);
        assert_eq!(scale.discretize(3.5, TieBreak::Up), 4.0);
        assert_eq!(scale.discretize(3.5, TieBreak::Down), 3.0);
        assert_eq!(scale.discretize(9.0, TieBreak::Down), 5.0);
        assert_eq!(scale.discretize(-2.0, TieBreak::Up), 1.0);

        let cont = RatingScale {
            min: 0.0,
            max: 1.0,
            integral: false,
        };
        assert_eq!(cont.discretize(0.37, TieBreak::Up), 0.37);
    }
}
