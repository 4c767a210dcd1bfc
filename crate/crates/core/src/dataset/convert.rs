//! Explicit-to-implicit conversion.

use crate::error::{Error, Result};

use super::{FeedbackKind, Interaction, InteractionDataset, RatingScale};

/// Turn an explicit dataset into unary implicit feedback.
///
/// Without a threshold every interaction is kept as a positive event; with
/// one, only interactions rated at or above it survive. Either way ratings
/// collapse to 1. Users and items keep their indices even when all their
/// interactions drop out.
pub fn convert_to_implicit(
    d: &InteractionDataset,
    threshold: Option<f64>,
) -> Result<InteractionDataset> {
    if d.feedback() != FeedbackKind::Explicit {
        return Err(Error::InvalidArgument(
            "convert_to_implicit expects an explicit dataset".into(),
        ));
    }
    let kept: Vec<Interaction> = d
        .interactions()
        .iter()
        .filter(|it| threshold.map_or(true, |t| it.rating >= t))
        .map(|it| Interaction {
            rating: 1.0,
            ..*it
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyConversion {
            threshold: threshold.unwrap_or(f64::NEG_INFINITY),
        });
    }
    InteractionDataset::from_parts(
        d.name().to_string(),
        d.user_ids().to_vec(),
        d.item_ids().to_vec(),
        kept,
        FeedbackKind::Implicit,
        RatingScale {
            min: 1.0,
            max: 1.0,
            integral: true,
        },
        d.origin().map(|o| o.to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::tiny;

    #[test]
    fn no_threshold_keeps_everything_as_ones() {
        let d = tiny(FeedbackKind::Explicit);
        let imp = convert_to_implicit(&d, None).unwrap();
        assert_eq!(imp.n_interactions(), d.n_interactions());
        assert!(imp.interactions().iter().all(|it| it.rating == 1.0));
        assert_eq!(imp.feedback(), FeedbackKind::Implicit);
        assert_eq!(imp.n_users(), d.n_users());
        assert_eq!(imp.n_items(), d.n_items());
    }

    #[test]
    fn threshold_filters_low_ratings() {
        let d = tiny(FeedbackKind::Explicit); // ratings 4 and 2
        let imp = convert_to_implicit(&d, Some(4.0)).unwrap();
        assert_eq!(imp.n_interactions(), 1);
        assert_eq!(imp.interactions()[0].user, 0);
        // index space intact even though user 1 lost all interactions
        assert_eq!(imp.n_users(), 2);
    }

    #[test]
    fn threshold_above_all_ratings_is_an_error() {
        let d = tiny(FeedbackKind::Explicit);
        let err = convert_to_implicit(&d, Some(6.0)).unwrap_err();
        assert!(matches!(err, Error::EmptyConversion { .. }));
    }

    #[test]
    fn implicit_input_rejected() {
        let d = tiny(FeedbackKind::Implicit);
        assert!(convert_to_implicit(&d, None).is_err());
    }
}
