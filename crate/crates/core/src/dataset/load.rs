//! Loading explicit-feedback datasets from delimited text.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{FeedbackKind, Interaction, InteractionDataset, RatingScale};

/// A column picked either by zero-based position or by header name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    fn resolve(&self, header: Option<&[String]>, path: &Path) -> Result<usize> {
        match self {
            ColumnRef::Index(i) => Ok(*i),
            ColumnRef::Name(name) => {
                let header = header.ok_or_else(|| {
                    Error::Config(format!(
                        "column {name:?} referenced by name but {} has no header",
                        path.display()
                    ))
                })?;
                header.iter().position(|h| h == name).ok_or_else(|| {
                    Error::Config(format!(
                        "column {name:?} not found in header {header:?} of {}",
                        path.display()
                    ))
                })
            }
        }
    }
}

/// How to read a delimited ratings file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSchema {
    pub user: ColumnRef,
    pub item: ColumnRef,
    pub rating: ColumnRef,
    pub timestamp: Option<ColumnRef>,
    /// None picks tab when the first row contains one, comma otherwise.
    pub delimiter: Option<char>,
    pub has_header: bool,
    /// Rating bounds to enforce; observed min and max when absent.
    pub bounds: Option<(f64, f64)>,
}

impl Default for LoadSchema {
    fn default() -> Self {
        LoadSchema {
            user: ColumnRef::Index(0),
            item: ColumnRef::Index(1),
            rating: ColumnRef::Index(2),
            timestamp: Some(ColumnRef::Index(3)),
            delimiter: None,
            has_header: false,
            bounds: None,
        }
    }
}

/// Load an explicit-feedback dataset.
///
/// Raw user and item ids become dense indices in first-appearance order.
/// Repeated (user, item) pairs keep the latest timestamp, or the last
/// occurrence when timestamps are absent; the number of dropped rows is
/// logged. A malformed row aborts the load with its line number. An empty
/// file is an error.
pub fn load_explicit(path: impl AsRef<Path>, schema: &LoadSchema) -> Result<InteractionDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut lines = text.lines().enumerate();

    let delimiter = schema.delimiter.unwrap_or_else(|| {
        match text.lines().find(|l| !l.trim().is_empty()) {
            Some(l) if l.contains('\t') => '\t',
            _ => ',',
        }
    });

    let header: Option<Vec<String>> = if schema.has_header {
        match lines.next() {
            Some((_, l)) => Some(l.split(delimiter).map(|s| s.trim().to_string()).collect()),
            None => return Err(Error::EmptyDataset),
        }
    } else {
        None
    };

    let user_col = schema.user.resolve(header.as_deref(), path)?;
    let item_col = schema.item.resolve(header.as_deref(), path)?;
    let rating_col = schema.rating.resolve(header.as_deref(), path)?;
    let ts_col = schema
        .timestamp
        .as_ref()
        .map(|c| c.resolve(header.as_deref(), path))
        .transpose()?;

    let mut user_index: HashMap<String, u32> = HashMap::new();
    let mut item_index: HashMap<String, u32> = HashMap::new();
    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut interactions: Vec<Interaction> = Vec::new();
    let mut pair_slot: HashMap<(u32, u32), usize> = HashMap::new();
    let mut duplicates = 0usize;

    let malformed = |line: usize, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };

    for (idx, raw_line) in lines {
        let line_no = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw_line.split(delimiter).map(|f| f.trim()).collect();
        let field = |col: usize, what: &str| -> Result<&str> {
            fields.get(col).copied().ok_or_else(|| {
                malformed(
                    line_no,
                    format!("missing {what} column {col}, row has {} fields", fields.len()),
                )
            })
        };

        let user_raw = field(user_col, "user")?;
        let item_raw = field(item_col, "item")?;
        let rating_raw = field(rating_col, "rating")?;
        if user_raw.is_empty() || item_raw.is_empty() {
            return Err(malformed(line_no, "empty user or item id".into()));
        }
        let rating: f64 = rating_raw
            .parse()
            .map_err(|_| malformed(line_no, format!("unparseable rating {rating_raw:?}")))?;
        if !rating.is_finite() {
            return Err(malformed(line_no, format!("non-finite rating {rating_raw:?}")));
        }
        if let Some((lo, hi)) = schema.bounds {
            if rating < lo || rating > hi {
                return Err(malformed(
                    line_no,
                    format!("rating {rating} outside configured bounds [{lo}, {hi}]"),
                ));
            }
        }
        let timestamp: Option<i64> = match ts_col {
            None => None,
            Some(col) => {
                let raw = field(col, "timestamp")?;
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse().map_err(|_| {
                        malformed(line_no, format!("unparseable timestamp {raw:?}"))
                    })?)
                }
            }
        };

        let next_user = user_index.len() as u32;
        let user = *user_index.entry(user_raw.to_string()).or_insert_with(|| {
            user_ids.push(user_raw.to_string());
            next_user
        });
        let next_item = item_index.len() as u32;
        let item = *item_index.entry(item_raw.to_string()).or_insert_with(|| {
            item_ids.push(item_raw.to_string());
            next_item
        });

        let it = Interaction {
            user,
            item,
            rating,
            timestamp,
        };
        match pair_slot.get(&(user, item)) {
            None => {
                pair_slot.insert((user, item), interactions.len());
                interactions.push(it);
            }
            Some(&slot) => {
                duplicates += 1;
                let keep_new = match (interactions[slot].timestamp, it.timestamp) {
                    (Some(old), Some(new)) => new >= old,
                    // without timestamps the later occurrence wins
                    _ => true,
                };
                if keep_new {
                    interactions[slot] = it;
                }
            }
        }
    }

    if interactions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if duplicates > 0 {
        log::warn!(
            "{}: dropped {duplicates} duplicate (user, item) rows, kept latest",
            path.display()
        );
    }

    let (min, max) = schema.bounds.unwrap_or_else(|| {
        interactions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), it| {
                (lo.min(it.rating), hi.max(it.rating))
            })
    });
    let integral = interactions.iter().all(|it| it.rating.fract() == 0.0);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    InteractionDataset::from_parts(
        name,
        user_ids,
        item_ids,
        interactions,
        FeedbackKind::Explicit,
        RatingScale {
            min,
            max,
            integral,
        },
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_tab_separated_with_dense_reindex() {
        let f = write_tmp("10\t100\t4\t111\n20\t100\t3\t222\n10\t200\t5\t333\n");
        let d = load_explicit(f.path(), &LoadSchema::default()).unwrap();
        assert_eq!(d.n_users(), 2);
        assert_eq!(d.n_items(), 2);
        assert_eq!(d.n_interactions(), 3);
        // first-appearance order, raw ids preserved
        assert_eq!(d.user_ids(), &["10".to_string(), "20".to_string()]);
        assert_eq!(d.item_ids(), &["100".to_string(), "200".to_string()]);
        assert_eq!(d.scale().min, 3.0);
        assert_eq!(d.scale().max, 5.0);
        assert!(d.scale().integral);
    }

    #[test]
    fn raw_id_round_trip_is_identity() {
        let f = write_tmp("u9\ti7\t2\nu3\ti7\t4\nu9\ti1\t1\n");
        let schema = LoadSchema {
            timestamp: None,
            ..LoadSchema::default()
        };
        let d = load_explicit(f.path(), &schema).unwrap();
        for it in d.interactions() {
            let raw_u = &d.user_ids()[it.user as usize];
            let raw_i = &d.item_ids()[it.item as usize];
            let dense_u = d.user_ids().iter().position(|s| s == raw_u).unwrap();
            let dense_i = d.item_ids().iter().position(|s| s == raw_i).unwrap();
            assert_eq!(dense_u as u32, it.user);
            assert_eq!(dense_i as u32, it.item);
        }
    }

    #[test]
    fn duplicate_keeps_latest_timestamp() {
        let f = write_tmp("1\t1\t2\t500\n1\t1\t5\t100\n1\t2\t3\t100\n");
        let d = load_explicit(f.path(), &LoadSchema::default()).unwrap();
        assert_eq!(d.n_interactions(), 2);
        let kept = d
            .interactions()
            .iter()
            .find(|it| it.user == 0 && it.item == 0)
            .unwrap();
        // the earlier row has the later timestamp and wins
        assert_eq!(kept.rating, 2.0);
        assert_eq!(kept.timestamp, Some(500));
    }

    #[test]
    fn duplicate_without_timestamp_keeps_last_occurrence() {
        let f = write_tmp("1,1,2\n1,1,5\n");
        let schema = LoadSchema {
            timestamp: None,
            delimiter: Some(','),
            ..LoadSchema::default()
        };
        let d = load_explicit(f.path(), &schema).unwrap();
        assert_eq!(d.n_interactions(), 1);
        assert_eq!(d.interactions()[0].rating, 5.0);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let f = write_tmp("1\t1\t4\t1\n1\t2\tbad\t2\n");
        let err = load_explicit(f.path(), &LoadSchema::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":2:"), "unexpected message {msg}");
        assert!(msg.contains("rating"));
    }

    #[test]
    fn short_row_reports_line_number() {
        let f = write_tmp("1\t1\t4\t9\n2\t2\n");
        let err = load_explicit(f.path(), &LoadSchema::default()).unwrap_err();
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        let err = load_explicit(f.path(), &LoadSchema::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn header_names_resolve_columns() {
        let f = write_tmp("user,movie,stars\na,x,4.5\nb,y,2.0\n");
        let schema = LoadSchema {
            user: ColumnRef::Name("user".into()),
            item: ColumnRef::Name("movie".into()),
            rating: ColumnRef::Name("stars".into()),
            timestamp: None,
            delimiter: Some(','),
            has_header: true,
            bounds: None,
        };
        let d = load_explicit(f.path(), &schema).unwrap();
        assert_eq!(d.n_interactions(), 2);
        assert!(!d.scale().integral);
    }

    #[test]
    fn missing_named_column_is_config_error() {
        let f = write_tmp("user,movie,stars\na,x,4\n");
        let schema = LoadSchema {
            user: ColumnRef::Name("nope".into()),
            item: ColumnRef::Name("movie".into()),
            rating: ColumnRef::Name("stars".into()),
            timestamp: None,
            delimiter: Some(','),
            has_header: true,
            bounds: None,
        };
        let err = load_explicit(f.path(), &schema).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn configured_bounds_reject_outliers_with_line() {
        let f = write_tmp("1\t1\t4\n1\t2\t9\n");
        let schema = LoadSchema {
            timestamp: None,
            bounds: Some((1.0, 5.0)),
            ..LoadSchema::default()
        };
        let err = load_explicit(f.path(), &schema).unwrap_err();
        assert!(err.to_string().contains(":2:"));
    }
}
