//! Evaluation reports: a metric map plus the metadata that produced it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Identifies the run a report came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset_key: String,
    pub attack_key: String,
    pub model_key: String,
    pub seed: u64,
    pub k_values: Vec<usize>,
    /// Pipeline condition: clean, attacked, defended.
    pub condition: String,
}

/// Metric name to value mapping with run metadata. Serialization is
/// byte-deterministic for identical inputs: the map is ordered and floats
/// render in their shortest round-tripping form.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub metrics: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Column rank for a metric name: family in presentation order (rating
/// error first, then ranking quality with ndcg ahead of hr, then the
/// robustness deltas), cutoff K ascending within a family.
fn metric_order_key(name: &str) -> (usize, u64, String) {
    let (family, k) = match name.split_once('@') {
        Some((f, k)) => (f, k.parse::<u64>().unwrap_or(u64::MAX)),
        None => (name, 0),
    };
    const FAMILIES: [&str; 12] = [
        "mae",
        "rmse",
        "ndcg",
        "hr",
        "precision",
        "recall",
        "f1",
        "mrr",
        "map",
        "failure_rate",
        "prediction_shift",
        "rank_improvement",
    ];
    let rank = FAMILIES
        .iter()
        .position(|f| *f == family)
        .unwrap_or(FAMILIES.len());
    (rank, k, name.to_string())
}

/// Render reports as one aligned plain-text table: identity columns first,
/// then one column per metric name, rows in input order.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut metric_names: Vec<String> = reports
        .iter()
        .flat_map(|r| r.metrics.keys().cloned())
        .collect();
    metric_names.sort_by_key(|n| metric_order_key(n));
    metric_names.dedup();

    let mut header: Vec<String> = vec![
        "dataset".into(),
        "attack".into(),
        "model".into(),
        "condition".into(),
        "seed".into(),
    ];
    header.extend(metric_names.iter().cloned());

    let mut rows: Vec<Vec<String>> = vec![header];
    for r in reports {
        let mut row = vec![
            r.meta.dataset_key.clone(),
            r.meta.attack_key.clone(),
            r.meta.model_key.clone(),
            r.meta.condition.clone(),
            r.meta.seed.to_string(),
        ];
        for name in &metric_names {
            row.push(match r.metrics.get(name) {
                Some(v) => format!("{v:.4}"),
                None => "-".into(),
            });
        }
        rows.push(row);
    }

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
