use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        Metrics { tp, fp, tn, fn_, precision, recall, f1 }
    }

    /// Precision, recall and F1 rounded to two decimals.
    pub fn rounded(&self) -> (f64, f64, f64) {
        let r = |x: f64| (x * 100.0).round() / 100.0;
        (r(self.precision), r(self.recall), r(self.f1))
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TP={} FP={} TN={} FN={} precision={:.2} recall={:.2} f1={:.2}",
            self.tp, self.fp, self.tn, self.fn_, self.precision, self.recall, self.f1
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("decision and label sets differ (only in decisions: {only_decisions:?}, only in labels: {only_labels:?})")]
    KeyMismatch { only_decisions: Vec<String>, only_labels: Vec<String> },
}

pub fn compute_metrics(
    decisions: &BTreeMap<String, bool>,
    labels: &BTreeMap<String, bool>,
) -> Result<Metrics, MetricsError> {
    let only_decisions: Vec<String> = decisions.keys().filter(|k| !labels.contains_key(*k)).cloned().collect();
    let only_labels: Vec<String> = labels.keys().filter(|k| !decisions.contains_key(*k)).cloned().collect();
    if !only_decisions.is_empty() || !only_labels.is_empty() {
        return Err(MetricsError::KeyMismatch { only_decisions, only_labels });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (k, &d) in decisions {
        match (d, labels[k]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_counts() {
        let m = Metrics::from_counts(420, 13, 487, 80);
        assert_eq!(m.rounded(), (0.97, 0.84, 0.90));
        assert!(m.to_string().contains("precision=0.97 recall=0.84 f1=0.90"));
    }

    #[test]
    fn zero_divisions() {
        let m = Metrics::from_counts(0, 0, 5, 0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn all_correct() {
        let d: BTreeMap<String, bool> =
            [("a", true), ("b", true), ("c", false), ("d", false)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let m = compute_metrics(&d, &d).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn mismatched_keys() {
        let a = BTreeMap::from([("a".to_string(), true)]);
        let b = BTreeMap::from([("b".to_string(), true)]);
        assert!(compute_metrics(&a, &b).is_err());
    }
}
