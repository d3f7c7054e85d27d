//! Density clustering over evasion-signal presence vectors, used to surface samples that
//! resemble flagged ones but never triggered forced execution.

mod dbscan;

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::Node;
use crate::post::{signal_tokens, EvasionTaxonomy};
use crate::scanner::Mode;

pub use dbscan::{dbscan, distance, expand_flags, DbscanParams, Metric};

/// One bit per taxonomy category, set when any of its signals occurs in the sample's root scripts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub bits: Vec<u8>,
}

impl FeatureVector {
    pub fn zero(id: impl Into<String>, len: usize) -> Self {
        FeatureVector { id: id.into(), bits: vec![0; len] }
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b != 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub id: String,
    /// `None` is noise.
    pub label: Option<usize>,
    pub is_core: bool,
}

impl ClusterAssignment {
    pub fn is_noise(&self) -> bool {
        self.label.is_none()
    }
}

/// Presence vector over the whole of each root script, conditions or not.
/// Categories that do not apply in `mode` stay zero.
pub fn build_feature_vector(id: &str, roots: &[&Node], taxonomy: &EvasionTaxonomy, mode: Mode) -> FeatureVector {
    let tokens: Vec<String> = roots.iter().flat_map(|r| signal_tokens(r)).collect();
    let mut v = FeatureVector::zero(id, taxonomy.categories.len());
    for c in taxonomy.matching(&tokens, mode) {
        v.bits[c.index - 1] = 1;
    }
    v
}

#[derive(Debug, Error)]
pub enum FeatureIoError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: expected {expected} bits, found {found}")]
    Length { line: usize, expected: usize, found: usize },
    #[error("line {line}: bits must be 0 or 1")]
    NotBinary { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads `{"id":…, "bits":[…]}` lines. Blank lines are skipped; all vectors must share one length.
pub fn read_features(input: impl BufRead) -> Result<Vec<FeatureVector>, FeatureIoError> {
    let mut out: Vec<FeatureVector> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: FeatureVector =
            serde_json::from_str(&line).map_err(|source| FeatureIoError::Parse { line: i + 1, source })?;
        if v.bits.iter().any(|b| *b > 1) {
            return Err(FeatureIoError::NotBinary { line: i + 1 });
        }
        if let Some(first) = out.first() {
            if first.bits.len() != v.bits.len() {
                return Err(FeatureIoError::Length { line: i + 1, expected: first.bits.len(), found: v.bits.len() });
            }
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_assignments(assignments: &[ClusterAssignment], mut out: impl Write) -> std::io::Result<()> {
    for a in assignments {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Sizes of the non-noise clusters, largest first.
pub fn cluster_sizes(assignments: &[ClusterAssignment]) -> Vec<usize> {
    let labels: BTreeSet<usize> = assignments.iter().filter_map(|a| a.label).collect();
    let mut sizes: Vec<usize> =
        labels.iter().map(|l| assignments.iter().filter(|a| a.label == Some(*l)).count()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_str;

    fn vector(src: &str, mode: Mode) -> FeatureVector {
        let p = parse_str(src).unwrap();
        build_feature_vector("s", &[&p], &EvasionTaxonomy::default(), mode)
    }

    #[test]
    fn window_size_only() {
        let v = vector("var h = window.height; var w = window.width;", Mode::Browser);
        let t = EvasionTaxonomy::default();
        let idx = t.by_slug("window_size").unwrap().index - 1;
        assert_eq!(v.ones(), 1);
        assert_eq!(v.bits[idx], 1);
    }

    #[test]
    fn empty_is_zero() {
        let v = vector("", Mode::Browser);
        assert_eq!(v.bits.len(), 28);
        assert_eq!(v.ones(), 0);
    }

    #[test]
    fn return_first_fixture_has_signals() {
        let v = vector(include_str!("../../fixtures/return_first.js"), Mode::Browser);
        assert!(v.ones() > 0);
    }

    #[test]
    fn jsonl_round_trip() {
        let text = "{\"id\":\"a\",\"bits\":[0,1]}\n\n{\"id\":\"b\",\"bits\":[1,1]}\n";
        let v = read_features(text.as_bytes()).unwrap();
        assert_eq!(v.len(), 2);
        assert!(read_features("{\"id\":\"a\",\"bits\":[2]}".as_bytes()).is_err());
        assert!(read_features("{\"id\":\"a\",\"bits\":[1]}\n{\"id\":\"b\",\"bits\":[1,0]}".as_bytes()).is_err());
        let a = vec![ClusterAssignment { id: "a".into(), label: None, is_core: false }];
        let mut out = Vec::new();
        write_assignments(&a, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "{\"id\":\"a\",\"label\":null,\"is_core\":false}\n");
    }
}
