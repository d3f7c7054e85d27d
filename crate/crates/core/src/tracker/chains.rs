use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::records::{ScriptId, ScriptRecord};

/// Histogram of injection-chain lengths. `buckets[k]` counts maximal paths of length at least `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChainStats {
    pub buckets: BTreeMap<usize, usize>,
    pub path_count: usize,
    pub average: f64,
    pub max: usize,
    pub total_scripts: usize,
}

/// Lengths of every maximal root-to-leaf path over eval/injection edges.
///
/// A path starts at any script not reached through such an edge (a root file, or a script the
/// sample loaded from its own package).
pub fn maximal_paths(records: &[ScriptRecord]) -> Vec<usize> {
    let by_id: HashMap<ScriptId, &ScriptRecord> = records.iter().map(|r| (r.id, r)).collect();
    let chain_children = |r: &ScriptRecord| -> Vec<ScriptId> {
        r.children.iter().copied().filter(|c| by_id.get(c).is_some_and(|cr| cr.provenance.is_chain_edge())).collect()
    };
    let mut lengths = Vec::new();
    let mut starts: Vec<&ScriptRecord> = records
        .iter()
        .filter(|r| !r.provenance.is_chain_edge() || r.provenance.parent().is_none_or(|p| !by_id.contains_key(&p)))
        .collect();
    starts.sort_by_key(|r| r.id);
    for start in starts {
        let mut stack = vec![(start.id, 1usize)];
        while let Some((id, depth)) = stack.pop() {
            let Some(rec) = by_id.get(&id) else { continue };
            let kids = chain_children(rec);
            if kids.is_empty() {
                lengths.push(depth);
            } else {
                for k in kids.into_iter().rev() {
                    stack.push((k, depth + 1));
                }
            }
        }
    }
    lengths
}

pub fn chain_lengths(records: &[ScriptRecord]) -> ChainStats {
    ChainStats::from_lengths(&maximal_paths(records), records.len())
}

impl ChainStats {
    /// Histogram over already-enumerated path lengths.
    pub fn from_lengths(lengths: &[usize], total_scripts: usize) -> Self {
        let mut buckets = BTreeMap::new();
        for &len in lengths {
            for k in 1..=len {
                *buckets.entry(k).or_insert(0) += 1;
            }
        }
        let path_count = lengths.len();
        let average = if path_count == 0 { 0.0 } else { lengths.iter().sum::<usize>() as f64 / path_count as f64 };
        ChainStats { buckets, path_count, average, max: lengths.iter().copied().max().unwrap_or(0), total_scripts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Provenance;

    fn rec(id: u32, prov: Provenance) -> ScriptRecord {
        ScriptRecord::new(ScriptId(id), prov, "x")
    }

    fn link(records: &mut [ScriptRecord]) {
        let pairs: Vec<(ScriptId, ScriptId)> =
            records.iter().filter_map(|r| r.provenance.parent().map(|p| (p, r.id))).collect();
        for (p, c) in pairs {
            if let Some(r) = records.iter_mut().find(|r| r.id == p) {
                r.children.push(c);
            }
        }
    }

    fn root(id: u32) -> ScriptRecord {
        rec(id, Provenance::Root { path: format!("r{id}.js") })
    }

    fn inj(id: u32, parent: u32) -> ScriptRecord {
        rec(id, Provenance::Injected { parent: ScriptId(parent), url: format!("https://t/{id}.js") })
    }

    #[test]
    fn single_root() {
        let s = chain_lengths(&[root(0)]);
        assert_eq!(s.buckets, BTreeMap::from([(1, 1)]));
        assert_eq!(s.average, 1.0);
        assert_eq!(s.max, 1);
    }

    #[test]
    fn empty_forest() {
        let s = chain_lengths(&[]);
        assert!(s.buckets.is_empty());
        assert_eq!(s.max, 0);
        assert_eq!(s.average, 0.0);
    }

    #[test]
    fn forest_one_one_two() {
        let mut rs = vec![root(0), root(1), root(2), inj(3, 2)];
        link(&mut rs);
        let s = chain_lengths(&rs);
        assert_eq!(s.buckets, BTreeMap::from([(1, 3), (2, 1)]));
        assert!((s.average - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn local_edges_start_new_chains() {
        let mut rs = vec![
            root(0),
            rec(1, Provenance::Local { parent: ScriptId(0), path: "lib.js".into() }),
            rec(2, Provenance::Eval { parent: ScriptId(1) }),
        ];
        link(&mut rs);
        let mut lens = maximal_paths(&rs);
        lens.sort();
        assert_eq!(lens, vec![1, 2]);
    }
}
