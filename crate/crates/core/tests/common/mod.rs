//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

use forcejs_core::cluster::{ClusterAssignment, FeatureVector, Metric};
use forcejs_core::tracker::{Provenance, ScriptId, ScriptRecord};

pub fn reference_distance(a: &[u8], b: &[u8], metric: Metric) -> f64 {
    let ones = |v: &[u8]| v.iter().filter(|x| **x == 1).count();
    let both = a.iter().zip(b).filter(|(x, y)| **x == 1 && **y == 1).count();
    let differ = a.iter().zip(b).filter(|(x, y)| x != y).count();
    match metric {
        Metric::Jaccard => {
            let union = ones(a) + ones(b) - both;
            if union == 0 {
                0.0
            } else {
                differ as f64 / union as f64
            }
        }
        Metric::Hamming => {
            if a.is_empty() {
                0.0
            } else {
                differ as f64 / a.len() as f64
            }
        }
    }
}

/// Textbook DBSCAN with recursive expansion, visiting points in ascending id order.
/// Returns `id -> (label, is_core)`.
pub fn reference_dbscan(
    points: &[FeatureVector],
    eps: f64,
    min_pts: usize,
    metric: Metric,
) -> BTreeMap<String, (Option<usize>, bool)> {
    let mut pts: Vec<&FeatureVector> = points.iter().collect();
    pts.sort_by(|a, b| a.id.cmp(&b.id));
    let n = pts.len();
    let region = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| reference_distance(&pts[i].bits, &pts[j].bits, metric) <= eps).collect()
    };
    let core: Vec<bool> = (0..n).map(|i| region(i).len() >= min_pts.max(1)).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];

    fn grow(p: usize, c: usize, core: &[bool], label: &mut [Option<usize>], region: &dyn Fn(usize) -> Vec<usize>) {
        for q in region(p) {
            if label[q].is_none() {
                label[q] = Some(c);
                if core[q] {
                    grow(q, c, core, label, region);
                }
            }
        }
    }

    let mut next = 0;
    for p in 0..n {
        if label[p].is_some() || !core[p] {
            continue;
        }
        label[p] = Some(next);
        grow(p, next, &core, &mut label, &region);
        next += 1;
    }
    (0..n).map(|i| (pts[i].id.clone(), (label[i], core[i]))).collect()
}

pub fn as_map(assignments: &[ClusterAssignment]) -> BTreeMap<String, (Option<usize>, bool)> {
    assignments.iter().map(|a| (a.id.clone(), (a.label, a.is_core))).collect()
}

/// Vectors scattered around a few prototypes, so that clusters, borders and noise all occur.
pub fn random_corpus(rng: &mut impl Rng, max_points: usize) -> Vec<FeatureVector> {
    let n = rng.gen_range(0..=max_points);
    let dims = rng.gen_range(1..=28);
    let protos: Vec<Vec<u8>> =
        (0..rng.gen_range(1..=6)).map(|_| (0..dims).map(|_| rng.gen_bool(0.3) as u8).collect()).collect();
    let flip = rng.gen_range(0.0..0.3);
    (0..n)
        .map(|i| {
            let p = &protos[rng.gen_range(0..protos.len())];
            let bits = p.iter().map(|b| if rng.gen_bool(flip) { 1 - b } else { *b }).collect();
            FeatureVector { id: format!("v{:04}-{}", rng.gen_range(0..10_000), i), bits }
        })
        .collect()
}

/// Random forest of script records: roots, local loads, evals and injections.
pub fn random_forest(rng: &mut impl Rng, size: usize) -> Vec<ScriptRecord> {
    let mut recs: Vec<ScriptRecord> = Vec::new();
    for i in 0..size {
        let id = ScriptId(i as u32);
        let prov = if i == 0 || rng.gen_bool(0.15) {
            Provenance::Root { path: format!("r{i}.js") }
        } else {
            let parent = ScriptId(rng.gen_range(0..i) as u32);
            match rng.gen_range(0..4) {
                0 => Provenance::Local { parent, path: format!("l{i}.js") },
                1 => Provenance::Eval { parent },
                _ => Provenance::Injected { parent, url: format!("https://x.example/{i}.js") },
            }
        };
        if let Some(p) = prov.parent() {
            recs[p.0 as usize].children.push(id);
        }
        recs.push(ScriptRecord::new(id, prov, "x"));
    }
    recs
}

/// Lengths of all maximal paths over eval/injection edges, enumerated from parent links only.
pub fn brute_force_paths(records: &[ScriptRecord]) -> Vec<usize> {
    let chain_parent = |r: &ScriptRecord| match &r.provenance {
        Provenance::Eval { parent } | Provenance::Injected { parent, .. } => Some(*parent),
        _ => None,
    };
    let kids =
        |id: ScriptId| -> Vec<&ScriptRecord> { records.iter().filter(|r| chain_parent(r) == Some(id)).collect() };
    fn walk<'a>(
        r: &'a ScriptRecord,
        depth: usize,
        kids: &dyn Fn(ScriptId) -> Vec<&'a ScriptRecord>,
        out: &mut Vec<usize>,
    ) {
        let ks = kids(r.id);
        if ks.is_empty() {
            out.push(depth);
        }
        for k in ks {
            walk(k, depth + 1, kids, out);
        }
    }
    let mut out = Vec::new();
    for r in records.iter().filter(|r| chain_parent(r).is_none()) {
        walk(r, 1, &kids, &mut out);
    }
    out.sort_unstable();
    out
}
