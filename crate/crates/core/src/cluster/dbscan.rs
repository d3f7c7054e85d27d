use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `1 - |A∩B| / |A∪B|`; two all-zero vectors are at distance 0.
    Jaccard,
    /// Fraction of differing bits.
    Hamming,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jaccard" => Ok(Metric::Jaccard),
            "hamming" => Ok(Metric::Hamming),
            other => Err(format!("unknown metric {other:?} (expected jaccard or hamming)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    pub metric: Metric,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 0.3, min_pts: 2, metric: Metric::Jaccard }
    }
}

pub fn distance(a: &[u8], b: &[u8], metric: Metric) -> f64 {
    let n = a.len().max(b.len());
    let bit = |v: &[u8], i: usize| v.get(i).copied().unwrap_or(0) != 0;
    match metric {
        Metric::Jaccard => {
            let (mut inter, mut union) = (0usize, 0usize);
            for i in 0..n {
                let (x, y) = (bit(a, i), bit(b, i));
                inter += (x && y) as usize;
                union += (x || y) as usize;
            }
            // One division, so a distance of exactly eps compares equal to eps.
            if union == 0 {
                0.0
            } else {
                (union - inter) as f64 / union as f64
            }
        }
        Metric::Hamming => {
            if n == 0 {
                return 0.0;
            }
            (0..n).filter(|i| bit(a, *i) != bit(b, *i)).count() as f64 / n as f64
        }
    }
}

/// DBSCAN. Points are visited in ascending id order, so a border point reachable from two
/// clusters joins the one whose first core point has the smaller id, and the partition does
/// not depend on input order. Output is in input order.
pub fn dbscan(points: &[FeatureVector], params: DbscanParams) -> Vec<ClusterAssignment> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| points[*a].id.cmp(&points[*b].id).then(a.cmp(b)));
    let sorted: Vec<&FeatureVector> = order.iter().map(|i| &points[*i]).collect();

    // Neighborhoods in visit-order positions, each sorted ascending, including the point itself.
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|j| distance(&sorted[i].bits, &sorted[*j].bits, params.metric) <= params.eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts.max(1)).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if label[start].is_some() || !core[start] {
            continue;
        }
        let c = next;
        next += 1;
        label[start] = Some(c);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            if !core[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if label[q].is_none() {
                    label[q] = Some(c);
                    queue.push_back(q);
                }
            }
        }
    }

    let mut out = vec![None; n];
    for (pos, &orig) in order.iter().enumerate() {
        out[orig] = Some(ClusterAssignment { id: points[orig].id.clone(), label: label[pos], is_core: core[pos] });
    }
    out.into_iter().flatten().collect()
}

/// Non-noise samples sharing a cluster with a seed, excluding the seeds themselves.
pub fn expand_flags(assignments: &[ClusterAssignment], seeds: &BTreeSet<String>) -> BTreeSet<String> {
    let seeded: BTreeSet<usize> =
        assignments.iter().filter(|a| seeds.contains(&a.id)).filter_map(|a| a.label).collect();
    assignments
        .iter()
        .filter(|a| a.label.is_some_and(|l| seeded.contains(&l)) && !seeds.contains(&a.id))
        .map(|a| a.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(id: &str, bits: &[u8]) -> FeatureVector {
        FeatureVector { id: id.into(), bits: bits.to_vec() }
    }

    #[test]
    fn distances() {
        assert_eq!(distance(&[0, 0], &[0, 0], Metric::Jaccard), 0.0);
        assert_eq!(distance(&[1, 0], &[0, 1], Metric::Jaccard), 1.0);
        assert!((distance(&[1, 1, 0], &[1, 0, 0], Metric::Jaccard) - 0.5).abs() < 1e-12);
        assert!((distance(&[1, 1, 0, 0], &[1, 0, 0, 1], Metric::Hamming) - 0.5).abs() < 1e-12);
        assert_eq!("hamming".parse::<Metric>().unwrap(), Metric::Hamming);
        assert!("cosine".parse::<Metric>().is_err());
    }

    #[test]
    fn identical_points_form_one_core_cluster() {
        let pts = vec![fv("a", &[1, 0, 1]), fv("b", &[1, 0, 1]), fv("c", &[1, 0, 1])];
        for eps in [0.0, 0.5, 1.0] {
            let a = dbscan(&pts, DbscanParams { eps, min_pts: 2, metric: Metric::Jaccard });
            assert!(a.iter().all(|x| x.label == Some(0) && x.is_core));
        }
    }

    #[test]
    fn separated_groups_and_noise() {
        let pts = vec![
            fv("a", &[1, 1, 0, 0, 0, 0]),
            fv("b", &[1, 1, 0, 0, 0, 0]),
            fv("c", &[0, 0, 1, 1, 0, 0]),
            fv("d", &[0, 0, 1, 1, 0, 0]),
            fv("e", &[0, 0, 0, 0, 1, 1]),
        ];
        let a = dbscan(&pts, DbscanParams::default());
        assert_eq!(a[0].label, a[1].label);
        assert_eq!(a[2].label, a[3].label);
        assert_ne!(a[0].label, a[2].label);
        assert!(a[4].is_noise());
    }

    #[test]
    fn expansion() {
        let a = vec![
            ClusterAssignment { id: "A".into(), label: Some(0), is_core: true },
            ClusterAssignment { id: "B".into(), label: Some(0), is_core: true },
            ClusterAssignment { id: "C".into(), label: Some(0), is_core: false },
            ClusterAssignment { id: "D".into(), label: Some(1), is_core: true },
            ClusterAssignment { id: "E".into(), label: None, is_core: false },
        ];
        assert!(expand_flags(&a, &BTreeSet::new()).is_empty());
        let seeds = BTreeSet::from(["A".to_string(), "E".to_string()]);
        assert_eq!(expand_flags(&a, &seeds), BTreeSet::from(["B".to_string(), "C".to_string()]));
    }
}
