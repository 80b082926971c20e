//! Density clustering. Points that belong to no cluster are the outliers.
//!
//! One-dimensional inputs use a sorted sweep; two-dimensional inputs use a
//! uniform grid whose cells are small enough that any two points sharing a
//! cell are neighbours.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{map_to_original, DetectionResult, DetectorInput, Features};
use crate::error::{Error, Result};
use crate::metrics::roc_auc;
use crate::model::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

/// Euclidean distance. Every code path compares through this function so the
/// neighbourhood test `distance <= eps` is evaluated identically everywhere.
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn check_params(m: usize, eps: f64, min_pts: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidParameter("dbscan needs at least one point".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps {eps} must be positive and finite")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
    }
    Ok(())
}

/// Cluster id per point, `None` for noise. A point is core when at least
/// `min_pts` points (itself included) lie within `eps`. Cluster ids are
/// numbered by the lowest point index they contain.
pub fn dbscan_clusters(features: &Features, eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    check_params(features.len(), eps, min_pts)?;
    let (core, mut sets) = if features.dims == 1 {
        sweep_1d(&features.data, eps, min_pts)
    } else {
        grid(features, eps, min_pts)
    };
    let m = features.len();

    // number clusters by their lowest-indexed core
    let mut cluster_of_root = HashMap::new();
    let mut core_cluster = vec![None; m];
    for i in (0..m).filter(|&i| core[i]) {
        let root = sets.find(i);
        let next = cluster_of_root.len();
        core_cluster[i] = Some(*cluster_of_root.entry(root).or_insert(next));
    }

    let mut clusters = core_cluster.clone();
    if features.dims == 1 {
        assign_borders_1d(&features.data, eps, &core, &core_cluster, &mut clusters);
    } else {
        assign_borders_grid(features, eps, &core, &core_cluster, &mut clusters);
    }
    Ok(clusters)
}

/// Noise points are outliers with score 1, clustered points score 0.
pub fn dbscan(input: &DetectorInput, eps: f64, min_pts: usize) -> Result<DetectionResult> {
    let started = Instant::now();
    check_params(input.len(), eps, min_pts)?;
    let clusters = dbscan_clusters(&input.features(), eps, min_pts)?;
    let labels: Vec<Label> = clusters.iter().map(|c| Label::from_flag(c.is_none())).collect();
    let scores = labels.iter().map(|l| if l.is_outlier() { 1.0 } else { 0.0 }).collect();
    Ok(DetectionResult {
        detector: "dbscan".into(),
        params: serde_json::to_value(DbscanParams { eps, min_pts }).expect("params serialize"),
        scores,
        labels,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

fn sweep_1d(values: &[f64], eps: f64, min_pts: usize) -> (Vec<bool>, DisjointSet) {
    let m = values.len();
    let order = sorted_order(values);
    let within = |a: usize, b: usize| distance(&[values[a]], &[values[b]]) <= eps;

    // neighbour count of each point is the width of its window in sorted order
    let mut core = vec![false; m];
    let (mut lo, mut hi) = (0, 0);
    for k in 0..m {
        let p = order[k];
        while !within(order[lo], p) {
            lo += 1;
        }
        if hi < k {
            hi = k;
        }
        while hi + 1 < m && within(order[hi + 1], p) {
            hi += 1;
        }
        core[p] = hi - lo + 1 >= min_pts;
    }

    // on a line, two cores within eps of each other also reach every core
    // between them, so consecutive cores suffice
    let mut sets = DisjointSet::new(m);
    let mut prev: Option<usize> = None;
    for &p in order.iter().filter(|&&p| core[p]) {
        if let Some(q) = prev {
            if within(q, p) {
                sets.union(q, p);
            }
        }
        prev = Some(p);
    }
    (core, sets)
}

fn assign_borders_1d(
    values: &[f64],
    eps: f64,
    core: &[bool],
    core_cluster: &[Option<usize>],
    clusters: &mut [Option<usize>],
) {
    let order = sorted_order(values);
    let m = order.len();
    let mut left: Vec<Option<usize>> = vec![None; m];
    let mut last = None;
    for k in 0..m {
        left[k] = last;
        if core[order[k]] {
            last = Some(order[k]);
        }
    }
    let mut right = None;
    for k in (0..m).rev() {
        let p = order[k];
        if !core[p] {
            let candidates = [left[k], right]
                .into_iter()
                .flatten()
                .filter(|&c| distance(&[values[c]], &[values[p]]) <= eps)
                .filter_map(|c| core_cluster[c]);
            clusters[p] = candidates.min();
        } else {
            right = Some(p);
        }
    }
}

type CellKey = (i64, i64);

struct Grid {
    side: f64,
    cells: HashMap<CellKey, Vec<usize>>,
}

impl Grid {
    const REACH: i64 = 2;

    fn new(features: &Features, eps: f64) -> Self {
        let side = eps / (features.dims as f64).sqrt() * (1.0 - 1e-9);
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        for i in 0..features.len() {
            cells.entry(Self::key_with(side, features.row(i))).or_default().push(i);
        }
        Self { side, cells }
    }

    fn key_with(side: f64, row: &[f64]) -> CellKey {
        let cell = |x: f64| (x / side).floor() as i64;
        (cell(row[0]), row.get(1).map_or(0, |&y| cell(y)))
    }

    fn key(&self, row: &[f64]) -> CellKey {
        Self::key_with(self.side, row)
    }

    fn neighbours(&self, key: CellKey) -> impl Iterator<Item = (CellKey, &Vec<usize>)> + '_ {
        (-Self::REACH..=Self::REACH).flat_map(move |dx| {
            (-Self::REACH..=Self::REACH).filter_map(move |dy| {
                let k = (key.0 + dx, key.1 + dy);
                self.cells.get(&k).map(|v| (k, v))
            })
        })
    }
}

fn grid(features: &Features, eps: f64, min_pts: usize) -> (Vec<bool>, DisjointSet) {
    let m = features.len();
    let grid = Grid::new(features, eps);
    let mut core = vec![false; m];
    for (&key, members) in &grid.cells {
        if members.len() >= min_pts {
            for &i in members {
                core[i] = true;
            }
            continue;
        }
        for &i in members {
            let x = features.row(i);
            let mut count = 0;
            'scan: for (_, others) in grid.neighbours(key) {
                for &j in others {
                    if distance(x, features.row(j)) <= eps {
                        count += 1;
                        if count >= min_pts {
                            break 'scan;
                        }
                    }
                }
            }
            core[i] = count >= min_pts;
        }
    }

    let cores: HashMap<CellKey, Vec<usize>> = grid
        .cells
        .iter()
        .filter_map(|(&k, v)| {
            let c: Vec<usize> = v.iter().copied().filter(|&i| core[i]).collect();
            (!c.is_empty()).then_some((k, c))
        })
        .collect();
    let mut sets = DisjointSet::new(m);
    for (&key, members) in &cores {
        for w in members.windows(2) {
            sets.union(w[0], w[1]);
        }
        for dx in -Grid::REACH..=Grid::REACH {
            for dy in -Grid::REACH..=Grid::REACH {
                let other_key = (key.0 + dx, key.1 + dy);
                if other_key <= key {
                    continue;
                }
                let Some(others) = cores.get(&other_key) else { continue };
                let linked = members.iter().find_map(|&i| {
                    others
                        .iter()
                        .find(|&&j| distance(features.row(i), features.row(j)) <= eps)
                        .map(|&j| (i, j))
                });
                if let Some((i, j)) = linked {
                    sets.union(i, j);
                }
            }
        }
    }
    (core, sets)
}

fn assign_borders_grid(
    features: &Features,
    eps: f64,
    core: &[bool],
    core_cluster: &[Option<usize>],
    clusters: &mut [Option<usize>],
) {
    let grid = Grid::new(features, eps);
    for i in (0..features.len()).filter(|&i| !core[i]) {
        let x = features.row(i);
        clusters[i] = grid
            .neighbours(grid.key(x))
            .flat_map(|(_, members)| members.iter().copied())
            .filter(|&j| core[j] && distance(x, features.row(j)) <= eps)
            .filter_map(|j| core_cluster[j])
            .min();
    }
}

/// Winning cell of a DBSCAN parameter grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub eps: f64,
    pub min_pts: usize,
    pub roc_auc: f64,
    pub result: DetectionResult,
}

/// Run DBSCAN for every `(eps, min_pts)` pair and keep the one whose
/// detections, mapped onto the full timeline of `labels`, give the highest
/// ROC AUC. Ties go to the smaller eps, then the smaller min_pts.
pub fn grid_search_dbscan(
    input: &DetectorInput,
    eps_values: &[f64],
    min_pts_values: &[usize],
    labels: &[Label],
) -> Result<GridSearch> {
    if eps_values.is_empty() || min_pts_values.is_empty() {
        return Err(Error::InvalidParameter("grid search needs non-empty ranges".into()));
    }
    let cells: Vec<(f64, usize)> = eps_values
        .iter()
        .flat_map(|&e| min_pts_values.iter().map(move |&p| (e, p)))
        .collect();
    let evaluated = cells
        .par_iter()
        .map(|&(eps, min_pts)| {
            let result = dbscan(input, eps, min_pts)?;
            let mapped = map_to_original(&result, input, labels.len())?;
            let auc = roc_auc(&mapped.scores, labels)?;
            Ok(GridSearch { eps, min_pts, roc_auc: auc, result })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = evaluated
        .into_iter()
        .reduce(|best, cand| {
            let better = cand
                .roc_auc
                .total_cmp(&best.roc_auc)
                .then(best.eps.total_cmp(&cand.eps))
                .then(best.min_pts.cmp(&cand.min_pts))
                .is_gt();
            if better {
                cand
            } else {
                best
            }
        })
        .expect("grid is non-empty");
    Ok(best)
}

/// The grid used by the benchmark: eps 0.1..=1.0 in steps of 0.1 and
/// min_pts 3..=15.
pub fn default_grid() -> (Vec<f64>, Vec<usize>) {
    ((1..=10).map(|k| k as f64 / 10.0).collect(), (3..=15).collect())
}
