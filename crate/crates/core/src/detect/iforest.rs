//! Isolation Forest: points that random axis-parallel splits isolate in few
//! steps get scores close to 1.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{label_top_k, DetectionResult, DetectorInput, Features};
use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IForestParams {
    pub n_trees: usize,
    pub subsample: usize,
    /// Fraction of points labelled as outliers.
    pub contamination: f64,
    pub seed: u64,
}

impl Default for IForestParams {
    fn default() -> Self {
        Self { n_trees: 100, subsample: 256, contamination: 0.01, seed: 0 }
    }
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points; normalises path lengths.
fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

enum Node {
    Leaf { size: usize },
    Split { dim: usize, at: f64, left: usize, right: usize },
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn build(features: &Features, sample: &mut [usize], height_limit: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        tree.grow(features, sample, 0, height_limit, rng);
        tree
    }

    fn grow(
        &mut self,
        features: &Features,
        rows: &mut [usize],
        depth: usize,
        height_limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= height_limit || rows.len() <= 1 {
            return id;
        }
        let mut candidates = Vec::with_capacity(features.dims);
        for d in 0..features.dims {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let x = features.row(r)[d];
                (lo.min(x), hi.max(x))
            });
            if hi > lo {
                candidates.push((d, lo, hi));
            }
        }
        if candidates.is_empty() {
            return id;
        }
        let (dim, lo, hi) = candidates[rng.random_range(0..candidates.len())];
        let at = rng.random_range(lo..hi);

        // partition in place: rows below the split first
        let mut split = 0;
        for i in 0..rows.len() {
            if features.row(rows[i])[dim] < at {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.grow(features, left_rows, depth + 1, height_limit, rng);
        let right = self.grow(features, right_rows, depth + 1, height_limit, rng);
        self.nodes[id] = Node::Split { dim, at, left, right };
        id
    }

    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split { dim, at, left, right } => {
                    node = if x[dim] < at { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

/// Score every point with `2^(-E[h(x)] / c(subsample))` and label the
/// `ceil(contamination * m)` highest as outliers.
pub fn iforest(input: &DetectorInput, params: &IForestParams) -> Result<DetectionResult> {
    let started = Instant::now();
    let m = input.len();
    if m == 0 {
        return Err(Error::InvalidParameter("isolation forest needs at least one point".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("isolation forest needs at least one tree".into()));
    }
    if params.subsample == 0 || params.subsample > m {
        return Err(Error::InvalidParameter(format!(
            "subsample {} must be in 1..={m}",
            params.subsample
        )));
    }
    if !(params.contamination > 0.0 && params.contamination < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "contamination {} must be in (0, 1)",
            params.contamination
        )));
    }

    let features = input.features();
    let height_limit = (params.subsample as f64).log2().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let trees: Vec<Tree> = (0..params.n_trees)
        .map(|_| {
            let mut rows = sample(&mut rng, m, params.subsample).into_vec();
            Tree::build(&features, &mut rows, height_limit, &mut rng)
        })
        .collect();

    let norm = average_path_length(params.subsample);
    let scores: Vec<f64> = (0..m)
        .map(|i| {
            if norm == 0.0 {
                return 0.5;
            }
            let x = features.row(i);
            let mean = trees.iter().map(|t| t.path_length(x)).sum::<f64>() / trees.len() as f64;
            (-mean / norm).exp2()
        })
        .collect();
    let k = (params.contamination * m as f64).ceil() as usize;
    let labels = label_top_k(&scores, k);

    Ok(DetectionResult {
        detector: "iforest".into(),
        params: serde_json::to_value(params).expect("params serialize"),
        scores,
        labels,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::FeatureMode;
    use crate::model::Label;

    fn input(values: &[f64]) -> DetectorInput {
        DetectorInput::new(values.iter().copied().enumerate().collect(), FeatureMode::ValueOnly).unwrap()
    }

    fn params(contamination: f64, seed: u64, subsample: usize) -> IForestParams {
        IForestParams { n_trees: 100, subsample, contamination, seed }
    }

    #[test]
    fn path_length_normaliser() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let c256 = average_path_length(256);
        assert!((c256 - 10.244_770_920_116_851).abs() < 1e-9, "{c256}");
    }

    #[test]
    fn isolates_single_extreme_point() {
        let mut values = vec![0.0; 99];
        values.push(100.0);
        let hits = (0..100)
            .filter(|&seed| {
                let r = iforest(&input(&values), &params(0.01, seed, 64)).unwrap();
                r.outlier_count() == 1 && r.labels[99] == Label::Outlier
            })
            .count();
        assert!(hits >= 95, "{hits}/100 seeds");
    }

    #[test]
    fn isolates_symmetric_extremes() {
        let mut values = vec![0.0; 98];
        values.insert(10, 100.0);
        values.push(-100.0);
        for seed in 0..50 {
            let r = iforest(&input(&values), &params(0.02, seed, 64)).unwrap();
            assert_eq!(r.labels[10], Label::Outlier, "seed {seed}");
            assert_eq!(r.labels[99], Label::Outlier, "seed {seed}");
        }
    }

    #[test]
    fn identical_points_tie_by_index() {
        let r = iforest(&input(&[5.0; 20]), &params(0.1, 3, 16)).unwrap();
        assert!(r.scores.windows(2).all(|w| w[0] == w[1]));
        let flagged: Vec<usize> = (0..20).filter(|&i| r.labels[i].is_outlier()).collect();
        assert_eq!(flagged, vec![0, 1]);
    }

    #[test]
    fn deterministic_per_seed() {
        let values: Vec<f64> = (0..500).map(|t| ((t * 37) % 101) as f64).collect();
        let a = iforest(&input(&values), &params(0.05, 42, 128)).unwrap();
        let b = iforest(&input(&values), &params(0.05, 42, 128)).unwrap();
        let bits = |r: &DetectionResult| r.scores.iter().map(|s| s.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn rejects_bad_params() {
        let inp = input(&[1.0, 2.0]);
        assert!(iforest(&input(&[]), &params(0.1, 0, 1)).is_err());
        assert!(iforest(&inp, &params(0.1, 0, 3)).is_err());
        assert!(iforest(&inp, &params(0.0, 0, 2)).is_err());
        assert!(iforest(&inp, &params(1.0, 0, 2)).is_err());
        assert!(iforest(&inp, &IForestParams { n_trees: 0, ..params(0.1, 0, 2) }).is_err());
    }
}
