//! Isolation forest over dense feature rows.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points: `c(n) = 2 H(n-1) - 2 (n-1) / n`, with `H(k) ≈ ln k + γ`.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        value: f64,
        /// Points with `x[feature] < value`.
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    /// Arena; node 0 is the root.
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    fn build<R: Rng>(data: ArrayView2<'_, f64>, rows: Vec<usize>, height_limit: usize, rng: &mut R) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow(data, rows, 0, height_limit, rng);
        tree
    }

    fn grow<R: Rng>(&mut self, data: ArrayView2<'_, f64>, rows: Vec<usize>, depth: usize, height_limit: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= height_limit || rows.len() <= 1 {
            return id;
        }
        // Only features that still vary inside this node can split it.
        let ranges: Vec<(usize, f64, f64)> = (0..data.ncols())
            .filter_map(|f| {
                let (lo, hi) = rows
                    .iter()
                    .map(|&r| data[[r, f]])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (lo < hi).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
        let value = loop {
            let v = lo + rng.gen::<f64>() * (hi - lo);
            if v > lo && v < hi {
                break v;
            }
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| data[[r, feature]] < value);
        let left = self.grow(data, left_rows, depth + 1, height_limit, rng);
        let right = self.grow(data, right_rows, depth + 1, height_limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }

    /// Edges from the root to the point's leaf plus `c(leaf size)`.
    pub fn path_length(&self, point: ArrayView1<'_, f64>) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if point[feature] < value { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub subsample: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    /// Points per tree actually used: `min(subsample, N)`.
    pub subsample_size: usize,
    pub n_trees: usize,
    pub normalizer: f64,
    pub n_features: usize,
    pub seed: u64,
}

impl IsolationForest {
    /// Fits `n_trees` trees, each on its own sample drawn without replacement.
    pub fn fit(data: ArrayView2<'_, f64>, config: &ForestConfig, seed: u64) -> Result<Self> {
        if config.n_trees == 0 || config.subsample < 2 {
            return Err(Error::InvalidArgument("need n_trees >= 1 and subsample >= 2".into()));
        }
        let n = data.nrows();
        if n < 2 {
            return Err(Error::IdenticalPoints);
        }
        let first = data.row(0);
        if data.rows().into_iter().all(|r| r == first) {
            return Err(Error::IdenticalPoints);
        }
        let psi = config.subsample.min(n);
        let height_limit = (psi as f64).log2().ceil() as usize;
        let mut rng = rng::stream(seed, streams::FOREST);
        let trees = (0..config.n_trees)
            .map(|_| {
                let rows = sample(&mut rng, n, psi).into_vec();
                IsolationTree::build(data, rows, height_limit, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            subsample_size: psi,
            n_trees: config.n_trees,
            normalizer: average_path_length(psi),
            n_features: data.ncols(),
            seed,
        })
    }

    pub fn height_limit(&self) -> usize {
        (self.subsample_size as f64).log2().ceil() as usize
    }

    pub fn mean_path_length(&self, point: ArrayView1<'_, f64>) -> f64 {
        self.trees.iter().map(|t| t.path_length(point)).sum::<f64>() / self.trees.len() as f64
    }

    /// `s = 2^(-E[h] / c(ψ))`; higher is more anomalous.
    pub fn score(&self, point: ArrayView1<'_, f64>) -> Result<f64> {
        if point.len() != self.n_features {
            return Err(Error::Shape(format!(
                "point has {} features, forest was fitted on {}",
                point.len(),
                self.n_features
            )));
        }
        Ok(2f64.powf(-self.mean_path_length(point) / self.normalizer))
    }

    pub fn score_all(&self, data: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        data.rows().into_iter().map(|r| self.score(r)).collect()
    }
}

/// Convenience for callers holding feature rows as fixed arrays.
pub fn to_matrix<const D: usize>(rows: &[[f64; D]]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), D), |(i, j)| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cluster_with_outlier() -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows: Vec<[f64; 2]> = (0..200).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        rows.push([-50.0, -50.0]);
        to_matrix(&rows)
    }

    /// Path length found by enumerating every leaf as a box of split
    /// constraints and locating the box that contains the point.
    fn enumerated_path_length(tree: &IsolationTree, point: &[f64]) -> f64 {
        let mut stack = vec![(0usize, vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2], 0usize)];
        let mut hits = Vec::new();
        while let Some((id, lo, hi, depth)) = stack.pop() {
            match &tree.nodes[id] {
                Node::Leaf { size } => {
                    if (0..2).all(|f| point[f] >= lo[f] && point[f] < hi[f]) {
                        hits.push(depth as f64 + average_path_length(*size));
                    }
                }
                Node::Split { feature, value, left, right } => {
                    let mut hi_left = hi.clone();
                    hi_left[*feature] = hi_left[*feature].min(*value);
                    let mut lo_right = lo.clone();
                    lo_right[*feature] = lo_right[*feature].max(*value);
                    stack.push((*left, lo.clone(), hi_left, depth + 1));
                    stack.push((*right, lo_right, hi.clone(), depth + 1));
                }
            }
        }
        assert_eq!(hits.len(), 1, "leaf boxes must partition the plane");
        hits[0]
    }

    #[test]
    fn normalizer_for_256() {
        let h255 = 255f64.ln() + 0.5772156649;
        let expected = 2.0 * h255 - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - expected).abs() < 1e-12);
        assert!((average_path_length(256) - 10.2448).abs() < 1e-4);
    }

    #[test]
    fn forest_shape_and_height() {
        let data = cluster_with_outlier();
        let f = IsolationForest::fit(data.view(), &ForestConfig::default(), 1).unwrap();
        assert_eq!(f.trees.len(), 100);
        assert_eq!(f.subsample_size, 201);
        assert!(f.trees.iter().all(|t| t.depth() <= f.height_limit()));
        assert_eq!(f.height_limit(), 8);
    }

    #[test]
    fn outlier_scores_highest_and_matches_enumeration() {
        let data = cluster_with_outlier();
        let cfg = ForestConfig { n_trees: 10, subsample: 64 };
        let f = IsolationForest::fit(data.view(), &cfg, 5).unwrap();
        let scores = f.score_all(data.view()).unwrap();
        let outlier = scores[200];
        assert!(scores[..200].iter().all(|&s| s < outlier));
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));

        for i in [0, 17, 200] {
            let p = data.row(i).to_vec();
            let brute: f64 = f.trees.iter().map(|t| enumerated_path_length(t, &p)).sum::<f64>() / 10.0;
            let expected = 2f64.powf(-brute / average_path_length(64));
            assert!((scores[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_scores() {
        let data = cluster_with_outlier();
        let a = IsolationForest::fit(data.view(), &ForestConfig::default(), 9).unwrap();
        let b = IsolationForest::fit(data.view(), &ForestConfig::default(), 9).unwrap();
        assert_eq!(a.score_all(data.view()).unwrap(), b.score_all(data.view()).unwrap());
    }

    #[test]
    fn splits_lie_strictly_inside_ranges() {
        let data = cluster_with_outlier();
        let f = IsolationForest::fit(data.view(), &ForestConfig::default(), 2).unwrap();
        for t in &f.trees {
            for n in &t.nodes {
                if let Node::Leaf { size } = n {
                    assert!(*size >= 1 || t.nodes.len() == 1);
                }
            }
        }
        // The root split of every tree lies within the global feature range.
        for t in &f.trees {
            if let Node::Split { feature, value, .. } = t.nodes[0] {
                let col = data.column(feature);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(value > lo && value < hi);
            }
        }
    }

    #[test]
    fn mean_path_equal_to_normalizer_scores_half() {
        let normalizer = average_path_length(256);
        assert_eq!(2f64.powf(-normalizer / normalizer), 0.5);
    }

    #[test]
    fn identical_points_are_rejected() {
        let data = to_matrix(&[[1.0, 2.0]; 10]);
        assert!(matches!(
            IsolationForest::fit(data.view(), &ForestConfig::default(), 0),
            Err(Error::IdenticalPoints)
        ));
    }

    #[test]
    fn duplicating_an_inlier_keeps_the_outlier_on_top() {
        let data = cluster_with_outlier();
        let cfg = ForestConfig::default();
        for seed in 0..5 {
            let before = IsolationForest::fit(data.view(), &cfg, seed).unwrap();
            let inlier = data.row(3);
            let mut dup = data.clone();
            dup.push_row(inlier).unwrap();
            let after = IsolationForest::fit(dup.view(), &cfg, seed).unwrap();
            for f in [&before, &after] {
                assert!(f.score(inlier).unwrap() < f.score(data.row(200)).unwrap());
            }
        }
    }
}
