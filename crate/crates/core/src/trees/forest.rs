//! Random forests: bagged CART trees with per-split feature subsampling.
//!
//! Tree `i` draws its bootstrap sample and feature subsets from ChaCha8
//! stream `i` of the forest seed, so a forest of `n` trees is exactly the
//! first `n` trees of any larger forest with the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{grow, TreeModel, TreeParams};
use super::{argmax, check_training_data, check_width, Criterion, TreeError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturesPerSplit {
    /// `ceil(sqrt(d))`.
    Sqrt,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            FeaturesPerSplit::Sqrt => (d as f64).sqrt().ceil() as usize,
            FeaturesPerSplit::Count(m) => m,
        }
        .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub bootstrap: bool,
    pub features_per_split: FeaturesPerSplit,
    /// Leaf budget per tree; unlimited by default.
    pub max_leaf_nodes: usize,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_estimators: usize, criterion: Criterion) -> Self {
        ForestParams {
            n_estimators,
            criterion,
            bootstrap: true,
            features_per_split: FeaturesPerSplit::Sqrt,
            max_leaf_nodes: usize::MAX,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_classes: usize,
    /// Features examined per split, after resolving [`FeaturesPerSplit`].
    pub features_per_split: usize,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    /// Adds the leaf distributions of `trees` to the per-row sums.
    fn accumulate(&self, x: &Matrix, trees: &[TreeModel], sums: &mut [f64]) {
        let k = self.n_classes;
        for tree in trees {
            for (r, row) in x.iter_rows().enumerate() {
                for (s, p) in sums[r * k..(r + 1) * k].iter_mut().zip(tree.leaf_probs(row)) {
                    *s += p;
                }
            }
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, TreeError> {
        check_width(x, self.n_features)?;
        let k = self.n_classes;
        let mut sums = vec![0.0; x.rows() * k];
        self.accumulate(x, &self.trees, &mut sums);
        let n = self.trees.len().max(1) as f64;
        sums.iter_mut().for_each(|s| *s /= n);
        Ok(Matrix::from_vec(x.rows(), k, sums))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, TreeError> {
        Ok(self.predict_prefixes(x, &[self.trees.len()])?.remove(0))
    }

    /// Predictions of the sub-forests made of the first `n` trees, for each
    /// `n` in `sizes` (ascending, each at most the forest size).
    pub fn predict_prefixes(&self, x: &Matrix, sizes: &[usize]) -> Result<Vec<Vec<usize>>, TreeError> {
        check_width(x, self.n_features)?;
        let k = self.n_classes;
        let mut sums = vec![0.0; x.rows() * k];
        let mut done = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &n in sizes {
            assert!(n >= done && n <= self.trees.len(), "prefix sizes must ascend within the forest");
            self.accumulate(x, &self.trees[done..n], &mut sums);
            done = n;
            out.push(sums.chunks(k.max(1)).map(argmax).collect());
        }
        Ok(out)
    }
}

/// Seeded generator for tree `index` of a forest.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn fit_forest(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    params: &ForestParams,
) -> Result<ForestModel, TreeError> {
    let n = check_training_data(x, y, weights, n_classes)?;
    if params.max_leaf_nodes == 0 {
        return Err(TreeError::InvalidParams("max_leaf_nodes must be positive".into()));
    }
    let m = params.features_per_split.resolve(x.cols());
    let tree_params = TreeParams {
        seed: params.seed,
        ..TreeParams::new(params.criterion, params.max_leaf_nodes)
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let w: Vec<f64> = if params.bootstrap {
                let mut draws = vec![0u32; n];
                for _ in 0..n {
                    draws[rng.random_range(0..n)] += 1;
                }
                draws.iter().zip(weights).map(|(&c, &w)| f64::from(c) * w).collect()
            } else {
                weights.to_vec()
            };
            if !w.iter().any(|&v| v > 0.0) {
                return grow(x, y, weights, n_classes, &TreeParams::new(params.criterion, 1), None);
            }
            grow(x, y, &w, n_classes, &tree_params, Some((&mut rng, m)))
        })
        .collect();
    Ok(ForestModel {
        n_features: x.cols(),
        n_classes,
        features_per_split: m,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fit_tree;

    fn data(seed: u64, n: usize, d: usize) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect());
        let y = x
            .iter_rows()
            .map(|r| if r[0] + 0.3 * r[1 % d] > 0.7 { 1 } else { 0 })
            .collect();
        (x, y)
    }

    #[test]
    fn degenerate_forest_equals_tree() {
        let (x, y) = data(1, 80, 3);
        let w = vec![1.0; 80];
        let params = ForestParams {
            bootstrap: false,
            features_per_split: FeaturesPerSplit::Count(3),
            max_leaf_nodes: 6,
            ..ForestParams::new(1, Criterion::Entropy)
        };
        let forest = fit_forest(&x, &y, &w, 2, &params).unwrap();
        let tree = fit_tree(&x, &y, &w, 2, &TreeParams::new(Criterion::Entropy, 6)).unwrap();
        assert_eq!(forest.trees[0], tree);
        assert_eq!(forest.predict(&x).unwrap(), tree.predict(&x).unwrap());
    }

    #[test]
    fn same_seed_same_model() {
        let (x, y) = data(2, 60, 4);
        let w = vec![1.0; 60];
        let p = ForestParams {
            seed: 5,
            ..ForestParams::new(7, Criterion::Gini)
        };
        let a = fit_forest(&x, &y, &w, 2, &p).unwrap();
        assert_eq!(a, fit_forest(&x, &y, &w, 2, &p).unwrap());
        let b = fit_forest(&x, &y, &w, 2, &ForestParams { seed: 6, ..p }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn smaller_forest_is_a_prefix() {
        let (x, y) = data(3, 70, 3);
        let w = vec![1.0; 70];
        let big = fit_forest(&x, &y, &w, 2, &ForestParams::new(9, Criterion::Gini)).unwrap();
        let small = fit_forest(&x, &y, &w, 2, &ForestParams::new(4, Criterion::Gini)).unwrap();
        assert_eq!(small.trees[..], big.trees[..4]);
        let prefixes = big.predict_prefixes(&x, &[4, 9]).unwrap();
        assert_eq!(prefixes[0], small.predict(&x).unwrap());
        assert_eq!(prefixes[1], big.predict(&x).unwrap());
    }

    #[test]
    fn identical_trees_vote_like_one() {
        let (x, y) = data(4, 50, 2);
        let w = vec![1.0; 50];
        let mut forest = fit_forest(&x, &y, &w, 2, &ForestParams::new(1, Criterion::Gini)).unwrap();
        let single = forest.predict(&x).unwrap();
        forest.trees = vec![forest.trees[0].clone(); 5];
        assert_eq!(forest.predict(&x).unwrap(), single);
    }

    #[test]
    fn tree_order_does_not_matter() {
        let (x, y) = data(5, 90, 3);
        let w = vec![1.0; 90];
        let mut forest = fit_forest(&x, &y, &w, 2, &ForestParams::new(6, Criterion::Gini)).unwrap();
        let before = forest.predict(&x).unwrap();
        forest.trees.reverse();
        assert_eq!(forest.predict(&x).unwrap(), before);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (x, y) = data(6, 40, 2);
        let forest = fit_forest(&x, &y, &vec![1.0; 40], 3, &ForestParams::new(5, Criterion::Gini)).unwrap();
        for row in forest.predict_proba(&x).unwrap().iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row[2], 0.0);
        }
    }

    #[test]
    fn features_per_split() {
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(1), 1);
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(4), 2);
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(5), 3);
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(27), 6);
        assert_eq!(FeaturesPerSplit::Count(9).resolve(4), 4);
    }
}
