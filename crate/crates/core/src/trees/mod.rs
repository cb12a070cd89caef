//! Decision tree, random forest and gradient-boosted trees over a dense
//! [`Matrix`] with integer class ids and per-row sample weights.
//!
//! Rows are routed left when `x[feature] <= threshold`. Thresholds are
//! midpoints between adjacent distinct training values. Whenever scores tie,
//! the lowest class id wins.

pub mod boost;
pub mod cart;
pub mod forest;
pub mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use boost::{fit_boost, BoostModel, BoostParams};
pub use cart::{fit_tree, TreeModel, TreeParams};
pub use forest::{fit_forest, FeaturesPerSplit, ForestModel, ForestParams};
pub use weights::{compute_class_weights, ClassWeights};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("no training rows")]
    EmptyData,
    #[error("need at least two classes")]
    SingleClass,
    #[error("input has {found} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("class id {label} is out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("sample weights must be finite, non-negative and not all zero")]
    InvalidWeights,
    #[error("features must be finite (row {row}, column {column})")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Gini => "gini",
            Criterion::Entropy => "entropy",
        }
    }

    /// Impurity of a node with per-class weight `counts` summing to `total`.
    pub fn impurity(self, counts: &[f64], total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => {
                1.0 - counts
                    .iter()
                    .map(|&c| {
                        let p = c / total;
                        p * p
                    })
                    .sum::<f64>()
            }
            Criterion::Entropy => -counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|&c| {
                    let p = c / total;
                    p * p.log2()
                })
                .sum::<f64>(),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            other => Err(format!("unknown criterion `{other}`")),
        }
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Midpoint split threshold between adjacent sorted values `a < b`.
pub fn split_threshold(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t >= b {
        a
    } else {
        t
    }
}

/// Shared input checks; returns the number of rows.
pub(crate) fn check_training_data(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
) -> Result<usize, TreeError> {
    let n = x.rows();
    if y.len() != n {
        return Err(TreeError::LengthMismatch {
            what: "labels",
            expected: n,
            found: y.len(),
        });
    }
    if weights.len() != n {
        return Err(TreeError::LengthMismatch {
            what: "sample weights",
            expected: n,
            found: weights.len(),
        });
    }
    if n == 0 {
        return Err(TreeError::EmptyData);
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(TreeError::LabelOutOfRange { label, n_classes });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !weights.iter().any(|&w| w > 0.0) {
        return Err(TreeError::InvalidWeights);
    }
    check_finite(x)?;
    Ok(n)
}

pub(crate) fn check_finite(x: &Matrix) -> Result<(), TreeError> {
    if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(TreeError::NonFiniteFeature {
            row: pos / x.cols().max(1),
            column: pos % x.cols().max(1),
        });
    }
    Ok(())
}

pub(crate) fn check_width(x: &Matrix, expected: usize) -> Result<(), TreeError> {
    if x.cols() != expected {
        return Err(TreeError::DimensionMismatch {
            expected,
            found: x.cols(),
        });
    }
    check_finite(x)
}

/// Row indices with positive weight, sorted by each feature (ties by row).
pub(crate) fn presort(x: &Matrix, active: &[u32]) -> Vec<Vec<u32>> {
    (0..x.cols())
        .map(|f| {
            let mut idx = active.to_vec();
            idx.sort_by(|&a, &b| {
                x.get(a as usize, f)
                    .total_cmp(&x.get(b as usize, f))
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

/// Splits every per-feature list into (left, right), keeping the order.
pub(crate) fn partition(sorted: Vec<Vec<u32>>, goes_left: &[bool]) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let mut left = Vec::with_capacity(sorted.len());
    let mut right = Vec::with_capacity(sorted.len());
    for list in sorted {
        let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&i| goes_left[i as usize]);
        left.push(l);
        right.push(r);
    }
    (left, right)
}

/// A fitted classifier of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Boost(BoostModel),
}

impl Model {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, TreeError> {
        match self {
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Boost(m) => m.predict(x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_features,
            Model::Forest(m) => m.n_features,
            Model::Boost(m) => m.n_features,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impurity_values() {
        assert_eq!(Criterion::Gini.impurity(&[4.0, 0.0], 4.0), 0.0);
        assert_eq!(Criterion::Gini.impurity(&[2.0, 2.0], 4.0), 0.5);
        assert_eq!(Criterion::Entropy.impurity(&[3.0, 3.0], 6.0), 1.0);
        assert_eq!(Criterion::Entropy.impurity(&[0.0, 5.0], 5.0), 0.0);
        let g = Criterion::Gini.impurity(&[1.0, 1.0, 2.0], 4.0);
        assert!((g - 0.625).abs() < 1e-15);
        let e = Criterion::Entropy.impurity(&[1.0, 1.0, 2.0], 4.0);
        assert!((e - 1.5).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn thresholds() {
        assert_eq!(split_threshold(2.0, 3.0), 2.5);
        let a: f64 = 1.0;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = split_threshold(a, b);
        assert!(a <= t && t < b);
    }

    #[test]
    fn criterion_names() {
        for c in [Criterion::Gini, Criterion::Entropy] {
            assert_eq!(c.as_str().parse::<Criterion>(), Ok(c));
        }
    }
}
