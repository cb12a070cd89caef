//! Metrics, stratified cross-validated grid search and the latent-dimension
//! sweep.

pub mod cv;
pub mod metrics;
pub mod report;
pub mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoenc::AeError;
use crate::matrix::Matrix;
use crate::preprocess::PreprocessError;
use crate::trees::{
    compute_class_weights, fit_boost, fit_forest, fit_tree, BoostParams, ClassWeights, Criterion,
    ForestParams, Model, TreeError, TreeParams,
};

pub use cv::{grid_search, stratified_folds, train_test_split, GridSearchResult};
pub use metrics::{compute_metrics, weighted_f1, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use report::{Selection, SweepReport, SweepRow};
pub use sweep::{prepare_split, split_table, sweep, SweepConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("class id {label} is out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("class {class} has {count} rows, fewer than {needed}")]
    TooFewSamplesPerClass {
        class: usize,
        count: usize,
        needed: usize,
    },
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Autoencoder(#[from] AeError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("latent dim {dim}, {stage}: {source}")]
    Stage {
        dim: usize,
        stage: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Dt,
    Rf,
    Xgb,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Dt, ClassifierKind::Rf, ClassifierKind::Xgb];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Dt => "dt",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Xgb => "xgb",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ClassifierKind::Dt => "DT",
            ClassifierKind::Rf => "RF",
            ClassifierKind::Xgb => "XGB",
        }
    }

    /// Grid searched when none is given.
    pub fn default_grid(self) -> Vec<GridPoint> {
        let criteria = [Criterion::Gini, Criterion::Entropy];
        match self {
            ClassifierKind::Dt => [8, 16, 32, 64, 128]
                .into_iter()
                .flat_map(|leaves| criteria.map(|c| GridPoint::Tree(TreeParams::new(c, leaves))))
                .collect(),
            ClassifierKind::Rf => [50, 100, 200]
                .into_iter()
                .flat_map(|n| criteria.map(|c| GridPoint::Forest(ForestParams::new(n, c))))
                .collect(),
            ClassifierKind::Xgb => [50, 100, 200]
                .into_iter()
                .flat_map(|n| [3, 6, 10].map(|depth| GridPoint::Boost(BoostParams::new(n, depth))))
                .collect(),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(ClassifierKind::Dt),
            "rf" => Ok(ClassifierKind::Rf),
            "xgb" => Ok(ClassifierKind::Xgb),
            other => Err(format!("unknown classifier `{other}` (expected dt, rf or xgb)")),
        }
    }
}

/// One hyperparameter setting of one learner. The seed inside is replaced
/// by the caller's seed when fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum GridPoint {
    Tree(TreeParams),
    Forest(ForestParams),
    Boost(BoostParams),
}

impl GridPoint {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            GridPoint::Tree(_) => ClassifierKind::Dt,
            GridPoint::Forest(_) => ClassifierKind::Rf,
            GridPoint::Boost(_) => ClassifierKind::Xgb,
        }
    }

    pub fn with_seed(&self, seed: u64) -> GridPoint {
        let mut p = self.clone();
        match &mut p {
            GridPoint::Tree(t) => t.seed = seed,
            GridPoint::Forest(f) => f.seed = seed,
            GridPoint::Boost(b) => b.seed = seed,
        }
        p
    }

    /// Ensemble size, for learners whose smaller ensembles are prefixes of larger ones.
    pub(crate) fn n_estimators(&self) -> Option<usize> {
        match self {
            GridPoint::Tree(_) => None,
            GridPoint::Forest(f) => Some(f.n_estimators),
            GridPoint::Boost(b) => Some(b.n_estimators),
        }
    }

    pub(crate) fn with_n_estimators(&self, n: usize) -> GridPoint {
        let mut p = self.clone();
        match &mut p {
            GridPoint::Tree(_) => {}
            GridPoint::Forest(f) => f.n_estimators = n,
            GridPoint::Boost(b) => b.n_estimators = n,
        }
        p
    }

    pub fn fit(&self, x: &Matrix, y: &[usize], weights: &[f64], n_classes: usize) -> Result<Model, TreeError> {
        Ok(match self {
            GridPoint::Tree(p) => Model::Tree(fit_tree(x, y, weights, n_classes, p)?),
            GridPoint::Forest(p) => Model::Forest(fit_forest(x, y, weights, n_classes, p)?),
            GridPoint::Boost(p) => Model::Boost(fit_boost(x, y, weights, n_classes, p)?),
        })
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridPoint::Tree(p) => write!(f, "max_leaf_nodes={} criterion={}", p.max_leaf_nodes, p.criterion),
            GridPoint::Forest(p) => write!(f, "n_estimators={} criterion={}", p.n_estimators, p.criterion),
            GridPoint::Boost(p) => write!(f, "n_estimators={} max_depth={}", p.n_estimators, p.max_depth),
        }
    }
}

/// Sample weights for `labels`: balanced class weights, or all ones.
pub fn training_weights(labels: &[usize], balanced: bool) -> Result<Vec<f64>, TreeError> {
    if balanced {
        Ok(compute_class_weights(labels)?.sample_weights(labels))
    } else {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Ok(ClassWeights::uniform(k).sample_weights(labels))
    }
}

/// Mixes a master seed with a work-unit index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        assert_eq!(ClassifierKind::Dt.default_grid().len(), 10);
        assert_eq!(ClassifierKind::Rf.default_grid().len(), 6);
        assert_eq!(ClassifierKind::Xgb.default_grid().len(), 9);
        for kind in ClassifierKind::ALL {
            assert!(kind.default_grid().iter().all(|p| p.kind() == kind));
            assert_eq!(kind.as_str().parse::<ClassifierKind>(), Ok(kind));
        }
    }

    #[test]
    fn seeds_differ_per_index() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
