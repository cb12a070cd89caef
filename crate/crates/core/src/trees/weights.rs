use serde::{Deserialize, Serialize};

use super::TreeError;

/// Balanced class weights `w_c = n / (k · n_c)` over the `k` classes present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    /// Indexed by class id. Classes without samples get 0.
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(n_classes: usize) -> Self {
        ClassWeights {
            weights: vec![1.0; n_classes],
        }
    }

    pub fn get(&self, class: usize) -> f64 {
        self.weights.get(class).copied().unwrap_or(0.0)
    }

    /// One weight per label.
    pub fn sample_weights(&self, labels: &[usize]) -> Vec<f64> {
        labels.iter().map(|&l| self.get(l)).collect()
    }
}

pub fn compute_class_weights(labels: &[usize]) -> Result<ClassWeights, TreeError> {
    let len = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; len];
    for &l in labels {
        counts[l] += 1;
    }
    let k = counts.iter().filter(|&&c| c > 0).count();
    if k < 2 {
        return Err(TreeError::SingleClass);
    }
    let n = labels.len() as f64;
    Ok(ClassWeights {
        weights: counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { n / (k as f64 * c as f64) })
            .collect(),
    })
}
