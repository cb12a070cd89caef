//! CART classification trees grown best-first up to a leaf budget.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_training_data, check_width, partition, presort, split_threshold, Criterion, TreeError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_leaf_nodes: usize,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl TreeParams {
    pub fn new(criterion: Criterion, max_leaf_nodes: usize) -> Self {
        TreeParams {
            criterion,
            max_leaf_nodes,
            min_samples_split: 2,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), TreeError> {
        if self.max_leaf_nodes == 0 {
            return Err(TreeError::InvalidParams("max_leaf_nodes must be positive".into()));
        }
        if self.min_samples_split == 0 {
            return Err(TreeError::InvalidParams("min_samples_split must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        probs: Vec<f64>,
    },
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn leaf_probs(&self, row: &[f64]) -> &[f64] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { probs } => return probs,
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        argmax(self.leaf_probs(row))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, TreeError> {
        check_width(x, self.n_features)?;
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

pub fn fit_tree(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    params: &TreeParams,
) -> Result<TreeModel, TreeError> {
    params.validate()?;
    check_training_data(x, y, weights, n_classes)?;
    Ok(grow(x, y, weights, n_classes, params, None))
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Pending {
    node: usize,
    sorted: Vec<Vec<u32>>,
    split: Split,
}

/// Heap key: largest decrease first, then earliest created leaf.
struct Candidate {
    decrease: f64,
    node: usize,
    slot: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.decrease
            .total_cmp(&other.decrease)
            .then(other.node.cmp(&self.node))
    }
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    criterion: Criterion,
    min_samples_split: usize,
    sampler: Option<(&'a mut ChaCha8Rng, usize)>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Grower<'_> {
    fn counts(&self, rows: &[u32]) -> (Vec<f64>, f64) {
        let mut counts = vec![0.0; self.n_classes];
        for &i in rows {
            counts[self.y[i as usize]] += self.w[i as usize];
        }
        let total = counts.iter().sum();
        (counts, total)
    }

    fn best_split(&mut self, sorted: &[Vec<u32>], counts: &[f64], total: f64) -> Option<Split> {
        let rows = &sorted[0];
        if rows.len() < self.min_samples_split.max(2) {
            return None;
        }
        let parent = self.criterion.impurity(counts, total);
        if parent <= 0.0 {
            return None;
        }
        let d = self.x.cols();
        let features: Vec<usize> = match &mut self.sampler {
            Some((rng, m)) if *m < d => {
                let mut f = index::sample(*rng, d, *m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let min_decrease = 1e-12 * total;
        let mut best: Option<Split> = None;
        for f in features {
            let list = &sorted[f];
            self.left.fill(0.0);
            let mut left_total = 0.0;
            for k in 0..list.len() - 1 {
                let i = list[k] as usize;
                self.left[self.y[i]] += self.w[i];
                left_total += self.w[i];
                let a = self.x.get(i, f);
                let b = self.x.get(list[k + 1] as usize, f);
                if !(b > a) {
                    continue;
                }
                for c in 0..self.n_classes {
                    self.right[c] = counts[c] - self.left[c];
                }
                let right_total = total - left_total;
                let decrease = total * parent
                    - left_total * self.criterion.impurity(&self.left, left_total)
                    - right_total * self.criterion.impurity(&self.right, right_total);
                if decrease > min_decrease && best.is_none_or(|s| decrease > s.decrease) {
                    best = Some(Split {
                        feature: f,
                        threshold: split_threshold(a, b),
                        decrease,
                    });
                }
            }
        }
        best
    }
}

fn leaf(counts: Vec<f64>, total: f64) -> Node {
    Node::Leaf {
        probs: counts.into_iter().map(|c| c / total).collect(),
    }
}

fn add_leaf(
    g: &mut Grower,
    nodes: &mut Vec<Node>,
    pending: &mut Vec<Option<Pending>>,
    heap: &mut BinaryHeap<Candidate>,
    sorted: Vec<Vec<u32>>,
    allow_split: bool,
) -> usize {
    let (counts, total) = g.counts(&sorted[0]);
    let node = nodes.len();
    let split = if allow_split {
        g.best_split(&sorted, &counts, total)
    } else {
        None
    };
    nodes.push(leaf(counts, total));
    if let Some(split) = split {
        heap.push(Candidate {
            decrease: split.decrease,
            node,
            slot: pending.len(),
        });
        pending.push(Some(Pending { node, sorted, split }));
    }
    node
}

/// Best-first growth on the rows with positive weight. With a sampler
/// `(rng, m)`, each split considers a fresh random subset of `m` features.
pub(crate) fn grow(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    params: &TreeParams,
    sampler: Option<(&mut ChaCha8Rng, usize)>,
) -> TreeModel {
    let active: Vec<u32> = (0..x.rows() as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    if x.cols() == 0 {
        let mut counts = vec![0.0; n_classes];
        for &i in &active {
            counts[y[i as usize]] += weights[i as usize];
        }
        let total = counts.iter().sum();
        return TreeModel {
            n_features: 0,
            n_classes,
            nodes: vec![leaf(counts, total)],
        };
    }
    let mut g = Grower {
        x,
        y,
        w: weights,
        n_classes,
        criterion: params.criterion,
        min_samples_split: params.min_samples_split,
        sampler,
        left: vec![0.0; n_classes],
        right: vec![0.0; n_classes],
    };
    let mut nodes = Vec::new();
    let mut pending: Vec<Option<Pending>> = Vec::new();
    let mut heap = BinaryHeap::new();

    let budget = params.max_leaf_nodes;
    add_leaf(&mut g, &mut nodes, &mut pending, &mut heap, presort(x, &active), budget > 1);
    let mut leaves = 1;
    let mut goes_left = vec![false; x.rows()];
    while leaves < budget {
        let Some(top) = heap.pop() else { break };
        let p = pending[top.slot].take().expect("each candidate is popped once");
        for &i in &p.sorted[0] {
            goes_left[i as usize] = x.get(i as usize, p.split.feature) <= p.split.threshold;
        }
        let (l, r) = partition(p.sorted, &goes_left);
        leaves += 1;
        let can_grow = leaves < budget;
        let left = add_leaf(&mut g, &mut nodes, &mut pending, &mut heap, l, can_grow);
        let right = add_leaf(&mut g, &mut nodes, &mut pending, &mut heap, r, can_grow);
        nodes[p.node] = Node::Split {
            feature: p.split.feature,
            threshold: p.split.threshold,
            left,
            right,
        };
    }
    TreeModel {
        n_features: x.cols(),
        n_classes,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(x: &[&[f64]], y: &[usize], leaves: usize) -> TreeModel {
        let m = Matrix::from_rows(x);
        let w = vec![1.0; y.len()];
        let k = y.iter().max().unwrap() + 1;
        fit_tree(&m, y, &w, k, &TreeParams::new(Criterion::Gini, leaves)).unwrap()
    }

    #[test]
    fn pure_labels_give_one_leaf() {
        let t = fit(&[&[1.0], &[2.0], &[3.0]], &[1, 1, 1], 8);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[10.0]), 1);
    }

    #[test]
    fn unique_optimal_split() {
        let t = fit(&[&[1.0], &[2.0], &[3.0], &[4.0]], &[0, 0, 1, 1], 8);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 2.5)),
            n => panic!("{n:?}"),
        }
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        assert_eq!(t.predict(&x).unwrap(), [0, 0, 1, 1]);
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn leaf_budget_is_respected() {
        let x: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..32).map(|i| i % 2).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        for budget in [1, 2, 3, 7, 16, 100] {
            assert_eq!(fit(&rows, &y, budget).n_leaves(), budget.min(32));
        }
    }

    #[test]
    fn tie_prefers_lower_feature() {
        let t = fit(&[&[0.0, 0.0], &[1.0, 1.0]], &[0, 1], 2);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn memorizes_consistent_rows() {
        let x = [[0.1, 0.3], [0.2, 0.1], [0.9, 0.5], [0.4, 0.4], [0.7, 0.2], [0.3, 0.8]];
        let y = [0, 1, 2, 0, 1, 2];
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let t = fit(&rows, &y, 6);
        assert_eq!(t.predict(&Matrix::from_rows(&x)).unwrap(), y);
    }

    #[test]
    fn integer_weights_match_duplication() {
        let x = [[0.1, 0.3], [0.2, 0.1], [0.9, 0.5], [0.4, 0.4], [0.7, 0.2], [0.3, 0.8]];
        let y = [0, 1, 1, 0, 1, 0];
        let w = [3.0, 1.0, 2.0, 1.0, 4.0, 2.0];
        let mut dx = Vec::new();
        let mut dy = Vec::new();
        for i in 0..6 {
            for _ in 0..w[i] as usize {
                dx.push(x[i]);
                dy.push(y[i]);
            }
        }
        for criterion in [Criterion::Gini, Criterion::Entropy] {
            let p = TreeParams::new(criterion, 4);
            let a = fit_tree(&Matrix::from_rows(&x), &y, &w, 2, &p).unwrap();
            let b = fit_tree(&Matrix::from_rows(&dx), &dy, &vec![1.0; dy.len()], 2, &p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn leaf_probabilities_sum_to_one() {
        let x = [[0.0], [0.0], [1.0], [1.0], [1.0]];
        let t = fit_tree(
            &Matrix::from_rows(&x),
            &[0, 1, 0, 1, 1],
            &[1.0, 1.0, 2.0, 1.0, 0.5],
            3,
            &TreeParams::new(Criterion::Entropy, 4),
        )
        .unwrap();
        for n in &t.nodes {
            if let Node::Leaf { probs } = n {
                assert_eq!(probs.len(), 3);
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn min_samples_split_blocks_small_nodes() {
        let x = [[0.0], [1.0], [2.0], [3.0]];
        let p = TreeParams {
            min_samples_split: 5,
            ..TreeParams::new(Criterion::Gini, 8)
        };
        let t = fit_tree(&Matrix::from_rows(&x), &[0, 1, 0, 1], &[1.0; 4], 2, &p).unwrap();
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = [[0.0], [1.0], [2.0]];
        let t = fit_tree(
            &Matrix::from_rows(&x),
            &[0, 1, 1],
            &[1.0, 0.0, 1.0],
            2,
            &TreeParams::new(Criterion::Gini, 4),
        )
        .unwrap();
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 1.0),
            n => panic!("{n:?}"),
        }
    }

    #[test]
    fn input_errors() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let p = TreeParams::new(Criterion::Gini, 2);
        assert_eq!(
            fit_tree(&Matrix::zeros(0, 1), &[], &[], 2, &p),
            Err(TreeError::EmptyData)
        );
        assert!(matches!(
            fit_tree(&x, &[0], &[1.0, 1.0], 2, &p),
            Err(TreeError::LengthMismatch { .. })
        ));
        assert_eq!(
            fit_tree(&x, &[0, 1], &[-1.0, 1.0], 2, &p),
            Err(TreeError::InvalidWeights)
        );
        assert!(matches!(
            fit_tree(&Matrix::from_rows(&[[f64::NAN], [1.0]]), &[0, 1], &[1.0, 1.0], 2, &p),
            Err(TreeError::NonFiniteFeature { row: 0, column: 0 })
        ));
        let t = fit_tree(&x, &[0, 1], &[1.0, 1.0], 2, &p).unwrap();
        assert!(matches!(
            t.predict(&Matrix::zeros(1, 2)),
            Err(TreeError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }
}
