//! Gradient-boosted regression trees with a softmax objective.
//!
//! Each round fits one depth-limited regression tree per class to the
//! sample-weighted gradient `g = p − 1{y = c}` and hessian `h = p(1 − p)` of
//! the softmax cross-entropy. Leaves hold the Newton step `−G / (H + λ)`.
//!
//! A round is added with shrinkage `learning_rate`. If that raises the
//! weighted training loss, the shrinkage is halved up to ten times, and the
//! round is left empty when no step helps, so the training loss never
//! increases from one round to the next.

use serde::{Deserialize, Serialize};

use super::{argmax, check_training_data, check_width, partition, presort, split_threshold, TreeError};
use crate::matrix::Matrix;

const MAX_HALVINGS: usize = 10;
/// Base score of a class with no training weight (about ln 1e-12).
const ABSENT_CLASS_SCORE: f64 = -27.631021115928547;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl BoostParams {
    /// Defaults: learning rate 0.3, λ = 1.
    pub fn new(n_estimators: usize, max_depth: usize) -> Self {
        BoostParams {
            n_estimators,
            max_depth,
            learning_rate: 0.3,
            lambda: 1.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth == 0 {
            return Err(TreeError::InvalidParams("max_depth must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TreeError::InvalidParams("learning_rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TreeError::InvalidParams("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
                RegNode::Leaf { value } => return *value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[RegNode], id: usize) -> usize {
            match &nodes[id] {
                RegNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                RegNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// One boosting round: a tree per class, scaled by `shrinkage`.
/// Rejected rounds have no trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub shrinkage: f64,
    pub trees: Vec<RegTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub base_score: Vec<f64>,
    pub rounds: Vec<Round>,
    /// Weighted mean cross-entropy on the training rows: entry 0 for the base
    /// score, entry `r` after round `r`.
    pub train_loss: Vec<f64>,
}

impl BoostModel {
    fn add_round(&self, round: &Round, x: &Matrix, scores: &mut [f64]) {
        let k = self.n_classes;
        for (c, tree) in round.trees.iter().enumerate() {
            for (r, row) in x.iter_rows().enumerate() {
                scores[r * k + c] += round.shrinkage * tree.eval(row);
            }
        }
    }

    /// Raw per-class scores, `rows × k`.
    pub fn decision_function(&self, x: &Matrix) -> Result<Matrix, TreeError> {
        check_width(x, self.n_features)?;
        let mut scores = self.base_scores(x.rows());
        for round in &self.rounds {
            self.add_round(round, x, &mut scores);
        }
        Ok(Matrix::from_vec(x.rows(), self.n_classes, scores))
    }

    fn base_scores(&self, rows: usize) -> Vec<f64> {
        let mut s = Vec::with_capacity(rows * self.n_classes);
        for _ in 0..rows {
            s.extend_from_slice(&self.base_score);
        }
        s
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, TreeError> {
        Ok(self.decision_function(x)?.iter_rows().map(argmax).collect())
    }

    /// Predictions after the first `n` rounds, for each `n` in `sizes`
    /// (ascending, each at most the number of rounds).
    pub fn predict_prefixes(&self, x: &Matrix, sizes: &[usize]) -> Result<Vec<Vec<usize>>, TreeError> {
        check_width(x, self.n_features)?;
        let mut scores = self.base_scores(x.rows());
        let mut done = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &n in sizes {
            assert!(n >= done && n <= self.rounds.len(), "prefix sizes must ascend within the model");
            for round in &self.rounds[done..n] {
                self.add_round(round, x, &mut scores);
            }
            done = n;
            out.push(scores.chunks(self.n_classes).map(argmax).collect());
        }
        Ok(out)
    }
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Weighted mean softmax cross-entropy.
fn loss(scores: &[f64], y: &[usize], w: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    let mut mass = 0.0;
    for (i, s) in scores.chunks(k).enumerate() {
        if w[i] > 0.0 {
            total += w[i] * (log_sum_exp(s) - s[y[i]]);
            mass += w[i];
        }
    }
    total / mass
}

struct RegBuilder<'a> {
    x: &'a Matrix,
    g: &'a [f64],
    h: &'a [f64],
    lambda: f64,
    max_depth: usize,
}

impl RegBuilder<'_> {
    fn sums(&self, rows: &[u32]) -> (f64, f64) {
        rows.iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.g[i as usize], h + self.h[i as usize]))
    }

    fn score(&self, g: f64, h: f64) -> Option<f64> {
        let den = h + self.lambda;
        (den > 0.0).then(|| g * g / den)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let den = h + self.lambda;
        if den > 0.0 {
            -g / den
        } else {
            0.0
        }
    }

    fn best_split(&self, sorted: &[Vec<u32>], g: f64, h: f64) -> Option<(usize, f64)> {
        if sorted[0].len() < 2 {
            return None;
        }
        let parent = self.score(g, h)?;
        let mut best: Option<(usize, f64, f64)> = None;
        for (f, list) in sorted.iter().enumerate() {
            let mut gl = 0.0;
            let mut hl = 0.0;
            for k in 0..list.len() - 1 {
                let i = list[k] as usize;
                gl += self.g[i];
                hl += self.h[i];
                let a = self.x.get(i, f);
                let b = self.x.get(list[k + 1] as usize, f);
                if !(b > a) {
                    continue;
                }
                let (Some(l), Some(r)) = (self.score(gl, hl), self.score(g - gl, h - hl)) else {
                    continue;
                };
                let gain = l + r - parent;
                if gain > 1e-12 && best.is_none_or(|(_, _, b)| gain > b) {
                    best = Some((f, split_threshold(a, b), gain));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    /// Builds the tree level by level and writes each row's leaf value to `out`.
    fn build(&self, sorted: Vec<Vec<u32>>, goes_left: &mut [bool], out: &mut [f64]) -> RegTree {
        let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
        let mut frontier = vec![(0usize, sorted)];
        for depth in 0..=self.max_depth {
            let mut next = Vec::new();
            for (id, lists) in frontier {
                let (g, h) = self.sums(&lists[0]);
                let split = if depth < self.max_depth {
                    self.best_split(&lists, g, h)
                } else {
                    None
                };
                let Some((feature, threshold)) = split else {
                    let value = self.leaf_value(g, h);
                    for &i in &lists[0] {
                        out[i as usize] = value;
                    }
                    nodes[id] = RegNode::Leaf { value };
                    continue;
                };
                for &i in &lists[0] {
                    goes_left[i as usize] = self.x.get(i as usize, feature) <= threshold;
                }
                let (l, r) = partition(lists, goes_left);
                let left = nodes.len();
                nodes.push(RegNode::Leaf { value: 0.0 });
                nodes.push(RegNode::Leaf { value: 0.0 });
                nodes[id] = RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right: left + 1,
                };
                next.push((left, l));
                next.push((left + 1, r));
            }
            frontier = next;
        }
        RegTree { nodes }
    }
}

pub fn fit_boost(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    n_classes: usize,
    params: &BoostParams,
) -> Result<BoostModel, TreeError> {
    params.validate()?;
    let n = check_training_data(x, y, weights, n_classes)?;
    let k = n_classes;
    let mut mass = vec![0.0; k];
    for (&c, &w) in y.iter().zip(weights) {
        mass[c] += w;
    }
    if mass.iter().filter(|&&m| m > 0.0).count() < 2 {
        return Err(TreeError::SingleClass);
    }
    let total: f64 = mass.iter().sum();
    let base_score: Vec<f64> = mass
        .iter()
        .map(|&m| if m > 0.0 { (m / total).ln() } else { ABSENT_CLASS_SCORE })
        .collect();

    let mut model = BoostModel {
        n_features: x.cols(),
        n_classes: k,
        base_score,
        rounds: Vec::with_capacity(params.n_estimators),
        train_loss: Vec::with_capacity(params.n_estimators + 1),
    };
    let mut scores = model.base_scores(n);
    let mut current = loss(&scores, y, weights, k);
    model.train_loss.push(current);

    let active: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let sorted = if x.cols() > 0 { presort(x, &active) } else { vec![active] };
    let mut goes_left = vec![false; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut outputs = vec![vec![0.0; n]; k];
    let mut probs = vec![0.0; n * k];
    let mut candidate = vec![0.0; n * k];

    for _ in 0..params.n_estimators {
        for (s, p) in scores.chunks(k).zip(probs.chunks_mut(k)) {
            let lse = log_sum_exp(s);
            for (pc, sc) in p.iter_mut().zip(s) {
                *pc = (sc - lse).exp();
            }
        }
        let mut trees = Vec::with_capacity(k);
        for c in 0..k {
            for i in 0..n {
                let p = probs[i * k + c];
                let target = if y[i] == c { 1.0 } else { 0.0 };
                g[i] = weights[i] * (p - target);
                h[i] = weights[i] * p * (1.0 - p);
            }
            let builder = RegBuilder {
                x,
                g: &g,
                h: &h,
                lambda: params.lambda,
                max_depth: if x.cols() > 0 { params.max_depth } else { 0 },
            };
            trees.push(builder.build(sorted.clone(), &mut goes_left, &mut outputs[c]));
        }

        let mut eta = params.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..n {
                for c in 0..k {
                    candidate[i * k + c] = scores[i * k + c] + eta * outputs[c][i];
                }
            }
            let next = loss(&candidate, y, weights, k);
            if next <= current {
                accepted = Some(next);
                break;
            }
            eta /= 2.0;
        }
        match accepted {
            Some(next) => {
                std::mem::swap(&mut scores, &mut candidate);
                current = next;
                model.rounds.push(Round { shrinkage: eta, trees });
            }
            None => model.rounds.push(Round {
                shrinkage: 0.0,
                trees: Vec::new(),
            }),
        }
        model.train_loss.push(current);
    }
    Ok(model)
}
