use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, training_weights, weighted_f1, EvalError, GridPoint};
use crate::matrix::Matrix;
use crate::trees::Model;

fn rows_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Fold id of every row. Each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped, so every fold gets within one
/// row of its share of every class and fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], k_folds: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if k_folds < 2 {
        return Err(EvalError::TooFewFolds(k_folds));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut offset = 0;
    for (class, mut rows) in rows_by_class(labels).into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < k_folds {
            return Err(EvalError::TooFewSamplesPerClass {
                class,
                count: rows.len(),
                needed: k_folds,
            });
        }
        rows.shuffle(&mut rng);
        for (j, &r) in rows.iter().enumerate() {
            fold[r] = (offset + j) % k_folds;
        }
        offset += rows.len();
    }
    Ok(fold)
}

/// Stratified split into ascending (train, test) row indices. Each class puts
/// `round(count · test_fraction)` rows in the test set, keeping at least one
/// for training.
pub fn train_test_split(labels: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut rows in rows_by_class(labels) {
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * test_fraction).round() as usize).min(rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    /// Mean held-out weighted F1 per grid point, in grid order.
    pub scores: Vec<f64>,
    pub best_index: usize,
    pub best: GridPoint,
}

/// Points that differ only in ensemble size share one fitted model.
struct Group {
    point: GridPoint,
    members: Vec<(usize, Option<usize>)>,
}

fn group_points(grid: &[GridPoint]) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for (i, p) in grid.iter().enumerate() {
        let n = p.n_estimators();
        let key = p.with_n_estimators(0);
        match groups.iter_mut().find(|g| n.is_some() && g.point.with_n_estimators(0) == key) {
            Some(g) => {
                g.members.push((i, n));
                if n > g.point.n_estimators() {
                    g.point = p.clone();
                }
            }
            None => groups.push(Group {
                point: p.clone(),
                members: vec![(i, n)],
            }),
        }
    }
    groups
}

fn score_group(
    group: &Group,
    train: (&Matrix, &[usize]),
    test: (&Matrix, &[usize]),
    n_classes: usize,
    seed: u64,
    balanced: bool,
) -> Result<Vec<(usize, f64)>, EvalError> {
    let weights = training_weights(train.1, balanced)?;
    let model = group.point.with_seed(seed).fit(train.0, train.1, &weights, n_classes)?;
    let mut sizes: Vec<usize> = group.members.iter().filter_map(|m| m.1).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let predictions = match &model {
        Model::Forest(m) => m.predict_prefixes(test.0, &sizes)?,
        Model::Boost(m) => m.predict_prefixes(test.0, &sizes)?,
        Model::Tree(m) => vec![m.predict(test.0)?],
    };
    group
        .members
        .iter()
        .map(|&(idx, n)| {
            let slot = n.map_or(0, |n| sizes.binary_search(&n).expect("size listed"));
            Ok((idx, weighted_f1(test.1, &predictions[slot], n_classes)?))
        })
        .collect()
}

/// Stratified k-fold search for the grid point with the best mean weighted
/// F1. Ties go to the earlier point. Class weights are recomputed on every
/// training fold when `balanced`. The learner seed of fold `f` is
/// `derive_seed(seed, f)`, shared by all grid points.
pub fn grid_search(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    grid: &[GridPoint],
    k_folds: usize,
    seed: u64,
    balanced: bool,
) -> Result<GridSearchResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let folds = stratified_folds(y, k_folds, seed)?;
    let splits: Vec<_> = (0..k_folds)
        .map(|f| {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] == f);
            let pick = |idx: &[usize]| -> (Matrix, Vec<usize>) {
                (x.select_rows(idx), idx.iter().map(|&i| y[i]).collect())
            };
            (pick(&train_idx), pick(&test_idx))
        })
        .collect();
    let groups = group_points(grid);
    let tasks: Vec<(usize, usize)> = (0..k_folds)
        .flat_map(|f| (0..groups.len()).map(move |g| (f, g)))
        .collect();
    let results: Vec<Vec<(usize, f64)>> = tasks
        .par_iter()
        .map(|&(f, g)| {
            let ((xtr, ytr), (xte, yte)) = &splits[f];
            score_group(
                &groups[g],
                (xtr, ytr),
                (xte, yte),
                n_classes,
                derive_seed(seed, f as u64),
                balanced,
            )
        })
        .collect::<Result<_, _>>()?;

    let mut per_fold = vec![vec![0.0; grid.len()]; k_folds];
    for (&(f, _), scores) in tasks.iter().zip(results) {
        for (idx, s) in scores {
            per_fold[f][idx] = s;
        }
    }
    let scores: Vec<f64> = (0..grid.len())
        .map(|i| per_fold.iter().map(|row| row[i]).sum::<f64>() / k_folds as f64)
        .collect();
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        best: grid[best_index].clone(),
        best_index,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{BoostParams, Criterion, ForestParams, TreeParams};
    use rand::Rng;

    fn data(seed: u64, n: usize) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = if i % 5 == 0 { 2 } else { i % 2 };
            rows.push([c as f64 * 0.4 + rng.random::<f64>(), rng.random::<f64>()]);
            y.push(c);
        }
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn folds_are_stratified() {
        let y: Vec<usize> = (0..103).map(|i| if i < 61 { 0 } else if i < 90 { 1 } else { 2 }).collect();
        let folds = stratified_folds(&y, 5, 3).unwrap();
        for class in 0..3 {
            let total = y.iter().filter(|&&l| l == class).count() as f64;
            for f in 0..5 {
                let n = y.iter().zip(&folds).filter(|(&l, &g)| l == class && g == f).count() as f64;
                assert!((n - total / 5.0).abs() <= 1.0);
            }
        }
        let sizes: Vec<usize> = (0..5).map(|f| folds.iter().filter(|&&g| g == f).count()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(folds, stratified_folds(&y, 5, 3).unwrap());
    }

    #[test]
    fn fold_errors() {
        assert!(matches!(stratified_folds(&[0, 1], 1, 0), Err(EvalError::TooFewFolds(1))));
        assert!(matches!(
            stratified_folds(&[0, 0, 0, 1, 1], 3, 0),
            Err(EvalError::TooFewSamplesPerClass { class: 1, count: 2, needed: 3 })
        ));
    }

    #[test]
    fn split_proportions() {
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 70)).collect();
        let (train, test) = train_test_split(&y, 0.2, 1);
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(test.iter().filter(|&&i| y[i] == 1).count(), 6);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn one_point_grid() {
        let (x, y) = data(1, 60);
        let grid = [GridPoint::Tree(TreeParams::new(Criterion::Gini, 4))];
        let r = grid_search(&x, &y, 3, &grid, 3, 0, true).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.best, grid[0]);
    }

    #[test]
    fn matches_exhaustive_reevaluation() {
        let (x, y) = data(2, 90);
        let grid = vec![
            GridPoint::Forest(ForestParams::new(3, Criterion::Gini)),
            GridPoint::Forest(ForestParams::new(6, Criterion::Gini)),
            GridPoint::Boost(BoostParams::new(2, 2)),
            GridPoint::Boost(BoostParams::new(5, 2)),
            GridPoint::Tree(TreeParams::new(Criterion::Entropy, 3)),
            GridPoint::Tree(TreeParams::new(Criterion::Gini, 6)),
        ];
        let seed = 17;
        let r = grid_search(&x, &y, 3, &grid, 4, seed, true).unwrap();
        let folds = stratified_folds(&y, 4, seed).unwrap();
        let mut oracle = vec![0.0; grid.len()];
        for (i, point) in grid.iter().enumerate() {
            for f in 0..4 {
                let train: Vec<usize> = (0..y.len()).filter(|&r| folds[r] != f).collect();
                let test: Vec<usize> = (0..y.len()).filter(|&r| folds[r] == f).collect();
                let ytr: Vec<usize> = train.iter().map(|&r| y[r]).collect();
                let yte: Vec<usize> = test.iter().map(|&r| y[r]).collect();
                let w = training_weights(&ytr, true).unwrap();
                let model = point
                    .with_seed(derive_seed(seed, f as u64))
                    .fit(&x.select_rows(&train), &ytr, &w, 3)
                    .unwrap();
                let pred = model.predict(&x.select_rows(&test)).unwrap();
                oracle[i] += weighted_f1(&yte, &pred, 3).unwrap();
            }
            oracle[i] /= 4.0;
        }
        assert_eq!(r.scores, oracle);
        let best = (0..grid.len()).fold(0, |b, i| if oracle[i] > oracle[b] { i } else { b });
        assert_eq!(r.best_index, best);
    }

    #[test]
    fn deterministic() {
        let (x, y) = data(3, 50);
        let grid = crate::eval::ClassifierKind::Dt.default_grid();
        assert_eq!(
            grid_search(&x, &y, 3, &grid, 5, 4, true).unwrap(),
            grid_search(&x, &y, 3, &grid, 5, 4, true).unwrap()
        );
    }
}
