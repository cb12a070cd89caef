use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{
    compute_metrics, derive_seed, grid_search, train_test_split, training_weights, ClassifierKind, EvalError,
    GridPoint, Selection, SweepReport, SweepRow,
};
use crate::autoenc::{self, AeConfig};
use crate::ingest::DatasetTable;
use crate::preprocess::{apply_plan, fit_plan, EncodingPlan, FeatureMatrix, FitOptions, PreprocessError};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub classifiers: Vec<ClassifierKind>,
    /// Replaces [`ClassifierKind::default_grid`] for the listed learners.
    pub grids: BTreeMap<ClassifierKind, Vec<GridPoint>>,
    pub k_folds: usize,
    /// Template for every autoencoder; `input_dim`, `latent_dim` and `seed`
    /// are filled in per run.
    pub ae: AeConfig,
    pub seed: u64,
    pub balanced: bool,
}

impl SweepConfig {
    pub fn new(dims: Vec<usize>, classifiers: Vec<ClassifierKind>, seed: u64) -> Self {
        SweepConfig {
            dims,
            classifiers,
            grids: BTreeMap::new(),
            k_folds: 5,
            ae: AeConfig::new(1, 1),
            seed,
            balanced: true,
        }
    }

    pub fn grid(&self, kind: ClassifierKind) -> Vec<GridPoint> {
        self.grids.get(&kind).cloned().unwrap_or_else(|| kind.default_grid())
    }
}

/// Stratified split of a raw table by its `type` column. Rows without a
/// label form their own stratum.
pub fn split_table(
    table: &DatasetTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(DatasetTable, DatasetTable), EvalError> {
    let labels = table.labels().ok_or(PreprocessError::MissingTypeColumn)?;
    let mut names: Vec<Option<&str>> = Vec::new();
    let ids: Vec<usize> = labels
        .iter()
        .map(|l| match names.iter().position(|n| n == l) {
            Some(i) => i,
            None => {
                names.push(*l);
                names.len() - 1
            }
        })
        .collect();
    let (train, test) = train_test_split(&ids, test_fraction, seed);
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

/// Splits `table`, fits a plan on the training part only and encodes both.
pub fn prepare_split(
    table: &DatasetTable,
    test_fraction: f64,
    seed: u64,
    options: &FitOptions,
) -> Result<(FeatureMatrix, FeatureMatrix, EncodingPlan), EvalError> {
    let (train, test) = split_table(table, test_fraction, seed)?;
    let plan = fit_plan(&train, options)?;
    let train = apply_plan(&train, &plan, false)?;
    let test = apply_plan(&test, &plan, false)?;
    Ok((train, test, plan))
}

fn stage(dim: usize, name: &str) -> impl Fn(EvalError) -> EvalError + '_ {
    move |e| EvalError::Stage {
        dim,
        stage: name.to_string(),
        source: Box::new(e),
    }
}

/// For every latent size: trains an autoencoder on `train`, encodes both
/// matrices, grid-searches each classifier on the encoded training rows, refits
/// the winner on all of them and scores it on the encoded test rows.
///
/// Rows come out dim-major in the requested orders. Dims run in parallel;
/// every seed is derived from `config.seed`, the dim and the classifier, so
/// the result does not depend on scheduling.
pub fn sweep(train: &FeatureMatrix, test: &FeatureMatrix, config: &SweepConfig) -> Result<SweepReport, EvalError> {
    let mut test = test.clone();
    test.align_classes(&train.classes);
    let n_classes = test.classes.len();
    let per_dim: Vec<Vec<SweepRow>> = config
        .dims
        .par_iter()
        .map(|&dim| sweep_dim(train, &test, n_classes, dim, config))
        .collect::<Result<_, _>>()?;
    Ok(SweepReport {
        rows: per_dim.into_iter().flatten().collect(),
    })
}

fn sweep_dim(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    n_classes: usize,
    dim: usize,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>, EvalError> {
    let dim_seed = config.seed ^ dim as u64;
    let mut ae = config.ae.clone();
    ae.input_dim = train.values.cols();
    ae.latent_dim = dim;
    ae.seed = dim_seed;
    let encoded = (|| -> Result<_, EvalError> {
        let (model, _) = autoenc::train(&train.values, &ae)?;
        Ok((autoenc::encode(&model, &train.values)?, autoenc::encode(&model, &test.values)?))
    })()
    .map_err(stage(dim, "autoencoder"))?;
    let (z_train, z_test) = encoded;

    let mut rows = Vec::with_capacity(config.classifiers.len());
    for &kind in &config.classifiers {
        let seed = derive_seed(dim_seed, kind as u64);
        let row = (|| -> Result<SweepRow, EvalError> {
            let search = grid_search(
                &z_train,
                &train.labels,
                n_classes,
                &config.grid(kind),
                config.k_folds,
                seed,
                config.balanced,
            )?;
            let weights = training_weights(&train.labels, config.balanced)?;
            let model = search
                .best
                .with_seed(derive_seed(seed, config.k_folds as u64))
                .fit(&z_train, &train.labels, &weights, n_classes)?;
            let m = compute_metrics(&test.labels, &model.predict(&z_test)?, n_classes)?;
            Ok(SweepRow {
                dim,
                classifier: kind,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                selection: Some(Selection {
                    params: search.best,
                    cv_f1: search.scores[search.best_index],
                }),
            })
        })()
        .map_err(stage(dim, kind.title()))?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::trees::{Criterion, TreeParams};

    fn blobs(n: usize, offset: f64) -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let jitter = ((i * 7919) % 97) as f64 / 970.0 + offset;
            rows.push([0.1 + 0.7 * c as f64 + jitter, 0.8 - 0.7 * c as f64 + jitter, 0.5]);
            labels.push(c);
        }
        FeatureMatrix {
            column_names: vec!["a".into(), "b".into(), "c".into()],
            values: Matrix::from_rows(&rows),
            labels,
            classes: vec!["normal".into(), "dos".into()],
        }
    }

    fn small_config(dims: Vec<usize>) -> SweepConfig {
        let mut cfg = SweepConfig::new(dims, vec![ClassifierKind::Dt], 5);
        cfg.ae.hidden_widths = vec![4];
        cfg.ae.epochs = 5;
        cfg.k_folds = 3;
        cfg.grids.insert(
            ClassifierKind::Dt,
            vec![GridPoint::Tree(TreeParams::new(Criterion::Gini, 4))],
        );
        cfg
    }

    #[test]
    fn empty_dims_give_empty_report() {
        let r = sweep(&blobs(30, 0.0), &blobs(10, 0.01), &small_config(vec![])).unwrap();
        assert!(r.rows.is_empty());
    }

    #[test]
    fn one_row_per_cell_in_order() {
        let mut cfg = small_config(vec![2, 1]);
        cfg.classifiers = vec![ClassifierKind::Dt, ClassifierKind::Dt];
        let r = sweep(&blobs(60, 0.0), &blobs(20, 0.01), &cfg).unwrap();
        let keys: Vec<usize> = r.rows.iter().map(|row| row.dim).collect();
        assert_eq!(keys, [2, 2, 1, 1]);
        assert_eq!(r, sweep(&blobs(60, 0.0), &blobs(20, 0.01), &cfg).unwrap());
    }

    #[test]
    fn stage_errors_name_the_dim() {
        let mut train = blobs(4, 0.0);
        train.labels = vec![0, 0, 0, 1];
        let err = sweep(&train, &blobs(4, 0.0), &small_config(vec![3])).unwrap_err();
        match err {
            EvalError::Stage { dim, stage, .. } => assert_eq!((dim, stage.as_str()), (3, "DT")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn split_is_stratified_by_label_text() {
        let mut t = DatasetTable::new(vec!["x".into(), "type".into()]).unwrap();
        for i in 0..50 {
            let label = if i % 5 == 0 { "dos" } else { "normal" };
            t.rows.push(vec![Some(i.to_string()), Some(label.into())]);
        }
        let (train, test) = split_table(&t, 0.2, 9).unwrap();
        assert_eq!((train.len(), test.len()), (40, 10));
        let dos = test.labels().unwrap().iter().filter(|l| **l == Some("dos")).count();
        assert_eq!(dos, 2);
    }
}
