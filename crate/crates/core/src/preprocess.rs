//! Turning a [`DatasetTable`] into a normalized numeric [`FeatureMatrix`].
//!
//! [`fit_plan`] inspects a training table once and records every decision in
//! an [`EncodingPlan`]; [`apply_plan`] replays that plan on any table with the
//! same input columns, so test data never influences the encoding.
//!
//! Per input column the plan picks one treatment:
//!
//! * MAC address columns (every non-null value looks like `aa:bb:cc:dd:ee:ff`)
//!   become the 48-bit integer of the stripped hex string.
//! * Categorical columns expand into one 0/1 column per value seen at fit time.
//!   A null or unseen value yields an all-zero group.
//! * Every other column must parse as a finite number.
//!
//! Columns with a single distinct value (or nothing but nulls) are dropped.
//! The retained columns are min-max scaled with the fitted range, nulls map to
//! 0 and results are clamped to `[0, 1]`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, parse_mac, DatasetTable, IngestError, TIME_RELATIVE_COLUMN, TYPE_COLUMN};
use crate::matrix::Matrix;

pub const DEFAULT_CATEGORICAL_COLUMNS: [&str; 6] = [
    "coap.opt.ctype",
    "coap.opt.desc",
    "coap.opt.name",
    "coap.opt.uri_path",
    "coap.payload_desc",
    "coap.token",
];

/// Capture-clock columns left out by default.
pub const DEFAULT_EXCLUDED_COLUMNS: [&str; 2] = ["frame.time_epoch", TIME_RELATIVE_COLUMN];

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("table has no rows")]
    EmptyTable,
    #[error("table has no `type` column")]
    MissingTypeColumn,
    #[error("row {row}: empty `type` cell")]
    MissingLabel { row: usize },
    #[error("column `{column}`, row {row}: `{value}` is not a finite number")]
    NonNumericResidue {
        column: String,
        row: usize,
        value: String,
    },
    #[error("row {row}: class `{label}` is not in the plan")]
    UnknownClassLabel { row: usize, label: String },
    #[error("input column `{0}` is missing")]
    MissingColumn(String),
    #[error("plan version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("plan: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Which columns get which treatment at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub categorical_columns: Vec<String>,
    pub excluded_columns: Vec<String>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            categorical_columns: DEFAULT_CATEGORICAL_COLUMNS.map(String::from).to_vec(),
            excluded_columns: DEFAULT_EXCLUDED_COLUMNS.map(String::from).to_vec(),
        }
    }
}

/// Where one output feature comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSource {
    Numeric { column: String },
    Mac { column: String },
    OneHot { column: String, value: String },
}

impl FeatureSource {
    pub fn column(&self) -> &str {
        match self {
            FeatureSource::Numeric { column }
            | FeatureSource::Mac { column }
            | FeatureSource::OneHot { column, .. } => column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub version: u32,
    /// Input columns the plan reads, in table order, without `type`.
    pub input_columns: Vec<String>,
    pub excluded_columns: Vec<String>,
    pub mac_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub category_maps: BTreeMap<String, Vec<String>>,
    pub dropped_columns: Vec<String>,
    pub retained_columns: Vec<String>,
    pub sources: Vec<FeatureSource>,
    pub min_max: Vec<(f64, f64)>,
    pub label_classes: Vec<String>,
}

impl EncodingPlan {
    pub fn width(&self) -> usize {
        self.retained_columns.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PreprocessError> {
        let plan: EncodingPlan = serde_json::from_str(text)?;
        if plan.version != PLAN_VERSION {
            return Err(PreprocessError::UnsupportedVersion(plan.version));
        }
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PreprocessError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Normalized features with integer labels indexing `classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub values: Matrix,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            values: self.values.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    /// Re-indexes labels against `classes`, appending names it lacks.
    pub fn align_classes(&mut self, classes: &[String]) {
        let mut target = classes.to_vec();
        let mapping: Vec<usize> = self
            .classes
            .iter()
            .map(|c| match target.iter().position(|t| t == c) {
                Some(i) => i,
                None => {
                    target.push(c.clone());
                    target.len() - 1
                }
            })
            .collect();
        for l in &mut self.labels {
            *l = mapping[*l];
        }
        self.classes = target;
    }

    pub fn to_table(&self) -> DatasetTable {
        let mut columns = self.column_names.clone();
        columns.push(TYPE_COLUMN.to_string());
        let rows = self
            .values
            .iter_rows()
            .zip(&self.labels)
            .map(|(r, &l)| {
                r.iter()
                    .map(|v| Some(v.to_string()))
                    .chain(std::iter::once(Some(self.classes[l].clone())))
                    .collect()
            })
            .collect();
        DatasetTable { columns, rows }
    }

    /// Reads a matrix table: every column except `type` is a number.
    pub fn from_table(table: &DatasetTable) -> Result<Self, PreprocessError> {
        let type_idx = table
            .column_index(TYPE_COLUMN)
            .ok_or(PreprocessError::MissingTypeColumn)?;
        let feature_idx: Vec<usize> = (0..table.columns.len()).filter(|&i| i != type_idx).collect();
        let mut data = Vec::with_capacity(table.len() * feature_idx.len());
        let mut classes: Vec<String> = Vec::new();
        let mut labels = Vec::with_capacity(table.len());
        for (row, cells) in table.rows.iter().enumerate() {
            for &j in &feature_idx {
                let text = cells[j].as_deref().unwrap_or("");
                data.push(parse_number(text).ok_or_else(|| PreprocessError::NonNumericResidue {
                    column: table.columns[j].clone(),
                    row,
                    value: text.to_string(),
                })?);
            }
            let label = cells[type_idx]
                .as_deref()
                .ok_or(PreprocessError::MissingLabel { row })?;
            labels.push(class_id(&mut classes, label));
        }
        Ok(FeatureMatrix {
            column_names: feature_idx.iter().map(|&j| table.columns[j].clone()).collect(),
            values: Matrix::from_vec(table.len(), feature_idx.len(), data),
            labels,
            classes,
        })
    }

    pub fn read_csv_from(reader: impl Read) -> Result<Self, PreprocessError> {
        Self::from_table(&ingest::read_csv_from(reader, true)?)
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<(), PreprocessError> {
        Ok(ingest::write_csv_to(&self.to_table(), writer)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        Self::read_csv_from(BufReader::new(File::open(path)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PreprocessError> {
        self.write_csv_to(BufWriter::new(File::create(path)?))
    }
}

fn class_id(classes: &mut Vec<String>, label: &str) -> usize {
    match classes.iter().position(|c| c == label) {
        Some(i) => i,
        None => {
            classes.push(label.to_string());
            classes.len() - 1
        }
    }
}

fn parse_number(text: &str) -> Option<f64> {
    text.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn mac_to_number(text: &str) -> Option<f64> {
    let mac = parse_mac(text)?;
    Some(mac.iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b)) as f64)
}

fn is_mac_column(table: &DatasetTable, j: usize) -> bool {
    let mut seen = false;
    for row in &table.rows {
        if let Some(text) = row[j].as_deref() {
            if parse_mac(text).is_none() {
                return false;
            }
            seen = true;
        }
    }
    seen
}

/// Fits the encoding on `table`.
pub fn fit_plan(table: &DatasetTable, options: &FitOptions) -> Result<EncodingPlan, PreprocessError> {
    if table.is_empty() {
        return Err(PreprocessError::EmptyTable);
    }
    let type_idx = table
        .column_index(TYPE_COLUMN)
        .ok_or(PreprocessError::MissingTypeColumn)?;
    let mut label_classes = Vec::new();
    for (row, cells) in table.rows.iter().enumerate() {
        let label = cells[type_idx]
            .as_deref()
            .ok_or(PreprocessError::MissingLabel { row })?;
        class_id(&mut label_classes, label);
    }

    let mut plan = EncodingPlan {
        version: PLAN_VERSION,
        input_columns: Vec::new(),
        excluded_columns: Vec::new(),
        mac_columns: Vec::new(),
        categorical_columns: Vec::new(),
        category_maps: BTreeMap::new(),
        dropped_columns: Vec::new(),
        retained_columns: Vec::new(),
        sources: Vec::new(),
        min_max: Vec::new(),
        label_classes,
    };

    for (j, name) in table.columns.iter().enumerate() {
        if j == type_idx {
            continue;
        }
        if options.excluded_columns.contains(name) {
            plan.excluded_columns.push(name.clone());
            continue;
        }
        plan.input_columns.push(name.clone());
        let cells = table.rows.iter().map(|r| r[j].as_deref());

        if options.categorical_columns.contains(name) {
            let mut values: Vec<String> = Vec::new();
            let mut seen = HashSet::new();
            let mut has_null = false;
            for cell in cells {
                match cell {
                    Some(v) => {
                        if seen.insert(v) {
                            values.push(v.to_string());
                        }
                    }
                    None => has_null = true,
                }
            }
            if values.is_empty() || (values.len() == 1 && !has_null) {
                plan.dropped_columns.push(name.clone());
                continue;
            }
            for v in &values {
                plan.retained_columns.push(format!("{name}={v}"));
                plan.sources.push(FeatureSource::OneHot {
                    column: name.clone(),
                    value: v.clone(),
                });
                plan.min_max.push((0.0, 1.0));
            }
            plan.categorical_columns.push(name.clone());
            plan.category_maps.insert(name.clone(), values);
            continue;
        }

        let mac = is_mac_column(table, j);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (row, cell) in cells.enumerate() {
            let Some(text) = cell else { continue };
            let parsed = if mac { mac_to_number(text) } else { parse_number(text) };
            let v = parsed.ok_or_else(|| PreprocessError::NonNumericResidue {
                column: name.clone(),
                row,
                value: text.to_string(),
            })?;
            min = min.min(v);
            max = max.max(v);
        }
        // At most one distinct value (or none) carries no information.
        if !(min < max) {
            plan.dropped_columns.push(name.clone());
            continue;
        }
        plan.retained_columns.push(name.clone());
        plan.sources.push(if mac {
            plan.mac_columns.push(name.clone());
            FeatureSource::Mac {
                column: name.clone(),
            }
        } else {
            FeatureSource::Numeric {
                column: name.clone(),
            }
        });
        plan.min_max.push((min, max));
    }
    Ok(plan)
}

fn scale(v: f64, (min, max): (f64, f64)) -> f64 {
    if max > min {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Encodes `table` with a fitted plan.
///
/// With `strict_labels`, a `type` value missing from `plan.label_classes` is
/// an error; otherwise it is appended to the matrix's class list.
pub fn apply_plan(
    table: &DatasetTable,
    plan: &EncodingPlan,
    strict_labels: bool,
) -> Result<FeatureMatrix, PreprocessError> {
    let type_idx = table
        .column_index(TYPE_COLUMN)
        .ok_or(PreprocessError::MissingTypeColumn)?;
    let index: HashMap<&str, usize> = table
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| (c.as_str(), j))
        .collect();
    for c in &plan.input_columns {
        if !index.contains_key(c.as_str()) {
            return Err(PreprocessError::MissingColumn(c.clone()));
        }
    }
    let source_idx: Vec<usize> = plan.sources.iter().map(|s| index[s.column()]).collect();

    let width = plan.width();
    let mut data = Vec::with_capacity(table.len() * width);
    let mut classes = plan.label_classes.clone();
    let mut labels = Vec::with_capacity(table.len());
    for (row, cells) in table.rows.iter().enumerate() {
        for ((source, &j), &range) in plan.sources.iter().zip(&source_idx).zip(&plan.min_max) {
            let cell = cells[j].as_deref();
            let v = match (source, cell) {
                (FeatureSource::OneHot { value, .. }, _) => {
                    if cell == Some(value.as_str()) {
                        1.0
                    } else {
                        0.0
                    }
                }
                (_, None) => 0.0,
                (FeatureSource::Mac { column }, Some(text))
                | (FeatureSource::Numeric { column }, Some(text)) => {
                    let parsed = if matches!(source, FeatureSource::Mac { .. }) {
                        mac_to_number(text)
                    } else {
                        parse_number(text)
                    };
                    let x = parsed.ok_or_else(|| PreprocessError::NonNumericResidue {
                        column: column.clone(),
                        row,
                        value: text.to_string(),
                    })?;
                    scale(x, range)
                }
            };
            data.push(v);
        }
        let label = cells[type_idx]
            .as_deref()
            .ok_or(PreprocessError::MissingLabel { row })?;
        let id = match classes.iter().position(|c| c == label) {
            Some(id) => id,
            None if strict_labels => {
                return Err(PreprocessError::UnknownClassLabel {
                    row,
                    label: label.to_string(),
                })
            }
            None => class_id(&mut classes, label),
        };
        labels.push(id);
    }
    Ok(FeatureMatrix {
        column_names: plan.retained_columns.clone(),
        values: Matrix::from_vec(table.len(), width, data),
        labels,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(columns: &[&str], rows: &[&[&str]]) -> DatasetTable {
        DatasetTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| (!c.is_empty()).then(|| c.to_string()))
                        .collect()
                })
                .collect(),
        }
    }

    fn opts(categorical: &[&str]) -> FitOptions {
        FitOptions {
            categorical_columns: categorical.iter().map(|c| c.to_string()).collect(),
            excluded_columns: Vec::new(),
        }
    }

    #[test]
    fn mac_becomes_integer() {
        let t = table(
            &["eth.src", "type"],
            &[&["00:00:00:00:00:ff", "normal"], &["00:00:00:00:00:00", "dos"]],
        );
        let plan = fit_plan(&t, &opts(&[])).unwrap();
        assert_eq!(plan.mac_columns, ["eth.src"]);
        assert_eq!(plan.min_max, [(0.0, 255.0)]);
        assert_eq!(mac_to_number("00:00:00:00:00:ff"), Some(255.0));
        assert_eq!(mac_to_number("01:00:00:00:00:00"), Some((1u64 << 40) as f64));
    }

    #[test]
    fn constant_column_is_dropped() {
        let t = table(&["a", "b", "type"], &[&["7", "1", "x"], &["7", "2", "y"], &["7", "3", "x"]]);
        let plan = fit_plan(&t, &opts(&[])).unwrap();
        assert_eq!(plan.dropped_columns, ["a"]);
        assert_eq!(plan.retained_columns, ["b"]);
    }

    #[test]
    fn all_null_columns_are_dropped() {
        let t = table(&["a", "c", "type"], &[&["", "", "x"], &["", "", "y"]]);
        let plan = fit_plan(&t, &opts(&["c"])).unwrap();
        assert_eq!(plan.dropped_columns, ["a", "c"]);
        assert!(plan.retained_columns.is_empty());
    }

    #[test]
    fn categorical_expands_per_value() {
        let t = table(
            &["m", "type"],
            &[&["GET", "x"], &["POST", "x"], &["PUT", "y"], &["GET", "y"]],
        );
        let plan = fit_plan(&t, &opts(&["m"])).unwrap();
        assert_eq!(plan.retained_columns, ["m=GET", "m=POST", "m=PUT"]);
        let fm = apply_plan(&t, &plan, true).unwrap();
        assert_eq!(
            fm.values.to_rows(),
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0]
            ]
        );
    }

    #[test]
    fn single_value_with_nulls_is_kept() {
        let t = table(&["m", "type"], &[&["GET", "x"], &["", "y"]]);
        let plan = fit_plan(&t, &opts(&["m"])).unwrap();
        assert_eq!(plan.retained_columns, ["m=GET"]);
        let fm = apply_plan(&t, &plan, true).unwrap();
        assert_eq!(fm.values.column(0), vec![1.0, 0.0]);
    }

    #[test]
    fn min_max_scaling() {
        let t = table(&["v", "type"], &[&["2", "a"], &["4", "a"], &["6", "b"]]);
        let plan = fit_plan(&t, &opts(&[])).unwrap();
        let fm = apply_plan(&t, &plan, true).unwrap();
        assert_eq!(fm.values.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(fm.labels, vec![0, 0, 1]);
        assert_eq!(fm.classes, ["a", "b"]);
    }

    #[test]
    fn apply_time_edge_cases() {
        let train = table(&["v", "m", "type"], &[&["2", "GET", "a"], &["6", "PUT", "b"]]);
        let plan = fit_plan(&train, &opts(&["m"])).unwrap();
        let test = table(
            &["v", "m", "type"],
            &[&["", "POST", "a"], &["10", "GET", "b"], &["-3", "", "a"]],
        );
        let fm = apply_plan(&test, &plan, true).unwrap();
        assert_eq!(
            fm.values.to_rows(),
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0]
            ]
        );
    }

    #[test]
    fn degenerate_range_gives_zero() {
        assert_eq!(scale(5.0, (3.0, 3.0)), 0.0);
    }

    #[test]
    fn non_numeric_residue() {
        let t = table(&["v", "type"], &[&["1", "a"], &["abc", "b"]]);
        assert!(matches!(
            fit_plan(&t, &opts(&[])),
            Err(PreprocessError::NonNumericResidue { row: 1, .. })
        ));
        let nan = table(&["v", "type"], &[&["1", "a"], &["NaN", "b"]]);
        assert!(fit_plan(&nan, &opts(&[])).is_err());
    }

    #[test]
    fn fit_errors() {
        let empty = table(&["v", "type"], &[]);
        assert!(matches!(fit_plan(&empty, &opts(&[])), Err(PreprocessError::EmptyTable)));
        let unlabeled = table(&["v"], &[&["1"]]);
        assert!(matches!(
            fit_plan(&unlabeled, &opts(&[])),
            Err(PreprocessError::MissingTypeColumn)
        ));
    }

    #[test]
    fn unknown_labels() {
        let train = table(&["v", "type"], &[&["1", "a"], &["2", "b"]]);
        let plan = fit_plan(&train, &opts(&[])).unwrap();
        let test = table(&["v", "type"], &[&["1", "c"], &["2", "a"]]);
        assert!(matches!(
            apply_plan(&test, &plan, true),
            Err(PreprocessError::UnknownClassLabel { row: 0, .. })
        ));
        let fm = apply_plan(&test, &plan, false).unwrap();
        assert_eq!(fm.classes, ["a", "b", "c"]);
        assert_eq!(fm.labels, [2, 0]);
    }

    #[test]
    fn missing_input_column() {
        let train = table(&["v", "w", "type"], &[&["1", "1", "a"], &["2", "1", "b"]]);
        let plan = fit_plan(&train, &opts(&[])).unwrap();
        let test = table(&["v", "type"], &[&["1", "a"]]);
        assert!(matches!(
            apply_plan(&test, &plan, true),
            Err(PreprocessError::MissingColumn(c)) if c == "w"
        ));
    }

    #[test]
    fn excluded_columns_are_ignored() {
        let t = table(
            &["frame.time_relative", "v", "type"],
            &[&["0.5", "1", "a"], &["1.5", "2", "b"]],
        );
        let plan = fit_plan(&t, &FitOptions::default()).unwrap();
        assert_eq!(plan.excluded_columns, ["frame.time_relative"]);
        assert_eq!(plan.input_columns, ["v"]);
    }

    #[test]
    fn plan_json_round_trip() {
        let t = table(
            &["eth.src", "m", "v", "type"],
            &[
                &["00:00:00:00:00:01", "GET", "0.1", "a"],
                &["00:00:00:00:00:02", "", "0.30000000000000004", "b"],
            ],
        );
        let plan = fit_plan(&t, &opts(&["m"])).unwrap();
        assert_eq!(EncodingPlan::from_json(&plan.to_json()).unwrap(), plan);
    }

    #[test]
    fn matrix_csv_round_trip() {
        let t = table(&["v", "w", "type"], &[&["1", "3", "a"], &["2", "7", "b"], &["1.3", "4", "b"]]);
        let plan = fit_plan(&t, &opts(&[])).unwrap();
        let fm = apply_plan(&t, &plan, true).unwrap();
        let mut buf = Vec::new();
        fm.write_csv_to(&mut buf).unwrap();
        assert_eq!(FeatureMatrix::read_csv_from(buf.as_slice()).unwrap(), fm);
    }

    #[test]
    fn align_classes_remaps() {
        let mut fm = FeatureMatrix {
            column_names: vec![],
            values: Matrix::zeros(3, 0),
            labels: vec![0, 1, 2],
            classes: vec!["dos".into(), "normal".into(), "x".into()],
        };
        fm.align_classes(&["normal".into(), "dos".into()]);
        assert_eq!(fm.classes, ["normal", "dos", "x"]);
        assert_eq!(fm.labels, [1, 0, 2]);
    }
}
