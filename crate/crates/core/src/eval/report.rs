use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ClassifierKind, EvalError, GridPoint};

/// Cells at or above this value are marked in the table.
pub const HIGHLIGHT_THRESHOLD: f64 = 0.99;

const CSV_HEADER: [&str; 6] = ["dim", "classifier", "precision", "recall", "f1", "highlighted"];

/// Hyperparameters chosen by the grid search and their mean CV score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub params: GridPoint,
    pub cv_f1: f64,
}

/// Weighted held-out scores of one (latent dim, classifier) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dim: usize,
    pub classifier: ClassifierKind,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when read back from CSV.
    pub selection: Option<Selection>,
}

impl SweepRow {
    pub fn highlighted(&self) -> bool {
        [self.precision, self.recall, self.f1]
            .iter()
            .all(|&v| v >= HIGHLIGHT_THRESHOLD)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Mean of each metric over the classifiers at one latent dim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimMeans {
    pub dim: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SweepReport {
    pub fn get(&self, dim: usize, classifier: ClassifierKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.dim == dim && r.classifier == classifier)
    }

    /// Distinct dims in first-seen order.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::new();
        for r in &self.rows {
            if !dims.contains(&r.dim) {
                dims.push(r.dim);
            }
        }
        dims
    }

    /// Distinct classifiers in DT, RF, XGB order.
    pub fn classifiers(&self) -> Vec<ClassifierKind> {
        ClassifierKind::ALL
            .into_iter()
            .filter(|k| self.rows.iter().any(|r| r.classifier == *k))
            .collect()
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<(), EvalError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.dim.to_string(),
                r.classifier.to_string(),
                format!("{:.6}", r.precision),
                format!("{:.6}", r.recall),
                format!("{:.6}", r.f1),
                r.highlighted().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a report CSV. The `highlighted` column is checked against the
    /// metrics rather than trusted.
    pub fn read_csv_from(reader: impl Read) -> Result<Self, EvalError> {
        let mut r = csv::ReaderBuilder::new().from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header != CSV_HEADER {
            return Err(EvalError::Report(format!(
                "expected columns {}, found {}",
                CSV_HEADER.join(","),
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let bad = |what: &str| EvalError::Report(format!("line {line}: bad {what}"));
            let num = |j: usize, what: &str| -> Result<f64, EvalError> {
                record[j].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(what))
            };
            let row = SweepRow {
                dim: record[0].parse().map_err(|_| bad("dim"))?,
                classifier: record[1].parse().map_err(|_| bad("classifier"))?,
                precision: num(2, "precision")?,
                recall: num(3, "recall")?,
                f1: num(4, "f1")?,
                selection: None,
            };
            let flag: bool = record[5].parse().map_err(|_| bad("highlighted"))?;
            if flag != row.highlighted() {
                return Err(bad("highlighted flag"));
            }
            rows.push(row);
        }
        Ok(SweepReport { rows })
    }

    pub fn per_dim_means(&self) -> Vec<DimMeans> {
        self.dims()
            .into_iter()
            .map(|dim| {
                let cells: Vec<&SweepRow> = self.rows.iter().filter(|r| r.dim == dim).collect();
                let n = cells.len() as f64;
                let mean = |f: fn(&SweepRow) -> f64| cells.iter().map(|r| f(r)).sum::<f64>() / n;
                DimMeans {
                    dim,
                    precision: mean(|r| r.precision),
                    recall: mean(|r| r.recall),
                    f1: mean(|r| r.f1),
                }
            })
            .collect()
    }

    /// Per-dim means as `dim,precision,recall,f1` CSV, ready for plotting.
    pub fn mean_series_csv(&self) -> String {
        let mut out = String::from("dim,precision,recall,f1\n");
        for m in self.per_dim_means() {
            writeln!(out, "{},{:.6},{:.6},{:.6}", m.dim, m.precision, m.recall, m.f1).unwrap();
        }
        out
    }

    /// Monospace table: one row per latent dim, column groups for precision,
    /// recall and F-score, one column per classifier inside each group. Values
    /// at or above 0.99 carry a `*`; missing cells show `-`.
    pub fn table(&self) -> String {
        let kinds = self.classifiers();
        let cell_w = 8;
        let group_w = kinds.len() * (cell_w + 1) - 1;
        let mut out = String::new();
        writeln!(out, "Weighted scores on the held-out test split (* >= {HIGHLIGHT_THRESHOLD})").unwrap();
        let mut line = format!("{:<8}", "");
        for group in ["PRECISION", "RECALL", "F-SCORE"] {
            write!(line, " | {group:^group_w$}").unwrap();
        }
        writeln!(out, "{}", line.trim_end()).unwrap();
        let mut line = format!("{:<8}", "Features");
        for _ in 0..3 {
            line.push_str(" |");
            for k in &kinds {
                write!(line, " {:>cell_w$}", k.title()).unwrap();
            }
        }
        writeln!(out, "{line}").unwrap();
        writeln!(out, "{}", "-".repeat(line.len())).unwrap();
        let mut dims = self.dims();
        dims.sort_unstable();
        for dim in dims {
            let mut line = format!("{dim:<8}");
            for metric in [|r: &SweepRow| r.precision, |r: &SweepRow| r.recall, |r: &SweepRow| r.f1] {
                line.push_str(" |");
                for &k in &kinds {
                    let text = match self.get(dim, k) {
                        Some(r) => {
                            let v = metric(r);
                            let mark = if v >= HIGHLIGHT_THRESHOLD { "*" } else { " " };
                            format!("{v:.4}{mark}")
                        }
                        None => "-".to_string(),
                    };
                    write!(line, " {text:>cell_w$}").unwrap();
                }
            }
            writeln!(out, "{line}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dim: usize, classifier: ClassifierKind, v: f64) -> SweepRow {
        SweepRow {
            dim,
            classifier,
            precision: v,
            recall: v - 0.001,
            f1: v - 0.002,
            selection: None,
        }
    }

    fn sample() -> SweepReport {
        SweepReport {
            rows: vec![
                row(1, ClassifierKind::Dt, 0.7),
                row(1, ClassifierKind::Rf, 0.75),
                row(4, ClassifierKind::Dt, 0.995),
                row(4, ClassifierKind::Rf, 0.9925),
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = sample();
        let text = r.to_csv();
        assert!(text.starts_with("dim,classifier,precision,recall,f1,highlighted\n1,dt,0.700000,0.699000,0.698000,false\n"));
        let back = SweepReport::read_csv_from(text.as_bytes()).unwrap();
        assert_eq!(back.to_csv(), text);
        assert_eq!(back.rows[3].highlighted(), true);
        assert_eq!(back.rows[0].highlighted(), false);
    }

    #[test]
    fn highlight_needs_all_three() {
        let mut r = row(2, ClassifierKind::Xgb, 0.991);
        assert!(!r.highlighted());
        r.f1 = 0.99;
        r.recall = 0.99;
        assert!(r.highlighted());
    }

    #[test]
    fn rejects_inconsistent_flag() {
        let text = "dim,classifier,precision,recall,f1,highlighted\n1,dt,0.5,0.5,0.5,true\n";
        assert!(SweepReport::read_csv_from(text.as_bytes()).is_err());
        let text = "dim,model,precision,recall,f1,highlighted\n";
        assert!(SweepReport::read_csv_from(text.as_bytes()).is_err());
    }

    #[test]
    fn means_per_dim() {
        let m = sample().per_dim_means();
        assert_eq!(m.len(), 2);
        assert!((m[0].precision - 0.725).abs() < 1e-12);
        assert!((m[1].f1 - (0.993 + 0.9905) / 2.0).abs() < 1e-12);
        assert!(sample().mean_series_csv().starts_with("dim,precision,recall,f1\n1,0.725000,"));
    }

    #[test]
    fn table_layout() {
        let t = sample().table();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].contains("PRECISION") && lines[1].contains("F-SCORE"));
        assert_eq!(lines[2].matches("RF").count(), 3);
        assert!(lines[4].starts_with("1 "));
        assert_eq!(lines[5].matches('*').count(), 6);
        assert!(!lines[4].contains('*'));
    }
}
