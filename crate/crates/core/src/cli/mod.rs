//! The `coap-latent` command line.
//!
//! Every subcommand reads its inputs from files (or stdin for `-`) and writes
//! one artifact to `--out` (stdout by default), so stages chain through pipes
//! and any stage can be fed externally produced CSVs. Progress goes to stderr.
//!
//! Exit codes: 0 success, 1 data or model error, 2 usage error.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autoenc::{self, AeConfig, AeModel};
use crate::eval::{
    self, compute_metrics, derive_seed, grid_search, split_table, training_weights,
    ClassifierKind, MetricsReport, Selection, SweepConfig, SweepReport,
};
use crate::ingest::{self, DatasetTable, LabelWindow};
use crate::preprocess::{apply_plan, fit_plan, EncodingPlan, FeatureMatrix, FitOptions};
use crate::traffic_synth::{synthesize_preset, AttackKind, Preset};
use crate::trees::Model;
use config::{ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_DIMS: [usize; 5] = [1, 2, 3, 4, 8];
const DEFAULT_TEST_FRACTION: f64 = 0.2;
const DEFAULT_K_FOLDS: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "coap-latent", version, about = "CoAP attack detection on autoencoder latent features")]
struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "K")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Output path, `-` for stdout.
    #[arg(short, long = "out", value_name = "PATH", default_value = "-")]
    out: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled frame log from a preset scenario.
    Synth {
        #[arg(long)]
        preset: Option<Preset>,
        #[command(flatten)]
        output: Output,
    },
    /// Dissect a frame log into the flat dataset CSV.
    Dissect {
        #[arg(default_value = "-")]
        input: String,
        /// Relabel rows by time window, `kind:start:end` in seconds since
        /// capture start. Repeatable.
        #[arg(long = "window", value_name = "KIND:START:END", value_parser = parse_window)]
        windows: Vec<LabelWindow>,
        #[command(flatten)]
        output: Output,
    },
    /// Stratified train/test split of a dataset CSV.
    Split {
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, value_name = "F")]
        test_fraction: Option<f64>,
        #[arg(long, value_name = "PATH")]
        train: PathBuf,
        #[arg(long, value_name = "PATH")]
        test: PathBuf,
    },
    /// Encode a dataset CSV into a normalized feature matrix.
    Preprocess {
        #[arg(default_value = "-")]
        input: String,
        /// Fit a new plan on the input and write it to `--plan`.
        #[arg(long)]
        fit: bool,
        #[arg(long, value_name = "PATH")]
        plan: Option<PathBuf>,
        /// Reject labels the plan has not seen.
        #[arg(long)]
        strict_labels: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Train an autoencoder on a feature matrix.
    TrainAe {
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, value_name = "N")]
        latent: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Replace a feature matrix by its latent codes.
    Encode {
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Grid-search and fit one classifier.
    TrainClf {
        #[arg(default_value = "-")]
        input: String,
        #[arg(long)]
        classifier: Option<ClassifierKind>,
        #[command(flatten)]
        output: Output,
    },
    /// Score a fitted classifier on a labeled matrix.
    Evaluate {
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep latent sizes and classifiers and write the report CSV.
    ///
    /// The data is a dataset CSV, the `--preset` scenario when no input is
    /// given, or already preprocessed `--train`/`--test` matrices.
    Sweep {
        input: Option<String>,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long, value_name = "PATH", requires = "test", conflicts_with_all = ["input", "preset"])]
        train: Option<PathBuf>,
        #[arg(long, value_name = "PATH", requires = "train")]
        test: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_name = "N,..")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_name = "KIND,..")]
        classifiers: Vec<ClassifierKind>,
        #[arg(long, value_name = "F")]
        test_fraction: Option<f64>,
        #[arg(long)]
        strict_labels: bool,
        /// Also write the full report, with selected hyperparameters, as JSON.
        #[arg(long, value_name = "PATH")]
        details: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Render a report CSV.
    Report {
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    /// Monospace table, one row per latent size.
    Table,
    /// The report CSV itself, re-validated.
    Csv,
    /// Per-dim means over classifiers.
    Means,
}

fn parse_window(text: &str) -> Result<LabelWindow, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [kind, start, end] = parts[..] else {
        return Err("expected KIND:START:END".into());
    };
    let kind: AttackKind = kind.parse()?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let (start, end) = (num(start)?, num(end)?);
    if !(start.is_finite() && end.is_finite() && start < end) {
        return Err("window needs finite START < END".into());
    }
    Ok(LabelWindow::new(kind, start, end))
}

/// A fitted classifier with what is needed to apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArtifact {
    pub version: u32,
    pub columns: Vec<String>,
    pub classes: Vec<String>,
    pub selection: Selection,
    pub model: Model,
}

/// Output of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub classes: Vec<String>,
    pub metrics: MetricsReport,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(format!("config: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn note(msg: impl std::fmt::Display) {
    eprintln!("coap-latent: {msg}");
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: coap-latent [OPTIONS] <COMMAND>\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn execute(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Runner {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        config,
    };
    let jobs = cli.jobs.or(ctx.config.eval_jobs);
    match jobs {
        Some(0) => usage("--jobs must be at least 1"),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| anyhow!("thread pool: {e}"))?;
            pool.install(|| ctx.dispatch(cli.command))
        }
        None => ctx.dispatch(cli.command),
    }
}

struct Runner {
    seed: u64,
    config: RunConfig,
}

fn open_input(path: &str) -> anyhow::Result<Box<dyn Read>> {
    if path == "-" {
        Ok(Box::new(io::stdin().lock()))
    } else {
        let file = File::open(path).with_context(|| format!("cannot open {path}"))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn with_output(path: &str, write: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    if path == "-" {
        let mut out = io::stdout().lock();
        write(&mut out)?;
        out.flush()?;
    } else {
        let file = File::create(path).with_context(|| format!("cannot create {path}"))?;
        let mut out = BufWriter::new(file);
        write(&mut out)?;
        out.flush().with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}

fn read_table(path: &str, strict_labels: bool) -> anyhow::Result<DatasetTable> {
    ingest::read_csv_from(open_input(path)?, strict_labels).with_context(|| format!("reading {path}"))
}

fn read_matrix(path: &str) -> anyhow::Result<FeatureMatrix> {
    FeatureMatrix::read_csv_from(open_input(path)?).with_context(|| format!("reading {path}"))
}

fn write_json<T: Serialize>(path: &str, value: &T) -> anyhow::Result<()> {
    with_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

impl Runner {
    fn dispatch(&self, command: Command) -> Outcome {
        match command {
            Command::Synth { preset, output } => self.synth(preset, &output.out),
            Command::Dissect { input, windows, output } => self.dissect(&input, &windows, &output.out),
            Command::Split {
                input,
                test_fraction,
                train,
                test,
            } => self.split(&input, test_fraction, &train, &test),
            Command::Preprocess {
                input,
                fit,
                plan,
                strict_labels,
                output,
            } => self.preprocess(&input, fit, plan, strict_labels, &output.out),
            Command::TrainAe {
                input,
                latent,
                epochs,
                output,
            } => self.train_ae(&input, latent, epochs, &output.out),
            Command::Encode { input, model, output } => self.encode(&input, &model, &output.out),
            Command::TrainClf {
                input,
                classifier,
                output,
            } => self.train_clf(&input, classifier, &output.out),
            Command::Evaluate { input, model, output } => self.evaluate(&input, &model, &output.out),
            Command::Sweep {
                input,
                preset,
                train,
                test,
                dims,
                classifiers,
                test_fraction,
                strict_labels,
                details,
                output,
            } => {
                let data = match (input, train, test) {
                    (_, Some(train), Some(test)) => SweepData::Matrices(train, test),
                    (Some(input), _, _) => SweepData::Table(input),
                    _ => SweepData::Preset(preset.or(self.config.scenario_preset).unwrap_or(Preset::Merged)),
                };
                let args = SweepArgs {
                    dims,
                    classifiers,
                    test_fraction,
                    strict_labels,
                    details,
                };
                self.sweep(data, args, &output.out)
            }
            Command::Report { input, format, output } => report(&input, format, &output.out),
        }
    }

    fn test_fraction(&self, flag: Option<f64>) -> Result<f64, Failure> {
        let f = flag.or(self.config.eval_test_fraction).unwrap_or(DEFAULT_TEST_FRACTION);
        if !(f > 0.0 && f < 1.0) {
            return usage("--test-fraction must lie strictly between 0 and 1");
        }
        Ok(f)
    }

    fn fit_options(&self) -> FitOptions {
        let mut options = FitOptions::default();
        if let Some(c) = &self.config.preprocess_categorical {
            options.categorical_columns = c.clone();
        }
        if let Some(e) = &self.config.preprocess_exclude {
            options.excluded_columns = e.clone();
        }
        options
    }

    fn strict_labels(&self, flag: bool) -> bool {
        flag || self.config.preprocess_strict_labels.unwrap_or(false)
    }

    fn balanced(&self) -> bool {
        self.config.trees_balanced.unwrap_or(true)
    }

    fn k_folds(&self) -> Result<usize, Failure> {
        match self.config.eval_k_folds.unwrap_or(DEFAULT_K_FOLDS) {
            k if k < 2 => usage("eval.k_folds must be at least 2"),
            k => Ok(k),
        }
    }

    /// Autoencoder settings from the config, for `input_dim` columns.
    fn ae_config(&self, input_dim: usize, latent: usize, epochs: Option<usize>) -> AeConfig {
        let c = &self.config;
        let mut ae = AeConfig::new(input_dim, latent);
        if let Some(h) = &c.ae_hidden {
            ae.hidden_widths = h.clone();
        }
        if let Some(e) = epochs.or(c.ae_epochs) {
            ae.epochs = e;
        }
        if let Some(b) = c.ae_batch_size {
            ae.batch_size = b;
        }
        if let Some(lr) = c.ae_learning_rate {
            ae.adam.learning_rate = lr;
        }
        if let Some(a) = c.ae_output_activation {
            ae.output_activation = a;
        }
        ae.seed = self.seed;
        ae
    }

    fn synth(&self, preset: Option<Preset>, out: &str) -> Outcome {
        let Some(preset) = preset.or(self.config.scenario_preset) else {
            return usage("synth needs --preset (or scenario.preset in the config)");
        };
        let frames = synthesize_preset(preset, self.seed);
        note(format!("{}: {} frames", preset.name(), frames.len()));
        with_output(out, |w| Ok(ingest::write_frame_log_to(&frames, w)?))?;
        Ok(())
    }

    fn dissect(&self, input: &str, windows: &[LabelWindow], out: &str) -> Outcome {
        let frames = ingest::read_frame_log_from(open_input(input)?).with_context(|| format!("reading {input}"))?;
        let mut table = DatasetTable::from_frames(&frames);
        if !windows.is_empty() {
            ingest::label_table_by_window(&mut table, windows).context("labeling by window")?;
        }
        note(format!("dissected {} frames", table.len()));
        with_output(out, |w| Ok(ingest::write_csv_to(&table, w)?))?;
        Ok(())
    }

    fn split(&self, input: &str, test_fraction: Option<f64>, train: &Path, test: &Path) -> Outcome {
        let fraction = self.test_fraction(test_fraction)?;
        let table = read_table(input, true)?;
        let (a, b) = split_table(&table, fraction, self.seed).context("splitting")?;
        note(format!("{} training rows, {} test rows", a.len(), b.len()));
        ingest::write_csv(&a, train).with_context(|| format!("writing {}", train.display()))?;
        ingest::write_csv(&b, test).with_context(|| format!("writing {}", test.display()))?;
        Ok(())
    }

    fn preprocess(&self, input: &str, fit: bool, plan: Option<PathBuf>, strict: bool, out: &str) -> Outcome {
        let Some(plan_path) = plan.or_else(|| self.config.preprocess_plan.clone()) else {
            return usage("preprocess needs --plan (or preprocess.plan in the config)");
        };
        let table = read_table(input, true)?;
        let plan = if fit {
            let plan = fit_plan(&table, &self.fit_options()).context("fitting plan")?;
            plan.save(&plan_path)
                .with_context(|| format!("writing {}", plan_path.display()))?;
            note(format!(
                "plan maps {} input columns to {} features",
                plan.input_columns.len(),
                plan.width()
            ));
            plan
        } else {
            EncodingPlan::load(&plan_path).with_context(|| format!("reading {}", plan_path.display()))?
        };
        let matrix = apply_plan(&table, &plan, self.strict_labels(strict)).context("applying plan")?;
        with_output(out, |w| Ok(matrix.write_csv_to(w)?))?;
        Ok(())
    }

    fn train_ae(&self, input: &str, latent: Option<usize>, epochs: Option<usize>, out: &str) -> Outcome {
        let Some(latent) = latent.or(self.config.ae_latent_dim) else {
            return usage("train-ae needs --latent (or ae.latent_dim in the config)");
        };
        let matrix = read_matrix(input)?;
        let cfg = self.ae_config(matrix.values.cols(), latent, epochs);
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        let (model, history) = autoenc::train(&matrix.values, &cfg).context("training autoencoder")?;
        if let Some(last) = history.last() {
            note(format!("{} epochs, final reconstruction MSE {last:.6}", history.len()));
        }
        with_output(out, |w| Ok(writeln!(w, "{}", model.to_json())?))?;
        Ok(())
    }

    fn encode(&self, input: &str, model: &Path, out: &str) -> Outcome {
        let model = AeModel::load(model).with_context(|| format!("reading {}", model.display()))?;
        let matrix = read_matrix(input)?;
        let z = autoenc::encode(&model, &matrix.values).context("encoding")?;
        let encoded = FeatureMatrix {
            column_names: (0..z.cols()).map(|i| format!("latent_{i}")).collect(),
            values: z,
            labels: matrix.labels,
            classes: matrix.classes,
        };
        with_output(out, |w| Ok(encoded.write_csv_to(w)?))?;
        Ok(())
    }

    fn train_clf(&self, input: &str, classifier: Option<ClassifierKind>, out: &str) -> Outcome {
        let Some(kind) = classifier.or(self.config.trees_classifier) else {
            return usage("train-clf needs --classifier (or trees.classifier in the config)");
        };
        let k_folds = self.k_folds()?;
        let matrix = read_matrix(input)?;
        let n_classes = matrix.classes.len();
        let search = grid_search(
            &matrix.values,
            &matrix.labels,
            n_classes,
            &kind.default_grid(),
            k_folds,
            self.seed,
            self.balanced(),
        )
        .context("grid search")?;
        note(format!(
            "{}: best {} (mean CV F1 {:.6})",
            kind.title(),
            search.best,
            search.scores[search.best_index]
        ));
        let weights = training_weights(&matrix.labels, self.balanced()).context("class weights")?;
        let model = search
            .best
            .with_seed(derive_seed(self.seed, k_folds as u64))
            .fit(&matrix.values, &matrix.labels, &weights, n_classes)
            .context("fitting classifier")?;
        let artifact = ClassifierArtifact {
            version: 1,
            columns: matrix.column_names,
            classes: matrix.classes,
            selection: Selection {
                cv_f1: search.scores[search.best_index],
                params: search.best,
            },
            model,
        };
        write_json(out, &artifact)?;
        Ok(())
    }

    fn evaluate(&self, input: &str, model: &Path, out: &str) -> Outcome {
        let text = std::fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
        let artifact: ClassifierArtifact =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", model.display()))?;
        let mut matrix = read_matrix(input)?;
        if matrix.column_names != artifact.columns {
            return Err(anyhow!(
                "input columns do not match the model's ({} vs {} columns)",
                matrix.column_names.len(),
                artifact.columns.len()
            )
            .into());
        }
        matrix.align_classes(&artifact.classes);
        let predicted = artifact.model.predict(&matrix.values).context("predicting")?;
        let metrics = compute_metrics(&matrix.labels, &predicted, matrix.classes.len()).context("scoring")?;
        note(format!(
            "weighted precision {:.6}, recall {:.6}, F1 {:.6}",
            metrics.precision, metrics.recall, metrics.f1
        ));
        write_json(
            out,
            &Evaluation {
                classes: matrix.classes,
                metrics,
            },
        )?;
        Ok(())
    }

    fn sweep(&self, data: SweepData, args: SweepArgs, out: &str) -> Outcome {
        let dims = if args.dims.is_empty() {
            self.config.eval_dims.clone().unwrap_or(DEFAULT_DIMS.to_vec())
        } else {
            args.dims
        };
        if dims.contains(&0) {
            return usage("latent sizes must be positive");
        }
        let classifiers = if args.classifiers.is_empty() {
            self.config.eval_classifiers.clone().unwrap_or(ClassifierKind::ALL.to_vec())
        } else {
            args.classifiers
        };
        let fraction = self.test_fraction(args.test_fraction)?;
        let (train, test) = match data {
            SweepData::Matrices(train, test) => (
                read_matrix(&train.to_string_lossy())?,
                read_matrix(&test.to_string_lossy())?,
            ),
            SweepData::Table(input) => {
                let table = read_table(&input, true)?;
                self.split_and_encode(&table, fraction, args.strict_labels)?
            }
            SweepData::Preset(preset) => {
                let frames = synthesize_preset(preset, self.seed);
                note(format!("{}: {} frames", preset.name(), frames.len()));
                self.split_and_encode(&DatasetTable::from_frames(&frames), fraction, args.strict_labels)?
            }
        };
        let mut cfg = SweepConfig::new(dims, classifiers, self.seed);
        cfg.k_folds = self.k_folds()?;
        cfg.balanced = self.balanced();
        cfg.ae = self.ae_config(train.values.cols(), 1, None);
        cfg.ae.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        note(format!(
            "sweeping {} latent sizes x {} classifiers on {} training / {} test rows",
            cfg.dims.len(),
            cfg.classifiers.len(),
            train.rows(),
            test.rows()
        ));
        let report = eval::sweep(&train, &test, &cfg).context("sweep")?;
        if let Some(path) = &args.details {
            write_json(&path.to_string_lossy(), &report)?;
        }
        with_output(out, |w| Ok(report.write_csv_to(w)?))?;
        Ok(())
    }

    fn split_and_encode(
        &self,
        table: &DatasetTable,
        fraction: f64,
        strict: bool,
    ) -> anyhow::Result<(FeatureMatrix, FeatureMatrix)> {
        let strict = self.strict_labels(strict);
        let (train, test) = split_table(table, fraction, self.seed)?;
        let plan = fit_plan(&train, &self.fit_options()).context("fitting plan")?;
        Ok((apply_plan(&train, &plan, strict)?, apply_plan(&test, &plan, strict)?))
    }
}

enum SweepData {
    Preset(Preset),
    Table(String),
    Matrices(PathBuf, PathBuf),
}

struct SweepArgs {
    dims: Vec<usize>,
    classifiers: Vec<ClassifierKind>,
    test_fraction: Option<f64>,
    strict_labels: bool,
    details: Option<PathBuf>,
}

fn report(input: &str, format: ReportFormat, out: &str) -> Outcome {
    let mut text = String::new();
    open_input(input)?
        .read_to_string(&mut text)
        .with_context(|| format!("reading {input}"))?;
    let report = SweepReport::read_csv_from(text.as_bytes()).with_context(|| format!("reading {input}"))?;
    if report.rows.is_empty() {
        return Err(anyhow!("{input}: report has no rows").into());
    }
    let rendered = match format {
        ReportFormat::Table => report.table(),
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Means => report.mean_series_csv(),
    };
    with_output(out, |w| Ok(w.write_all(rendered.as_bytes())?))?;
    Ok(())
}
