//! Command-line front end. Every subcommand writes its artifacts into an
//! output directory together with a `<command>_config.json` holding the
//! resolved arguments, which `egp replay` can re-run.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correction::CorrectionMode;
use crate::data::{default_delimiter, generate_surrogate, write_table, PcaTarget, SurrogateConfig, Table, TableSchema, ToyConfig};
use crate::diagnostics::{correlation_report_from_series, Bin, DiagnosticsReport, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::experiment::{fit_pipeline, run_toy, PipelineConfig, Reduction, ToyRunConfig};
use crate::gp::{NoiseModel, Prediction};
use crate::hyperopt::{FitReport, OptimizationConfig};
use crate::persist::{load_model, save_model, FitSummary};

/// Environment variable that sets the default output directory.
pub const OUTPUT_DIR_ENV: &str = "EGP_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "egp-output";

#[derive(Debug, Parser)]
#[command(name = "egp", version, about = "Gaussian process regression with input-noise corrected uncertainties")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Run the one-dimensional tanh(s·sin x) study end to end.
    Toy(ToyArgs),
    /// Fit a model to a delimited table and save it as JSON.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Correlate predicted uncertainty with realized error.
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic high-dimensional dataset with known input noise.
    Surrogate(SurrogateArgs),
    /// Re-run a command from a saved `<command>_config.json`.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Comma,
    Tab,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionArg {
    #[default]
    Full,
    Diagonal,
}

impl From<CorrectionArg> for CorrectionMode {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::Full => CorrectionMode::Full,
            CorrectionArg::Diagonal => CorrectionMode::Diagonal,
        }
    }
}

/// Hyperparameter search settings shared by `toy` and `fit`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OptimizerArgs {
    /// Number of random restarts.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// BFGS iteration limit per restart.
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Stop when the gradient's largest component falls below this.
    #[arg(long, default_value_t = 1e-5)]
    pub grad_tol: f64,
    /// Tie all lengthscales to one value.
    #[arg(long)]
    pub isotropic: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl OptimizerArgs {
    fn config(&self) -> OptimizationConfig {
        OptimizationConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            seed: self.seed,
            init: None,
            isotropic: self.isotropic,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct OutDir {
    /// Directory for the artifacts.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 100)]
    pub n_train: usize,
    /// Points on the evaluation grid (also the number of noisy test points).
    #[arg(long, default_value_t = 400)]
    pub n_grid: usize,
    /// Input-noise standard deviation.
    #[arg(long, default_value_t = 0.3)]
    pub sigma_x: f64,
    /// Output-noise variance.
    #[arg(long, default_value_t = 0.05)]
    pub sigma_y2: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sharpness: f64,
    /// Lower end of the input range [default: -2.5π].
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    /// Upper end of the input range [default: 2.5π].
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    /// Monte-Carlo replicates per grid point.
    #[arg(long, default_value_t = 2000)]
    pub mc_replicates: usize,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t)]
    pub correction: CorrectionArg,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Training table (CSV, or TSV for .tsv/.tab files).
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the target column.
    #[arg(long)]
    pub target: String,
    /// Comma-separated feature columns [default: all but the target].
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub delimiter: Option<Delimiter>,
    /// Input-noise variances in raw feature units: one value for all
    /// features or one per feature, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "sigma_x_file")]
    pub sigma_x_diag: Option<Vec<f64>>,
    /// Full input-noise covariance as a table whose header names the
    /// features and whose rows are the matrix rows.
    #[arg(long)]
    pub sigma_x_file: Option<PathBuf>,
    /// Keep the fewest principal components explaining this fraction of variance.
    #[arg(long, conflicts_with = "pca_components")]
    pub pca_variance: Option<f64>,
    /// Keep exactly this many principal components.
    #[arg(long)]
    pub pca_components: Option<usize>,
    /// Randomly subsample this many training rows.
    #[arg(long)]
    pub max_train: Option<usize>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Model JSON written by `egp fit`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub delimiter: Option<Delimiter>,
    /// Skip the input-noise correction; omits the std_egp column.
    #[arg(long)]
    pub no_correction: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    /// Predictions table with mean, std_gp and optionally std_egp columns.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Column holding the true values.
    #[arg(long)]
    pub truth_column: String,
    /// Read the truth column from this table instead (same row order).
    #[arg(long)]
    pub truth_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub delimiter: Option<Delimiter>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SurrogateArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Observed feature count.
    #[arg(long, default_value_t = 50)]
    pub d_raw: usize,
    /// Latent dimension driving the target.
    #[arg(long, default_value_t = 2)]
    pub d_latent: usize,
    /// Per-feature input-noise variance.
    #[arg(long, default_value_t = 0.05)]
    pub sigma_x2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma_y2: f64,
    #[arg(long, default_value_t = 6.0)]
    pub sharpness: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    /// A `<command>_config.json` from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
}

/// Kernel and noise values chosen by the optimizer, in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub output_variance: f64,
    pub fit: FitSummary,
}

impl From<&FitReport<f64>> for Hyperparameters {
    fn from(r: &FitReport<f64>) -> Self {
        Self {
            lengthscales: r.best_params.lengthscales(),
            signal_variance: r.best_params.signal_variance(),
            output_variance: r.best_output_variance,
            fit: FitSummary::from(r),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn prepare(out: &OutDir, name: &str, command: &Command) -> Result<PathBuf> {
    let dir = out.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_json(&dir.join(format!("{name}_config.json")), command)?;
    Ok(dir)
}

fn read_table(path: &Path, delimiter: Option<Delimiter>) -> Result<Table> {
    Table::read(path, Some(delimiter.map_or_else(|| default_delimiter(path), Delimiter::byte)))
}

fn curve_rows(curve: &[Bin]) -> Vec<Vec<f64>> {
    curve
        .iter()
        .enumerate()
        .map(|(i, b)| vec![i as f64, b.center, b.std_lo, b.std_hi, b.mean_abs_error, b.mean_std, b.count as f64])
        .collect()
}

const CURVE_HEADERS: [&str; 7] = ["bin", "std_center", "std_lo", "std_hi", "mean_abs_error", "mean_std", "count"];

fn write_diagnostics(dir: &Path, report: &DiagnosticsReport) -> Result<()> {
    write_json(&dir.join("diagnostics.json"), report)?;
    write_table(&dir.join("curve_gp.csv"), &CURVE_HEADERS, &curve_rows(&report.gp.curve))?;
    if let Some(egp) = &report.egp {
        write_table(&dir.join("curve_egp.csv"), &CURVE_HEADERS, &curve_rows(&egp.curve))?;
    }
    Ok(())
}

/// Runs a parsed command.
pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Toy(a) => toy(a),
        Command::Fit(a) => fit(a, command),
        Command::Predict(a) => predict(a, command),
        Command::Diagnose(a) => diagnose(a, command),
        Command::Surrogate(a) => surrogate(a, command),
        Command::Replay(a) => replay(a),
    }
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_err(&args.config, e))?;
    let mut command: Command = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let out = match &mut command {
        Command::Toy(a) => &mut a.out,
        Command::Fit(a) => &mut a.out,
        Command::Predict(a) => &mut a.out,
        Command::Diagnose(a) => &mut a.out,
        Command::Surrogate(a) => &mut a.out,
        Command::Replay(_) => unreachable!("replay is never serialized"),
    };
    *out = args.out.clone();
    run(&command)
}

fn toy(args: &ToyArgs) -> Result<()> {
    let mut resolved = args.clone();
    resolved.x_min.get_or_insert(-2.5 * PI);
    resolved.x_max.get_or_insert(2.5 * PI);
    let config = ToyRunConfig {
        toy: ToyConfig {
            n_train: args.n_train,
            n_test_grid: args.n_grid,
            input_noise_std: args.sigma_x,
            output_noise_var: args.sigma_y2,
            sharpness: args.sharpness,
            x_range: (resolved.x_min.unwrap(), resolved.x_max.unwrap()),
            seed: args.optimizer.seed,
        },
        optimization: args.optimizer.config(),
        mc_replicates: args.mc_replicates,
        bins: args.bins,
        correction_mode: args.correction.into(),
    };
    config.toy.validate()?;
    config.optimization.validate()?;
    let dir = prepare(&args.out, "toy", &Command::Toy(resolved))?;
    let outcome = run_toy(&config)?;
    let d = &outcome.data;

    let train: Vec<Vec<f64>> = (0..d.train_x.len())
        .map(|i| vec![d.train_clean[i], d.train_x[i], d.train_y[i]])
        .collect();
    write_table(&dir.join("train.csv"), &["x_clean", "x", "y"], &train)?;

    let grid: Vec<Vec<f64>> = outcome
        .grid_predictions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                d.grid[i],
                d.grid_latent[i],
                p.mean,
                p.std_gp(),
                p.std_egp().unwrap_or(f64::NAN),
                outcome.mc_variance[i],
            ]
        })
        .collect();
    write_table(
        &dir.join("grid_predictions.csv"),
        &["x", "latent", "mean", "std_gp", "std_egp", "mc_variance"],
        &grid,
    )?;

    let test: Vec<Vec<f64>> = outcome
        .test_predictions
        .iter()
        .enumerate()
        .map(|(i, p)| vec![i as f64, d.test_x[i], p.mean, p.std_gp(), p.std_egp().unwrap_or(f64::NAN), d.test_y[i]])
        .collect();
    write_table(
        &dir.join("test_predictions.csv"),
        &["row", "x", "mean", "std_gp", "std_egp", "y"],
        &test,
    )?;

    write_json(&dir.join("hyperparameters.json"), &Hyperparameters::from(&outcome.fit))?;
    write_diagnostics(&dir, &outcome.diagnostics)
}

fn input_covariance(args: &FitArgs, features: &[String]) -> Result<DMatrix<f64>> {
    let d = features.len();
    if let Some(values) = &args.sigma_x_diag {
        let diag: Vec<f64> = match values.len() {
            1 => vec![values[0]; d],
            n if n == d => values.clone(),
            n => return Err(Error::dims("--sigma-x-diag values", d, n)),
        };
        return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)));
    }
    let Some(path) = &args.sigma_x_file else {
        return Ok(DMatrix::zeros(d, d));
    };
    let table = read_table(path, None)?;
    let n = table.headers.len();
    if table.rows.len() != n {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!("covariance table has {n} columns but {} rows", table.rows.len()),
        });
    }
    let idx = table.indices(features)?;
    Ok(DMatrix::from_fn(d, d, |i, j| table.rows[idx[i]][idx[j]]))
}

fn fit(args: &FitArgs, command: &Command) -> Result<()> {
    let reduction = match (args.pca_variance, args.pca_components) {
        (Some(q), _) => Reduction::Pca(PcaTarget::Fraction(q)),
        (None, Some(r)) => Reduction::Pca(PcaTarget::Components(r)),
        (None, None) => Reduction::None,
    };
    let config = PipelineConfig {
        reduction,
        optimization: args.optimizer.config(),
        max_train: args.max_train,
        seed: args.optimizer.seed,
    };
    config.optimization.validate()?;
    let table = read_table(&args.data, args.delimiter)?;
    let data = table.dataset(&TableSchema {
        target: args.target.clone(),
        features: args.features.clone(),
    })?;
    let cov = input_covariance(args, &data.feature_names)?;
    NoiseModel::new(1.0, cov.clone())?;
    let dir = prepare(&args.out, "fit", command)?;
    let model = fit_pipeline(&data, &cov, &config)?;
    save_model(&dir.join("model.json"), &model)?;
    if let Some(report) = &model.fit {
        write_json(&dir.join("hyperparameters.json"), &Hyperparameters::from(report))?;
    }
    Ok(())
}

fn prediction_rows(preds: &[Prediction<f64>], truth: Option<&[f64]>, corrected: bool) -> Vec<Vec<f64>> {
    preds
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![i as f64, p.mean, p.std_gp()];
            if corrected {
                row.push(p.std_egp().unwrap_or(f64::NAN));
            }
            if let Some(t) = truth {
                row.push(t[i]);
            }
            row
        })
        .collect()
}

fn predict(args: &PredictArgs, command: &Command) -> Result<()> {
    let model = load_model(&args.model)?;
    let table = read_table(&args.data, args.delimiter)?;
    let x = table.matrix(&model.feature_names)?;
    let truth = table
        .column_index(&model.target_name)
        .map(|_| table.column(&model.target_name))
        .transpose()?;
    let dir = prepare(&args.out, "predict", command)?;
    let corrected = !args.no_correction;
    let preds = model.predict(&x, corrected)?;
    let mut headers = vec!["row".to_string(), "mean".into(), "std_gp".into()];
    if corrected {
        headers.push("std_egp".into());
    }
    if truth.is_some() {
        headers.push(model.target_name.clone());
    }
    write_table(
        &dir.join("predictions.csv"),
        &headers,
        &prediction_rows(&preds, truth.as_deref(), corrected),
    )
}

fn diagnose(args: &DiagnoseArgs, command: &Command) -> Result<()> {
    let preds = read_table(&args.predictions, args.delimiter)?;
    let means = preds.column("mean")?;
    let stds_gp = preds.column("std_gp")?;
    let stds_egp = preds.column_index("std_egp").map(|_| preds.column("std_egp")).transpose()?;
    let truth = match &args.truth_file {
        Some(path) => read_table(path, args.delimiter)?.column(&args.truth_column)?,
        None => preds.column(&args.truth_column)?,
    };
    let dir = prepare(&args.out, "diagnose", command)?;
    let report = correlation_report_from_series(&means, &stds_gp, stds_egp.as_deref(), &truth, args.bins)?;
    write_diagnostics(&dir, &report)
}

fn surrogate(args: &SurrogateArgs, command: &Command) -> Result<()> {
    let noise = NoiseModel::diagonal(args.sigma_y2, &vec![args.sigma_x2; args.d_raw])?;
    let mut config = SurrogateConfig::new(args.n, args.d_raw, args.d_latent, noise, args.seed);
    config.sharpness = args.sharpness;
    config.validate()?;
    let dir = prepare(&args.out, "surrogate", command)?;
    let s = generate_surrogate(&config)?;
    Table::from_dataset(&s.data).write(&dir.join("surrogate.csv"))?;
    let cov_rows: Vec<Vec<f64>> = s
        .input_covariance
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    write_table(&dir.join("input_covariance.csv"), &s.data.feature_names, &cov_rows)
}
