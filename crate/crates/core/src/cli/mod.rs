//! Command-line experiment runner.
//!
//! Each subcommand computes (or loads) the stages it needs through
//! [`pipeline::Pipeline`], writes CSV and JSON reports to the output
//! directory, and records them in a manifest.

pub mod checkpoint;
pub mod config;
pub mod pipeline;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::dataset::DatasetError;
use crate::perturbations::{PerturbationError, PerturbationKind};
use crate::sensitivity::{SensitivityError, SensitivityHistogram};
use crate::sparse_coding::SparseCodingError;
pub use config::ExperimentConfig;
pub use pipeline::Pipeline;
use report::{write_csv, write_json, write_manifest, Cell, OutputLock, Provenance, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stale artifact: {0}")]
    Stale(String),
    #[error("inference did not converge: {0}")]
    NotConverged(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for numerical failure, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Stale(_) => 1,
            CliError::NotConverged(_) | CliError::Compute(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::SplitTooLarge { .. } | DatasetError::ClassTooSmall { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<SparseCodingError> for CliError {
    fn from(e: SparseCodingError) -> Self {
        match e {
            SparseCodingError::NotConverged { .. } => CliError::NotConverged(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Dataset(d) => d.into(),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<PerturbationError> for CliError {
    fn from(e: PerturbationError) -> Self {
        CliError::Compute(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sparsecode",
    version,
    about = "Sparse coding experiments on MNIST"
)]
pub struct Cli {
    /// `key = value` configuration file; unset keys take desk-scale defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set dict_iterations=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Directory for checkpoints and reports.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Learn dictionaries and write their objective curves.
    TrainDict {
        /// Train only this λ instead of the configured list.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Exact codes of the analysis images with their fixed-point residuals.
    Infer {
        /// Infer only this λ instead of the configured list.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Directional-derivative histograms for noise, swaps and distortions.
    Sensitivity {
        /// Number of sampled images per perturbation kind.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Gain, power and amplitude spectra and norm-ratio ranges.
    Spectrum,
    /// Overlapping filter pairs and their normalized means.
    Pairs,
    /// Nearest-neighbor and logistic-regression sweep over all representations.
    Classify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainDict { .. } => "train-dict",
            Command::Infer { .. } => "infer",
            Command::Sensitivity { .. } => "sensitivity",
            Command::Spectrum => "spectrum",
            Command::Pairs => "pairs",
            Command::Classify => "classify",
        }
    }
}

impl Cli {
    /// The configuration after the file, then `--set`, then the named flags.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::desk(),
        };
        for item in &self.overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {item}")))?;
            config.set(k.trim(), v.trim())?;
        }
        if let Some(o) = &self.output {
            config.output_dir = o.clone();
        }
        if let Some(d) = &self.data {
            config.data_dir = Some(d.clone());
        }
        match &self.command {
            Command::Sensitivity { samples: Some(s) } => config.sensitivity_samples = *s,
            Command::TrainDict { lambda: Some(l) } | Command::Infer { lambda: Some(l) }
                if !config.lambdas.contains(l) =>
            {
                config.lambdas.push(*l);
            }
            _ => {}
        }
        config.validate()?;
        Ok(config)
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match cli
        .resolve_config()
        .and_then(|config| run(&cli.command, config))
    {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run one command under the output-directory lock; returns the files written.
pub fn run(command: &Command, config: ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let pipeline = Pipeline::new(config);
    let prov = Provenance::new(
        command.name(),
        &pipeline.config.hash(),
        pipeline.config.dict_seed,
    );
    let dir = pipeline.dir().to_path_buf();
    let mut files = Vec::new();
    let outcome = match command {
        Command::TrainDict { lambda } => train_dict(&pipeline, *lambda, &prov, &mut files),
        Command::Infer { lambda } => infer(&pipeline, *lambda, &prov, &mut files),
        Command::Sensitivity { .. } => sensitivity(&pipeline, &prov, &mut files),
        Command::Spectrum => spectrum(&pipeline, &prov, &mut files),
        Command::Pairs => pairs(&pipeline, &prov, &mut files),
        Command::Classify => classify(&pipeline, &prov, &mut files),
    };
    // Reports already written are recorded even when the command fails late.
    if !files.is_empty() {
        let manifest = write_manifest(&dir, &prov, &pipeline.config.to_text(), &files)?;
        files.push(manifest);
    }
    outcome.map(|_| files)
}

fn selected_lambdas(pipeline: &Pipeline, lambda: Option<f64>) -> Vec<f64> {
    lambda.map_or_else(|| pipeline.config.lambdas.clone(), |l| vec![l])
}

fn emit_csv(
    dir: &Path,
    name: &str,
    table: &Table,
    prov: &Provenance,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    write_csv(&path, table, prov)?;
    files.push(path);
    Ok(())
}

fn emit_json<T: Serialize>(
    dir: &Path,
    name: &str,
    data: &T,
    prov: &Provenance,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    write_json(&path, data, prov)?;
    files.push(path);
    Ok(())
}

fn train_dict(
    pipeline: &Pipeline,
    lambda: Option<f64>,
    prov: &Provenance,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    for lambda in selected_lambdas(pipeline, lambda) {
        let trained = pipeline.dictionary(lambda)?;
        let mut table = Table::new(&["iteration", "objective"]);
        for (i, &obj) in trained.state.history.iter().enumerate() {
            table.push(vec![i.into(), obj.into()]);
        }
        emit_csv(
            pipeline.dir(),
            &format!("objective-lambda{lambda}.csv"),
            &table,
            prov,
            files,
        )?;
        files.push(pipeline.dictionary_path(lambda));
        info!(
            "λ={lambda}: final objective {:.8e}, widened at {:?}",
            trained.state.history.last().copied().unwrap_or(f64::NAN),
            trained.state.widened_at
        );
    }
    Ok(())
}

fn infer(
    pipeline: &Pipeline,
    lambda: Option<f64>,
    prov: &Provenance,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let mut failures = Vec::new();
    for lambda in selected_lambdas(pipeline, lambda) {
        let exact = pipeline.exact_codes(lambda)?;
        let mut table = Table::new(&[
            "image",
            "iterations",
            "converged",
            "precision",
            "active",
            "inactive_excess",
            "active_residual",
            "margin",
            "generic",
        ]);
        for r in &exact.records {
            let precision = match r.precision {
                crate::sparse_coding::Precision::Single => "single",
                crate::sparse_coding::Precision::Double => "double",
            };
            table.push(vec![
                r.image.into(),
                r.iterations.into(),
                r.converged.to_string().into(),
                precision.into(),
                r.active.into(),
                r.inactive_excess.into(),
                r.active_residual.into(),
                r.margin.into(),
                r.generic.to_string().into(),
            ]);
        }
        emit_csv(
            pipeline.dir(),
            &format!("codes-lambda{lambda}.csv"),
            &table,
            prov,
            files,
        )?;
        for r in exact.unconverged() {
            failures.push(format!(
                "λ={lambda} image {}: inactive excess {:e}, active residual {:e}",
                r.image, r.inactive_excess, r.active_residual
            ));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "{} images; {}",
            failures.len(),
            failures.join("; ")
        )))
    }
}

#[derive(Debug, Serialize)]
struct HistogramSummary {
    representation: String,
    lambda: Option<f64>,
    requested: usize,
    skipped: usize,
    degenerate: usize,
    counts: BTreeMap<String, usize>,
    medians: BTreeMap<String, f64>,
    means: BTreeMap<String, f64>,
}

fn summarize(h: &SensitivityHistogram, lambda: Option<f64>) -> HistogramSummary {
    let per_kind = |f: &dyn Fn(PerturbationKind) -> f64| {
        PerturbationKind::ALL
            .iter()
            .map(|&k| (k.as_str().to_string(), f(k)))
            .collect()
    };
    HistogramSummary {
        representation: h.representation.clone(),
        lambda,
        requested: h.requested,
        skipped: h.skipped,
        degenerate: h.degenerate,
        counts: PerturbationKind::ALL
            .iter()
            .map(|&k| (k.as_str().to_string(), h.values(k).len()))
            .collect(),
        medians: per_kind(&|k| h.median(k)),
        means: per_kind(&|k| h.mean(k)),
    }
}

fn sensitivity(
    pipeline: &Pipeline,
    prov: &Provenance,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let mut histograms: Vec<(String, Option<f64>, SensitivityHistogram)> = Vec::new();
    histograms.push(("pixels".into(), None, pipeline.pixel_sensitivity()?));
    for &lambda in &pipeline.config.lambdas {
        histograms.push((
            format!("sparse-lambda{lambda}"),
            Some(lambda),
            pipeline.sparse_sensitivity(lambda)?,
        ));
    }
    histograms.push(("mlp".into(), None, pipeline.mlp_sensitivity()?));

    let mut values = Table::new(&["representation", "sample", "image", "kind", "value"]);
    let mut bins = Table::new(&["representation", "kind", "bin", "lower", "upper", "count"]);
    let mut summaries = Vec::new();
    for (tag, lambda, h) in &histograms {
        for r in &h.records {
            values.push(vec![
                tag.as_str().into(),
                r.sample.into(),
                r.image.into(),
                r.kind.as_str().into(),
                r.value.into(),
            ]);
        }
        for kind in PerturbationKind::ALL {
            for (i, (lo, hi, count)) in h.bins(kind).into_iter().enumerate() {
                bins.push(vec![
                    tag.as_str().into(),
                    kind.as_str().into(),
                    i.into(),
                    lo.into(),
                    hi.into(),
                    count.into(),
                ]);
            }
        }
        if h.skipped > 0 {
            warn!(
                "{tag}: {} of {} samples skipped as non-generic",
                h.skipped, h.requested
            );
        }
        let mut s = summarize(h, *lambda);
        s.representation = tag.clone();
        summaries.push(s);
    }
    let dir = pipeline.dir();
    emit_csv(dir, "sensitivity.csv", &values, prov, files)?;
    emit_csv(dir, "sensitivity-bins.csv", &bins, prov, files)?;
    emit_json(dir, "sensitivity-summary.json", &summaries, prov, files)
}

fn spectrum(
    pipeline: &Pipeline,
    prov: &Provenance,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let report = pipeline.spectrum()?;
    let kinds = PerturbationKind::ALL.map(|k| k.as_str().to_string());
    let m = report.amplitude[&kinds[0]].len();

    let mut digit = Table::new(&[
        "index",
        "sigma",
        "gain",
        "power_noise",
        "power_swap",
        "power_distortion",
    ]);
    let mut amplitude = Table::new(&[
        "index",
        "amplitude_noise",
        "amplitude_swap",
        "amplitude_distortion",
    ]);
    for i in 0..m {
        let sigma = report.digit.sigma.get(i).copied();
        let mut row = vec![i.into(), sigma.into(), sigma.map(f64::recip).into()];
        row.extend(kinds.iter().map(|k| Cell::Float(report.digit.power[k][i])));
        digit.push(row);
        let mut row = vec![i.into()];
        row.extend(kinds.iter().map(|k| Cell::Float(report.amplitude[k][i])));
        amplitude.push(row);
    }
    let mut ranges = Table::new(&["image", "active", "sigma_max", "sigma_min", "ratio"]);
    for g in &report.active_sets {
        ranges.push(vec![
            g.image.into(),
            g.active.into(),
            g.sigma_max.into(),
            g.sigma_min.into(),
            g.ratio.into(),
        ]);
    }
    let dir = pipeline.dir();
    emit_csv(dir, "spectrum-digit.csv", &digit, prov, files)?;
    emit_csv(dir, "spectrum-amplitude.csv", &amplitude, prov, files)?;
    emit_csv(dir, "gain-ranges.csv", &ranges, prov, files)?;
    let summary = serde_json::json!({
        "lambda": report.lambda,
        "digit_active": report.digit.active,
        "digit_generic": report.digit.generic,
        "digit_sigma_min": report.digit.sigma.last(),
        "digit_max_gain": report.digit.sigma.last().map(|s| 1.0 / s),
        "amplitude_samples": report.amplitude_samples,
        "random_support_size": report.random_support_size,
        "random_support_min": report.random_supports.min,
        "random_support_max": report.random_supports.max,
        "median_gain_ratio": report.median_gain_ratio,
        "max_gain_ratio": report.max_gain_ratio,
    });
    emit_json(dir, "spectrum-summary.json", &summary, prov, files)
}

fn pairs(pipeline: &Pipeline, prov: &Provenance, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let report = pipeline.pairs()?;
    let mut table = Table::new(&["a", "b", "overlap", "filter_mean", "difference_mean"]);
    for p in &report.pairs {
        table.push(vec![
            p.a.into(),
            p.b.into(),
            p.overlap.into(),
            p.filter_mean.into(),
            p.difference_mean.into(),
        ]);
    }
    let top = report.top(pipeline::TOP_PAIRS);
    let summary = serde_json::json!({
        "threshold": pipeline::PAIR_THRESHOLD,
        "pairs": report.pairs.len(),
        "top": top.pairs.len(),
        "top_filter_average": top.filter_average(),
        "top_difference_average": top.difference_average(),
    });
    emit_csv(pipeline.dir(), "pairs.csv", &table, prov, files)?;
    emit_json(pipeline.dir(), "pairs-summary.json", &summary, prov, files)
}

fn classify(
    pipeline: &Pipeline,
    prov: &Provenance,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let (_, mlp) = pipeline.mlp()?;
    let report = pipeline.classify()?;
    let mut records = Table::new(&[
        "representation",
        "classifier",
        "metric",
        "k",
        "seed",
        "lambda_w",
        "selection",
        "train_accuracy",
        "test_accuracy",
    ]);
    for r in &report.records {
        records.push(vec![
            r.representation.as_str().into(),
            r.classifier.as_str().into(),
            r.metric.as_str().into(),
            r.k.into(),
            r.seed.into(),
            r.lambda_w.into(),
            r.selection.as_str().into(),
            r.train_accuracy.into(),
            r.test_accuracy.into(),
        ]);
    }
    let mut summary = Table::new(&[
        "representation",
        "classifier",
        "metric",
        "selection",
        "k",
        "seeds",
        "mean_train_accuracy",
        "mean_test_accuracy",
    ]);
    for s in report.summary() {
        summary.push(vec![
            s.representation.as_str().into(),
            s.classifier.as_str().into(),
            s.metric.as_str().into(),
            s.selection.as_str().into(),
            s.k.into(),
            s.seeds.into(),
            s.mean_train_accuracy.into(),
            s.mean_test_accuracy.into(),
        ]);
    }
    let dir = pipeline.dir();
    emit_csv(dir, "classify-records.csv", &records, prov, files)?;
    emit_csv(dir, "classify-summary.csv", &summary, prov, files)?;
    emit_json(dir, "mlp-summary.json", &mlp, prov, files)
}
