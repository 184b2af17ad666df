//! Plain-text `key = value` experiment configuration.
//!
//! Lines starting with `#` are comments; lists are comma separated. Every key
//! has a default (the desk-scale preset), so a config file only names what it
//! changes. Flags given on the command line override the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::classifiers::{K_GRID, LAMBDA_W_GRID};
use crate::sparse_coding::Precision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// MNIST directory; resolved through `MNIST_DIR` and `data/mnist` when unset.
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Leading images of the MNIST training file used for training; the rest
    /// are validation images.
    pub train_split: usize,

    /// λ values for which dictionaries are learned.
    pub lambdas: Vec<f64>,
    /// The λ used by the single-λ analyses (spectra, pairs, classification).
    pub lambda: f64,
    pub n_atoms: usize,
    /// Leading images of the training split used to learn dictionaries.
    pub dict_images: usize,
    pub dict_iterations: usize,
    pub dict_seed: u64,
    pub checkpoint_every: usize,
    pub precision: Precision,

    /// Leading validation images given exact codes.
    pub infer_images: usize,
    pub infer_max_iters: usize,
    pub infer_check_every: usize,

    pub sensitivity_samples: usize,
    pub sensitivity_seed: u64,
    pub elastic_grid: usize,
    pub elastic_sigma: f64,
    pub rip_trials: usize,

    pub mlp_seed: u64,
    /// Steps in each of the two learning-rate phases.
    pub mlp_steps: usize,

    /// Leading validation images used to score the classifiers.
    pub eval_images: usize,
    /// ISTA budget for codes of the labeled pool and evaluation images.
    pub pool_code_iters: usize,
    pub k_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub lambda_w_grid: Vec<f64>,
    pub logreg_steps: usize,
    /// Largest `k` with logistic regression on random features.
    pub random_logreg_max_k: usize,
    pub random_width: usize,
    pub random_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Desk-scale preset.
    pub fn desk() -> Self {
        Self {
            data_dir: None,
            output_dir: PathBuf::from("artifacts/desk"),
            train_split: 50_000,
            lambdas: vec![0.1, 0.3, 0.9],
            lambda: 0.3,
            n_atoms: 784,
            dict_images: 10_000,
            dict_iterations: 1500,
            dict_seed: 0,
            checkpoint_every: 100,
            precision: Precision::Single,
            infer_images: 1000,
            infer_max_iters: 200_000,
            infer_check_every: 1000,
            sensitivity_samples: 500,
            sensitivity_seed: 0,
            elastic_grid: 5,
            elastic_sigma: 0.25,
            rip_trials: 1000,
            mlp_seed: 0,
            mlp_steps: 1000,
            eval_images: 2000,
            pool_code_iters: 300,
            k_grid: K_GRID.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            lambda_w_grid: LAMBDA_W_GRID.to_vec(),
            logreg_steps: 500,
            random_logreg_max_k: 300,
            random_width: crate::classifiers::RANDOM_WIDTH,
            random_seed: 0,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::desk();
        config.apply_text(&text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "train_split" => self.train_split = scalar(key, value)?,
            "lambdas" => self.lambdas = list(key, value)?,
            "lambda" => self.lambda = scalar(key, value)?,
            "n_atoms" => self.n_atoms = scalar(key, value)?,
            "dict_images" => self.dict_images = scalar(key, value)?,
            "dict_iterations" => self.dict_iterations = scalar(key, value)?,
            "dict_seed" => self.dict_seed = scalar(key, value)?,
            "checkpoint_every" => self.checkpoint_every = scalar(key, value)?,
            "precision" => {
                self.precision = match value {
                    "single" => Precision::Single,
                    "double" => Precision::Double,
                    _ => {
                        return Err(CliError::Config(format!(
                            "precision must be single or double, got {value}"
                        )))
                    }
                }
            }
            "infer_images" => self.infer_images = scalar(key, value)?,
            "infer_max_iters" => self.infer_max_iters = scalar(key, value)?,
            "infer_check_every" => self.infer_check_every = scalar(key, value)?,
            "sensitivity_samples" => self.sensitivity_samples = scalar(key, value)?,
            "sensitivity_seed" => self.sensitivity_seed = scalar(key, value)?,
            "elastic_grid" => self.elastic_grid = scalar(key, value)?,
            "elastic_sigma" => self.elastic_sigma = scalar(key, value)?,
            "rip_trials" => self.rip_trials = scalar(key, value)?,
            "mlp_seed" => self.mlp_seed = scalar(key, value)?,
            "mlp_steps" => self.mlp_steps = scalar(key, value)?,
            "eval_images" => self.eval_images = scalar(key, value)?,
            "pool_code_iters" => self.pool_code_iters = scalar(key, value)?,
            "k_grid" => self.k_grid = list(key, value)?,
            "seeds" => self.seeds = list(key, value)?,
            "lambda_w_grid" => self.lambda_w_grid = list(key, value)?,
            "logreg_steps" => self.logreg_steps = scalar(key, value)?,
            "random_logreg_max_k" => self.random_logreg_max_k = scalar(key, value)?,
            "random_width" => self.random_width = scalar(key, value)?,
            "random_seed" => self.random_seed = scalar(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.lambdas.is_empty()
            || self.k_grid.is_empty()
            || self.seeds.is_empty()
            || self.lambda_w_grid.is_empty()
        {
            return fail("lambdas, k_grid, seeds and lambda_w_grid must be non-empty");
        }
        if self
            .lambdas
            .iter()
            .chain([&self.lambda])
            .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return fail("every lambda must be positive");
        }
        if self
            .lambda_w_grid
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return fail("every lambda_w must be nonnegative");
        }
        if self.train_split == 0 || self.mlp_steps == 0 {
            return fail("train_split and mlp_steps must be positive");
        }
        if self.n_atoms == 0
            || self.dict_images == 0
            || self.dict_iterations == 0
            || self.checkpoint_every == 0
        {
            return fail(
                "n_atoms, dict_images, dict_iterations and checkpoint_every must be positive",
            );
        }
        if self.infer_images < 2 || self.sensitivity_samples == 0 || self.eval_images < 2 {
            return fail(
                "infer_images and eval_images must be at least 2, sensitivity_samples positive",
            );
        }
        if self.elastic_grid < 2 || !(self.elastic_sigma.is_finite() && self.elastic_sigma >= 0.0) {
            return fail("elastic_grid must be at least 2 and elastic_sigma nonnegative");
        }
        Ok(())
    }

    /// Canonical `key = value` text; parsing it reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &[String]| v.join(", ");
        let f = |v: &[f64]| join(&v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>());
        let u = |v: &[usize]| join(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        let s = |v: &[u64]| join(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        if let Some(d) = &self.data_dir {
            let _ = writeln!(out, "data_dir = {}", d.display());
        }
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(out, "train_split = {}", self.train_split);
        let _ = writeln!(out, "lambdas = {}", f(&self.lambdas));
        let _ = writeln!(out, "lambda = {:e}", self.lambda);
        let _ = writeln!(out, "n_atoms = {}", self.n_atoms);
        let _ = writeln!(out, "dict_images = {}", self.dict_images);
        let _ = writeln!(out, "dict_iterations = {}", self.dict_iterations);
        let _ = writeln!(out, "dict_seed = {}", self.dict_seed);
        let _ = writeln!(out, "checkpoint_every = {}", self.checkpoint_every);
        let precision = match self.precision {
            Precision::Single => "single",
            Precision::Double => "double",
        };
        let _ = writeln!(out, "precision = {precision}");
        let _ = writeln!(out, "infer_images = {}", self.infer_images);
        let _ = writeln!(out, "infer_max_iters = {}", self.infer_max_iters);
        let _ = writeln!(out, "infer_check_every = {}", self.infer_check_every);
        let _ = writeln!(out, "sensitivity_samples = {}", self.sensitivity_samples);
        let _ = writeln!(out, "sensitivity_seed = {}", self.sensitivity_seed);
        let _ = writeln!(out, "elastic_grid = {}", self.elastic_grid);
        let _ = writeln!(out, "elastic_sigma = {:e}", self.elastic_sigma);
        let _ = writeln!(out, "rip_trials = {}", self.rip_trials);
        let _ = writeln!(out, "mlp_seed = {}", self.mlp_seed);
        let _ = writeln!(out, "mlp_steps = {}", self.mlp_steps);
        let _ = writeln!(out, "eval_images = {}", self.eval_images);
        let _ = writeln!(out, "pool_code_iters = {}", self.pool_code_iters);
        let _ = writeln!(out, "k_grid = {}", u(&self.k_grid));
        let _ = writeln!(out, "seeds = {}", s(&self.seeds));
        let _ = writeln!(out, "lambda_w_grid = {}", f(&self.lambda_w_grid));
        let _ = writeln!(out, "logreg_steps = {}", self.logreg_steps);
        let _ = writeln!(out, "random_logreg_max_k = {}", self.random_logreg_max_k);
        let _ = writeln!(out, "random_width = {}", self.random_width);
        let _ = writeln!(out, "random_seed = {}", self.random_seed);
        out
    }

    /// Hash of everything that affects results; the data and output
    /// locations are excluded.
    pub fn hash(&self) -> String {
        let scrubbed = Self {
            data_dir: None,
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        digest(&scrubbed.to_text())
    }

    /// Identifies a training run for `lambda`; a checkpoint with this key can
    /// be resumed toward any iteration count.
    pub fn training_key(&self, lambda: f64) -> String {
        digest(&format!(
            "dictionary lambda={lambda:e} n={} images={} seed={} precision={:?}",
            self.n_atoms,
            self.dict_images.min(self.train_split),
            self.dict_seed,
            self.precision
        ))
    }

    /// Hash of the inputs to the finished dictionary for `lambda`.
    pub fn dictionary_key(&self, lambda: f64) -> String {
        digest(&format!(
            "{} iterations={}",
            self.training_key(lambda),
            self.dict_iterations
        ))
    }

    /// Hash of the inputs to exact codes of the analysis images at `lambda`.
    pub fn codes_key(&self, lambda: f64) -> String {
        digest(&format!(
            "{} codes split={} images={} max_iters={} check_every={}",
            self.dictionary_key(lambda),
            self.train_split,
            self.infer_images,
            self.infer_max_iters,
            self.infer_check_every
        ))
    }

    pub fn pool_codes_key(&self) -> String {
        digest(&format!(
            "{} pool split={} eval={} iters={}",
            self.dictionary_key(self.lambda),
            self.train_split,
            self.eval_images,
            self.pool_code_iters
        ))
    }

    /// Hash of the inputs to the classification sweep.
    pub fn classify_key(&self) -> String {
        digest(&format!(
            "{} {} eval={} k={:?} seeds={:?} lambda_w={:?} steps={} random=({}, {}, {})",
            self.pool_codes_key(),
            self.mlp_key(),
            self.eval_images,
            self.k_grid,
            self.seeds,
            self.lambda_w_grid,
            self.logreg_steps,
            self.random_logreg_max_k,
            self.random_width,
            self.random_seed
        ))
    }

    pub fn mlp_key(&self) -> String {
        digest(&format!(
            "mlp split={} seed={} steps={} standardized",
            self.train_split, self.mlp_seed, self.mlp_steps
        ))
    }
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_and_stable_hash() {
        let mut c = ExperimentConfig::desk();
        c.apply_text("# comment\nlambdas = 0.1, 0.3\nseeds=7\nprecision = double\n")
            .unwrap();
        assert_eq!(c.lambdas, vec![0.1, 0.3]);
        assert_eq!(c.seeds, vec![7]);
        let mut back = ExperimentConfig::desk();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let moved = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..c.clone()
        };
        assert_eq!(moved.hash(), c.hash());
        let changed = ExperimentConfig {
            dict_seed: 9,
            ..c.clone()
        };
        assert_ne!(changed.hash(), c.hash());
    }

    #[test]
    fn bad_input_is_a_config_error() {
        let mut c = ExperimentConfig::desk();
        assert!(matches!(c.apply_text("nonsense"), Err(CliError::Config(_))));
        assert!(matches!(
            c.apply_text("unknown_key = 1"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(c.apply_text("seeds ="), Err(CliError::Config(_))));
        assert!(matches!(
            c.apply_text("lambda = -1"),
            Err(CliError::Config(_))
        ));
    }
}
