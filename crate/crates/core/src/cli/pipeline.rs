//! Experiment stages with on-disk caching. Each stage loads its artifact when
//! one produced from the same inputs exists and computes (and saves) it
//! otherwise, so commands can be run in any order and resumed after a crash.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::checkpoint;
use super::config::ExperimentConfig;
use super::report::{read_json, write_json, Provenance};
use super::CliError;
use crate::classifiers::{
    evaluation_sweep, train_mlp, EvalReport, Metric, Mlp, MlpConfig, MlpJacobian, RandomNet,
    RepresentationData, SweepConfig,
};
use crate::dataset::{load_mnist_train, resolve_data_dir, split_train_val, ImageSet};
use crate::perturbations::{ElasticParams, PerturbationError, PerturbationKind};
use crate::sensitivity::{
    active_set_range, draw_direction, filter_pair_stats, power_spectrum, rip_range, sample_draws,
    sensitivity_histogram, svd_gain_spectrum, GainSpectrum, IdentityJacobian, PairReport, RipRange,
    SampleDraw, SensitivityHistogram, SparseJacobian,
};
use crate::sparse_coding::{
    infer_batch, Dictionary, InferOutcome, InferenceOptions, Precision, SparseCode,
    TrainCheckpoint, TrainConfig, TrainState, Trainer,
};

/// Images per saved unit of exact inference.
const INFER_CHUNK: usize = 50;
/// Images per saved unit of budgeted pool inference.
const POOL_CHUNK: usize = 5000;
/// Overlap above which two active filters form a reported pair.
pub const PAIR_THRESHOLD: f64 = 0.5;
pub const TOP_PAIRS: usize = 10;

pub struct Splits {
    pub train: ImageSet,
    pub validation: ImageSet,
}

pub struct TrainedDictionary {
    pub dictionary: Dictionary,
    pub state: TrainState,
}

/// Outcome of exact inference for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub image: usize,
    pub iterations: usize,
    pub converged: bool,
    pub precision: Precision,
    pub active: usize,
    pub inactive_excess: f64,
    pub active_residual: f64,
    pub margin: f64,
    pub generic: bool,
}

impl CodeRecord {
    fn new(image: usize, out: &InferOutcome) -> Self {
        Self {
            image,
            iterations: out.iterations,
            converged: out.converged,
            precision: out.precision,
            active: out.code.k(),
            inactive_excess: out.report.inactive_excess,
            active_residual: out.report.active_residual,
            margin: out.margin,
            generic: out.converged && out.is_generic(),
        }
    }
}

pub struct ExactCodes {
    pub codes: Vec<SparseCode>,
    pub records: Vec<CodeRecord>,
}

impl ExactCodes {
    pub fn unconverged(&self) -> Vec<&CodeRecord> {
        self.records.iter().filter(|r| !r.converged).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSummary {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub log: Vec<crate::classifiers::MlpLogEntry>,
}

/// Codes of the labeled pool (the training split) and the evaluation images.
pub struct PoolCodes {
    pub pool: Array2<f32>,
    pub eval: Array2<f32>,
    pub converged: usize,
}

/// Spectra of the first training digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitSpectrum {
    pub active: usize,
    pub generic: bool,
    /// Singular values of `D_+`, descending.
    pub sigma: Vec<f64>,
    /// Length-`m` power spectra, keyed by perturbation kind.
    pub power: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRange {
    pub image: usize,
    pub active: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub lambda: f64,
    pub digit: DigitSpectrum,
    /// RMS overlaps over the sampled images, each against its own spectrum.
    pub amplitude: BTreeMap<String, Vec<f64>>,
    /// Images contributing to `amplitude`.
    pub amplitude_samples: usize,
    /// Extremes of `‖D r‖/‖r‖` for random supports of the median active size.
    pub random_support_size: usize,
    pub random_supports: RipRange,
    /// Largest over smallest nonzero gain, per analysed image.
    pub active_sets: Vec<GainRange>,
    pub median_gain_ratio: f64,
    pub max_gain_ratio: f64,
}

/// Owns the configuration and the lazily loaded data.
pub struct Pipeline {
    pub config: ExperimentConfig,
    splits: OnceCell<Splits>,
}

fn lambda_tag(lambda: f64) -> String {
    format!("{lambda}")
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            config,
            splits: OnceCell::new(),
        }
    }

    /// Use already loaded images instead of reading MNIST.
    pub fn with_splits(config: ExperimentConfig, splits: Splits) -> Self {
        let cell = OnceCell::new();
        let _ = cell.set(splits);
        Self {
            config,
            splits: cell,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn splits(&self) -> Result<&Splits, CliError> {
        if let Some(s) = self.splits.get() {
            return Ok(s);
        }
        let dir = resolve_data_dir(self.config.data_dir.as_deref());
        let all = load_mnist_train(&dir)?;
        let (train, validation) = split_train_val(&all, self.config.train_split)?;
        info!(
            "loaded {} training and {} validation images from {}",
            train.len(),
            validation.len(),
            dir.display()
        );
        Ok(self.splits.get_or_init(|| Splits { train, validation }))
    }

    /// Validation images given exact codes and used for sensitivity.
    pub fn analysis_set(&self) -> Result<ImageSet, CliError> {
        Ok(self.splits()?.validation.head(self.config.infer_images))
    }

    pub fn eval_set(&self) -> Result<ImageSet, CliError> {
        Ok(self.splits()?.validation.head(self.config.eval_images))
    }

    pub fn elastic(&self) -> ElasticParams {
        ElasticParams {
            grid: self.config.elastic_grid,
            sigma: self.config.elastic_sigma,
        }
    }

    pub fn draws(&self) -> Result<Vec<SampleDraw>, CliError> {
        let len = self.analysis_set()?.len();
        Ok(sample_draws(
            len,
            self.config.sensitivity_samples,
            self.config.sensitivity_seed,
        ))
    }

    pub fn dictionary_path(&self, lambda: f64) -> PathBuf {
        self.dir()
            .join(format!("dictionary-lambda{}.ckpt", lambda_tag(lambda)))
    }

    /// The dictionary for `lambda`, training or resuming as needed.
    pub fn dictionary(&self, lambda: f64) -> Result<TrainedDictionary, CliError> {
        let path = self.dictionary_path(lambda);
        let key = self.config.training_key(lambda);
        let target = self.config.dict_iterations;
        let mut resume = None;
        if path.exists() {
            let (header, mut arrays) = checkpoint::load_matching(&path, "dictionary", &key)?;
            let state: TrainState =
                serde_json::from_value(header.meta).map_err(|e| CliError::Io(e.to_string()))?;
            if state.iteration > target {
                return Err(CliError::Stale(format!(
                    "{} has {} iterations, more than the configured {target}",
                    path.display(),
                    state.iteration
                )));
            }
            let codes = arrays.pop().expect("codes");
            let atoms = arrays.pop().expect("atoms");
            if state.iteration == target {
                return Ok(TrainedDictionary {
                    dictionary: Dictionary::from_unnormalized(atoms, lambda)?,
                    state,
                });
            }
            info!("resuming λ={lambda} from iteration {}", state.iteration);
            resume = Some(TrainCheckpoint {
                atoms,
                codes,
                state,
            });
        }
        std::fs::create_dir_all(self.dir()).map_err(|e| CliError::Io(e.to_string()))?;
        let images = self.splits()?.train.head(self.config.dict_images);
        let config = TrainConfig {
            start_precision: self.config.precision,
            ..TrainConfig::new(lambda, self.config.n_atoms, target, self.config.dict_seed)
        };
        let mut trainer = match resume {
            Some(c) => Trainer::resume(images.pixels(), config, c)?,
            None => Trainer::new(images.pixels(), config)?,
        };
        let save = |t: &Trainer| {
            let c = t.checkpoint();
            let meta = serde_json::to_value(&c.state).expect("state serializes");
            checkpoint::save(
                &path,
                "dictionary",
                &key,
                meta,
                &[c.atoms.view(), c.codes.view()],
            )
        };
        let started = std::time::Instant::now();
        while trainer.state().iteration < target {
            trainer.step()?;
            let it = trainer.state().iteration;
            if it % self.config.checkpoint_every == 0 || it == target {
                save(&trainer)?;
                info!(
                    "λ={lambda} iteration {it}/{target}: objective {:.8e}, {:?}, {:.1} s",
                    trainer.objective(),
                    trainer.state().precision,
                    started.elapsed().as_secs_f64()
                );
            }
        }
        Ok(TrainedDictionary {
            dictionary: trainer.dictionary()?,
            state: trainer.state().clone(),
        })
    }

    fn inference_options(&self, max_iters: usize, check_every: usize) -> InferenceOptions {
        InferenceOptions {
            max_iters,
            check_every,
            ..InferenceOptions::default()
        }
    }

    pub fn codes_path(&self, lambda: f64) -> PathBuf {
        self.dir()
            .join(format!("codes-lambda{}.ckpt", lambda_tag(lambda)))
    }

    /// Exact codes of the analysis images, resumable in chunks.
    pub fn exact_codes(&self, lambda: f64) -> Result<ExactCodes, CliError> {
        let dict = self.dictionary(lambda)?.dictionary;
        let set = self.analysis_set()?;
        let n = dict.size();
        let path = self.codes_path(lambda);
        let key = self.config.codes_key(lambda);
        let (mut coeffs, mut records) = if path.exists() {
            let (header, mut arrays) = checkpoint::load_matching(&path, "codes", &key)?;
            let records: Vec<CodeRecord> =
                serde_json::from_value(header.meta).map_err(|e| CliError::Io(e.to_string()))?;
            (arrays.pop().expect("codes"), records)
        } else {
            (Array2::zeros((0, n)), Vec::new())
        };
        let opts =
            self.inference_options(self.config.infer_max_iters, self.config.infer_check_every);
        while records.len() < set.len() {
            let start = records.len();
            let end = (start + INFER_CHUNK).min(set.len());
            let images = set.pixels().slice(s![start..end, ..]).mapv(f64::from);
            let outcomes = infer_batch(images.view(), &dict, &opts, None)?;
            let block =
                Array2::from_shape_fn((outcomes.len(), n), |(i, j)| outcomes[i].code.coeffs()[j]);
            coeffs = concatenate![Axis(0), coeffs, block];
            records.extend(
                outcomes
                    .iter()
                    .enumerate()
                    .map(|(i, o)| CodeRecord::new(start + i, o)),
            );
            std::fs::create_dir_all(self.dir()).map_err(|e| CliError::Io(e.to_string()))?;
            let meta = serde_json::to_value(&records).expect("records serialize");
            checkpoint::save(&path, "codes", &key, meta, &[coeffs.view()])?;
            let converged = records.iter().filter(|r| r.converged).count();
            info!(
                "λ={lambda}: exact codes for {end}/{} images, {converged} converged",
                set.len()
            );
        }
        let codes = coeffs
            .rows()
            .into_iter()
            .map(|r| SparseCode::from_dense(r.to_owned()))
            .collect();
        Ok(ExactCodes { codes, records })
    }

    /// Exact code of one training image.
    pub fn training_image_code(
        &self,
        dict: &Dictionary,
        index: usize,
    ) -> Result<InferOutcome, CliError> {
        let x = self
            .splits()?
            .train
            .image(index)
            .mapv(f64::from)
            .insert_axis(Axis(0));
        let opts =
            self.inference_options(self.config.infer_max_iters, self.config.infer_check_every);
        let out = infer_batch(x.view(), dict, &opts, None)?.remove(0);
        if !out.converged {
            return Err(CliError::NotConverged(format!(
                "training image {index}: inactive excess {:e}, active residual {:e}",
                out.report.inactive_excess, out.report.active_residual
            )));
        }
        Ok(out)
    }

    pub fn mlp_path(&self) -> PathBuf {
        self.dir().join("mlp.ckpt")
    }

    pub fn mlp(&self) -> Result<(Mlp, MlpSummary), CliError> {
        let path = self.mlp_path();
        let key = self.config.mlp_key();
        if path.exists() {
            let (header, arrays) = checkpoint::load_matching(&path, "mlp", &key)?;
            let summary: MlpSummary =
                serde_json::from_value(header.meta).map_err(|e| CliError::Io(e.to_string()))?;
            let [w1, b1, w2, b2]: [Array2<f64>; 4] = arrays
                .try_into()
                .map_err(|_| CliError::Io(format!("{}: expected four arrays", path.display())))?;
            let row = |a: Array2<f64>| a.row(0).to_owned();
            return Ok((
                Mlp {
                    w1,
                    b1: row(b1),
                    w2,
                    b2: row(b2),
                },
                summary,
            ));
        }
        let splits = self.splits()?;
        let steps = self.config.mlp_steps;
        let config = MlpConfig {
            schedule: vec![(steps, 0.1), (steps, 0.01)],
            ..MlpConfig::new(self.config.mlp_seed)
        };
        let trained = train_mlp(&splits.train, Some(&splits.validation), &config)?;
        let summary = MlpSummary {
            train_accuracy: trained.train_accuracy,
            validation_accuracy: trained.validation_accuracy.unwrap_or(f64::NAN),
            log: trained.log,
        };
        let net = trained.net;
        std::fs::create_dir_all(self.dir()).map_err(|e| CliError::Io(e.to_string()))?;
        let b1 = net.b1.view().insert_axis(Axis(0));
        let b2 = net.b2.view().insert_axis(Axis(0));
        let meta = serde_json::to_value(&summary).expect("summary serializes");
        checkpoint::save(
            &path,
            "mlp",
            &key,
            meta,
            &[net.w1.view(), b1, net.w2.view(), b2],
        )?;
        Ok((net, summary))
    }

    pub fn pool_codes_path(&self) -> PathBuf {
        self.dir().join(format!(
            "pool-codes-lambda{}.ckpt",
            lambda_tag(self.config.lambda)
        ))
    }

    /// Codes at `config.lambda` with a fixed ISTA budget for the whole training
    /// split followed by the evaluation images, resumable in chunks.
    pub fn pool_codes(&self) -> Result<PoolCodes, CliError> {
        let splits = self.splits()?;
        let eval = self.eval_set()?;
        let total = splits.train.len() + eval.len();
        let dict = self.dictionary(self.config.lambda)?.dictionary;
        let n = dict.size();
        let path = self.pool_codes_path();
        let key = self.config.pool_codes_key();
        let (mut coeffs, mut converged) = if path.exists() {
            let (header, mut arrays) = checkpoint::load_matching(&path, "pool-codes", &key)?;
            (
                arrays.pop().expect("codes").mapv(|v| v as f32),
                header.meta["converged"].as_u64().unwrap_or(0) as usize,
            )
        } else {
            (Array2::zeros((0, n)), 0)
        };
        let budget = self.config.pool_code_iters;
        let opts = self.inference_options(budget, budget.max(1));
        while coeffs.nrows() < total {
            let start = coeffs.nrows();
            let end = (start + POOL_CHUNK).min(total);
            let images = Array2::from_shape_fn((end - start, dict.dim()), |(i, j)| {
                let idx = start + i;
                if idx < splits.train.len() {
                    f64::from(splits.train.pixels()[[idx, j]])
                } else {
                    f64::from(eval.pixels()[[idx - splits.train.len(), j]])
                }
            });
            let outcomes = infer_batch(images.view(), &dict, &opts, None)?;
            converged += outcomes.iter().filter(|o| o.converged).count();
            let block = Array2::from_shape_fn((outcomes.len(), n), |(i, j)| {
                outcomes[i].code.coeffs()[j] as f32
            });
            coeffs = concatenate![Axis(0), coeffs, block];
            std::fs::create_dir_all(self.dir()).map_err(|e| CliError::Io(e.to_string()))?;
            let wide = coeffs.mapv(f64::from);
            checkpoint::save(
                &path,
                "pool-codes",
                &key,
                serde_json::json!({ "converged": converged }),
                &[wide.view()],
            )?;
            info!("pool codes: {end}/{total} images, {converged} met the fixed-point conditions");
        }
        let split = splits.train.len();
        Ok(PoolCodes {
            pool: coeffs.slice(s![..split, ..]).to_owned(),
            eval: coeffs.slice(s![split.., ..]).to_owned(),
            converged,
        })
    }

    /// Sparse-code sensitivity at `lambda` over the sampled analysis images;
    /// unconverged codes count as non-generic.
    pub fn sparse_sensitivity(&self, lambda: f64) -> Result<SensitivityHistogram, CliError> {
        let dictionary = self.dictionary(lambda)?.dictionary;
        let exact = self.exact_codes(lambda)?;
        let draws = self.draws()?;
        let codes = draws
            .iter()
            .map(|d| {
                (
                    d.image,
                    (exact.codes[d.image].clone(), exact.records[d.image].generic),
                )
            })
            .collect();
        let provider = SparseJacobian {
            dict: &dictionary,
            codes,
        };
        Ok(sensitivity_histogram(
            &provider,
            &self.analysis_set()?,
            &PerturbationKind::ALL,
            &draws,
            &self.elastic(),
        )?)
    }

    pub fn pixel_sensitivity(&self) -> Result<SensitivityHistogram, CliError> {
        let set = self.analysis_set()?;
        let provider = IdentityJacobian { dim: set.dim() };
        Ok(sensitivity_histogram(
            &provider,
            &set,
            &PerturbationKind::ALL,
            &self.draws()?,
            &self.elastic(),
        )?)
    }

    pub fn mlp_sensitivity(&self) -> Result<SensitivityHistogram, CliError> {
        let (mlp, _) = self.mlp()?;
        let provider = MlpJacobian { mlp: &mlp };
        Ok(sensitivity_histogram(
            &provider,
            &self.analysis_set()?,
            &PerturbationKind::ALL,
            &self.draws()?,
            &self.elastic(),
        )?)
    }

    /// Gain spectra, power and amplitude spectra, and norm-ratio ranges at
    /// `config.lambda`.
    pub fn spectrum(&self) -> Result<SpectrumReport, CliError> {
        let lambda = self.config.lambda;
        let dict = self.dictionary(lambda)?.dictionary;
        let elastic = self.elastic();

        let train = &self.splits()?.train;
        let digit = self.training_image_code(&dict, 0)?;
        let spectrum = svd_gain_spectrum(dict.active(digit.code.active()).view())?;
        let pair = train.head(2);
        let draw = SampleDraw {
            sample: 0,
            image: 0,
            partner: 1,
            seed: self.config.sensitivity_seed,
        };
        let mut power = BTreeMap::new();
        for kind in PerturbationKind::ALL {
            let dx = draw_direction(&pair, &draw, kind, &elastic)?;
            power.insert(
                kind.as_str().to_string(),
                power_spectrum(dx.delta.view(), &spectrum)?
                    .to_dense()
                    .to_vec(),
            );
        }
        let digit = DigitSpectrum {
            active: digit.code.k(),
            generic: digit.is_generic(),
            sigma: spectrum.sigma.to_vec(),
            power,
        };

        let exact = self.exact_codes(lambda)?;
        let set = self.analysis_set()?;
        let m = dict.dim();
        let mut sums: BTreeMap<String, Array1<f64>> = PerturbationKind::ALL
            .iter()
            .map(|k| (k.as_str().to_string(), Array1::zeros(m)))
            .collect();
        let mut samples = 0usize;
        let mut spectra: BTreeMap<usize, GainSpectrum> = BTreeMap::new();
        for d in self.draws()? {
            let record = &exact.records[d.image];
            if !record.generic || record.active == 0 {
                continue;
            }
            if let std::collections::btree_map::Entry::Vacant(e) = spectra.entry(d.image) {
                let sp = svd_gain_spectrum(dict.active(exact.codes[d.image].active()).view())?;
                e.insert(sp);
            }
            let sp = &spectra[&d.image];
            let mut rows = Vec::new();
            for kind in PerturbationKind::ALL {
                match draw_direction(&set, &d, kind, &elastic) {
                    Ok(dx) => rows.push((kind, power_spectrum(dx.delta.view(), sp)?.to_dense())),
                    Err(PerturbationError::ZeroDirection(_)) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            if rows.len() < PerturbationKind::ALL.len() {
                continue;
            }
            for (kind, p) in rows {
                *sums.get_mut(kind.as_str()).expect("kind") += &p;
            }
            samples += 1;
        }
        let amplitude = sums
            .into_iter()
            .map(|(k, s)| (k, (s / samples.max(1) as f64).mapv(f64::sqrt).to_vec()))
            .collect();

        let mut active_sets = Vec::new();
        for (image, (code, record)) in exact.codes.iter().zip(&exact.records).enumerate() {
            if !record.generic || code.k() < 2 {
                continue;
            }
            let range = active_set_range(&dict, code.active())?;
            active_sets.push(GainRange {
                image,
                active: code.k(),
                sigma_max: range.max,
                sigma_min: range.min,
                ratio: range.ratio(),
            });
        }
        let ratios: Vec<f64> = active_sets.iter().map(|g| g.ratio).collect();
        let mut sizes: Vec<f64> = exact.codes.iter().map(|c| c.k() as f64).collect();
        sizes.retain(|&k| k > 0.0);
        let support = crate::sensitivity::median(&sizes).round().max(1.0) as usize;
        Ok(SpectrumReport {
            lambda,
            digit,
            amplitude,
            amplitude_samples: samples,
            random_support_size: support,
            random_supports: rip_range(
                &dict,
                support,
                self.config.rip_trials,
                self.config.sensitivity_seed,
            )?,
            median_gain_ratio: crate::sensitivity::median(&ratios),
            max_gain_ratio: ratios.iter().copied().fold(f64::NAN, f64::max),
            active_sets,
        })
    }

    /// Overlapping filter pairs within the active set of the first training
    /// digit, most overlapping first.
    pub fn pairs(&self) -> Result<PairReport, CliError> {
        let dict = self.dictionary(self.config.lambda)?.dictionary;
        let digit = self.training_image_code(&dict, 0)?;
        Ok(filter_pair_stats(
            &dict,
            digit.code.active(),
            PAIR_THRESHOLD,
        ))
    }

    /// The four representations of the labeled pool and the evaluation images.
    pub fn representations(&self) -> Result<Vec<RepresentationData>, CliError> {
        let splits = self.splits()?;
        let eval = self.eval_set()?;
        let mut reps = vec![RepresentationData {
            name: "pixels".into(),
            pool: splits.train.pixels().to_owned(),
            eval: eval.pixels().to_owned(),
            logreg_max_k: Some(usize::MAX),
        }];
        let codes = self.pool_codes()?;
        reps.push(RepresentationData {
            name: "sparse".into(),
            pool: codes.pool,
            eval: codes.eval,
            logreg_max_k: Some(usize::MAX),
        });
        let (mlp, _) = self.mlp()?;
        reps.push(RepresentationData {
            name: "mlp".into(),
            pool: hidden_f32(&mlp, splits.train.pixels()),
            eval: hidden_f32(&mlp, eval.pixels()),
            logreg_max_k: Some(usize::MAX),
        });
        let net = RandomNet::new(
            splits.train.dim(),
            self.config.random_width,
            self.config.random_seed,
        );
        reps.push(RepresentationData {
            name: "random".into(),
            pool: net.features(splits.train.pixels()),
            eval: net.features(eval.pixels()),
            logreg_max_k: Some(self.config.random_logreg_max_k),
        });
        Ok(reps)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            k_grid: self.config.k_grid.clone(),
            seeds: self.config.seeds.clone(),
            lambda_w_grid: self.config.lambda_w_grid.clone(),
            metrics: vec![Metric::Euclidean, Metric::Cosine],
            logreg_steps: self.config.logreg_steps,
        }
    }

    pub fn evaluation_path(&self) -> PathBuf {
        self.dir().join("evaluation.json")
    }

    /// The classification sweep; a cached result from other inputs is recomputed.
    pub fn classify(&self) -> Result<EvalReport, CliError> {
        let path = self.evaluation_path();
        let key = self.config.classify_key();
        if path.exists() {
            let (prov, report): (Provenance, EvalReport) = read_json(&path)?;
            if prov.config_hash == key {
                return Ok(report);
            }
            info!(
                "{} was produced from other inputs; recomputing",
                path.display()
            );
        }
        let reps = self.representations()?;
        let eval = self.eval_set()?;
        let report = evaluation_sweep(
            &reps,
            &self.splits()?.train,
            eval.labels(),
            &self.sweep_config(),
        )?;
        std::fs::create_dir_all(self.dir()).map_err(|e| CliError::Io(e.to_string()))?;
        write_json(
            &path,
            &report,
            &Provenance::new("classify", &key, self.config.seeds[0]),
        )?;
        Ok(report)
    }
}

fn hidden_f32(mlp: &Mlp, pixels: ArrayView2<f32>) -> Array2<f32> {
    const CHUNK: usize = 2048;
    let mut out = Array2::zeros((pixels.nrows(), mlp.hidden_dim()));
    for (src, mut dst) in pixels
        .axis_chunks_iter(Axis(0), CHUNK)
        .zip(out.axis_chunks_iter_mut(Axis(0), CHUNK))
    {
        dst.assign(&mlp.hidden(src.mapv(f64::from).view()).mapv(|v| v as f32));
    }
    out
}
