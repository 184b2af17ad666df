//! Alternating minimization of the dictionary-learning objective.
//!
//! Every iteration proposes one ISTA step on all codes and then one gradient
//! step on the dictionary. Each proposal is accepted only if it strictly lowers
//! the full objective; its learning rate then grows by 1.1, otherwise the
//! proposal is discarded and the rate halves.
//!
//! Work starts in single precision. Once a rejected proposal changes the
//! objective by less than single precision can resolve, the state is widened
//! to double precision for the rest of the run.

use log::{debug, info};
use ndarray::{Array2, ArrayView2, NdFloat};
use serde::{Deserialize, Serialize};

use super::steps::{
    adapt_rate, dict_update, ista_update, normalize_columns, objective_from_residual,
};
use super::{Dictionary, Precision, SparseCodingError};
use crate::rng::{standard_normal, stream_rng, streams};

/// A rejected proposal whose relative objective change is below this is
/// treated as unresolvable in single precision.
const SINGLE_PRECISION_FLOOR: f64 = 32.0 * f32::EPSILON as f64;
/// Consecutive rejections of one variable that also force widening.
const MAX_SINGLE_REJECTIONS: usize = 40;
/// Floor on learning rates; a converged run keeps rejecting at this rate.
const MIN_RATE: f64 = 1e-30;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub n_atoms: usize,
    pub iterations: usize,
    pub seed: u64,
    pub eta_dict: f64,
    pub eta_code: f64,
    pub start_precision: Precision,
}

impl TrainConfig {
    pub fn new(lambda: f64, n_atoms: usize, iterations: usize, seed: u64) -> Self {
        Self {
            lambda,
            n_atoms,
            iterations,
            seed,
            eta_dict: 1e-2,
            eta_code: 1e-2,
            start_precision: Precision::Single,
        }
    }
}

/// Progress of a training run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainState {
    pub iteration: usize,
    pub eta_dict: f64,
    pub eta_code: f64,
    /// Objective after every completed iteration; index 0 is the initial value.
    pub history: Vec<f64>,
    pub precision: Precision,
    /// Iteration at which the run widened to double precision, if it did.
    pub widened_at: Option<usize>,
    pub accepted_code_steps: usize,
    pub accepted_dict_steps: usize,
}

/// Everything needed to resume a run.
#[derive(Debug, Clone)]
pub struct TrainCheckpoint {
    pub atoms: Array2<f64>,
    pub codes: Array2<f64>,
    pub state: TrainState,
}

struct Engine<T> {
    x: Array2<T>,
    d: Array2<T>,
    r: Array2<T>,
    residual: Array2<T>,
    objective: f64,
}

enum Proposal {
    Accepted,
    Rejected { relative_change: f64 },
}

impl<T: NdFloat> Engine<T> {
    fn new(x: Array2<T>, d: Array2<T>, r: Array2<T>, lambda: f64) -> Self {
        let residual = d.dot(&r) - &x;
        let objective = objective_from_residual(residual.view(), r.view(), lambda);
        Self {
            x,
            d,
            r,
            residual,
            objective,
        }
    }

    fn judge(&self, candidate: f64) -> Proposal {
        Proposal::Rejected {
            relative_change: ((candidate - self.objective) / self.objective).abs(),
        }
    }

    fn propose_codes(&mut self, lambda: f64, eta: &mut f64) -> Proposal {
        let grad = self.d.t().dot(&self.residual);
        let r_new = ista_update(self.r.view(), grad.view(), lambda, *eta);
        let res_new = self.d.dot(&r_new) - &self.x;
        let obj_new = objective_from_residual(res_new.view(), r_new.view(), lambda);
        let (accepted, next_eta) = adapt_rate(self.objective, obj_new, *eta);
        *eta = next_eta;
        if accepted {
            self.r = r_new;
            self.residual = res_new;
            self.objective = obj_new;
            Proposal::Accepted
        } else {
            self.judge(obj_new)
        }
    }

    fn propose_dict(&mut self, lambda: f64, eta: &mut f64) -> Proposal {
        let d_new = match dict_update(self.d.view(), self.residual.view(), self.r.view(), *eta) {
            Ok(d) => d,
            // A collapsed column is an overshooting step: reject it like any other.
            Err(SparseCodingError::CollapsedAtom(_)) => {
                *eta *= super::steps::RATE_DECAY;
                return Proposal::Rejected {
                    relative_change: f64::INFINITY,
                };
            }
            Err(_) => unreachable!("dict_update only fails on collapse"),
        };
        let res_new = d_new.dot(&self.r) - &self.x;
        let obj_new = objective_from_residual(res_new.view(), self.r.view(), lambda);
        let (accepted, next_eta) = adapt_rate(self.objective, obj_new, *eta);
        *eta = next_eta;
        if accepted {
            self.d = d_new;
            self.residual = res_new;
            self.objective = obj_new;
            Proposal::Accepted
        } else {
            self.judge(obj_new)
        }
    }
}

fn cast<S: NdFloat, T: NdFloat>(a: &Array2<S>) -> Array2<T> {
    a.mapv(|v| T::from(v.to_f64().unwrap()).unwrap())
}

enum Precisioned {
    Single(Engine<f32>),
    Double(Engine<f64>),
}

/// Stateful alternating optimizer; see the module docs.
pub struct Trainer {
    config: TrainConfig,
    engine: Precisioned,
    state: TrainState,
    rejections: [usize; 2],
}

impl Trainer {
    /// Start from unit-normal dictionary (then normalized) and codes.
    /// `images` holds one image per row.
    pub fn new(images: ArrayView2<f32>, config: TrainConfig) -> Result<Self, SparseCodingError> {
        let (t, m) = images.dim();
        let n = config.n_atoms;
        if n == 0 {
            return Err(SparseCodingError::Shape(
                "dictionary needs at least one atom".into(),
            ));
        }
        let mut rng = stream_rng(config.seed, streams::DICTIONARY_INIT);
        let mut atoms = Array2::from_shape_simple_fn((m, n), || standard_normal(&mut rng));
        normalize_columns(&mut atoms)?;
        let mut rng = stream_rng(config.seed, streams::CODE_INIT);
        let codes = Array2::from_shape_simple_fn((n, t), || standard_normal(&mut rng));
        let state = TrainState {
            iteration: 0,
            eta_dict: config.eta_dict,
            eta_code: config.eta_code,
            history: Vec::new(),
            precision: config.start_precision,
            widened_at: None,
            accepted_code_steps: 0,
            accepted_dict_steps: 0,
        };
        Self::from_parts(images, config, atoms, codes, state)
    }

    /// Continue a run from a checkpoint.
    pub fn resume(
        images: ArrayView2<f32>,
        config: TrainConfig,
        checkpoint: TrainCheckpoint,
    ) -> Result<Self, SparseCodingError> {
        Self::from_parts(
            images,
            config,
            checkpoint.atoms,
            checkpoint.codes,
            checkpoint.state,
        )
    }

    fn from_parts(
        images: ArrayView2<f32>,
        config: TrainConfig,
        atoms: Array2<f64>,
        codes: Array2<f64>,
        mut state: TrainState,
    ) -> Result<Self, SparseCodingError> {
        let (t, m) = images.dim();
        if atoms.nrows() != m || codes.dim() != (atoms.ncols(), t) {
            return Err(SparseCodingError::Shape(format!(
                "images {:?}, atoms {:?}, codes {:?}",
                images.dim(),
                atoms.dim(),
                codes.dim()
            )));
        }
        if !(config.lambda.is_finite() && config.lambda >= 0.0) {
            return Err(SparseCodingError::BadLambda(config.lambda));
        }
        let x = images.t().as_standard_layout().to_owned();
        let engine = match state.precision {
            Precision::Single => Precisioned::Single(Engine::new(
                cast(&x),
                cast(&atoms),
                cast(&codes),
                config.lambda,
            )),
            Precision::Double => {
                Precisioned::Double(Engine::new(x.mapv(f64::from), atoms, codes, config.lambda))
            }
        };
        let objective = match &engine {
            Precisioned::Single(e) => e.objective,
            Precisioned::Double(e) => e.objective,
        };
        if !objective.is_finite() {
            return Err(SparseCodingError::NonFinite(state.iteration));
        }
        if state.history.is_empty() {
            state.history.push(objective);
        }
        Ok(Self {
            config,
            engine,
            state,
            rejections: [0, 0],
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn objective(&self) -> f64 {
        match &self.engine {
            Precisioned::Single(e) => e.objective,
            Precisioned::Double(e) => e.objective,
        }
    }

    pub fn atoms(&self) -> Array2<f64> {
        match &self.engine {
            Precisioned::Single(e) => cast(&e.d),
            Precisioned::Double(e) => e.d.clone(),
        }
    }

    /// Current codes, `n × T`.
    pub fn codes(&self) -> Array2<f64> {
        match &self.engine {
            Precisioned::Single(e) => cast(&e.r),
            Precisioned::Double(e) => e.r.clone(),
        }
    }

    pub fn dictionary(&self) -> Result<Dictionary, SparseCodingError> {
        // Single-precision columns are renormalized in double to meet the unit-norm tolerance.
        Dictionary::from_unnormalized(self.atoms(), self.config.lambda)
    }

    pub fn checkpoint(&self) -> TrainCheckpoint {
        TrainCheckpoint {
            atoms: self.atoms(),
            codes: self.codes(),
            state: self.state.clone(),
        }
    }

    fn widen(&mut self) {
        if let Precisioned::Single(e) = &self.engine {
            info!(
                "widening to double precision at iteration {} (objective {:.6e})",
                self.state.iteration, e.objective
            );
            let wide = Engine::new(cast(&e.x), cast(&e.d), cast(&e.r), self.config.lambda);
            self.engine = Precisioned::Double(wide);
            self.state.precision = Precision::Double;
            self.state.widened_at = Some(self.state.iteration);
            self.rejections = [0, 0];
        }
    }

    fn note(&mut self, which: usize, outcome: Proposal) -> bool {
        match outcome {
            Proposal::Accepted => {
                self.rejections[which] = 0;
                if which == 0 {
                    self.state.accepted_code_steps += 1;
                } else {
                    self.state.accepted_dict_steps += 1;
                }
                false
            }
            Proposal::Rejected { relative_change } => {
                self.rejections[which] += 1;
                matches!(self.engine, Precisioned::Single(_))
                    && (relative_change < SINGLE_PRECISION_FLOOR
                        || self.rejections[which] >= MAX_SINGLE_REJECTIONS)
            }
        }
    }

    /// One code proposal followed by one dictionary proposal.
    pub fn step(&mut self) -> Result<(), SparseCodingError> {
        let lambda = self.config.lambda;
        let mut eta = self.state.eta_code;
        let outcome = match &mut self.engine {
            Precisioned::Single(e) => e.propose_codes(lambda, &mut eta),
            Precisioned::Double(e) => e.propose_codes(lambda, &mut eta),
        };
        self.state.eta_code = eta;
        if self.note(0, outcome) {
            self.widen();
        }

        let mut eta = self.state.eta_dict;
        let outcome = match &mut self.engine {
            Precisioned::Single(e) => e.propose_dict(lambda, &mut eta),
            Precisioned::Double(e) => e.propose_dict(lambda, &mut eta),
        };
        self.state.eta_dict = eta;
        if self.note(1, outcome) {
            self.widen();
        }

        self.state.eta_code = self.state.eta_code.max(MIN_RATE);
        self.state.eta_dict = self.state.eta_dict.max(MIN_RATE);
        self.state.iteration += 1;
        let objective = self.objective();
        if !objective.is_finite() {
            return Err(SparseCodingError::NonFinite(self.state.iteration));
        }
        self.state.history.push(objective);
        if self.state.iteration.is_multiple_of(100) {
            debug!(
                "iter {} objective {:.8e} eta_code {:.3e} eta_dict {:.3e} {:?}",
                self.state.iteration,
                objective,
                self.state.eta_code,
                self.state.eta_dict,
                self.state.precision
            );
        }
        Ok(())
    }

    /// Run until `config.iterations` iterations have completed, calling
    /// `on_progress` after each one.
    pub fn run(
        &mut self,
        mut on_progress: impl FnMut(&Trainer) -> Result<(), SparseCodingError>,
    ) -> Result<(), SparseCodingError> {
        while self.state.iteration < self.config.iterations {
            self.step()?;
            on_progress(self)?;
        }
        Ok(())
    }
}

/// Train a dictionary of `n` atoms on `images` (one image per row) for `iters`
/// iterations. Returns the dictionary and the persistent codes (`n × T`).
pub fn train_dictionary(
    images: ArrayView2<f32>,
    lambda: f64,
    n: usize,
    iters: usize,
    seed: u64,
) -> Result<(Dictionary, Array2<f64>, TrainState), SparseCodingError> {
    if iters == 0 {
        return Err(SparseCodingError::Shape(
            "at least one iteration is required".into(),
        ));
    }
    let mut trainer = Trainer::new(images, TrainConfig::new(lambda, n, iters, seed))?;
    trainer.run(|_| Ok(()))?;
    Ok((
        trainer.dictionary()?,
        trainer.codes(),
        trainer.state.clone(),
    ))
}
