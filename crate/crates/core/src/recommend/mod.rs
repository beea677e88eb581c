//! The two model families served to participants (implicit-feedback matrix
//! factorization and a multinomial variational autoencoder), top-n ranking,
//! offline evaluation, and the `LRS1` model file format.

mod eval;
mod io;
pub mod linalg;
mod mf;
mod rank;
mod vae;

use serde::{Deserialize, Serialize};

use crate::dataset::TrackKey;

pub use eval::{evaluate, evaluate_scores, EvalReport, PopularityScorer};
pub use io::{read_model, read_model_file, write_model, write_model_file, MAGIC};
pub use mf::{mf_objective, train_mf, train_mf_with, MfModel};
pub use rank::{recommend_top_n, RankedList};
pub use vae::{elbo_terms, train_multvae, train_multvae_with, ElboTerms, ForwardPass, MultVaeModel, VaeParams};

#[derive(Debug, thiserror::Error)]
pub enum RecommendError {
    #[error("interaction matrix has no users or no items")]
    EmptyMatrix,
    #[error("normal equations are not positive definite")]
    SingularSystem,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite value in loss computation")]
    NonFiniteValue,
    #[error("no usable validation users")]
    EmptyValidation,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Hyperparameters for both model families. Fields that do not apply to a
/// family are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
    /// Final KL weight for MultVAE.
    pub beta: f64,
    pub beta_anneal_steps: usize,
    /// MF latent dimension.
    pub factors: usize,
    /// MultVAE hidden width.
    pub hidden: usize,
    /// MultVAE latent dimension.
    pub latent: usize,
    pub regularization: f64,
    pub alpha: f64,
    pub als_iterations: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.05,
            rng_seed: 0,
            beta: 0.2,
            beta_anneal_steps: 2000,
            factors: 32,
            hidden: 64,
            latent: 16,
            regularization: 0.01,
            alpha: 10.0,
            als_iterations: 15,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), RecommendError> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("beta_anneal_steps", self.beta_anneal_steps),
            ("factors", self.factors),
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("als_iterations", self.als_iterations),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(RecommendError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RecommendError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.regularization > 0.0 && self.regularization.is_finite()) {
            return Err(RecommendError::InvalidConfig("regularization must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(RecommendError::InvalidConfig("alpha must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(RecommendError::InvalidConfig("beta must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Anything that can score the full catalog for a user given their visible
/// `(item, count)` interactions.
pub trait Scorer {
    fn n_items(&self) -> usize;
    fn score(&self, input: &[(usize, u32)]) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mf,
    MultVae,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Mf => "mf",
            ModelKind::MultVae => "multvae",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mf(MfModel),
    MultVae(MultVaeModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mf(_) => ModelKind::Mf,
            Model::MultVae(_) => ModelKind::MultVae,
        }
    }
}

impl Scorer for Model {
    fn n_items(&self) -> usize {
        match self {
            Model::Mf(m) => m.n_items(),
            Model::MultVae(m) => m.n_items(),
        }
    }

    fn score(&self, input: &[(usize, u32)]) -> Vec<f64> {
        match self {
            Model::Mf(m) => m.score(input),
            Model::MultVae(m) => m.score(input),
        }
    }
}

/// A trained model with the configuration it was trained with and the track
/// key of every item column. This is the unit stored in a model file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub model: Model,
    pub config: TrainingConfig,
    /// One key per item column; may be empty for models trained on raw matrices.
    pub item_keys: Vec<TrackKey>,
}

impl ModelBundle {
    pub fn new(model: Model, config: TrainingConfig, item_keys: Vec<TrackKey>) -> Self {
        Self {
            model,
            config,
            item_keys,
        }
    }
}
