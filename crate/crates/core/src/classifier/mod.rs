//! Lips-state classifiers.
//!
//! Two models share one [`TrainedModel`] envelope: a small dense network
//! (`kind = mlp`) and a linear max-margin classifier (`kind = svm`). Both
//! read the five lip distances and answer open or closed.

mod mlp;
mod model;
mod optim;
mod svm;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{CoeffSet, FeatureVector, NormMode};

pub use mlp::{
    init_bound, mlp_forward, mlp_init, mlp_logit, mlp_loss_grad, MlpParams, HIDDEN, INPUTS,
    PARAM_COUNT,
};
pub use model::{load_model, save_model, ModelError, MODEL_VERSION};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use svm::{svm_margin, svm_train, SvmParams};
pub use train::{mlp_train, split_train_val, EpochRecord, TrainingTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LipsState {
    Closed,
    Open,
}

impl LipsState {
    /// 1.0 for open, 0.0 for closed.
    pub fn as_target(self) -> f64 {
        match self {
            LipsState::Open => 1.0,
            LipsState::Closed => 0.0,
        }
    }

    /// +1 for open, -1 for closed.
    pub fn as_sign(self) -> f64 {
        match self {
            LipsState::Open => 1.0,
            LipsState::Closed => -1.0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(LipsState::Closed),
            1 => Some(LipsState::Open),
            _ => None,
        }
    }

    pub fn as_bit(self) -> u8 {
        self as u8
    }

    pub fn flipped(self) -> Self {
        match self {
            LipsState::Open => LipsState::Closed,
            LipsState::Closed => LipsState::Open,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LipsState::Open => "open",
            LipsState::Closed => "closed",
        }
    }
}

impl fmt::Display for LipsState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled feature row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: [f64; INPUTS],
    pub label: LipsState,
    /// Recording/person id; when every sample has one, validation holds out
    /// whole sources.
    pub source: Option<u32>,
}

impl Sample {
    pub fn new(x: [f64; INPUTS], label: LipsState) -> Self {
        Self {
            x,
            label,
            source: None,
        }
    }

    pub fn from_features(fv: &FeatureVector, label: LipsState) -> Self {
        Self::new(fv.to_array(), label)
    }

    pub fn with_source(mut self, source: u32) -> Self {
        self.source = Some(source);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Regularization strength for the linear SVM.
    pub svm_lambda: f64,
    /// Feature settings the samples were produced with; copied into the model.
    pub coeffs: CoeffSet,
    pub norm_mode: NormMode,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 350,
            patience: 20,
            min_delta: 1e-4,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            batch_size: 32,
            seed: 0,
            val_fraction: 0.1,
            svm_lambda: 1e-3,
            coeffs: CoeffSet::default(),
            norm_mode: NormMode::None,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_hat: self.eps_hat,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if self.max_epochs < 1 {
            return bad("max_epochs must be >= 1");
        }
        if self.patience < 1 {
            return bad("patience must be >= 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.svm_lambda > 0.0) {
            return bad("svm_lambda must be positive");
        }
        self.coeffs
            .validate()
            .map_err(|e| TrainError::BadConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("dataset contains a single class")]
    SingleClassDataset,
    #[error("dataset has {rows} rows, need at least {needed}")]
    DatasetTooSmall { rows: usize, needed: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    BadConfig(String),
}

pub(crate) fn check_both_classes(samples: &[Sample]) -> Result<(), TrainError> {
    let open = samples.iter().any(|s| s.label == LipsState::Open);
    let closed = samples.iter().any(|s| s.label == LipsState::Closed);
    if open && closed {
        Ok(())
    } else {
        Err(TrainError::SingleClassDataset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Svm,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "svm" => Ok(ModelKind::Svm),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Mlp(MlpParams),
    Svm(SvmParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub coeffs: CoeffSet,
    pub norm_mode: NormMode,
    /// Probability cut for the network; ignored by the SVM (margin cut at 0).
    pub threshold: f64,
    pub version: u32,
}

impl TrainedModel {
    pub fn new(params: ModelParams, coeffs: CoeffSet, norm_mode: NormMode, threshold: f64) -> Self {
        Self {
            params,
            coeffs,
            norm_mode,
            threshold,
            version: MODEL_VERSION,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::Svm(_) => ModelKind::Svm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: LipsState,
    /// Probability for the network, signed margin for the SVM.
    pub score: f64,
}

/// Classifies one feature vector. Ties go to open.
pub fn predict(model: &TrainedModel, fv: &FeatureVector) -> Prediction {
    predict_array(model, &fv.to_array())
}

pub fn predict_array(model: &TrainedModel, x: &[f64; INPUTS]) -> Prediction {
    let (open, score) = match &model.params {
        ModelParams::Mlp(p) => {
            let prob = mlp_forward(p, x);
            (prob >= model.threshold, prob)
        }
        ModelParams::Svm(p) => {
            let margin = svm_margin(p, x);
            (margin >= 0.0, margin)
        }
    };
    Prediction {
        label: if open { LipsState::Open } else { LipsState::Closed },
        score,
    }
}
