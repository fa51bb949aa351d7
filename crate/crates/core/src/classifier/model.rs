//! JSON model files.
//!
//! ```json
//! {"version":1,"kind":"mlp","norm_mode":"none","threshold":0.5,
//!  "coeffs":[1,1,1,1,1],"params":{"w1":[[..5]..32],"b1":[..32],"w2":[..32],"b2":0.0}}
//! ```
//!
//! A linear model stores `"params":{"w":[..5],"b":0.0}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::mlp::{MlpParams, HIDDEN, INPUTS};
use super::svm::SvmParams;
use super::{ModelKind, ModelParams, TrainedModel};
use crate::features::{CoeffSet, NormMode};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u64),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn corrupt(msg: impl ToString) -> ModelError {
    ModelError::CorruptModel(msg.to_string())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    kind: ModelKind,
    norm_mode: NormMode,
    threshold: f64,
    coeffs: [f64; 5],
    params: Value,
}

#[derive(Serialize, Deserialize)]
struct MlpWire {
    w1: Vec<[f64; INPUTS]>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

#[derive(Serialize, Deserialize)]
struct SvmWire {
    w: [f64; INPUTS],
    b: f64,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        let params = match &self.params {
            ModelParams::Mlp(p) => serde_json::to_value(MlpWire {
                w1: p.w1.to_vec(),
                b1: p.b1.to_vec(),
                w2: p.w2.to_vec(),
                b2: p.b2,
            }),
            ModelParams::Svm(p) => serde_json::to_value(SvmWire { w: p.w, b: p.b }),
        }
        .expect("params serialize");
        let file = ModelFile {
            version: self.version,
            kind: self.kind(),
            norm_mode: self.norm_mode,
            threshold: self.threshold,
            coeffs: self.coeffs.to_array(),
            params,
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: Value = serde_json::from_str(text).map_err(corrupt)?;
        let version = value
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| corrupt("missing version"))?;
        if version != MODEL_VERSION as u64 {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let file: ModelFile = serde_json::from_value(value).map_err(corrupt)?;
        if !(file.threshold > 0.0 && file.threshold < 1.0) {
            return Err(corrupt(format!("threshold {} outside (0, 1)", file.threshold)));
        }
        let coeffs = CoeffSet::new(file.coeffs).map_err(corrupt)?;
        let params = match file.kind {
            ModelKind::Mlp => {
                let w: MlpWire = serde_json::from_value(file.params).map_err(corrupt)?;
                let p = MlpParams {
                    w1: w.w1.try_into().map_err(|_| corrupt(format!("w1 needs {HIDDEN} rows")))?,
                    b1: w.b1.try_into().map_err(|_| corrupt(format!("b1 needs {HIDDEN} entries")))?,
                    w2: w.w2.try_into().map_err(|_| corrupt(format!("w2 needs {HIDDEN} entries")))?,
                    b2: w.b2,
                };
                if !p.is_finite() {
                    return Err(corrupt("non-finite weight"));
                }
                ModelParams::Mlp(p)
            }
            ModelKind::Svm => {
                let w: SvmWire = serde_json::from_value(file.params).map_err(corrupt)?;
                if !(w.w.iter().all(|v| v.is_finite()) && w.b.is_finite()) {
                    return Err(corrupt("non-finite weight"));
                }
                ModelParams::Svm(SvmParams { w: w.w, b: w.b })
            }
        };
        Ok(TrainedModel {
            params,
            coeffs,
            norm_mode: file.norm_mode,
            threshold: file.threshold,
            version: file.version,
        })
    }
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, model.to_json())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    TrainedModel::from_json(&fs::read_to_string(path)?)
}
