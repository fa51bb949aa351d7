//! The five lip distances.
//!
//! Three verticals (left `U1-L1`, middle `U2-L2`, right `U3-L3`) and two
//! diagonals (`U1-L3`, `U3-L1`), each scaled by its own length-control
//! coefficient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmarks::{LipLandmarks, LipRole, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("non-finite distance")]
    NonFinite,
    #[error("coefficient {name} must be positive and finite, got {value}")]
    BadCoefficient { name: &'static str, value: f64 },
    #[error("mouth width |U1-U3| is zero")]
    DegenerateMouth,
    #[error("unknown normalization mode {0:?}")]
    UnknownNormMode(String),
}

/// Length-control coefficients for LD, MD, RD, D1 and D2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffSet {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for CoeffSet {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl CoeffSet {
    pub const fn uniform(k: f64) -> Self {
        Self {
            alpha: k,
            beta: k,
            gamma: k,
            delta: k,
            epsilon: k,
        }
    }

    pub fn new(values: [f64; 5]) -> Result<Self, FeatureError> {
        let [alpha, beta, gamma, delta, epsilon] = values;
        let c = Self {
            alpha,
            beta,
            gamma,
            delta,
            epsilon,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.alpha, self.beta, self.gamma, self.delta, self.epsilon]
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        const NAMES: [&str; 5] = ["alpha", "beta", "gamma", "delta", "epsilon"];
        for (name, value) in NAMES.into_iter().zip(self.to_array()) {
            if !(value.is_finite() && value > 0.0) {
                return Err(FeatureError::BadCoefficient { name, value });
            }
        }
        Ok(())
    }
}

impl FromStr for CoeffSet {
    type Err = String;

    /// Parses `a,b,g,d,e`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let values: [f64; 5] = values
            .try_into()
            .map_err(|v: Vec<f64>| format!("expected 5 coefficients, got {}", v.len()))?;
        CoeffSet::new(values).map_err(|e| e.to_string())
    }
}

/// LD, MD, RD, D1, D2 for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub ld: f64,
    pub md: f64,
    pub rd: f64,
    pub d1: f64,
    pub d2: f64,
    pub t_ms: i64,
}

impl FeatureVector {
    pub fn new(values: [f64; 5], t_ms: i64) -> Self {
        let [ld, md, rd, d1, d2] = values;
        Self {
            ld,
            md,
            rd,
            d1,
            d2,
            t_ms,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.ld, self.md, self.rd, self.d1, self.d2]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.to_array().map(f), self.t_ms)
    }
}

/// `c * |p - q|`.
pub fn scaled_distance(p: Point, q: Point, c: f64) -> Result<f64, FeatureError> {
    let d = c * (p.x - q.x).hypot(p.y - q.y);
    if d.is_finite() {
        Ok(d)
    } else {
        Err(FeatureError::NonFinite)
    }
}

pub fn compute_features(lips: &LipLandmarks, coeffs: &CoeffSet) -> Result<FeatureVector, FeatureError> {
    use LipRole::*;
    let p = |r| lips.get(r);
    Ok(FeatureVector {
        ld: scaled_distance(p(U1), p(L1), coeffs.alpha)?,
        md: scaled_distance(p(U2), p(L2), coeffs.beta)?,
        rd: scaled_distance(p(U3), p(L3), coeffs.gamma)?,
        d1: scaled_distance(p(U1), p(L3), coeffs.delta)?,
        d2: scaled_distance(p(U3), p(L1), coeffs.epsilon)?,
        t_ms: lips.t_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Raw pixel distances.
    #[default]
    None,
    /// Distances divided by the upper-lip span `|U1-U3|`.
    MouthWidth,
}

impl NormMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::None => "none",
            NormMode::MouthWidth => "mouth-width",
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormMode {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(NormMode::None),
            "mouth-width" => Ok(NormMode::MouthWidth),
            other => Err(FeatureError::UnknownNormMode(other.to_string())),
        }
    }
}

pub fn normalize_features(
    fv: FeatureVector,
    lips: &LipLandmarks,
    mode: NormMode,
) -> Result<FeatureVector, FeatureError> {
    match mode {
        NormMode::None => Ok(fv),
        NormMode::MouthWidth => {
            let width = scaled_distance(lips.get(LipRole::U1), lips.get(LipRole::U3), 1.0)?;
            if width == 0.0 {
                return Err(FeatureError::DegenerateMouth);
            }
            Ok(fv.map(|d| d / width))
        }
    }
}

/// Features followed by normalization, the form a model consumes.
pub fn extract(
    lips: &LipLandmarks,
    coeffs: &CoeffSet,
    mode: NormMode,
) -> Result<FeatureVector, FeatureError> {
    normalize_features(compute_features(lips, coeffs)?, lips, mode)
}
