//! Linear max-margin classifier trained by stochastic subgradient descent on
//! the regularized hinge loss (Pegasos).
//!
//! Training runs on standardized features with the bias as a constant extra
//! input; the learned hyperplane is mapped back to raw feature space so that
//! prediction needs no scaler.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::INPUTS;
use super::{check_both_classes, ModelParams, Sample, TrainConfig, TrainError, TrainedModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub w: [f64; INPUTS],
    pub b: f64,
}

impl SvmParams {
    pub fn zeros() -> Self {
        Self {
            w: [0.0; INPUTS],
            b: 0.0,
        }
    }
}

/// Signed distance-like score `w·x + b`; positive means open.
pub fn svm_margin(p: &SvmParams, x: &[f64; INPUTS]) -> f64 {
    p.b + p.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
}

fn standardizer(samples: &[Sample]) -> ([f64; INPUTS], [f64; INPUTS]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; INPUTS];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(&s.x) {
            *m += x / n;
        }
    }
    let mut scale = [0.0; INPUTS];
    for s in samples {
        for k in 0..INPUTS {
            scale[k] += (s.x[k] - mean[k]).powi(2) / n;
        }
    }
    for v in scale.iter_mut() {
        *v = if *v > 0.0 { v.sqrt() } else { 1.0 };
    }
    (mean, scale)
}

/// Runs `cfg.max_epochs` shuffled passes of Pegasos over `samples`.
pub fn svm_train(samples: &[Sample], cfg: &TrainConfig) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    check_both_classes(samples)?;

    let (mean, scale) = standardizer(samples);
    let data: Vec<([f64; INPUTS + 1], f64)> = samples
        .iter()
        .map(|s| {
            let mut z = [1.0; INPUTS + 1];
            for k in 0..INPUTS {
                z[k] = (s.x[k] - mean[k]) / scale[k];
            }
            (z, s.label.as_sign())
        })
        .collect();

    let lambda = cfg.svm_lambda;
    let mut w = [0.0; INPUTS + 1];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = 0u64;
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = &data[i];
            let margin: f64 = y * w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            let shrink = 1.0 - eta * lambda;
            for (wk, xk) in w.iter_mut().zip(x) {
                *wk *= shrink;
                if margin < 1.0 {
                    *wk += eta * y * xk;
                }
            }
        }
    }

    let mut params = SvmParams::zeros();
    params.b = w[INPUTS];
    for k in 0..INPUTS {
        params.w[k] = w[k] / scale[k];
        params.b -= w[k] * mean[k] / scale[k];
    }
    Ok(TrainedModel::new(
        ModelParams::Svm(params),
        cfg.coeffs,
        cfg.norm_mode,
        cfg.threshold,
    ))
}
