//! 5 → 32 (ReLU) → 1 (sigmoid) dense network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sample;

pub const INPUTS: usize = 5;
pub const HIDDEN: usize = 32;
/// Total scalar parameter count across all four blocks.
pub const PARAM_COUNT: usize = HIDDEN * INPUTS + HIDDEN + HIDDEN + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// Row `j` holds the input weights of hidden unit `j`.
    pub w1: [[f64; INPUTS]; HIDDEN],
    pub b1: [f64; HIDDEN],
    pub w2: [f64; HIDDEN],
    pub b2: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self::zeros()
    }
}

impl MlpParams {
    pub fn zeros() -> Self {
        Self {
            w1: [[0.0; INPUTS]; HIDDEN],
            b1: [0.0; HIDDEN],
            w2: [0.0; HIDDEN],
            b2: 0.0,
        }
    }

    /// Flattens in the order w1 (row-major), b1, w2, b2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(PARAM_COUNT);
        for row in &self.w1 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len(), PARAM_COUNT, "flat parameter length");
        let mut p = Self::zeros();
        let (w1, rest) = flat.split_at(HIDDEN * INPUTS);
        for (row, chunk) in p.w1.iter_mut().zip(w1.chunks_exact(INPUTS)) {
            row.copy_from_slice(chunk);
        }
        let (b1, rest) = rest.split_at(HIDDEN);
        p.b1.copy_from_slice(b1);
        let (w2, rest) = rest.split_at(HIDDEN);
        p.w2.copy_from_slice(w2);
        p.b2 = rest[0];
        p
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// Uniform bound for a layer with `fan_in` inputs.
pub fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Fan-in scaled uniform weights, zero biases. Deterministic in `seed`.
pub fn mlp_init(seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MlpParams::zeros();
    let b1 = init_bound(INPUTS);
    for row in p.w1.iter_mut() {
        for w in row.iter_mut() {
            *w = rng.random_range(-b1..b1);
        }
    }
    let b2 = init_bound(HIDDEN);
    for w in p.w2.iter_mut() {
        *w = rng.random_range(-b2..b2);
    }
    p
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn hidden(params: &MlpParams, x: &[f64; INPUTS]) -> [f64; HIDDEN] {
    let mut h = params.b1;
    for (hj, row) in h.iter_mut().zip(&params.w1) {
        for (w, xi) in row.iter().zip(x) {
            *hj += w * xi;
        }
    }
    h
}

/// Output logit (pre-sigmoid).
pub fn mlp_logit(params: &MlpParams, x: &[f64; INPUTS]) -> f64 {
    let h = hidden(params, x);
    params.b2
        + h.iter()
            .zip(&params.w2)
            .map(|(z, w)| z.max(0.0) * w)
            .sum::<f64>()
}

/// Probability that the lips are open.
pub fn mlp_forward(params: &MlpParams, x: &[f64; INPUTS]) -> f64 {
    sigmoid(mlp_logit(params, x))
}

/// Binary cross-entropy from a logit, stable for large |z|.
pub(crate) fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean BCE over `batch` and its exact gradient.
pub fn mlp_loss_grad(params: &MlpParams, batch: &[Sample]) -> (f64, MlpParams) {
    assert!(!batch.is_empty(), "empty batch");
    let n = batch.len() as f64;
    let mut grad = MlpParams::zeros();
    let mut loss = 0.0;
    for s in batch {
        let x = &s.x;
        let y = s.label.as_target();
        let pre = hidden(params, x);
        let z = params.b2
            + pre
                .iter()
                .zip(&params.w2)
                .map(|(a, w)| a.max(0.0) * w)
                .sum::<f64>();
        loss += bce_from_logit(z, y);
        let dz = (sigmoid(z) - y) / n;
        grad.b2 += dz;
        for j in 0..HIDDEN {
            if pre[j] > 0.0 {
                grad.w2[j] += dz * pre[j];
                let dh = dz * params.w2[j];
                grad.b1[j] += dh;
                for (g, xi) in grad.w1[j].iter_mut().zip(x) {
                    *g += dh * xi;
                }
            }
        }
    }
    (loss / n, grad)
}
