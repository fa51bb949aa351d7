//! Adam over flat parameter vectors.

/// First and second moment estimates, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(
    params: &[f64],
    grads: &[f64],
    state: &AdamState,
    t: u64,
    cfg: &AdamConfig,
) -> (Vec<f64>, AdamState) {
    assert!(t >= 1, "adam step index starts at 1");
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    let mut next = AdamState::new(params.len());
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let g = grads[k];
        let m = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        next.m[k] = m;
        next.v[k] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        out.push(params[k] - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps_hat));
    }
    (out, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let cfg = AdamConfig::default();
        let state = AdamState {
            m: vec![0.5, -0.2],
            v: vec![0.04, 0.01],
        };
        let (p, s) = adam_step(&[1.0, 2.0], &[0.0, 0.0], &state, 1, &cfg);
        // zero gradient, but a non-zero first moment still moves the parameter
        assert_ne!(p[0], 1.0);
        assert_eq!(s.m, vec![0.45, -0.2 * 0.9]);
        assert_eq!(s.v, vec![0.04 * 0.999, 0.01 * 0.999]);

        let fresh = AdamState::new(2);
        let (p, s) = adam_step(&[1.0, 2.0], &[0.0, 0.0], &fresh, 1, &cfg);
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s, fresh);
    }

    #[test]
    fn first_scalar_step_closed_form() {
        // t = 1, g = 1: m = 0.1, v = 0.001, m_hat = v_hat = 1,
        // step = lr * 1 / (1 + eps_hat)
        let cfg = AdamConfig::default();
        let (p, s) = adam_step(&[0.0], &[1.0], &AdamState::new(1), 1, &cfg);
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18, "{}", p[0]);
        assert!((s.m[0] - 0.1).abs() < 1e-16);
        assert!((s.v[0] - 0.001).abs() < 1e-18);
    }

    #[test]
    fn pure() {
        let cfg = AdamConfig::default();
        let state = AdamState {
            m: vec![0.3],
            v: vec![0.2],
        };
        let a = adam_step(&[0.7], &[-0.4], &state, 5, &cfg);
        let b = adam_step(&[0.7], &[-0.4], &state, 5, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut p = vec![3.0, -2.0];
        let mut s = AdamState::new(2);
        for t in 1..=2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            (p, s) = adam_step(&p, &g, &s, t, &cfg);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
