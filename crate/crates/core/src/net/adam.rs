use super::NetworkParams;
use crate::error::{Result, SimecError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, flattened in [`NetworkParams::for_each_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(p: &NetworkParams) -> AdamState {
        let n = p.num_values();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `p` in place.
    pub fn step(&mut self, p: &mut NetworkParams, grads: &NetworkParams, cfg: &AdamConfig) -> Result<()> {
        if !(cfg.lr > 0.0) {
            return Err(SimecError::invalid(format!("learning rate must be > 0, got {}", cfg.lr)));
        }
        if self.m.len() != p.num_values() || grads.num_values() != p.num_values() {
            return Err(SimecError::invalid("optimizer state does not match parameters"));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let g = grads.to_flat();
        let (m, v) = (&mut self.m, &mut self.v);
        let mut i = 0;
        p.for_each_mut(|w| {
            let gi = g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            i += 1;
        });
        Ok(())
    }
}
