//! The training objective and its analytic gradient.
//!
//! ```text
//! L = mean_obs,k (out − T)²
//!   + λ_sym  · mean_obs (S_nn − W_lᵀ W_l)²
//!   + λ_orth · mean_{a≠b} (W_l W_lᵀ)_ab²
//!   + λ_l2   · mean(w²) over every weight matrix
//! ```
//!
//! All terms are means so the λ's are comparable across problem sizes. Biases
//! are not ℓ2-penalized. The orthogonality term ignores the diagonal of
//! `W_l W_lᵀ` and is averaged over the `k` slices.

use super::{forward_cached, Activation, NetworkParams};
use crate::error::{Result, SimecError};
use crate::linalg::{self, Matrix};
use crate::similarity::TargetSpec;

#[derive(Debug, Clone, Default)]
pub struct ObjectiveConfig {
    pub lambda_sym: f64,
    pub lambda_orth: f64,
    pub lambda_l2: f64,
    /// `n×n` block of the square target matching the predicted columns.
    pub sym_target: Option<Matrix>,
    /// Observed entries of `sym_target`; all observed when absent.
    pub sym_mask: Option<Matrix>,
}

impl ObjectiveConfig {
    fn check(&self, p: &NetworkParams) -> Result<()> {
        for (name, v) in [
            ("lambda_sym", self.lambda_sym),
            ("lambda_orth", self.lambda_orth),
            ("lambda_l2", self.lambda_l2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimecError::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.lambda_sym > 0.0 {
            if p.k() > 1 {
                return Err(SimecError::invalid(
                    "the symmetry regularizer is undefined for stacked (k > 1) targets",
                ));
            }
            let n = p.n_targets();
            let sym = self
                .sym_target
                .as_ref()
                .ok_or_else(|| SimecError::invalid("lambda_sym > 0 requires a sym_target"))?;
            if sym.shape() != (n, n) {
                return Err(SimecError::shape("sym_target", (n, n), sym.shape()));
            }
            if let Some(mask) = &self.sym_mask {
                if mask.shape() != (n, n) {
                    return Err(SimecError::shape("sym_mask", (n, n), mask.shape()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub data: f64,
    pub sym: f64,
    pub orth: f64,
    pub l2: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.data + self.sym + self.orth + self.l2
    }
}

fn check_target(p: &NetworkParams, x: &Matrix, target: &TargetSpec) -> Result<()> {
    if target.rows() != x.rows() {
        return Err(SimecError::shape(
            "target rows",
            x.shape(),
            (target.rows(), target.cols()),
        ));
    }
    if target.cols() != p.n_targets() || target.k() != p.k() {
        return Err(SimecError::invalid(format!(
            "target is {}x{}x{} but the network predicts {} columns x {} slices",
            target.rows(),
            target.cols(),
            target.k(),
            p.n_targets(),
            p.k()
        )));
    }
    Ok(())
}

/// Scalar objective value.
pub fn loss(p: &NetworkParams, x: &Matrix, target: &TargetSpec, obj: &ObjectiveConfig) -> Result<f64> {
    Ok(loss_breakdown(p, x, target, obj)?.total())
}

pub fn loss_breakdown(
    p: &NetworkParams,
    x: &Matrix,
    target: &TargetSpec,
    obj: &ObjectiveConfig,
) -> Result<LossBreakdown> {
    Ok(evaluate(p, x, target, obj, false)?.0)
}

/// Exact gradient of [`loss`] with respect to every parameter.
pub fn backward(
    p: &NetworkParams,
    x: &Matrix,
    target: &TargetSpec,
    obj: &ObjectiveConfig,
) -> Result<NetworkParams> {
    Ok(evaluate(p, x, target, obj, true)?.1.expect("gradient requested"))
}

pub(crate) fn value_and_grad(
    p: &NetworkParams,
    x: &Matrix,
    target: &TargetSpec,
    obj: &ObjectiveConfig,
) -> Result<(LossBreakdown, NetworkParams)> {
    let (b, g) = evaluate(p, x, target, obj, true)?;
    Ok((b, g.expect("gradient requested")))
}

fn evaluate(
    p: &NetworkParams,
    x: &Matrix,
    target: &TargetSpec,
    obj: &ObjectiveConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<NetworkParams>)> {
    obj.check(p)?;
    check_target(p, x, target)?;
    let cache = forward_cached(p, x)?;
    let k = p.k();
    let mask = target.mask();
    let observed = match mask {
        Some(m) => m.as_slice().iter().filter(|&&w| w != 0.0).count(),
        None => x.rows() * p.n_targets(),
    };
    if observed == 0 {
        return Err(SimecError::NoObservedEntries);
    }
    let data_scale = 1.0 / (observed * k) as f64;

    let mut breakdown = LossBreakdown::default();
    let mut grad = want_grad.then(|| p.zeros_like());

    // data term; `delta_s` is dL/dZ_s for the pre-activation relation output
    let mut delta_y: Option<Matrix> = None;
    for s in 0..k {
        let out = &cache.outputs[s];
        let pre = &cache.relation_pre[s];
        let t = target.slice(s);
        let mut delta = Matrix::zeros(out.rows(), out.cols());
        let mut sq = 0.0;
        for (i, ((&o, &tv), &z)) in out
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .zip(pre.as_slice())
            .enumerate()
        {
            if mask.is_some_and(|m| m.as_slice()[i] == 0.0) {
                continue;
            }
            let r = o - tv;
            sq += r * r;
            delta.as_mut_slice()[i] = 2.0 * data_scale * r * p.output_activation.derivative(z);
        }
        breakdown.data += sq * data_scale;
        if let Some(g) = grad.as_mut() {
            let y = cache.layer_inputs.last().expect("embedding");
            g.relation_weights[s] = linalg::matmul_tn(y, &delta)?;
            let dy = linalg::matmul_nt(&delta, &p.relation_weights[s])?;
            match delta_y.as_mut() {
                Some(acc) => acc.add_assign_scaled(&dy, 1.0),
                None => delta_y = Some(dy),
            }
        }
    }

    if obj.lambda_sym > 0.0 {
        let w = &p.relation_weights[0];
        let sym = obj.sym_target.as_ref().expect("checked");
        let wtw = linalg::matmul_tn(w, w)?;
        let n = wtw.rows();
        let mut resid = wtw.sub(sym)?;
        let count = match &obj.sym_mask {
            Some(m) => {
                resid = resid.hadamard(m)?;
                m.as_slice().iter().filter(|&&v| v != 0.0).count()
            }
            None => n * n,
        };
        if count == 0 {
            return Err(SimecError::NoObservedEntries);
        }
        let scale = obj.lambda_sym / count as f64;
        breakdown.sym = scale * linalg::frobenius_sq(&resid);
        if let Some(g) = grad.as_mut() {
            // d/dW Σ (M∘(WᵀW − S))² = 2·W·(E + Eᵀ)
            let e_sym = resid.add(&linalg::transpose(&resid))?;
            let dw = linalg::matmul(w, &e_sym)?;
            g.relation_weights[0].add_assign_scaled(&dw, 2.0 * scale);
        }
    }

    let d = p.embed_dim();
    if obj.lambda_orth > 0.0 && d > 1 {
        let scale = obj.lambda_orth / (k * d * (d - 1)) as f64;
        for s in 0..k {
            let w = &p.relation_weights[s];
            let mut off = linalg::matmul_nt(w, w)?;
            for a in 0..d {
                off[(a, a)] = 0.0;
            }
            breakdown.orth += scale * linalg::frobenius_sq(&off);
            if let Some(g) = grad.as_mut() {
                let dw = linalg::matmul(&off, w)?;
                g.relation_weights[s].add_assign_scaled(&dw, 4.0 * scale);
            }
        }
    }

    if obj.lambda_l2 > 0.0 {
        let count: usize = p
            .encoder_layers
            .iter()
            .map(|l| l.weights.as_slice().len())
            .chain(p.relation_weights.iter().map(|w| w.as_slice().len()))
            .sum();
        let scale = obj.lambda_l2 / count as f64;
        let sum: f64 = p
            .encoder_layers
            .iter()
            .map(|l| linalg::frobenius_sq(&l.weights))
            .chain(p.relation_weights.iter().map(linalg::frobenius_sq))
            .sum();
        breakdown.l2 = scale * sum;
        if let Some(g) = grad.as_mut() {
            for (gl, pl) in g.encoder_layers.iter_mut().zip(&p.encoder_layers) {
                gl.weights.add_assign_scaled(&pl.weights, 2.0 * scale);
            }
            for (gw, pw) in g.relation_weights.iter_mut().zip(&p.relation_weights) {
                gw.add_assign_scaled(pw, 2.0 * scale);
            }
        }
    }

    if let Some(g) = grad.as_mut() {
        let mut delta = delta_y.expect("k >= 1");
        for (li, layer) in p.encoder_layers.iter().enumerate().rev() {
            if layer.activation == Activation::Tanh {
                let out = &cache.layer_inputs[li + 1];
                for (dv, &a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *dv *= 1.0 - a * a;
                }
            }
            let input = &cache.layer_inputs[li];
            let dw = linalg::matmul_tn(input, &delta)?;
            g.encoder_layers[li].weights.add_assign_scaled(&dw, 1.0);
            if let Some(gb) = g.encoder_layers[li].bias.as_mut() {
                for r in 0..delta.rows() {
                    for (b, v) in gb.iter_mut().zip(delta.row(r)) {
                        *b += v;
                    }
                }
            }
            if li > 0 {
                delta = linalg::matmul_nt(&delta, &layer.weights)?;
            }
        }
    }

    Ok((breakdown, grad))
}

/// Central-difference gradient `(L(θ+h) − L(θ−h)) / 2h`, one parameter at a
/// time. Test oracle for [`backward`].
pub fn finite_diff_grad(
    p: &NetworkParams,
    x: &Matrix,
    target: &TargetSpec,
    obj: &ObjectiveConfig,
    h: f64,
) -> Result<NetworkParams> {
    if !(h > 0.0) {
        return Err(SimecError::invalid(format!("step must be > 0, got {h}")));
    }
    let base = p.to_flat();
    let mut probe = p.clone();
    let mut grad = Vec::with_capacity(base.len());
    let mut values = base.clone();
    for i in 0..base.len() {
        values[i] = base[i] + h;
        probe.set_flat(&values);
        let up = loss(&probe, x, target, obj)?;
        values[i] = base[i] - h;
        probe.set_flat(&values);
        let down = loss(&probe, x, target, obj)?;
        values[i] = base[i];
        grad.push((up - down) / (2.0 * h));
    }
    let mut out = p.zeros_like();
    out.set_flat(&grad);
    Ok(out)
}
