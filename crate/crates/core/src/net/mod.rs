//! Fixed-shape feedforward engine for similarity encoders.
//!
//! An encoder (`f'`) maps feature rows to embeddings; `k` relation matrices
//! (`W_l`, each `d×n`) map embeddings to predicted relation rows, optionally
//! squashed into a bounded range. Gradients of the full objective are derived
//! by hand in [`objective`].

mod adam;
mod objective;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimecError};
use crate::linalg::{self, Matrix};

pub use adam::{AdamConfig, AdamState};
pub use objective::{backward, finite_diff_grad, loss, loss_breakdown, LossBreakdown, ObjectiveConfig};
pub(crate) use objective::value_and_grad as objective_value_and_grad;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Linear => v,
            Activation::Tanh => v.tanh(),
        }
    }
}

/// Nonlinearity applied to `Y·W_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `lo + (hi − lo) · sigmoid(z)`.
    Bounded { lo: f64, hi: f64 },
}

impl OutputActivation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Bounded { lo, hi } => lo + (hi - lo) * sigmoid(z),
        }
    }

    /// Derivative with respect to `z`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Bounded { lo, hi } => {
                let s = sigmoid(z);
                (hi - lo) * s * (1.0 - s)
            }
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `fan_in × fan_out`.
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder_layers: Vec<LayerParams>,
    /// `k` slices, each `d × n`.
    pub relation_weights: Vec<Matrix>,
    pub output_activation: OutputActivation,
}

/// Layer layout used by [`init`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkShape {
    pub input_dim: usize,
    /// Widths of the tanh hidden layers, in order.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub n_targets: usize,
    pub k: usize,
    /// Whether encoder layers carry a bias. The identity-factorization network
    /// has none.
    pub encoder_bias: bool,
    pub output_activation: OutputActivation,
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
pub fn init(shape: &NetworkShape, seed: u64) -> Result<NetworkParams> {
    let widths: Vec<usize> = std::iter::once(shape.input_dim)
        .chain(shape.hidden.iter().copied())
        .chain(std::iter::once(shape.embed_dim))
        .collect();
    if widths.contains(&0) || shape.n_targets == 0 || shape.k == 0 {
        return Err(SimecError::invalid(format!(
            "inconsistent layer chain {widths:?} -> {} x {}",
            shape.n_targets, shape.k
        )));
    }
    if let OutputActivation::Bounded { lo, hi } = shape.output_activation {
        if !(lo < hi) {
            return Err(SimecError::invalid(format!("output bounds ({lo}, {hi}) are empty")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = widths.len() - 2;
    let encoder_layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerParams {
            weights: glorot(w[0], w[1], &mut rng),
            bias: shape.encoder_bias.then(|| vec![0.0; w[1]]),
            activation: if i == last {
                Activation::Linear
            } else {
                Activation::Tanh
            },
        })
        .collect();
    let relation_weights = (0..shape.k)
        .map(|_| glorot(shape.embed_dim, shape.n_targets, &mut rng))
        .collect();
    Ok(NetworkParams {
        encoder_layers,
        relation_weights,
        output_activation: shape.output_activation,
    })
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound))
}

impl NetworkParams {
    pub fn input_dim(&self) -> usize {
        self.encoder_layers[0].weights.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.relation_weights[0].rows()
    }

    pub fn n_targets(&self) -> usize {
        self.relation_weights[0].cols()
    }

    pub fn k(&self) -> usize {
        self.relation_weights.len()
    }

    /// Checks the structural invariants (shape chain, linear embedding layer).
    pub fn validate(&self) -> Result<()> {
        let first = self
            .encoder_layers
            .first()
            .ok_or_else(|| SimecError::invalid("encoder has no layers"))?;
        let mut width = first.weights.rows();
        for layer in &self.encoder_layers {
            if layer.weights.rows() != width {
                return Err(SimecError::shape(
                    "encoder chain",
                    (width, width),
                    layer.weights.shape(),
                ));
            }
            if let Some(b) = &layer.bias {
                if b.len() != layer.weights.cols() {
                    return Err(SimecError::invalid("bias length differs from layer width"));
                }
            }
            width = layer.weights.cols();
        }
        if self.encoder_layers.last().map(|l| l.activation) != Some(Activation::Linear) {
            return Err(SimecError::invalid("the embedding layer must be linear"));
        }
        let rel = self
            .relation_weights
            .first()
            .ok_or_else(|| SimecError::invalid("no relation weights"))?;
        if rel.rows() != width {
            return Err(SimecError::shape("relation weights", (width, width), rel.shape()));
        }
        if self.relation_weights.iter().any(|w| w.shape() != rel.shape()) {
            return Err(SimecError::invalid("relation slices differ in shape"));
        }
        Ok(())
    }

    /// Same structure with every value zero.
    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            encoder_layers: self
                .encoder_layers
                .iter()
                .map(|l| LayerParams {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                    activation: l.activation,
                })
                .collect(),
            relation_weights: self
                .relation_weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            output_activation: self.output_activation,
        }
    }

    pub fn num_values(&self) -> usize {
        self.encoder_layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.as_ref().map_or(0, Vec::len))
            .sum::<usize>()
            + self.relation_weights.iter().map(|w| w.as_slice().len()).sum::<usize>()
    }

    /// Visits every parameter in a fixed order: per encoder layer weights then
    /// bias, then each relation slice.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.encoder_layers {
            layer.weights.as_mut_slice().iter_mut().for_each(&mut f);
            if let Some(b) = &mut layer.bias {
                b.iter_mut().for_each(&mut f);
            }
        }
        for w in &mut self.relation_weights {
            w.as_mut_slice().iter_mut().for_each(&mut f);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        let mut copy = self.clone();
        copy.for_each_mut(|v| out.push(*v));
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_values());
        let mut it = values.iter();
        self.for_each_mut(|v| *v = *it.next().expect("length checked"));
    }

    /// Euclidean norm over all values.
    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Activations retained for the backward pass.
pub(crate) struct ForwardCache {
    /// Input to each encoder layer; the last entry is the embedding.
    pub layer_inputs: Vec<Matrix>,
    /// Pre-activation relation outputs `Y·W_s`, one per slice.
    pub relation_pre: Vec<Matrix>,
    pub outputs: Vec<Matrix>,
}

fn layer_forward(layer: &LayerParams, x: &Matrix) -> Result<Matrix> {
    let mut h = linalg::matmul(x, &layer.weights)?;
    let cols = h.cols();
    if let Some(b) = &layer.bias {
        for r in 0..h.rows() {
            for (v, bb) in h.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
    }
    if layer.activation != Activation::Linear {
        h.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = layer.activation.apply(*v));
    }
    debug_assert_eq!(h.cols(), cols);
    Ok(h)
}

/// Embeddings `Y = f'(X)`.
pub fn forward_embed(p: &NetworkParams, x: &Matrix) -> Result<Matrix> {
    if x.cols() != p.input_dim() {
        return Err(SimecError::shape(
            "forward_embed",
            x.shape(),
            p.encoder_layers[0].weights.shape(),
        ));
    }
    let mut h = x.clone();
    for layer in &p.encoder_layers {
        h = layer_forward(layer, &h)?;
    }
    Ok(h)
}

/// Relation predictions for each of the `k` slices.
pub fn forward_full(p: &NetworkParams, x: &Matrix) -> Result<Vec<Matrix>> {
    let y = forward_embed(p, x)?;
    relation_outputs(p, &y)
}

pub(crate) fn relation_outputs(p: &NetworkParams, y: &Matrix) -> Result<Vec<Matrix>> {
    p.relation_weights
        .iter()
        .map(|w| Ok(linalg::matmul(y, w)?.map(|z| p.output_activation.apply(z))))
        .collect()
}

pub(crate) fn forward_cached(p: &NetworkParams, x: &Matrix) -> Result<ForwardCache> {
    if x.cols() != p.input_dim() {
        return Err(SimecError::shape(
            "forward",
            x.shape(),
            p.encoder_layers[0].weights.shape(),
        ));
    }
    let mut layer_inputs = Vec::with_capacity(p.encoder_layers.len() + 1);
    layer_inputs.push(x.clone());
    for layer in &p.encoder_layers {
        let next = layer_forward(layer, layer_inputs.last().expect("non-empty"))?;
        layer_inputs.push(next);
    }
    let y = layer_inputs.last().expect("non-empty");
    let relation_pre = p
        .relation_weights
        .iter()
        .map(|w| linalg::matmul(y, w))
        .collect::<Result<Vec<_>>>()?;
    let outputs = relation_pre
        .iter()
        .map(|z| z.map(|v| p.output_activation.apply(v)))
        .collect();
    Ok(ForwardCache {
        layer_inputs,
        relation_pre,
        outputs,
    })
}
