//! Similarity encoder models: configuration, the training loops for every
//! variant (plain, subsampled targets, identity factorization, two-network
//! rectangular factorization, multiple similarities), and out-of-sample use.

mod serialize;

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimecError};
use crate::kv::{self, KeyValues};
use crate::linalg::{self, Matrix};
use crate::net::{
    self, AdamConfig, AdamState, NetworkParams, NetworkShape, ObjectiveConfig, OutputActivation,
};
use crate::similarity::{self, TargetKind, TargetSpec};

pub use serialize::{load_model, read_model, save_model, write_model, MAGIC};

#[derive(Debug, Clone, PartialEq)]
pub struct SimEcConfig {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub n_targets: usize,
    pub k: usize,
    pub lambda_sym: f64,
    pub lambda_orth: f64,
    pub lambda_l2: f64,
    pub output_bounds: Option<(f64, f64)>,
    pub encoder_bias: bool,
    pub lr: f64,
    /// Learning rate at the last epoch as a fraction of `lr`; the rate decays
    /// geometrically in between. 1 keeps it constant.
    pub lr_decay: f64,
    pub epochs: usize,
    /// Rows per gradient step; 0 means full batch.
    pub batch_rows: usize,
    pub seed: u64,
}

impl Default for SimEcConfig {
    fn default() -> Self {
        SimEcConfig {
            input_dim: 1,
            embed_dim: 2,
            hidden_sizes: Vec::new(),
            n_targets: 1,
            k: 1,
            lambda_sym: 0.0,
            lambda_orth: 0.0,
            lambda_l2: 0.0,
            output_bounds: None,
            encoder_bias: true,
            lr: 1e-3,
            lr_decay: 1.0,
            epochs: 100,
            batch_rows: 0,
            seed: 0,
        }
    }
}

impl SimEcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.input_dim == 0 || self.n_targets == 0 || self.k == 0 {
            return Err(SimecError::invalid(
                "input_dim, embed_dim, n_targets and k must all be >= 1",
            ));
        }
        if self.epochs == 0 {
            return Err(SimecError::invalid("epochs must be >= 1"));
        }
        if self.lambda_sym > 0.0 && self.k != 1 {
            return Err(SimecError::invalid(
                "lambda_sym > 0 is only defined for a single target slice",
            ));
        }
        if !(self.lr > 0.0) {
            return Err(SimecError::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(SimecError::invalid("lr_decay must be in (0, 1]"));
        }
        Ok(())
    }

    fn shape(&self) -> NetworkShape {
        NetworkShape {
            input_dim: self.input_dim,
            hidden: self.hidden_sizes.clone(),
            embed_dim: self.embed_dim,
            n_targets: self.n_targets,
            k: self.k,
            encoder_bias: self.encoder_bias,
            output_activation: match self.output_bounds {
                Some((lo, hi)) => OutputActivation::Bounded { lo, hi },
                None => OutputActivation::Identity,
            },
        }
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("input_dim", self.input_dim);
        kv.set("embed_dim", self.embed_dim);
        kv.set("hidden_sizes", kv::join(&self.hidden_sizes));
        kv.set("hidden_activation", "tanh");
        kv.set("n_targets", self.n_targets);
        kv.set("k", self.k);
        kv.set("lambda_sym", self.lambda_sym);
        kv.set("lambda_orth", self.lambda_orth);
        kv.set("lambda_l2", self.lambda_l2);
        match self.output_bounds {
            Some((lo, hi)) => kv.set("output_bounds", format!("{lo},{hi}")),
            None => kv.set("output_bounds", "none"),
        }
        kv.set("encoder_bias", self.encoder_bias);
        kv.set("lr", self.lr);
        kv.set("lr_decay", self.lr_decay);
        kv.set("epochs", self.epochs);
        kv.set("batch_rows", self.batch_rows);
        kv.set("seed", self.seed);
        kv
    }

    /// Reads the keys written by [`SimEcConfig::to_kv`]; absent keys keep
    /// their defaults except the required `input_dim`, `embed_dim` and
    /// `n_targets`.
    pub fn from_kv(kv: &KeyValues) -> Result<SimEcConfig> {
        let d = SimEcConfig::default();
        let output_bounds = match kv.get_str("output_bounds") {
            None | Some("none") | Some("") => None,
            Some(_) => {
                let b: Vec<f64> = kv.get_list("output_bounds")?.unwrap_or_default();
                match b.as_slice() {
                    [lo, hi] => Some((*lo, *hi)),
                    _ => return Err(SimecError::Config("output_bounds needs lo,hi".into())),
                }
            }
        };
        if let Some(act) = kv.get_str("hidden_activation") {
            if act != "tanh" {
                return Err(SimecError::Config(format!("unsupported hidden_activation {act:?}")));
            }
        }
        let cfg = SimEcConfig {
            input_dim: kv.require("input_dim")?,
            embed_dim: kv.require("embed_dim")?,
            hidden_sizes: kv.get_list("hidden_sizes")?.unwrap_or_default(),
            n_targets: kv.require("n_targets")?,
            k: kv.get_or("k", d.k)?,
            lambda_sym: kv.get_or("lambda_sym", d.lambda_sym)?,
            lambda_orth: kv.get_or("lambda_orth", d.lambda_orth)?,
            lambda_l2: kv.get_or("lambda_l2", d.lambda_l2)?,
            output_bounds,
            encoder_bias: kv.get_or("encoder_bias", d.encoder_bias)?,
            lr: kv.get_or("lr", d.lr)?,
            lr_decay: kv.get_or("lr_decay", d.lr_decay)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            batch_rows: kv.get_or("batch_rows", d.batch_rows)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEcModel {
    pub params: NetworkParams,
    pub config: SimEcConfig,
    /// Columns of the full target predicted by the relation layer.
    pub target_column_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_trace: Vec<f64>,
    /// Masked MSE of the relation predictions against the trained columns,
    /// averaged over slices.
    pub final_mse_relations: f64,
    /// MSE of `Y·Yᵀ` against every entry (observed or not) of a square target,
    /// averaged over slices.
    pub final_mse_gram: Option<f64>,
    pub wall_time: Duration,
}

/// Column selection for subsampled targets.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetColumns {
    /// The first `n_targets` columns.
    First,
    /// `n_targets` columns drawn without replacement, sorted.
    Random { seed: u64 },
    Explicit(Vec<usize>),
}

impl TargetColumns {
    fn resolve(&self, n: usize, available: usize) -> Result<Vec<usize>> {
        if n > available {
            return Err(SimecError::invalid(format!(
                "n_targets {n} exceeds the {available} target columns"
            )));
        }
        let ids = match self {
            TargetColumns::First => (0..n).collect(),
            TargetColumns::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut ids: Vec<usize> =
                    rand::seq::index::sample(&mut rng, available, n).into_vec();
                ids.sort_unstable();
                ids
            }
            TargetColumns::Explicit(ids) => {
                if ids.len() != n {
                    return Err(SimecError::invalid(format!(
                        "{} explicit target columns given for n_targets {n}",
                        ids.len()
                    )));
                }
                ids.clone()
            }
        };
        Ok(ids)
    }
}

/// Trains on the first `cfg.n_targets` target columns.
pub fn train(cfg: &SimEcConfig, x: &Matrix, target: &TargetSpec) -> Result<(SimEcModel, TrainReport)> {
    train_with_columns(cfg, x, target, &TargetColumns::First)
}

pub fn train_with_columns(
    cfg: &SimEcConfig,
    x: &Matrix,
    target: &TargetSpec,
    columns: &TargetColumns,
) -> Result<(SimEcModel, TrainReport)> {
    Trainer::new(cfg, x, target, columns)?.run()
}

struct Trainer<'a> {
    cfg: &'a SimEcConfig,
    x: &'a Matrix,
    full_target: &'a TargetSpec,
    train_target: TargetSpec,
    ids: Vec<usize>,
    objective: ObjectiveConfig,
    params: NetworkParams,
    freeze_relation: bool,
}

impl<'a> Trainer<'a> {
    fn new(
        cfg: &'a SimEcConfig,
        x: &'a Matrix,
        target: &'a TargetSpec,
        columns: &TargetColumns,
    ) -> Result<Trainer<'a>> {
        cfg.validate()?;
        if x.rows() != target.rows() {
            return Err(SimecError::shape("train", x.shape(), (target.rows(), target.cols())));
        }
        if x.cols() != cfg.input_dim {
            return Err(SimecError::shape("train input", x.shape(), (x.rows(), cfg.input_dim)));
        }
        if target.k() != cfg.k {
            return Err(SimecError::invalid(format!(
                "config expects k={} but the target has {} slices",
                cfg.k,
                target.k()
            )));
        }
        let ids = columns.resolve(cfg.n_targets, target.cols())?;
        let train_target = target.select_columns(&ids)?;
        let mut objective = ObjectiveConfig {
            lambda_sym: cfg.lambda_sym,
            lambda_orth: cfg.lambda_orth,
            lambda_l2: cfg.lambda_l2,
            sym_target: None,
            sym_mask: None,
        };
        if cfg.lambda_sym > 0.0 {
            if target.kind() != TargetKind::SquareSymmetric {
                return Err(SimecError::invalid(
                    "lambda_sym > 0 needs a square symmetric target",
                ));
            }
            // the block S[ids, ids]; for first-n selection this is S[:n, :n]
            objective.sym_target = Some(target.slice(0).select_rows(&ids).select_cols(&ids));
            objective.sym_mask = target.mask().map(|m| m.select_rows(&ids).select_cols(&ids));
        }
        let params = net::init(&cfg.shape(), cfg.seed)?;
        Ok(Trainer {
            cfg,
            x,
            full_target: target,
            train_target,
            ids,
            objective,
            params,
            freeze_relation: false,
        })
    }

    fn run(mut self) -> Result<(SimEcModel, TrainReport)> {
        let start = Instant::now();
        let cfg = self.cfg;
        let mut adam = AdamState::new(&self.params);
        let mut trace = Vec::with_capacity(cfg.epochs);
        let m = self.x.rows();
        let full_batch = cfg.batch_rows == 0 || cfg.batch_rows >= m;
        let mut order: Vec<usize> = (0..m).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let decay_per_epoch = if cfg.epochs > 1 {
            cfg.lr_decay.powf(1.0 / (cfg.epochs - 1) as f64)
        } else {
            1.0
        };

        for epoch in 0..cfg.epochs {
            let adam_cfg = AdamConfig {
                lr: cfg.lr * decay_per_epoch.powi(epoch as i32),
                ..AdamConfig::default()
            };
            let epoch_loss = if full_batch {
                let (b, g) = net::objective_value_and_grad(
                    &self.params,
                    self.x,
                    &self.train_target,
                    &self.objective,
                )?;
                self.apply(&mut adam, g, &adam_cfg)?;
                b.total()
            } else {
                order.shuffle(&mut shuffle_rng);
                let mut total = 0.0;
                let mut batches = 0usize;
                for chunk in order.chunks(cfg.batch_rows) {
                    let xb = self.x.select_rows(chunk);
                    let tb = self.train_target.select_rows(chunk)?;
                    if tb.mask().is_some_and(|mk| mk.as_slice().iter().all(|&w| w == 0.0)) {
                        continue;
                    }
                    let (b, g) = net::objective_value_and_grad(&self.params, &xb, &tb, &self.objective)?;
                    self.apply(&mut adam, g, &adam_cfg)?;
                    total += b.total();
                    batches += 1;
                }
                total / batches.max(1) as f64
            };
            if !epoch_loss.is_finite() {
                return Err(SimecError::NonFiniteLoss { epoch });
            }
            trace.push(epoch_loss);
        }

        let model = SimEcModel {
            params: self.params,
            config: cfg.clone(),
            target_column_ids: self.ids,
        };
        let (final_mse_relations, final_mse_gram) =
            evaluate_fit(&model, self.x, self.full_target)?;
        Ok((
            model,
            TrainReport {
                loss_trace: trace,
                final_mse_relations,
                final_mse_gram,
                wall_time: start.elapsed(),
            },
        ))
    }

    fn apply(&mut self, adam: &mut AdamState, mut grads: NetworkParams, cfg: &AdamConfig) -> Result<()> {
        if self.freeze_relation {
            for g in &mut grads.relation_weights {
                *g = Matrix::zeros(g.rows(), g.cols());
            }
        }
        adam.step(&mut self.params, &grads, cfg)
    }
}

/// `(masked MSE of relation predictions on the model's columns, MSE of Y·Yᵀ on
/// the full square target)`, both averaged over slices.
pub fn evaluate_fit(model: &SimEcModel, x: &Matrix, target: &TargetSpec) -> Result<(f64, Option<f64>)> {
    let preds = predict_relations(model, x)?;
    let sub = target.select_columns(&model.target_column_ids)?;
    let mut rel = 0.0;
    for (s, pred) in preds.iter().enumerate() {
        rel += linalg::masked_mse(pred, sub.slice(s), sub.mask())?;
    }
    rel /= preds.len() as f64;
    let gram = if target.kind() == TargetKind::SquareSymmetric {
        let g = gram_approx(model, x)?;
        let total: f64 = target.slices().iter().map(|s| linalg::mse(&g, s)).sum();
        Some(total / target.k() as f64)
    } else {
        None
    };
    Ok((rel, gram))
}

fn check_input(model: &SimEcModel, x: &Matrix) -> Result<()> {
    if x.cols() != model.config.input_dim {
        return Err(SimecError::shape(
            "embed",
            x.shape(),
            (x.rows(), model.config.input_dim),
        ));
    }
    Ok(())
}

/// Out-of-sample embedding `Y = f'(X)`.
pub fn embed(model: &SimEcModel, x_new: &Matrix) -> Result<Matrix> {
    check_input(model, x_new)?;
    net::forward_embed(&model.params, x_new)
}

/// Relation predictions, one `rows × n` matrix per slice.
pub fn predict_relations(model: &SimEcModel, x_new: &Matrix) -> Result<Vec<Matrix>> {
    check_input(model, x_new)?;
    net::forward_full(&model.params, x_new)
}

/// `Y·Yᵀ` for `Y = embed(model, x)`.
pub fn gram_approx(model: &SimEcModel, x: &Matrix) -> Result<Matrix> {
    let y = embed(model, x)?;
    Ok(crate::spectral::gram(&y))
}

/// Factorizes a target with the identity matrix as input, so the single
/// bias-free linear encoder layer is itself the left factor and `W_1·W_2` is a
/// rank-`d` approximation of the target.
pub fn identity_factorize(
    target: &TargetSpec,
    d: usize,
    lambda_orth: f64,
    hyper: &SimEcConfig,
) -> Result<(SimEcModel, TrainReport)> {
    let m = target.rows();
    let cfg = SimEcConfig {
        input_dim: m,
        embed_dim: d,
        hidden_sizes: Vec::new(),
        n_targets: target.cols(),
        k: target.k(),
        lambda_sym: 0.0,
        lambda_orth,
        encoder_bias: false,
        ..hyper.clone()
    };
    train(&cfg, &Matrix::identity(m), target)
}

/// Two encoders mapping both sides of a rectangular relation into one
/// embedding space. Stage one fits `R` from `x1`; stage two fits `Rᵀ` from `x2`
/// with its relation layer frozen at `Y1ᵀ`.
pub fn train_dual(
    cfg1: &SimEcConfig,
    cfg2: &SimEcConfig,
    x1: &Matrix,
    x2: &Matrix,
    r: &TargetSpec,
) -> Result<(SimEcModel, SimEcModel)> {
    if cfg1.embed_dim != cfg2.embed_dim {
        return Err(SimecError::invalid(format!(
            "embedding sizes differ: {} vs {}",
            cfg1.embed_dim, cfg2.embed_dim
        )));
    }
    if r.k() != 1 {
        return Err(SimecError::invalid("dual training needs a single relation slice"));
    }
    if x2.rows() != r.cols() {
        return Err(SimecError::shape("train_dual", x2.shape(), (r.rows(), r.cols())));
    }
    let (model1, _) = train(cfg1, x1, r)?;
    let y1 = embed(&model1, x1)?;

    let cfg2 = SimEcConfig {
        n_targets: r.rows(),
        k: 1,
        lambda_sym: 0.0,
        ..cfg2.clone()
    };
    let rt = r.transposed()?;
    let mut trainer = Trainer::new(&cfg2, x2, &rt, &TargetColumns::First)?;
    trainer.params.relation_weights[0] = linalg::transpose(&y1);
    trainer.freeze_relation = true;
    let (model2, _) = trainer.run()?;
    Ok((model1, model2))
}

/// `Y1·Y2ᵀ`: predicted relations between rows of `x1` and rows of `x2`.
pub fn dual_predict(model1: &SimEcModel, model2: &SimEcModel, x1: &Matrix, x2: &Matrix) -> Result<Matrix> {
    let y1 = embed(model1, x1)?;
    let y2 = embed(model2, x2)?;
    linalg::matmul_nt(&y1, &y2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiMode {
    /// Normalize each matrix, then average into a single target.
    Averaged,
    /// Normalize each matrix and stack them into a `k`-slice target.
    Stacked,
}

/// Combines several similarity matrices into one target, normalizing each by
/// its largest eigenvalue first.
pub fn multi_similarity_target(list: &[Matrix], mode: MultiMode) -> Result<TargetSpec> {
    if list.len() < 2 {
        return Err(SimecError::invalid("need at least two similarity matrices"));
    }
    let shape = list[0].shape();
    if let Some(bad) = list.iter().find(|s| s.shape() != shape) {
        return Err(SimecError::shape("multi_similarity_target", shape, bad.shape()));
    }
    let normalized = list
        .iter()
        .map(similarity::normalize_by_top_eigenvalue)
        .collect::<Result<Vec<_>>>()?;
    match mode {
        MultiMode::Averaged => TargetSpec::square(similarity::average_similarities(&normalized)?),
        MultiMode::Stacked => TargetSpec::new(normalized, None, TargetKind::SquareSymmetric),
    }
}

#[cfg(test)]
mod tests;
