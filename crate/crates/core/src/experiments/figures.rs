use std::time::Instant;

use super::{derive_seed, image_data, scaled, sweep_map, Env, ExperimentResult, Training};
use crate::data::{self, DataSource};
use crate::error::Result;
use crate::linalg::{self, Matrix};
use crate::model::{self, MultiMode, TargetColumns};
use crate::similarity::{self, TargetKind, TargetSpec};
use crate::spectral::{self, Criterion, EigenDecomposition};

const DIGITS: [u8; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

fn gram_mse(y: &Matrix, s: &Matrix) -> f64 {
    linalg::mse(&spectral::gram(y), s)
}

/// Leading `d` pairs of `eig` as the embedding `U·sqrt(max(λ, 0))`.
fn positive_embedding(eig: &EigenDecomposition, d: usize) -> Matrix {
    let m = eig.eigenvectors.rows();
    Matrix::from_fn(m, d, |r, c| eig.eigenvectors[(r, c)] * eig.eigenvalues[c].max(0.0).sqrt())
}

/// `Σ λ_j u_j u_jᵀ` over the leading `d` pairs of `eig`.
fn signed_reconstruction(eig: &EigenDecomposition, d: usize) -> Result<Matrix> {
    let m = eig.eigenvectors.rows();
    let scaled = Matrix::from_fn(m, d, |r, c| eig.eigenvectors[(r, c)] * eig.eigenvalues[c]);
    let u = Matrix::from_fn(m, d, |r, c| eig.eigenvectors[(r, c)]);
    linalg::matmul_nt(&scaled, &u)
}

fn max_dim(dims: &[usize]) -> usize {
    dims.iter().copied().max().unwrap_or(1)
}

fn total_rows(train_rows: usize) -> usize {
    (train_rows as f64 / 0.8).round() as usize
}

fn one_hidden(width: usize, epochs: usize, lr: f64, lambda_sym: f64) -> Training {
    Training {
        hidden: vec![width],
        epochs,
        lr,
        lr_decay: 0.1,
        lambda_sym,
        lambda_orth: 0.0,
        lambda_l2: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Params {
    /// Training points; the similarity matrix is `m × m`.
    pub m: usize,
    pub dims: Vec<usize>,
    /// Classes rendered when MNIST is unavailable.
    pub synth_classes: Vec<u8>,
    pub ridge: f64,
    pub linear: Training,
    pub deep: Training,
}

impl Fig3Params {
    pub fn at_scale(scale: f64) -> Fig3Params {
        Fig3Params {
            m: scaled(1000, scale),
            dims: vec![2, 4, 7, 10],
            synth_classes: (0..16).collect(),
            ridge: 1e-3,
            linear: Training {
                hidden: Vec::new(),
                epochs: 600,
                lr: 0.01,
                lr_decay: 0.1,
                lambda_sym: 1.0,
                lambda_orth: 0.0,
                lambda_l2: 0.0,
            },
            deep: Training {
                hidden: vec![64, 64],
                epochs: 600,
                lr: 0.01,
                lr_decay: 0.1,
                lambda_sym: 1.0,
                lambda_orth: 0.0,
                lambda_l2: 0.0,
            },
        }
    }
}

/// Class-label similarity approximated by `Y·Yᵀ` for growing `d`: the
/// eigendecomposition optimum, ridge regression onto the eigen-embedding, and
/// linear and deep SimEcs.
pub fn fig3(p: &Fig3Params, env: &Env) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (_, ds) = image_data(env, total_rows(p.m), None, &p.synth_classes)?;
    let x = ds.train_features();
    let labels = ds.train_labels().expect("image data has labels");
    let s = similarity::center(&similarity::label_similarity(&labels))?;
    let target = TargetSpec::square(s.clone())?;
    let m = s.rows();
    let eig = spectral::eig_sym_topd(&s, max_dim(&p.dims), Criterion::LargestPositive)?;

    let sweep: Vec<f64> = p.dims.iter().map(|&d| d as f64).collect();
    let rows = sweep_map(&sweep, |i, d| {
        let d = d as usize;
        let y_eig = positive_embedding(&eig, d);
        let b = spectral::regression_baseline(&x, &y_eig, p.ridge)?;
        let ridge = gram_mse(&linalg::matmul(&x, &b)?, &s);
        let fit = |t: &Training, tag: u64| -> Result<f64> {
            let cfg = t.config(x.cols(), d, m, 1, derive_seed(env.seed, tag * 100 + i as u64));
            let (_, report) = model::train(&cfg, &x, &target)?;
            Ok(report.final_mse_gram.expect("square target"))
        };
        Ok([gram_mse(&y_eig, &s), fit(&p.linear, 1)?, ridge, fit(&p.deep, 2)?])
    })?;

    let mut out = ExperimentResult::new("fig3", "embed_dim", sweep, env, ds.source());
    for (j, name) in ["eigendecomposition", "linear_simec", "ridge_on_eigen", "deep_simec"].iter().enumerate() {
        out.push(name, rows.iter().map(|r| r[j]).collect())?;
    }
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Centered RBF kernel (median-heuristic width) on the training images.
fn rbf_target(env: &Env, m: usize) -> Result<(Matrix, Matrix, DataSource)> {
    let (_, ds) = image_data(env, total_rows(m), None, &DIGITS)?;
    let x = ds.train_features();
    let gamma = similarity::median_heuristic_gamma(&x)?;
    let s = similarity::center(&similarity::rbf_kernel(&x, gamma)?)?;
    Ok((x, s, ds.source()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig4RegParams {
    pub m: usize,
    pub d: usize,
    pub lambdas: Vec<f64>,
    /// `lambda_sym` is replaced by each sweep value.
    pub training: Training,
}

impl Fig4RegParams {
    pub fn at_scale(scale: f64) -> Fig4RegParams {
        Fig4RegParams {
            m: scaled(1000, scale),
            d: 10,
            lambdas: vec![0.0, 0.1, 1.0, 10.0],
            training: one_hidden(64, 600, 0.01, 0.0),
        }
    }
}

/// Symmetry regularizer sweep on an RBF kernel: `Y·W_l` against `Y·Yᵀ`.
pub fn fig4_reg(p: &Fig4RegParams, env: &Env) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (x, s, source) = rbf_target(env, p.m)?;
    let target = TargetSpec::square(s.clone())?;
    let kpca = gram_mse(&spectral::kpca_embed(&s, p.d)?, &s);
    let rows = sweep_map(&p.lambdas, |_, lambda| {
        let t = Training {
            lambda_sym: lambda,
            ..p.training.clone()
        };
        let cfg = t.config(x.cols(), p.d, s.rows(), 1, derive_seed(env.seed, 3));
        let (_, report) = model::train(&cfg, &x, &target)?;
        Ok([report.final_mse_relations, report.final_mse_gram.expect("square target")])
    })?;
    let mut out = ExperimentResult::new("fig4_reg", "lambda_sym", p.lambdas.clone(), env, source);
    out.push("simec_yw", rows.iter().map(|r| r[0]).collect())?;
    out.push("simec_yyt", rows.iter().map(|r| r[1]).collect())?;
    out.push("kpca", vec![kpca; p.lambdas.len()])?;
    out.wall_time = start.elapsed();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig4TargetsParams {
    pub m: usize,
    pub d: usize,
    /// Fractions of the `m` columns used as training targets.
    pub fractions: Vec<f64>,
    pub training: Training,
}

impl Fig4TargetsParams {
    pub fn at_scale(scale: f64) -> Fig4TargetsParams {
        Fig4TargetsParams {
            m: scaled(1000, scale),
            d: 10,
            fractions: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            training: one_hidden(64, 600, 0.01, 1.0),
        }
    }
}

/// `Y·Yᵀ` against the full RBF kernel when only a random subset of its
/// columns is used for training.
pub fn fig4_targets(p: &Fig4TargetsParams, env: &Env) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (x, s, source) = rbf_target(env, p.m)?;
    let m = s.rows();
    let target = TargetSpec::square(s.clone())?;
    let kpca = gram_mse(&spectral::kpca_embed(&s, p.d)?, &s);
    let rows = sweep_map(&p.fractions, |i, fraction| {
        let n = ((fraction * m as f64).round() as usize).clamp(1, m);
        let cfg = p.training.config(x.cols(), p.d, n, 1, derive_seed(env.seed, 4));
        let columns = TargetColumns::Random {
            seed: derive_seed(env.seed, 40 + i as u64),
        };
        let (_, report) = model::train_with_columns(&cfg, &x, &target, &columns)?;
        Ok(report.final_mse_gram.expect("square target"))
    })?;
    let mut out = ExperimentResult::new("fig4_targets", "target_fraction", p.fractions.clone(), env, source);
    out.push("simec_yyt", rows)?;
    out.push("kpca", vec![kpca; p.fractions.len()])?;
    out.wall_time = start.elapsed();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig4MissingParams {
    pub m: usize,
    pub rank: usize,
    pub d: usize,
    pub noise: f64,
    pub missing: Vec<f64>,
    pub training: Training,
}

impl Fig4MissingParams {
    pub fn at_scale(scale: f64) -> Fig4MissingParams {
        Fig4MissingParams {
            m: scaled(1000, scale),
            rank: 10,
            d: 10,
            noise: 0.05,
            missing: vec![0.0, 0.25, 0.5, 0.75, 0.9],
            training: one_hidden(64, 800, 0.01, 1.0),
        }
    }
}

/// Synthetic low-rank similarities with a growing share of unobserved
/// entries: SimEc trained on the observed ones against the eigendecomposition
/// of the mean-filled matrix, both scored on every entry.
pub fn fig4_missing(p: &Fig4MissingParams, env: &Env) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (x, s) = data::synth_lowrank(p.m, p.rank, p.noise, derive_seed(env.seed, 5))?;
    let s = similarity::center(&s)?;
    let m = s.rows();
    let kpca = gram_mse(&spectral::kpca_embed(&s, p.d)?, &s);
    let rows = sweep_map(&p.missing, |i, fraction| {
        let (target, mean_fill) = if fraction == 0.0 {
            (TargetSpec::square(s.clone())?, kpca)
        } else {
            let mask = similarity::random_mask(m, m, TargetKind::SquareSymmetric, fraction, derive_seed(env.seed, 50 + i as u64))?;
            let fill = gram_mse(&spectral::mean_fill_embed(&s, &mask, p.d)?, &s);
            (TargetSpec::square(s.clone())?.with_mask(mask)?, fill)
        };
        let cfg = p.training.config(x.cols(), p.d, m, 1, derive_seed(env.seed, 6));
        let (_, report) = model::train(&cfg, &x, &target)?;
        Ok([report.final_mse_gram.expect("square target"), mean_fill])
    })?;
    let mut out = ExperimentResult::new("fig4_missing", "missing_fraction", p.missing.clone(), env, DataSource::Synthetic);
    out.push("simec_yyt", rows.iter().map(|r| r[0]).collect())?;
    out.push("mean_fill", rows.iter().map(|r| r[1]).collect())?;
    out.push("kpca", vec![kpca; p.missing.len()])?;
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Centered Simpson similarity of binarized 0/7 images plus the preprocessed
/// training features.
fn simpson_target(env: &Env, m: usize) -> Result<(Matrix, Matrix, DataSource)> {
    let (raw, ds) = image_data(env, total_rows(m), Some(&[0, 7]), &[0, 7])?;
    let binary = similarity::binarize(&raw.train_features());
    let s = similarity::center(&similarity::simpson_similarity(&binary)?)?;
    Ok((ds.train_features(), s, ds.source()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig6Params {
    pub m: usize,
    pub dims: Vec<usize>,
    pub training: Training,
}

impl Fig6Params {
    pub fn at_scale(scale: f64) -> Fig6Params {
        Fig6Params {
            m: scaled(800, scale),
            dims: vec![2, 5, 10],
            training: one_hidden(64, 1000, 0.01, 0.0),
        }
    }
}

/// Non-metric Simpson similarity: embeddings on the largest positive
/// eigenvalues, on the largest-magnitude eigenvalues with signs, and the
/// SimEc prediction `Y·W_l`.
pub fn fig6(p: &Fig6Params, env: &Env) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (x, s, source) = simpson_target(env, p.m)?;
    let target = TargetSpec::square(s.clone())?;
    let top = spectral::eig_sym_topd(&s, max_dim(&p.dims), Criterion::LargestPositive)?;
    let magnitude = spectral::eig_sym_topd(&s, max_dim(&p.dims), Criterion::LargestMagnitude)?;
    let sweep: Vec<f64> = p.dims.iter().map(|&d| d as f64).collect();
    let rows = sweep_map(&sweep, |i, d| {
        let d = d as usize;
        let positive = gram_mse(&positive_embedding(&top, d), &s);
        let signed = linalg::mse(&signed_reconstruction(&magnitude, d)?, &s);
        let cfg = p.training.config(x.cols(), d, s.rows(), 1, derive_seed(env.seed, 70 + i as u64));
        let (_, report) = model::train(&cfg, &x, &target)?;
        Ok([positive, signed, report.final_mse_relations])
    })?;
    let mut out = ExperimentResult::new("fig6", "embed_dim", sweep, env, source);
    for (j, name) in ["positive_only", "signed", "simec_yw"].iter().enumerate() {
        out.push(name, rows.iter().map(|r| r[j]).collect())?;
    }
    out.wall_time = start.elapsed();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig7Params {
    pub m: usize,
    pub dims: Vec<usize>,
    /// Eigenpairs kept in each of the positive and negative parts; `None`
    /// keeps all of them.
    pub parts_rank: Option<usize>,
    /// Used for every model; `lambda_sym` is dropped for the stacked target.
    pub training: Training,
}

impl Fig7Params {
    pub fn at_scale(scale: f64) -> Fig7Params {
        Fig7Params {
            m: scaled(800, scale),
            dims: vec![2, 5, 10],
            parts_rank: None,
            training: one_hidden(64, 1000, 0.01, 0.0),
        }
    }
}

/// Splits `s` into `(S1, S2)` with `s = S1 − S2`, both positive
/// semi-definite, from the positive and negative eigenpairs.
pub(crate) fn split_by_sign(s: &Matrix, rank: Option<usize>) -> Result<(Matrix, Matrix)> {
    let m = s.rows();
    let eig = spectral::eig_sym_topd(s, m, Criterion::LargestMagnitude)?;
    let mut parts = [Matrix::zeros(m, m), Matrix::zeros(m, m)];
    let mut used = [0usize; 2];
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let side = usize::from(lambda < 0.0);
        if lambda == 0.0 || rank.is_some_and(|r| used[side] >= r) {
            continue;
        }
        used[side] += 1;
        let u = eig.eigenvectors.column(j);
        let w = lambda.abs();
        let part = &mut parts[side];
        for r in 0..m {
            for c in 0..m {
                part[(r, c)] += w * u[r] * u[c];
            }
        }
    }
    let [s1, s2] = parts;
    Ok((s1.symmetrize()?, s2.symmetrize()?))
}

/// Positive and negative parts of the Simpson similarity, each normalized by
/// its largest eigenvalue, approximated by a SimEc per part, one SimEc on
/// their average, and one SimEc on the stacked pair.
pub fn fig7(p: &Fig7Params, env: &Env) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (x, s, source) = simpson_target(env, p.m)?;
    let (s1, s2) = split_by_sign(&s, p.parts_rank)?;
    // after the eigenvalue normalization one common factor brings both parts
    // into [-1, 1] without changing their relative weight
    let stacked = model::multi_similarity_target(&[s1.clone(), s2.clone()], MultiMode::Stacked)?;
    let range = stacked.slice(0).max_abs().max(stacked.slice(1).max_abs());
    let parts = [stacked.slice(0).scale(1.0 / range), stacked.slice(1).scale(1.0 / range)];
    let stacked = TargetSpec::new(parts.to_vec(), None, TargetKind::SquareSymmetric)?;
    let averaged = model::multi_similarity_target(&[s1, s2], MultiMode::Averaged)?;
    let averaged = TargetSpec::square(averaged.slice(0).scale(1.0 / range))?;
    let m = s.rows();
    let part_eigs = parts
        .iter()
        .map(|part| spectral::eig_sym_topd(part, max_dim(&p.dims), Criterion::LargestPositive))
        .collect::<Result<Vec<_>>>()?;

    let sweep: Vec<f64> = p.dims.iter().map(|&d| d as f64).collect();
    let rows = sweep_map(&sweep, |i, d| {
        let d = d as usize;
        let seed = derive_seed(env.seed, 80 + i as u64);
        let mut row = Vec::with_capacity(14);
        for (part, eig) in parts.iter().zip(&part_eigs) {
            row.push(gram_mse(&positive_embedding(eig, d), part));
        }
        for part in &parts {
            let cfg = p.training.config(x.cols(), d, m, 1, seed);
            let (single, _) = model::train(&cfg, &x, &TargetSpec::square(part.clone())?)?;
            row.push(linalg::mse(&model::predict_relations(&single, &x)?[0], part));
            row.push(linalg::mse(&model::gram_approx(&single, &x)?, part));
        }
        let cfg = Training {
            lambda_sym: 0.0,
            ..p.training.clone()
        }
        .config(x.cols(), d, m, 2, seed);
        let (multi, _) = model::train(&cfg, &x, &stacked)?;
        let preds = model::predict_relations(&multi, &x)?;
        let g = model::gram_approx(&multi, &x)?;
        for (k, part) in parts.iter().enumerate() {
            row.push(linalg::mse(&preds[k], part));
            row.push(linalg::mse(&g, part));
        }
        let cfg = p.training.config(x.cols(), d, m, 1, seed);
        let (avg, _) = model::train(&cfg, &x, &averaged)?;
        let pred = &model::predict_relations(&avg, &x)?[0];
        let g = model::gram_approx(&avg, &x)?;
        for part in &parts {
            row.push(linalg::mse(pred, part));
            row.push(linalg::mse(&g, part));
        }
        Ok(row)
    })?;
    let names = [
        "eig_s1",
        "eig_s2",
        "single_s1_yw",
        "single_s1_yyt",
        "single_s2_yw",
        "single_s2_yyt",
        "stacked_s1_yw",
        "stacked_s1_yyt",
        "stacked_s2_yw",
        "stacked_s2_yyt",
        "averaged_s1_yw",
        "averaged_s1_yyt",
        "averaged_s2_yw",
        "averaged_s2_yyt",
    ];
    let mut out = ExperimentResult::new("fig7", "embed_dim", sweep, env, source);
    for (j, name) in names.iter().enumerate() {
        out.push(name, rows.iter().map(|r| r[j]).collect())?;
    }
    out.wall_time = start.elapsed();
    Ok(out)
}
