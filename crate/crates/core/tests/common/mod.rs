#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simec::net::{self, NetworkParams, NetworkShape, ObjectiveConfig, OutputActivation};
use simec::similarity::{TargetKind, TargetSpec};
use simec::spectral::Criterion;
use simec::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(m: usize, rng: &mut ChaCha8Rng) -> Matrix {
    uniform(m, m, rng).symmetrize().unwrap()
}

/// Full eigendecomposition by cyclic Jacobi rotations. Eigenvalues come back
/// in diagonal order with eigenvectors as columns.
pub fn jacobi(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    let scale: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
        }
        if off <= 1e-32 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * kp - s * kq;
                    a[(k, q)] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * pk - s * qk;
                    a[(q, k)] = s * pk + c * qk;
                }
                for k in 0..n {
                    let (kp, kq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * kp - s * kq;
                    v[(k, q)] = s * kp + c * kq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// The first `d` oracle eigenvalues in the order the criterion asks for.
pub fn oracle_top(values: &[f64], d: usize, criterion: Criterion) -> Vec<f64> {
    let mut v = values.to_vec();
    match criterion {
        Criterion::LargestPositive => v.sort_by(|a, b| b.total_cmp(a)),
        Criterion::MostNegative => v.sort_by(|a, b| a.total_cmp(b)),
        Criterion::LargestMagnitude => v.sort_by(|a, b| b.abs().total_cmp(&a.abs())),
    }
    v.truncate(d);
    v
}

/// Best rank-`d` approximation error of a symmetric matrix in mean squared
/// terms: the discarded squared eigenvalues over `m²`.
pub fn tail_mse(values: &[f64], d: usize, positive_only: bool) -> f64 {
    let m = values.len() as f64;
    let mut v: Vec<f64> = values.to_vec();
    if positive_only {
        v.sort_by(|a, b| b.total_cmp(a));
        let kept: f64 = v.iter().take(d).filter(|x| **x > 0.0).map(|x| x * x).sum();
        return (v.iter().map(|x| x * x).sum::<f64>() - kept) / (m * m);
    }
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    v[d.min(v.len())..].iter().map(|x| x * x).sum::<f64>() / (m * m)
}

/// Symmetric PSD `Z·Zᵀ` of rank `rank`, with features `Z·Q` that carry it.
pub fn lowrank(m: usize, rank: usize, seed: u64) -> (Matrix, Matrix) {
    simec::data::synth_lowrank(m, rank, 0.0, seed).unwrap()
}

/// A random small network, input, target and objective for gradient checks.
/// Sizes stay within 10 inputs, 5 embedding units, 8 targets and 2 slices.
pub fn gradient_case(seed: u64) -> (NetworkParams, Matrix, TargetSpec, ObjectiveConfig) {
    let mut r = rng(seed);
    let input_dim = r.random_range(1..=10);
    let embed_dim = r.random_range(1..=5);
    let n = r.random_range(1..=8);
    let k = r.random_range(1..=2);
    let rows = r.random_range(2..=8);
    let hidden: Vec<usize> = (0..r.random_range(0..=2)).map(|_| r.random_range(1..=10)).collect();
    let output_activation = if r.random_bool(0.4) {
        OutputActivation::Bounded { lo: -1.5, hi: 2.0 }
    } else {
        OutputActivation::Identity
    };
    let shape = NetworkShape {
        input_dim,
        hidden,
        embed_dim,
        n_targets: n,
        k,
        encoder_bias: r.random_bool(0.8),
        output_activation,
    };
    let mut p = net::init(&shape, seed).unwrap();
    p.for_each_mut(|v| *v += r.random_range(-0.2..0.2));
    let x = uniform(rows, input_dim, &mut r);
    let slices: Vec<Matrix> = (0..k).map(|_| uniform(rows, n, &mut r)).collect();
    let mask = r
        .random_bool(0.5)
        .then(|| Matrix::from_fn(rows, n, |_, _| if r.random_bool(0.7) { 1.0 } else { 0.0 }));
    let mask = mask.filter(|m| m.as_slice().contains(&1.0));
    let target = TargetSpec::new(slices, mask, TargetKind::Rectangular).unwrap();
    let use_sym = k == 1 && r.random_bool(0.6);
    let sym = random_symmetric(n, &mut r);
    let obj = ObjectiveConfig {
        lambda_sym: if use_sym { r.random_range(0.1..2.0) } else { 0.0 },
        lambda_orth: if r.random_bool(0.5) { r.random_range(0.1..1.0) } else { 0.0 },
        lambda_l2: if r.random_bool(0.5) { r.random_range(0.001..0.1) } else { 0.0 },
        sym_target: use_sym.then_some(sym),
        sym_mask: None,
    };
    (p, x, target, obj)
}

/// Largest relative deviation between two gradients, with an absolute floor
/// for entries that are essentially zero.
pub fn max_rel_dev(a: &NetworkParams, b: &NetworkParams) -> f64 {
    a.to_flat()
        .iter()
        .zip(b.to_flat())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
