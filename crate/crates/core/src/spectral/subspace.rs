//! Block (subspace) iteration with Rayleigh–Ritz extraction for the
//! algebraically largest eigenpairs of a symmetric matrix.
//!
//! Between Rayleigh–Ritz steps the block is passed through a Chebyshev
//! polynomial in `S` that damps everything below the smallest current Ritz
//! value, down to the Gershgorin bound. Ritz pairs are always taken from `S`
//! itself, so the filter only affects the convergence rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{tridiag, EigenDecomposition};
use crate::error::{Result, SimecError};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Converged once every wanted pair has `‖S v − λ v‖ ≤ tol · ‖S‖_F`.
    pub tol: f64,
    /// Extra block columns beyond the wanted count.
    pub oversample: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 10_000,
            tol: 1e-10,
            oversample: 10,
            seed: 0x5eed_e16e,
        }
    }
}

pub(super) fn top_algebraic(s: &Matrix, d: usize, opts: &SolverOptions) -> Result<EigenDecomposition> {
    let m = s.rows();
    let block = m.min(2 * d + opts.oversample);
    if block == m {
        return dense_top(s, d);
    }

    let norm = linalg::frobenius_sq(s).sqrt();
    if norm == 0.0 {
        return dense_top(s, d);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // Gershgorin: every eigenvalue lies in [-rho, rho]
    let rho = (0..m)
        .map(|r| s.row(r).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let mut basis = Matrix::from_fn(block, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_rows(&mut basis, &mut rng);

    let mut worst = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        // rows of `images` are S·q_i (S is symmetric)
        let images = linalg::matmul(&basis, s)?;
        let projected = linalg::matmul_nt(&images, &basis)?.symmetrize()?;
        let (values, vectors) = tridiag::eig_dense(projected.as_slice(), block)?;

        // Ritz rotation, columns reordered to descending eigenvalue
        let rot = Matrix::from_fn(block, block, |r, c| vectors[c * block + (block - 1 - r)]);
        let ritz_values: Vec<f64> = values.iter().rev().copied().collect();
        let ritz = linalg::matmul(&rot, &basis)?;
        let ritz_images = linalg::matmul(&rot, &images)?;

        worst = (0..d)
            .map(|j| {
                let theta = ritz_values[j];
                ritz_images
                    .row(j)
                    .iter()
                    .zip(ritz.row(j))
                    .map(|(sv, v)| (sv - theta * v).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if worst <= opts.tol * norm {
            let vectors = Matrix::from_fn(m, d, |r, c| ritz[(c, r)]);
            return Ok(EigenDecomposition {
                eigenvalues: ritz_values[..d].to_vec(),
                eigenvectors: vectors,
            });
        }

        let cut = ritz_values[block - 1];
        basis = if cut > -rho && ritz_values[d - 1] > cut {
            chebyshev_filter(s, ritz, ritz_images, -rho, cut, FILTER_DEGREE)?
        } else {
            ritz_images
        };
        orthonormalize_rows(&mut basis, &mut rng);
    }
    Err(SimecError::NoConvergence {
        iterations: opts.max_iterations,
        residual: worst / norm,
    })
}

const FILTER_DEGREE: usize = 16;

/// Applies `T_deg((S − c)/e)` to every row of `x`, where `[lo, hi]` is mapped
/// onto `[-1, 1]`: components with eigenvalues in that interval stay bounded
/// while those above `hi` grow rapidly. `sx` must hold `S·x` row-wise. Each row
/// is rescaled along the way, which leaves its direction unchanged.
fn chebyshev_filter(s: &Matrix, x: Matrix, sx: Matrix, lo: f64, hi: f64, deg: usize) -> Result<Matrix> {
    let e = (hi - lo) / 2.0;
    let c = (hi + lo) / 2.0;
    let mut prev = x;
    let mut cur = sx.zip_with(&prev, "chebyshev", |a, b| (a - c * b) / e)?;
    for _ in 1..deg {
        for r in 0..cur.rows() {
            let n = linalg::dot(cur.row(r), cur.row(r)).sqrt();
            if n > 0.0 {
                cur.row_mut(r).iter_mut().for_each(|v| *v /= n);
                prev.row_mut(r).iter_mut().for_each(|v| *v /= n);
            }
        }
        let scur = linalg::matmul(&cur, s)?;
        let next = Matrix::from_fn(cur.rows(), cur.cols(), |r, k| {
            2.0 * (scur[(r, k)] - c * cur[(r, k)]) / e - prev[(r, k)]
        });
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

fn dense_top(s: &Matrix, d: usize) -> Result<EigenDecomposition> {
    let m = s.rows();
    let (values, vectors) = tridiag::eig_dense(s.as_slice(), m)?;
    let eigenvalues = (0..d).map(|j| values[m - 1 - j]).collect();
    let eigenvectors = Matrix::from_fn(m, d, |r, c| vectors[r * m + (m - 1 - c)]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = linalg::dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Two-pass modified Gram–Schmidt over the rows. Rows that collapse (rank
/// deficiency) are replaced by fresh random directions.
pub(crate) fn orthonormalize_rows(q: &mut Matrix, rng: &mut ChaCha8Rng) {
    let (p, m) = q.shape();
    for i in 0..p {
        let mut attempts = 0;
        loop {
            let before = linalg::dot(q.row(i), q.row(i)).sqrt();
            for _pass in 0..2 {
                for j in 0..i {
                    let proj = linalg::dot(q.row(i), q.row(j));
                    let (head, tail) = q.as_mut_slice().split_at_mut(i * m);
                    let qj = &head[j * m..(j + 1) * m];
                    for (a, b) in tail[..m].iter_mut().zip(qj) {
                        *a -= proj * b;
                    }
                }
            }
            let after = normalize(q.row_mut(i));
            if after > 1e-10 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                break;
            }
            attempts += 1;
            assert!(attempts < 16, "cannot extend orthonormal basis");
            for x in q.row_mut(i) {
                *x = rng.sample(StandardNormal);
            }
        }
    }
}
