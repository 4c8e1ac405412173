//! Symmetric eigendecomposition and the spectral embeddings used as references
//! for trained encoders: kernel PCA, signed (non-metric) embeddings, mean-filled
//! embeddings of incomplete matrices, and ridge regression onto eigen-embeddings.

mod subspace;
mod tridiag;

use crate::error::{Result, SimecError};
use crate::linalg::{self, Matrix};

pub(crate) use subspace::orthonormalize_rows;
pub use subspace::SolverOptions;

/// Which end of the spectrum [`eig_sym_topd`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Algebraically largest eigenvalues, descending.
    LargestPositive,
    /// Algebraically smallest eigenvalues, ascending.
    MostNegative,
    /// Largest `|λ|`, descending by magnitude.
    LargestMagnitude,
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `m×d`, one unit-norm eigenvector per column.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `Σ_j λ_j v_j v_jᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.eigenvectors.rows(), self.len(), |r, c| {
            self.eigenvectors[(r, c)] * self.eigenvalues[c]
        });
        linalg::matmul_nt(&scaled, &self.eigenvectors).expect("shapes match by construction")
    }
}

/// Embedding whose reconstruction is `Σ_j signs[j] · coords[:,j] · coords[:,j]ᵀ`.
#[derive(Debug, Clone)]
pub struct SignedEmbedding {
    pub coords: Matrix,
    pub signs: Vec<f64>,
}

impl SignedEmbedding {
    pub fn dims(&self) -> usize {
        self.signs.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let signed = Matrix::from_fn(self.coords.rows(), self.dims(), |r, c| {
            self.coords[(r, c)] * self.signs[c]
        });
        linalg::matmul_nt(&signed, &self.coords).expect("shapes match by construction")
    }
}

/// Top-`d` eigenpairs of a symmetric matrix under `criterion`.
///
/// The input is symmetrized as `(S + Sᵀ)/2` first.
pub fn eig_sym_topd(s: &Matrix, d: usize, criterion: Criterion) -> Result<EigenDecomposition> {
    eig_sym_topd_with(s, d, criterion, &SolverOptions::default())
}

pub fn eig_sym_topd_with(
    s: &Matrix,
    d: usize,
    criterion: Criterion,
    opts: &SolverOptions,
) -> Result<EigenDecomposition> {
    if !s.is_square() {
        return Err(SimecError::shape("eig_sym_topd", s.shape(), s.shape()));
    }
    let m = s.rows();
    if d == 0 || d > m {
        return Err(SimecError::invalid(format!(
            "requested {d} eigenpairs of a {m}x{m} matrix"
        )));
    }
    let sym = s.symmetrize()?;
    match criterion {
        Criterion::LargestPositive => subspace::top_algebraic(&sym, d, opts),
        Criterion::MostNegative => {
            let neg = subspace::top_algebraic(&sym.scale(-1.0), d, opts)?;
            Ok(EigenDecomposition {
                eigenvalues: neg.eigenvalues.iter().map(|v| -v).collect(),
                eigenvectors: neg.eigenvectors,
            })
        }
        Criterion::LargestMagnitude => {
            let pos = subspace::top_algebraic(&sym, d, opts)?;
            let neg = subspace::top_algebraic(&sym.scale(-1.0), d, opts)?;
            // candidates in solver order: positive side first, then negative side
            let mut cands: Vec<(f64, usize, bool)> = Vec::with_capacity(2 * d);
            for (i, &v) in pos.eigenvalues.iter().enumerate() {
                if v >= 0.0 {
                    cands.push((v, i, true));
                }
            }
            for (i, &v) in neg.eigenvalues.iter().enumerate() {
                if v > 0.0 {
                    cands.push((-v, i, false));
                }
            }
            // a matrix with fewer than d nonzero eigenvalues may leave gaps; fill
            // with the remaining positive-side pairs (all of them ≈ 0 in magnitude)
            for (i, &v) in pos.eigenvalues.iter().enumerate() {
                if v < 0.0 && cands.len() < d {
                    cands.push((v, i, true));
                }
            }
            cands.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
            cands.truncate(d);
            let mut vecs = Matrix::zeros(m, d);
            let mut vals = Vec::with_capacity(d);
            for (c, &(val, src, from_pos)) in cands.iter().enumerate() {
                let basis = if from_pos { &pos.eigenvectors } else { &neg.eigenvectors };
                for r in 0..m {
                    vecs[(r, c)] = basis[(r, src)];
                }
                vals.push(val);
            }
            Ok(EigenDecomposition {
                eigenvalues: vals,
                eigenvectors: vecs,
            })
        }
    }
}

/// Kernel PCA embedding `Y = U_d · sqrt(Λ_d)` of a centered similarity matrix.
/// Eigenpairs with `λ ≤ 0` yield zero columns so the width is always `d`.
pub fn kpca_embed(s: &Matrix, d: usize) -> Result<Matrix> {
    let eig = eig_sym_topd(s, d, Criterion::LargestPositive)?;
    Ok(scaled_columns(&eig, |lambda| if lambda > 0.0 { lambda.sqrt() } else { 0.0 }))
}

/// Embedding on the `d` eigenpairs of largest magnitude, keeping their signs so
/// non-metric matrices can be reconstructed.
pub fn signed_embed(s: &Matrix, d: usize) -> Result<SignedEmbedding> {
    let eig = eig_sym_topd(s, d, Criterion::LargestMagnitude)?;
    let coords = scaled_columns(&eig, |lambda| lambda.abs().sqrt());
    let signs = eig
        .eigenvalues
        .iter()
        .map(|&l| if l < 0.0 { -1.0 } else { 1.0 })
        .collect();
    Ok(SignedEmbedding { coords, signs })
}

fn scaled_columns(eig: &EigenDecomposition, f: impl Fn(f64) -> f64) -> Matrix {
    let factors: Vec<f64> = eig.eigenvalues.iter().map(|&l| f(l)).collect();
    Matrix::from_fn(eig.eigenvectors.rows(), eig.len(), |r, c| {
        eig.eigenvectors[(r, c)] * factors[c]
    })
}

/// Fills unobserved entries with the mean of the observed ones, re-symmetrizes,
/// and embeds with [`kpca_embed`].
pub fn mean_fill_embed(s: &Matrix, mask: &Matrix, d: usize) -> Result<Matrix> {
    let filled = mean_fill(s, mask)?;
    kpca_embed(&filled, d)
}

/// The filled matrix used by [`mean_fill_embed`].
pub fn mean_fill(s: &Matrix, mask: &Matrix) -> Result<Matrix> {
    if mask.shape() != s.shape() {
        return Err(SimecError::shape("mean_fill", s.shape(), mask.shape()));
    }
    let (sum, count) = s
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &w)| w != 0.0)
        .fold((0.0, 0usize), |(acc, n), (&v, _)| (acc + v, n + 1));
    if count == 0 {
        return Err(SimecError::NoObservedEntries);
    }
    let mean = sum / count as f64;
    s.zip_with(mask, "mean_fill", |v, w| if w != 0.0 { v } else { mean })?
        .symmetrize()
}

/// Closed-form ridge regression `W = (XᵀX + ridge·I)⁻¹ XᵀY`.
pub fn regression_baseline(x: &Matrix, y_spectral: &Matrix, ridge: f64) -> Result<Matrix> {
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(SimecError::invalid(format!("ridge must be >= 0, got {ridge}")));
    }
    if x.rows() != y_spectral.rows() {
        return Err(SimecError::shape("regression_baseline", x.shape(), y_spectral.shape()));
    }
    let mut gram = linalg::matmul_tn(x, x)?;
    for i in 0..gram.rows() {
        gram[(i, i)] += ridge;
    }
    let rhs = linalg::matmul_tn(x, y_spectral)?;
    cholesky_solve(&gram, &rhs)
}

/// Solves `A·W = B` for symmetric positive definite `A`.
fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 1e-14 * a[(j, j)].abs().max(f64::MIN_POSITIVE) {
            return Err(SimecError::invalid(
                "normal equations are singular; use a positive ridge",
            ));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    let cols = b.cols();
    let mut out = b.clone();
    // forward: L z = b
    for c in 0..cols {
        for i in 0..n {
            let mut v = out[(i, c)];
            for k in 0..i {
                v -= l[(i, k)] * out[(k, c)];
            }
            out[(i, c)] = v / l[(i, i)];
        }
        // back: Lᵀ w = z
        for i in (0..n).rev() {
            let mut v = out[(i, c)];
            for k in (i + 1)..n {
                v -= l[(k, i)] * out[(k, c)];
            }
            out[(i, c)] = v / l[(i, i)];
        }
    }
    Ok(out)
}

/// `Y·Yᵀ`.
pub fn gram(y: &Matrix) -> Matrix {
    linalg::matmul_nt(y, y).expect("same operand")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_symmetric(m: usize, rng: &mut ChaCha8Rng) -> Matrix {
        gaussian(m, m, rng).symmetrize().unwrap()
    }

    #[test]
    fn diagonal_largest_positive() {
        let s = Matrix::from_diag(&[3.0, 2.0, 1.0]);
        let eig = eig_sym_topd(&s, 2, Criterion::LargestPositive).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!((eig.eigenvectors[(0, 0)].abs() - 1.0).abs() < 1e-10);
        assert!((eig.eigenvectors[(1, 1)].abs() - 1.0).abs() < 1e-10);
        assert!(eig.eigenvectors[(2, 0)].abs() < 1e-10);
    }

    #[test]
    fn diagonal_largest_magnitude_picks_negative() {
        let s = Matrix::from_diag(&[3.0, -5.0, 1.0]);
        let eig = eig_sym_topd(&s, 1, Criterion::LargestMagnitude).unwrap();
        assert!((eig.eigenvalues[0] + 5.0).abs() < 1e-12);
        let neg = eig_sym_topd(&s, 2, Criterion::MostNegative).unwrap();
        assert!((neg.eigenvalues[0] + 5.0).abs() < 1e-12);
        assert!((neg.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(eig_sym_topd(&Matrix::zeros(2, 3), 1, Criterion::LargestPositive).is_err());
        assert!(eig_sym_topd(&Matrix::identity(3), 4, Criterion::LargestPositive).is_err());
        assert!(eig_sym_topd(&Matrix::identity(3), 0, Criterion::LargestPositive).is_err());
    }

    #[test]
    fn eigenpairs_are_orthonormal_with_small_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_symmetric(40, &mut rng);
        for crit in [
            Criterion::LargestPositive,
            Criterion::MostNegative,
            Criterion::LargestMagnitude,
        ] {
            let eig = eig_sym_topd(&s, 6, crit).unwrap();
            let v = &eig.eigenvectors;
            let vtv = linalg::matmul_tn(v, v).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((vtv[(i, j)] - want).abs() < 1e-8);
                }
            }
            let sv = linalg::matmul(&s, v).unwrap();
            let norm = linalg::frobenius_sq(&s).sqrt();
            for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
                let res: f64 = (0..40)
                    .map(|r| (sv[(r, j)] - lambda * v[(r, j)]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res / (norm + lambda.abs()) < 1e-6);
            }
        }
    }

    #[test]
    fn kpca_reconstructs_exact_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y_true = gaussian(30, 5, &mut rng);
        let s = gram(&y_true);
        let y = kpca_embed(&s, 5).unwrap();
        assert!(linalg::mse(&gram(&y), &s) < 1e-16);
    }

    #[test]
    fn kpca_of_negative_definite_is_zero() {
        let s = Matrix::from_diag(&[-1.0, -2.0, -3.0]);
        let y = kpca_embed(&s, 2).unwrap();
        assert_eq!(y.shape(), (3, 2));
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn signed_embed_psd_matches_kpca() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = gram(&gaussian(20, 4, &mut rng));
        let signed = signed_embed(&s, 3).unwrap();
        assert!(signed.signs.iter().all(|&s| s == 1.0));
        let kp = kpca_embed(&s, 3).unwrap();
        assert!(linalg::mse(&signed.reconstruct(), &gram(&kp)) < 1e-18);
    }

    #[test]
    fn signed_embed_recovers_difference_of_rank_one() {
        let m = 8;
        let a: Vec<f64> = (0..m).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let b: Vec<f64> = (0..m).map(|i| if i < 4 { 0.0 } else { 0.5 }).collect();
        let s = Matrix::from_fn(m, m, |i, j| a[i] * a[j] - b[i] * b[j]);
        let e = signed_embed(&s, 2).unwrap();
        assert_eq!(e.signs, vec![1.0, -1.0]);
        assert!(linalg::mse(&e.reconstruct(), &s) < 1e-20);
    }

    #[test]
    fn mean_fill_with_full_mask_equals_kpca() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s = gram(&gaussian(15, 3, &mut rng));
        let full = Matrix::filled(15, 15, 1.0);
        let a = gram(&mean_fill_embed(&s, &full, 3).unwrap());
        let b = gram(&kpca_embed(&s, 3).unwrap());
        assert!(linalg::mse(&a, &b) < 1e-20);
        assert!(mean_fill_embed(&s, &Matrix::zeros(15, 15), 3).is_err());
    }

    #[test]
    fn mean_fill_with_only_diagonal_is_poor() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let s = gram(&gaussian(20, 3, &mut rng));
        let y = mean_fill_embed(&s, &Matrix::identity(20), 3).unwrap();
        let best = gram(&kpca_embed(&s, 3).unwrap());
        assert!(linalg::mse(&gram(&y), &s) > 10.0 * linalg::mse(&best, &s));
    }

    #[test]
    fn ridge_recovers_noiseless_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x = gaussian(40, 5, &mut rng);
        let w_true = gaussian(5, 3, &mut rng);
        let y = linalg::matmul(&x, &w_true).unwrap();
        let w = regression_baseline(&x, &y, 1e-12).unwrap();
        assert!(w.sub(&w_true).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn ridge_on_identity_design_shrinks() {
        let y = Matrix::from_rows(&[[2.0, -1.0], [4.0, 0.5], [1.0, 1.0]]);
        let w = regression_baseline(&Matrix::identity(3), &y, 0.5).unwrap();
        assert!(w.sub(&y.scale(1.0 / 1.5)).unwrap().max_abs() < 1e-14);
        assert!(regression_baseline(&Matrix::identity(3), &y, -1.0).is_err());
    }
}
