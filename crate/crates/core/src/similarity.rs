//! Target relation matrices: builders for the similarity measures used in the
//! experiments, centering and scaling, and missing-value masks.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimecError};
use crate::linalg::{self, Matrix};
use crate::spectral::{self, Criterion};

/// Pixels strictly above this fraction of the global maximum count as black.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    SquareSymmetric,
    Rectangular,
}

/// A target relation matrix, or a stack of `k` of them sharing one mask.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    slices: Vec<Matrix>,
    mask: Option<Matrix>,
    kind: TargetKind,
}

impl TargetSpec {
    pub fn new(slices: Vec<Matrix>, mask: Option<Matrix>, kind: TargetKind) -> Result<TargetSpec> {
        let first = slices
            .first()
            .ok_or_else(|| SimecError::invalid("a target needs at least one slice"))?;
        let shape = first.shape();
        for s in &slices[1..] {
            if s.shape() != shape {
                return Err(SimecError::shape("target slices", shape, s.shape()));
            }
        }
        if let Some(mask) = &mask {
            if mask.shape() != shape {
                return Err(SimecError::shape("target mask", shape, mask.shape()));
            }
            if mask.as_slice().iter().any(|&w| w != 0.0 && w != 1.0) {
                return Err(SimecError::invalid("mask entries must be 0 or 1"));
            }
        }
        if kind == TargetKind::SquareSymmetric {
            if shape.0 != shape.1 {
                return Err(SimecError::invalid(format!(
                    "square symmetric target has shape {shape:?}"
                )));
            }
            for s in &slices {
                for i in 0..shape.0 {
                    for j in (i + 1)..shape.1 {
                        let observed = mask
                            .as_ref()
                            .is_none_or(|mk| mk[(i, j)] != 0.0 && mk[(j, i)] != 0.0);
                        if observed && (s[(i, j)] - s[(j, i)]).abs() > 1e-10 {
                            return Err(SimecError::invalid(format!(
                                "target is not symmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(TargetSpec { slices, mask, kind })
    }

    pub fn square(s: Matrix) -> Result<TargetSpec> {
        TargetSpec::new(vec![s], None, TargetKind::SquareSymmetric)
    }

    pub fn rectangular(r: Matrix) -> Result<TargetSpec> {
        TargetSpec::new(vec![r], None, TargetKind::Rectangular)
    }

    pub fn with_mask(self, mask: Matrix) -> Result<TargetSpec> {
        TargetSpec::new(self.slices, Some(mask), self.kind)
    }

    pub fn slices(&self) -> &[Matrix] {
        &self.slices
    }

    pub fn slice(&self, i: usize) -> &Matrix {
        &self.slices[i]
    }

    pub fn mask(&self) -> Option<&Matrix> {
        self.mask.as_ref()
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.slices.len()
    }

    pub fn rows(&self) -> usize {
        self.slices[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.slices[0].cols()
    }

    /// Restricts every slice (and the mask) to the given columns. The result is
    /// rectangular unless it keeps every column in order.
    pub fn select_columns(&self, ids: &[usize]) -> Result<TargetSpec> {
        if let Some(&bad) = ids.iter().find(|&&c| c >= self.cols()) {
            return Err(SimecError::invalid(format!(
                "target column {bad} out of range for {} columns",
                self.cols()
            )));
        }
        let identity = ids.len() == self.cols() && ids.iter().enumerate().all(|(i, &c)| i == c);
        if identity {
            return Ok(self.clone());
        }
        TargetSpec::new(
            self.slices.iter().map(|s| s.select_cols(ids)).collect(),
            self.mask.as_ref().map(|m| m.select_cols(ids)),
            TargetKind::Rectangular,
        )
    }

    /// Rows selected, and for square targets the matching columns too.
    pub fn select_rows(&self, ids: &[usize]) -> Result<TargetSpec> {
        TargetSpec::new(
            self.slices.iter().map(|s| s.select_rows(ids)).collect(),
            self.mask.as_ref().map(|m| m.select_rows(ids)),
            TargetKind::Rectangular,
        )
    }

    /// Transposed relation (`Rᵀ`), used for the second stage of dual training.
    pub fn transposed(&self) -> Result<TargetSpec> {
        TargetSpec::new(
            self.slices.iter().map(linalg::transpose).collect(),
            self.mask.as_ref().map(linalg::transpose),
            self.kind,
        )
    }
}

/// `S[i,j] = exp(−γ‖x_i − x_j‖²)`.
pub fn rbf_kernel(x: &Matrix, gamma: f64) -> Result<Matrix> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SimecError::invalid(format!("rbf gamma must be > 0, got {gamma}")));
    }
    let d2 = pairwise_sq_distances(x);
    let m = x.rows();
    let mut s = Matrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = (-gamma * d2[(i, j)]).exp();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// `1 / (2 · median pairwise distance²)` over all distinct pairs.
pub fn median_heuristic_gamma(x: &Matrix) -> Result<f64> {
    let m = x.rows();
    if m < 2 {
        return Err(SimecError::invalid("median heuristic needs at least two points"));
    }
    let d2 = pairwise_sq_distances(x);
    let mut pairs: Vec<f64> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            pairs.push(d2[(i, j)]);
        }
    }
    let mid = pairs.len() / 2;
    let (_, median, _) = pairs.select_nth_unstable_by(mid, f64::total_cmp);
    if *median <= 0.0 {
        return Err(SimecError::invalid("median pairwise distance is zero"));
    }
    Ok(1.0 / (2.0 * *median))
}

fn pairwise_sq_distances(x: &Matrix) -> Matrix {
    let m = x.rows();
    let mut d2 = Matrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[(i, j)] = v;
            d2[(j, i)] = v;
        }
    }
    d2
}

/// 1 for pairs sharing a label, 0 elsewhere.
pub fn label_similarity(labels: &[u8]) -> Matrix {
    let m = labels.len();
    Matrix::from_fn(m, m, |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 })
}

/// Maps features to {0, 1}: 1 where the value exceeds
/// [`BINARIZE_THRESHOLD`] times the global maximum.
pub fn binarize(x: &Matrix) -> Matrix {
    let max = x.as_slice().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let cut = BINARIZE_THRESHOLD * max;
    x.map(|v| if v > cut { 1.0 } else { 0.0 })
}

/// Simpson (overlap) score `|A ∩ B| / min(|A|, |B|)` between the black-pixel
/// supports of binary rows.
pub fn simpson_similarity(x_binary: &Matrix) -> Result<Matrix> {
    let m = x_binary.rows();
    let counts: Vec<f64> = (0..m).map(|r| x_binary.row(r).iter().sum()).collect();
    if let Some(row) = counts.iter().position(|&c| c == 0.0) {
        return Err(SimecError::EmptyRow { row });
    }
    let overlap = linalg::matmul_nt(x_binary, x_binary)?;
    let mut s = Matrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = overlap[(i, j)] / counts[i].min(counts[j]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Double centering: `S − 1S/m − S1/m + 1S1/m²`.
pub fn center(s: &Matrix) -> Result<Matrix> {
    if !s.is_square() {
        return Err(SimecError::shape("center", s.shape(), s.shape()));
    }
    let m = s.rows();
    let mf = m as f64;
    let row_means: Vec<f64> = (0..m).map(|r| s.row(r).iter().sum::<f64>() / mf).collect();
    let mut col_means = vec![0.0; m];
    for r in 0..m {
        for (acc, v) in col_means.iter_mut().zip(s.row(r)) {
            *acc += v;
        }
    }
    col_means.iter_mut().for_each(|v| *v /= mf);
    let grand = row_means.iter().sum::<f64>() / mf;
    // (r_i + c_j) is commutative, so exactly symmetric input stays exactly symmetric
    Ok(Matrix::from_fn(m, m, |i, j| s[(i, j)] - (row_means[i] + col_means[j]) + grand))
}

/// Scales so the largest absolute entry is exactly 1.
pub fn normalize_range(s: &Matrix) -> Result<Matrix> {
    let max = s.max_abs();
    if max == 0.0 {
        return Err(SimecError::invalid("cannot range-normalize an all-zero matrix"));
    }
    Ok(s.map(|v| v / max))
}

/// Divides by the magnitude of the largest-magnitude eigenvalue.
pub fn normalize_by_top_eigenvalue(s: &Matrix) -> Result<Matrix> {
    let eig = spectral::eig_sym_topd(s, 1, Criterion::LargestMagnitude)?;
    let top = eig.eigenvalues[0].abs();
    let scale = linalg::frobenius_sq(s).sqrt();
    if top <= 1e-12 * scale || top == 0.0 {
        return Err(SimecError::invalid("largest eigenvalue is zero"));
    }
    Ok(s.map(|v| v / top))
}

/// A {0,1} mask with `fraction_missing` of the entries unobserved.
///
/// For square symmetric targets an entry and its transpose share fate and the
/// diagonal is always observed. The number of observed entries is exact up to
/// rounding to whole pairs.
pub fn random_mask(
    rows: usize,
    cols: usize,
    kind: TargetKind,
    fraction_missing: f64,
    seed: u64,
) -> Result<Matrix> {
    if !(0.0..1.0).contains(&fraction_missing) {
        return Err(SimecError::invalid(format!(
            "fraction_missing must be in [0, 1), got {fraction_missing}"
        )));
    }
    if fraction_missing == 0.0 {
        return Ok(Matrix::filled(rows, cols, 1.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_observed = ((1.0 - fraction_missing) * (rows * cols) as f64).round() as usize;
    let mut mask = Matrix::zeros(rows, cols);
    match kind {
        TargetKind::SquareSymmetric => {
            if rows != cols {
                return Err(SimecError::invalid("symmetric mask must be square"));
            }
            let m = rows;
            for i in 0..m {
                mask[(i, i)] = 1.0;
            }
            let n_pairs = m * (m - 1) / 2;
            let want = (target_observed.saturating_sub(m) / 2).min(n_pairs);
            for p in index::sample(&mut rng, n_pairs, want) {
                let (i, j) = pair_from_index(p, m);
                mask[(i, j)] = 1.0;
                mask[(j, i)] = 1.0;
            }
        }
        TargetKind::Rectangular => {
            for p in index::sample(&mut rng, rows * cols, target_observed) {
                mask[(p / cols, p % cols)] = 1.0;
            }
        }
    }
    Ok(mask)
}

/// Maps a linear index over strict upper-triangle pairs (row-major) to `(i, j)`.
fn pair_from_index(mut p: usize, m: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let in_row = m - 1 - i;
        if p < in_row {
            return (i, i + 1 + p);
        }
        p -= in_row;
        i += 1;
    }
}

/// Elementwise mean of equally shaped matrices.
pub fn average_similarities(list: &[Matrix]) -> Result<Matrix> {
    let first = list
        .first()
        .ok_or_else(|| SimecError::invalid("cannot average an empty list"))?;
    let mut acc = first.clone();
    for s in &list[1..] {
        if s.shape() != first.shape() {
            return Err(SimecError::shape("average_similarities", first.shape(), s.shape()));
        }
        acc.add_assign_scaled(s, 1.0);
    }
    Ok(acc.scale(1.0 / list.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn exactly_symmetric(s: &Matrix) -> bool {
        (0..s.rows()).all(|i| (0..s.cols()).all(|j| s[(i, j)].to_bits() == s[(j, i)].to_bits()))
    }

    #[test]
    fn rbf_diagonal_duplicates_and_oracle() {
        let mut x = random(10, 3, 1);
        let dup = x.row(0).to_vec();
        x.row_mut(4).copy_from_slice(&dup);
        let s = rbf_kernel(&x, 0.5).unwrap();
        for i in 0..10 {
            assert_eq!(s[(i, i)], 1.0);
        }
        assert_eq!(s[(0, 4)], 1.0);
        for i in 0..10 {
            for j in 0..10 {
                let mut d = 0.0;
                for c in 0..3 {
                    d += (x[(i, c)] - x[(j, c)]).powi(2);
                }
                assert!((s[(i, j)] - (-0.5 * d).exp()).abs() < 1e-12);
                assert!(s[(i, j)] > 0.0 && s[(i, j)] <= 1.0);
            }
        }
        assert!(exactly_symmetric(&s));
        assert!(rbf_kernel(&x, 0.0).is_err());
    }

    #[test]
    fn label_similarity_cases() {
        assert_eq!(label_similarity(&[3, 3]), Matrix::filled(2, 2, 1.0));
        assert_eq!(label_similarity(&[0, 1, 2]), Matrix::identity(3));
        assert_eq!(
            label_similarity(&[0, 7, 0]),
            Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
        );
    }

    #[test]
    fn simpson_cases() {
        // i black = {1,2,3}, j black = {2,3,4,5}, k disjoint from i
        let x = Matrix::from_rows(&[
            [0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        ]);
        let s = simpson_similarity(&x).unwrap();
        assert!((s[(0, 1)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[(0, 2)], 0.0);
        assert_eq!(s[(0, 3)], 1.0);
        assert!(exactly_symmetric(&s));
        assert!(s.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let bad = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        match simpson_similarity(&bad) {
            Err(SimecError::EmptyRow { row }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn center_cases() {
        assert!(linalg::frobenius_sq(&center(&Matrix::filled(5, 5, 3.0)).unwrap()) < 1e-28);
        let s = random(20, 20, 2).symmetrize().unwrap();
        let c = center(&s).unwrap();
        assert!(exactly_symmetric(&c));
        // explicit formula oracle
        let m = 20.0;
        let ones = Matrix::filled(20, 20, 1.0);
        let one_s = linalg::matmul(&ones, &s).unwrap().scale(1.0 / m);
        let s_one = linalg::matmul(&s, &ones).unwrap().scale(1.0 / m);
        let one_s_one = linalg::matmul(&one_s, &ones).unwrap().scale(1.0 / m);
        let oracle = s.sub(&one_s).unwrap().sub(&s_one).unwrap().add(&one_s_one).unwrap();
        assert!(c.sub(&oracle).unwrap().max_abs() < 1e-12);
        for r in 0..20 {
            assert!(c.row(r).iter().sum::<f64>().abs() < 1e-9);
            assert!(c.column(r).iter().sum::<f64>().abs() < 1e-9);
        }
        let again = center(&c).unwrap();
        assert!(again.sub(&c).unwrap().max_abs() < 1e-12);
        assert!(center(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn normalize_range_cases() {
        let s = Matrix::from_rows(&[[1.0, -0.5], [0.2, 0.0]]);
        assert_eq!(normalize_range(&s).unwrap(), s);
        assert_eq!(normalize_range(&Matrix::identity(3).scale(2.0)).unwrap(), Matrix::identity(3));
        assert_eq!(normalize_range(&random(7, 5, 3)).unwrap().max_abs(), 1.0);
        assert!(normalize_range(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn normalize_by_top_eigenvalue_cases() {
        let s = normalize_by_top_eigenvalue(&Matrix::from_diag(&[4.0, 2.0])).unwrap();
        assert!(s.sub(&Matrix::from_diag(&[1.0, 0.5])).unwrap().max_abs() < 1e-12);
        let again = normalize_by_top_eigenvalue(&s).unwrap();
        assert!(again.sub(&s).unwrap().max_abs() < 1e-8);

        let a = random(30, 10, 4);
        let psd = linalg::matmul_nt(&a, &a).unwrap();
        let n = normalize_by_top_eigenvalue(&psd).unwrap();
        let top = spectral::eig_sym_topd(&n, 1, Criterion::LargestMagnitude).unwrap();
        assert!((top.eigenvalues[0] - 1.0).abs() < 1e-9);
        assert!(normalize_by_top_eigenvalue(&Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn random_mask_contracts() {
        assert_eq!(
            random_mask(4, 4, TargetKind::SquareSymmetric, 0.0, 1).unwrap(),
            Matrix::filled(4, 4, 1.0)
        );
        let m = random_mask(500, 500, TargetKind::SquareSymmetric, 0.9, 7).unwrap();
        let observed = m.as_slice().iter().sum::<f64>() / 250_000.0;
        assert!((0.089..=0.111).contains(&observed), "{observed}");
        assert!(exactly_symmetric(&m));
        assert!((0..500).all(|i| m[(i, i)] == 1.0));
        assert_eq!(m, random_mask(500, 500, TargetKind::SquareSymmetric, 0.9, 7).unwrap());

        let r = random_mask(120, 90, TargetKind::Rectangular, 0.3, 2).unwrap();
        let observed = r.as_slice().iter().sum::<f64>() / (120.0 * 90.0);
        assert!((observed - 0.7).abs() < 0.01);
        assert!(random_mask(4, 4, TargetKind::Rectangular, 1.0, 1).is_err());
    }

    #[test]
    fn average_cases() {
        let s = random(6, 6, 5);
        assert_eq!(average_similarities(std::slice::from_ref(&s)).unwrap(), s);
        let z = average_similarities(&[s.clone(), s.scale(-1.0)]).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let t = random(6, 6, 6);
        let avg = average_similarities(&[s.clone(), t.clone()]).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!((avg[(i, j)] - (s[(i, j)] + t[(i, j)]) / 2.0).abs() < 1e-15);
            }
        }
        assert!(average_similarities(&[]).is_err());
        assert!(average_similarities(&[s, Matrix::zeros(2, 2)]).is_err());
    }

    #[test]
    fn target_spec_invariants() {
        let s = random(4, 4, 8);
        assert!(TargetSpec::square(s.clone()).is_err());
        let sym = s.symmetrize().unwrap();
        let t = TargetSpec::square(sym.clone()).unwrap();
        assert_eq!((t.rows(), t.cols(), t.k()), (4, 4, 1));
        assert!(t.clone().with_mask(Matrix::zeros(3, 4)).is_err());
        let sub = t.select_columns(&[0, 1]).unwrap();
        assert_eq!(sub.kind(), TargetKind::Rectangular);
        assert_eq!(sub.cols(), 2);
        assert!(TargetSpec::new(vec![], None, TargetKind::Rectangular).is_err());
    }
}
