//! Synthetic stand-ins for real data: low-rank similarity matrices with
//! informative features, and small rendered digit-like glyphs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataSource, Dataset};
use crate::error::{Result, SimecError};
use crate::linalg::{self, Matrix};
use crate::spectral;

/// Feature dimension of [`synth_lowrank`] per latent dimension.
pub const SYNTH_FEATURE_FACTOR: usize = 4;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// [`synth_lowrank_dim`] with `SYNTH_FEATURE_FACTOR · d_true` features.
pub fn synth_lowrank(m: usize, d_true: usize, noise: f64, seed: u64) -> Result<(Matrix, Matrix)> {
    synth_lowrank_dim(m, d_true, SYNTH_FEATURE_FACTOR * d_true, noise, seed)
}

/// Latent `Z ~ N(0, 1/d_true)` of shape `m × d_true`. Returns features
/// `Z·Q + 0.1·noise·E` for a `d_true × feature_dim` matrix `Q` with
/// orthonormal rows, and `S = Z·Zᵀ + noise·(N + Nᵀ)/2`.
pub fn synth_lowrank_dim(
    m: usize,
    d_true: usize,
    feature_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    if d_true == 0 || d_true > m {
        return Err(SimecError::invalid(format!("need 1 <= d_true <= m, got d_true={d_true}, m={m}")));
    }
    if feature_dim < d_true {
        return Err(SimecError::invalid("feature_dim must be at least d_true"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(SimecError::invalid(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = gaussian(m, d_true, &mut rng).scale(1.0 / (d_true as f64).sqrt());
    let mut q = gaussian(d_true, feature_dim, &mut rng);
    spectral::orthonormalize_rows(&mut q, &mut rng);
    let e = gaussian(m, feature_dim, &mut rng);
    let n = gaussian(m, m, &mut rng);

    let mut x = linalg::matmul(&z, &q)?;
    let mut s = linalg::matmul_nt(&z, &z)?;
    if noise > 0.0 {
        x = x.add(&e.scale(0.1 * noise))?;
        s = s.add(&n.symmetrize()?.scale(noise))?;
    } else {
        s = s.symmetrize()?;
    }
    Ok((x, s))
}

type Point = (f64, f64);

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64) -> Vec<Point> {
    (0..=16)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / 16.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Polylines in the unit square, `(x, y)` with `y` growing downwards.
fn glyph(class: u8) -> Vec<Vec<Point>> {
    match class {
        0 => vec![ellipse(0.5, 0.5, 0.26, 0.36)],
        1 => vec![vec![(0.36, 0.26), (0.52, 0.12), (0.52, 0.88)]],
        2 => vec![vec![(0.25, 0.3), (0.4, 0.15), (0.65, 0.15), (0.75, 0.3), (0.25, 0.85), (0.78, 0.85)]],
        3 => vec![vec![(0.25, 0.15), (0.72, 0.15), (0.48, 0.45), (0.75, 0.62), (0.62, 0.85), (0.25, 0.82)]],
        4 => vec![vec![(0.62, 0.88), (0.62, 0.12), (0.22, 0.62), (0.8, 0.62)]],
        5 => vec![vec![(0.75, 0.15), (0.3, 0.15), (0.28, 0.45), (0.65, 0.45), (0.75, 0.66), (0.6, 0.86), (0.25, 0.84)]],
        6 => vec![vec![(0.7, 0.15), (0.35, 0.45), (0.28, 0.7), (0.45, 0.86), (0.7, 0.78), (0.7, 0.58), (0.32, 0.58)]],
        7 => vec![vec![(0.22, 0.15), (0.78, 0.15), (0.42, 0.88)]],
        8 => vec![ellipse(0.5, 0.3, 0.2, 0.16), ellipse(0.5, 0.67, 0.24, 0.19)],
        9 => vec![ellipse(0.5, 0.33, 0.2, 0.18), vec![(0.7, 0.33), (0.62, 0.88)]],
        c => {
            // fixed random strokes, the same for every sample of the class
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + u64::from(c));
            let pts = (0..4)
                .map(|_| (rng.random_range(0.15..0.85), rng.random_range(0.12..0.88)))
                .collect();
            vec![pts]
        }
    }
}

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Renders `m` glyph images of `side × side` pixels with values in 0..=255.
/// Labels cycle through `classes` in a shuffled order; each sample gets its
/// own rotation, scale, shear, offset and stroke width.
pub fn synth_digits(m: usize, classes: &[u8], side: usize, seed: u64) -> Result<Dataset> {
    if classes.is_empty() || side < 4 {
        return Err(SimecError::invalid("need at least one class and side >= 4"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..m).map(|i| classes[i % classes.len()]).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    let mut values = Vec::with_capacity(m * side * side);
    let px = side as f64;
    for &label in &labels {
        let angle: f64 = rng.random_range(-0.1..0.1);
        let scale: f64 = rng.random_range(0.9..1.025);
        let shear: f64 = rng.random_range(-0.1..0.1);
        let (ox, oy): (f64, f64) = (rng.random_range(-0.035..0.035), rng.random_range(-0.035..0.035));
        let width: f64 = rng.random_range(1.0..4.5) / px;
        let (sin, cos) = angle.sin_cos();
        let map = |(x, y): Point| {
            let (x, y) = (x - 0.5 + shear * (y - 0.5), y - 0.5);
            (
                0.5 + ox + scale * (cos * x - sin * y),
                0.5 + oy + scale * (sin * x + cos * y),
            )
        };
        let strokes: Vec<Vec<Point>> = glyph(label)
            .into_iter()
            .map(|line| line.into_iter().map(map).collect())
            .collect();
        for r in 0..side {
            for c in 0..side {
                let p = ((c as f64 + 0.5) / px, (r as f64 + 0.5) / px);
                let dist = strokes
                    .iter()
                    .flat_map(|line| line.windows(2).map(move |w| seg_dist(p, w[0], w[1])))
                    .fold(f64::INFINITY, f64::min);
                // one pixel of linear falloff outside the stroke
                let ink = ((width / 2.0 - dist) * px + 0.5).clamp(0.0, 1.0);
                values.push((255.0 * ink).round());
            }
        }
    }
    Dataset::new(
        Matrix::from_vec(m, side * side, values)?,
        Some(labels),
        DataSource::Synthetic,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{eig_sym_topd, Criterion};

    #[test]
    fn noiseless_lowrank_has_exact_rank() {
        let (x, s) = synth_lowrank(40, 4, 0.0, 3).unwrap();
        assert_eq!(x.shape(), (40, 16));
        let eig = eig_sym_topd(&s, 6, Criterion::LargestMagnitude).unwrap();
        assert!(eig.eigenvalues[..4].iter().all(|v| v.abs() > 1e-3));
        assert!(eig.eigenvalues[4..].iter().all(|v| v.abs() < 1e-8));
        let top = eig_sym_topd(&s, 4, Criterion::LargestPositive).unwrap();
        assert!(linalg::mse(&top.reconstruct(), &s) < 1e-10);
        // features are a rotation of the latent factors, so X·Xᵀ = S
        assert!(linalg::mse(&linalg::matmul_nt(&x, &x).unwrap(), &s) < 1e-20);
    }

    #[test]
    fn lowrank_is_seeded_and_symmetric() {
        let (x1, s1) = synth_lowrank(20, 3, 0.1, 9).unwrap();
        let (x2, s2) = synth_lowrank(20, 3, 0.1, 9).unwrap();
        assert_eq!((x1, &s1), (x2, &s2));
        assert!(s1.is_symmetric(0.0));
        assert_ne!(s1, synth_lowrank(20, 3, 0.1, 10).unwrap().1);
        assert!(synth_lowrank(3, 4, 0.0, 0).is_err());
        assert!(synth_lowrank(5, 2, -1.0, 0).is_err());
    }

    #[test]
    fn digits_have_ink_and_balanced_labels() {
        let d = synth_digits(60, &[0, 7, 11], 16, 4).unwrap();
        assert_eq!((d.len(), d.dim()), (60, 256));
        let labels = d.labels().unwrap();
        for c in [0u8, 7, 11] {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 20);
        }
        for r in 0..d.len() {
            let row = d.features().row(r);
            assert!(row.iter().filter(|&&v| v > 127.0).count() >= 8, "row {r} is nearly blank");
            assert!(row.iter().all(|&v| (0.0..=255.0).contains(&v)));
        }
        assert_eq!(d, synth_digits(60, &[0, 7, 11], 16, 4).unwrap());
    }

    #[test]
    fn digit_classes_differ() {
        let d = synth_digits(200, &[0, 7], 16, 1).unwrap();
        let x = d.features();
        let labels = d.labels().unwrap();
        let mean_of = |c: u8| {
            let ids: Vec<usize> = (0..d.len()).filter(|&i| labels[i] == c).collect();
            let sel = x.select_rows(&ids);
            (0..sel.cols()).map(|j| sel.column(j).iter().sum::<f64>() / ids.len() as f64).collect::<Vec<_>>()
        };
        let (a, b) = (mean_of(0), mean_of(7));
        let gap: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64;
        assert!(gap > 20.0, "class means too close: {gap}");
    }
}
