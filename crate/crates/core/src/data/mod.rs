//! Datasets: MNIST ingestion, preprocessing, subsampling, and synthetic
//! generators used when the MNIST files are not available.

mod idx;
mod synth;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimecError};
use crate::linalg::Matrix;

pub use idx::{
    encode_images, encode_labels, parse_images, parse_labels, read_images, read_labels,
    write_images, write_labels, IdxError, IdxImages, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use synth::{synth_digits, synth_lowrank, synth_lowrank_dim, SYNTH_FEATURE_FACTOR};

/// File names searched for by [`find_mnist`], in order of preference.
pub const MNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Mnist,
    Synthetic,
}

impl DataSource {
    pub fn name(self) -> &'static str {
        match self {
            DataSource::Mnist => "mnist",
            DataSource::Synthetic => "synthetic",
        }
    }
}

/// Statistics applied by [`preprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessing {
    pub scale: f64,
    pub column_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<u8>>,
    train_ids: Vec<usize>,
    test_ids: Vec<usize>,
    source: DataSource,
    preprocessing: Option<Preprocessing>,
}

impl Dataset {
    /// Every row is a training row.
    pub fn new(features: Matrix, labels: Option<Vec<u8>>, source: DataSource) -> Result<Dataset> {
        let m = features.rows();
        Dataset::with_split(features, labels, (0..m).collect(), Vec::new(), source)
    }

    pub fn with_split(
        features: Matrix,
        labels: Option<Vec<u8>>,
        train_ids: Vec<usize>,
        test_ids: Vec<usize>,
        source: DataSource,
    ) -> Result<Dataset> {
        let m = features.rows();
        if !features.all_finite() {
            return Err(SimecError::invalid("features contain non-finite values"));
        }
        if let Some(l) = &labels {
            if l.len() != m {
                return Err(SimecError::invalid(format!("{} labels for {m} rows", l.len())));
            }
        }
        let mut seen = vec![false; m];
        for &i in train_ids.iter().chain(&test_ids) {
            if i >= m || seen[i] {
                return Err(SimecError::invalid(format!(
                    "split ids must be distinct and below {m}, got {i}"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(SimecError::invalid("split does not cover every row"));
        }
        Ok(Dataset {
            features,
            labels,
            train_ids,
            test_ids,
            source,
            preprocessing: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn train_ids(&self) -> &[usize] {
        &self.train_ids
    }

    pub fn test_ids(&self) -> &[usize] {
        &self.test_ids
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn preprocessing(&self) -> Option<&Preprocessing> {
        self.preprocessing.as_ref()
    }

    pub fn train_features(&self) -> Matrix {
        self.features.select_rows(&self.train_ids)
    }

    pub fn test_features(&self) -> Matrix {
        self.features.select_rows(&self.test_ids)
    }

    pub fn train_labels(&self) -> Option<Vec<u8>> {
        self.labels
            .as_ref()
            .map(|l| self.train_ids.iter().map(|&i| l[i]).collect())
    }

    pub fn test_labels(&self) -> Option<Vec<u8>> {
        self.labels
            .as_ref()
            .map(|l| self.test_ids.iter().map(|&i| l[i]).collect())
    }
}

/// Reads an image file and its label file. Pixels become reals in 0..=255 and
/// every row is a training row.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        }
        .into());
    }
    let dim = images.rows * images.cols;
    let values = images.pixels.iter().map(|&p| f64::from(p)).collect();
    Dataset::new(
        Matrix::from_vec(images.count, dim, values)?,
        Some(labels),
        DataSource::Mnist,
    )
}

/// The first pair of [`MNIST_FILES`] present in `dir`.
pub fn find_mnist(dir: &Path) -> Option<(PathBuf, PathBuf)> {
    MNIST_FILES.iter().find_map(|(img, lab)| {
        let (img, lab) = (dir.join(img), dir.join(lab));
        (img.is_file() && lab.is_file()).then_some((img, lab))
    })
}

/// Divides by the largest training value, then shifts every column to zero
/// mean over the training rows. Test rows receive the same transformation.
///
/// A dataset that was already preprocessed keeps its scale and only has its
/// (numerically zero) column means removed again.
pub fn preprocess(d: &Dataset) -> Result<Dataset> {
    if d.train_ids.is_empty() {
        return Err(SimecError::invalid("preprocess needs at least one training row"));
    }
    let scale = if d.preprocessing.is_some() {
        1.0
    } else {
        let max = d
            .train_ids
            .iter()
            .flat_map(|&i| d.features.row(i).iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        if max <= 0.0 {
            return Err(SimecError::invalid("features have no positive value to normalize by"));
        }
        max
    };
    let dim = d.dim();
    let mut means = vec![0.0; dim];
    for &i in &d.train_ids {
        for (acc, &v) in means.iter_mut().zip(d.features.row(i)) {
            *acc += v;
        }
    }
    let n = d.train_ids.len() as f64;
    means.iter_mut().for_each(|v| *v = *v / n / scale);
    let features = Matrix::from_fn(d.len(), dim, |r, c| d.features[(r, c)] / scale - means[c]);
    let previous_scale = d.preprocessing.as_ref().map_or(1.0, |p| p.scale);
    Ok(Dataset {
        features,
        preprocessing: Some(Preprocessing {
            scale: scale * previous_scale,
            column_means: means,
        }),
        ..d.clone()
    })
}

/// Draws `m` rows (after keeping only `classes`, when given) and splits them
/// so that the first `round(m · train_fraction)` drawn rows form the training
/// split. Row order in the result is the draw order.
pub fn subsample(
    d: &Dataset,
    m: usize,
    classes: Option<&[u8]>,
    train_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(SimecError::invalid(format!(
            "train_fraction must lie in [0, 1], got {train_fraction}"
        )));
    }
    let pool: Vec<usize> = match classes {
        None => (0..d.len()).collect(),
        Some(keep) => {
            let labels = d
                .labels
                .as_ref()
                .ok_or_else(|| SimecError::invalid("class filter needs labels"))?;
            (0..d.len()).filter(|&i| keep.contains(&labels[i])).collect()
        }
    };
    if m > pool.len() {
        return Err(SimecError::invalid(format!(
            "requested {m} rows but only {} are available",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), m)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let n_train = (m as f64 * train_fraction).round() as usize;
    let labels = d.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect());
    Ok(Dataset {
        preprocessing: d.preprocessing.clone(),
        ..Dataset::with_split(
            d.features.select_rows(&rows),
            labels,
            (0..n_train).collect(),
            (n_train..m).collect(),
            d.source,
        )?
    })
}
