//! Similarity encoders: neural networks that factorize a pairwise-relation
//! matrix while learning a mapping from feature vectors into a
//! similarity-preserving embedding space, plus the spectral baselines used to
//! judge them.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kv;
pub mod linalg;
pub mod model;
pub mod net;
pub mod similarity;
pub mod spectral;

pub use error::{Result, SimecError};
pub use linalg::Matrix;
