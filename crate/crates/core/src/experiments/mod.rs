//! Desk-scale reproductions of the similarity encoder experiments. Each one
//! sweeps a parameter, fits every compared method at each sweep point, and
//! reports mean squared errors as plot-ready CSV.

mod figures;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::data::{self, DataSource, Dataset};
use crate::error::{Result, SimecError};
use crate::model::SimEcConfig;

pub use figures::{
    fig3, fig4_missing, fig4_reg, fig4_targets, fig6, fig7, Fig3Params, Fig4MissingParams,
    Fig4RegParams, Fig4TargetsParams, Fig6Params, Fig7Params,
};

pub const EXPERIMENTS: [&str; 6] = ["fig3", "fig4_reg", "fig4_targets", "fig4_missing", "fig6", "fig7"];

/// Side length of synthetic glyph images.
pub const SYNTH_SIDE: usize = 16;

/// Settings shared by every experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    pub seed: u64,
    /// Directory holding the MNIST IDX files; synthetic data is used when it
    /// is absent or does not contain them.
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub method: String,
    pub mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub id: String,
    pub sweep_name: String,
    pub sweep: Vec<f64>,
    pub series: Vec<Series>,
    pub seed: u64,
    pub source: DataSource,
    pub wall_time: Duration,
}

impl ExperimentResult {
    fn new(id: &str, sweep_name: &str, sweep: Vec<f64>, env: &Env, source: DataSource) -> ExperimentResult {
        ExperimentResult {
            id: id.to_string(),
            sweep_name: sweep_name.to_string(),
            sweep,
            series: Vec::new(),
            seed: env.seed,
            source,
            wall_time: Duration::ZERO,
        }
    }

    fn push(&mut self, method: &str, mse: Vec<f64>) -> Result<()> {
        if mse.len() != self.sweep.len() {
            return Err(SimecError::invalid(format!(
                "series {method} has {} values for {} sweep points",
                mse.len(),
                self.sweep.len()
            )));
        }
        self.series.push(Series {
            method: method.to_string(),
            mse,
        });
        Ok(())
    }

    pub fn series(&self, method: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|s| s.method == method)
            .map(|s| s.mse.as_slice())
    }

    pub fn methods(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|s| s.method.as_str())
    }

    /// `sweep_value,method,mse` rows sorted by sweep value then method, every
    /// number with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(f64, &str, f64)> = self
            .series
            .iter()
            .flat_map(|s| self.sweep.iter().zip(&s.mse).map(|(&x, &v)| (x, s.method.as_str(), v)))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let mut out = String::from("sweep_value,method,mse\n");
        for (x, method, v) in rows {
            let _ = writeln!(out, "{},{method},{}", fmt17(x), fmt17(v));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Shortest exact form for integers, otherwise 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.16e}")
    }
}

/// Runs a named experiment with its default parameters at `scale`.
pub fn run(name: &str, scale: f64, env: &Env) -> Result<ExperimentResult> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SimecError::invalid(format!("scale must be > 0, got {scale}")));
    }
    match name {
        "fig3" => fig3(&Fig3Params::at_scale(scale), env),
        "fig4_reg" => fig4_reg(&Fig4RegParams::at_scale(scale), env),
        "fig4_targets" => fig4_targets(&Fig4TargetsParams::at_scale(scale), env),
        "fig4_missing" => fig4_missing(&Fig4MissingParams::at_scale(scale), env),
        "fig6" => fig6(&Fig6Params::at_scale(scale), env),
        "fig7" => fig7(&Fig7Params::at_scale(scale), env),
        other => Err(SimecError::invalid(format!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

/// Network and optimizer settings for one SimEc in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lambda_sym: f64,
    pub lambda_orth: f64,
    pub lambda_l2: f64,
}

impl Training {
    fn config(&self, input_dim: usize, embed_dim: usize, n_targets: usize, k: usize, seed: u64) -> SimEcConfig {
        SimEcConfig {
            input_dim,
            embed_dim,
            hidden_sizes: self.hidden.clone(),
            n_targets,
            k,
            lambda_sym: self.lambda_sym,
            lambda_orth: self.lambda_orth,
            lambda_l2: self.lambda_l2,
            output_bounds: None,
            encoder_bias: true,
            lr: self.lr,
            lr_decay: self.lr_decay,
            epochs: self.epochs,
            batch_rows: 0,
            seed,
        }
    }
}

fn scaled(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(20)
}

/// Deterministic per-task seed.
pub(crate) fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Images split 80/20, both raw and preprocessed. MNIST is read from
/// `env.data_dir` when possible (keeping `classes`, or all of them);
/// otherwise glyphs of `synth_classes` are rendered.
pub(crate) fn image_data(env: &Env, m_total: usize, classes: Option<&[u8]>, synth_classes: &[u8]) -> Result<(Dataset, Dataset)> {
    let mnist = env.data_dir.as_deref().and_then(data::find_mnist);
    let raw = match mnist {
        Some((images, labels)) => {
            let full = data::load_mnist_idx(&images, &labels)?;
            data::subsample(&full, m_total, classes, 0.8, env.seed)?
        }
        None => {
            let full = data::synth_digits(m_total, synth_classes, SYNTH_SIDE, derive_seed(env.seed, 1))?;
            data::subsample(&full, m_total, None, 0.8, env.seed)?
        }
    };
    let prepared = data::preprocess(&raw)?;
    Ok((raw, prepared))
}

/// Runs `f` over the sweep, in parallel when the build allows it. Results keep
/// sweep order.
fn sweep_map<T: Send>(points: &[f64], f: impl Fn(usize, f64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().enumerate().map(|(i, &x)| f(i, x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().enumerate().map(|(i, &x)| f(i, x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result() -> ExperimentResult {
        let env = Env {
            seed: 3,
            data_dir: None,
        };
        let mut r = ExperimentResult::new("t", "d", vec![4.0, 2.0], &env, DataSource::Synthetic);
        r.push("b", vec![0.1, 0.25]).unwrap();
        r.push("a", vec![1.0 / 3.0, 2.0]).unwrap();
        r
    }

    #[test]
    fn csv_is_sorted_with_full_precision() {
        let csv = result().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sweep_value,method,mse");
        assert_eq!(lines[1], "2,a,2");
        assert_eq!(lines[2], "2,b,2.5000000000000000e-1");
        assert_eq!(lines[3], "4,a,3.3333333333333331e-1");
        assert_eq!(lines.len(), 5);
        assert!(csv.ends_with('\n'));
        let parsed: f64 = lines[3].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(parsed, 1.0 / 3.0);
    }

    #[test]
    fn series_length_is_checked() {
        let mut r = result();
        assert!(r.push("c", vec![1.0]).is_err());
        assert_eq!(r.series("b"), Some(&[0.1, 0.25][..]));
        assert_eq!(r.methods().collect::<Vec<_>>(), ["b", "a"]);
    }

    #[test]
    fn unknown_names_and_bad_scales_fail() {
        let env = Env {
            seed: 0,
            data_dir: None,
        };
        let err = run("fig5", 1.0, &env).unwrap_err().to_string();
        assert!(err.contains("fig4_missing"), "{err}");
        assert!(run("fig3", 0.0, &env).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(7, 9), derive_seed(7, 9));
    }
}
