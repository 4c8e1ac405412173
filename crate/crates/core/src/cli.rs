//! Run configs and command bodies behind the `simecs` binary.
//!
//! A run config is a `key=value` file. Data and target keys:
//!
//! ```text
//! data = lowrank | digits          # default lowrank
//! m = 200                          # rows
//! rank = 5                         # lowrank only
//! noise = 0.0                      # lowrank only
//! classes = 0,1,2                  # digits only, default 0..9
//! similarity = given | label | rbf | linear | simpson
//! gamma = 0.5                      # rbf; default 1/(2·median squared distance)
//! center = false
//! missing = 0.0                    # fraction of hidden target entries
//! target_fraction = 1.0            # share of columns used as targets
//! ```
//!
//! Every other key is a model setting (`embed_dim`, `hidden_sizes`, `lr`,
//! `epochs`, `lambda_sym`, ...). `input_dim` and `n_targets` come from the data.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{self, DataSource};
use crate::error::{Result, SimecError};
use crate::experiments::{self, derive_seed, fmt17, image_data, Env};
use crate::kv::KeyValues;
use crate::linalg::Matrix;
use crate::model::{self, SimEcConfig, TargetColumns};
use crate::similarity::{self, TargetKind, TargetSpec};

pub const MODEL_FILE: &str = "model.simec";
pub const REPORT_FILE: &str = "train_report.csv";
pub const TRACE_FILE: &str = "loss_trace.csv";
pub const EVAL_FILE: &str = "eval.csv";

const RUN_KEYS: [&str; 10] = [
    "data",
    "m",
    "rank",
    "noise",
    "classes",
    "similarity",
    "gamma",
    "center",
    "missing",
    "target_fraction",
];

const MODEL_KEYS: [&str; 13] = [
    "embed_dim",
    "hidden_sizes",
    "hidden_activation",
    "k",
    "lambda_sym",
    "lambda_orth",
    "lambda_l2",
    "output_bounds",
    "encoder_bias",
    "lr",
    "lr_decay",
    "epochs",
    "batch_rows",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Lowrank,
    Digits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    /// The similarity generated with low-rank data.
    Given,
    Label,
    Rbf,
    Linear,
    Simpson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataKind,
    pub m: usize,
    pub rank: usize,
    pub noise: f64,
    pub classes: Vec<u8>,
    pub similarity: SimilarityKind,
    pub gamma: Option<f64>,
    pub center: bool,
    pub missing: f64,
    pub target_fraction: f64,
    /// Seed from the file, used when no seed is given on the command line.
    pub seed: Option<u64>,
    model_keys: KeyValues,
}

/// Features and target built from a run config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub x: Matrix,
    pub target: TargetSpec,
    pub columns: TargetColumns,
    pub n_targets: usize,
    pub source: DataSource,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let kv = KeyValues::parse(text)?;
        for key in kv.keys() {
            if !RUN_KEYS.contains(&key) && !MODEL_KEYS.contains(&key) && key != "seed" {
                return Err(SimecError::Config(format!("unknown key {key:?}")));
            }
        }
        let data = match kv.get_str("data").unwrap_or("lowrank") {
            "lowrank" => DataKind::Lowrank,
            "digits" => DataKind::Digits,
            other => return Err(SimecError::Config(format!("unknown data {other:?}"))),
        };
        let default_similarity = match data {
            DataKind::Lowrank => "given",
            DataKind::Digits => "label",
        };
        let similarity = match kv.get_str("similarity").unwrap_or(default_similarity) {
            "given" => SimilarityKind::Given,
            "label" => SimilarityKind::Label,
            "rbf" => SimilarityKind::Rbf,
            "linear" => SimilarityKind::Linear,
            "simpson" => SimilarityKind::Simpson,
            other => return Err(SimecError::Config(format!("unknown similarity {other:?}"))),
        };
        match (data, similarity) {
            (DataKind::Digits, SimilarityKind::Given) => {
                return Err(SimecError::Config("similarity=given needs data=lowrank".into()))
            }
            (DataKind::Lowrank, SimilarityKind::Label | SimilarityKind::Simpson) => {
                return Err(SimecError::Config(
                    "label and simpson similarities need data=digits".into(),
                ))
            }
            _ => {}
        }
        let mut model_keys = KeyValues::new();
        for key in MODEL_KEYS {
            if let Some(v) = kv.get_str(key) {
                model_keys.set(key, v);
            }
        }
        let cfg = RunConfig {
            data,
            m: kv.get_or("m", 200)?,
            rank: kv.get_or("rank", 5)?,
            noise: kv.get_or("noise", 0.0)?,
            classes: kv.get_list("classes")?.unwrap_or_else(|| (0..10).collect()),
            similarity,
            gamma: kv.get("gamma")?,
            center: kv.get_or("center", false)?,
            missing: kv.get_or("missing", 0.0)?,
            target_fraction: kv.get_or("target_fraction", 1.0)?,
            seed: kv.get("seed")?,
            model_keys,
        };
        if cfg.m < 2 {
            return Err(SimecError::Config("m must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&cfg.missing) {
            return Err(SimecError::Config("missing must be in [0, 1)".into()));
        }
        if !(cfg.target_fraction > 0.0 && cfg.target_fraction <= 1.0) {
            return Err(SimecError::Config("target_fraction must be in (0, 1]".into()));
        }
        if cfg.classes.is_empty() {
            return Err(SimecError::Config("classes must not be empty".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&fs::read_to_string(path)?)
    }

    /// Builds the data and the target. Identical inputs give identical
    /// problems.
    pub fn problem(&self, seed: u64, data_dir: Option<&Path>) -> Result<Problem> {
        let m = self.m;
        let (x, s, source) = match self.data {
            DataKind::Lowrank => {
                let (x, s) = data::synth_lowrank(m, self.rank, self.noise, seed)?;
                let s = match self.similarity {
                    SimilarityKind::Given => s,
                    _ => self.similarity_of(&x, &x, None)?,
                };
                (x, s, DataSource::Synthetic)
            }
            DataKind::Digits => {
                let env = Env {
                    seed,
                    data_dir: data_dir.map(Path::to_path_buf),
                };
                let (raw, prepared) = image_data(&env, m, Some(&self.classes), &self.classes)?;
                let x = prepared.features().clone();
                let s = self.similarity_of(&x, raw.features(), prepared.labels())?;
                (x, s, prepared.source())
            }
        };
        let s = if self.center { similarity::center(&s)? } else { s };
        let mut target = TargetSpec::square(s)?;
        if self.missing > 0.0 {
            let mask = similarity::random_mask(
                m,
                m,
                TargetKind::SquareSymmetric,
                self.missing,
                derive_seed(seed, 2),
            )?;
            target = target.with_mask(mask)?;
        }
        let n_targets = ((self.target_fraction * m as f64).round() as usize).clamp(1, m);
        let columns = if n_targets < m {
            TargetColumns::Random {
                seed: derive_seed(seed, 3),
            }
        } else {
            TargetColumns::First
        };
        Ok(Problem {
            x,
            target,
            columns,
            n_targets,
            source,
        })
    }

    fn similarity_of(&self, x: &Matrix, raw: &Matrix, labels: Option<&[u8]>) -> Result<Matrix> {
        match self.similarity {
            SimilarityKind::Given => unreachable!("checked while parsing"),
            SimilarityKind::Label => {
                let labels = labels.ok_or_else(|| SimecError::Config("data has no labels".into()))?;
                Ok(similarity::label_similarity(labels))
            }
            SimilarityKind::Rbf => {
                let gamma = match self.gamma {
                    Some(g) => g,
                    None => similarity::median_heuristic_gamma(x)?,
                };
                similarity::rbf_kernel(x, gamma)
            }
            SimilarityKind::Linear => Ok(crate::spectral::gram(x)),
            SimilarityKind::Simpson => similarity::simpson_similarity(&similarity::binarize(raw)),
        }
    }

    /// Model settings for a problem with the given shape.
    pub fn model_config(&self, input_dim: usize, n_targets: usize, seed: u64) -> Result<SimEcConfig> {
        let mut kv = self.model_keys.clone();
        kv.set("input_dim", input_dim);
        kv.set("n_targets", n_targets);
        kv.set("seed", seed);
        SimEcConfig::from_kv(&kv).map_err(|e| match e {
            SimecError::InvalidArgument(msg) => SimecError::Config(msg),
            e => e,
        })
    }
}

/// Options shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out: PathBuf,
}

fn resolve_seed(common: &Common, cfg: &RunConfig) -> u64 {
    common.seed.or(cfg.seed).unwrap_or(0)
}

/// Trains a model, saves it and its report under `common.out`, and prints the
/// report as `key=value` lines.
pub fn cmd_train(config: &Path, common: &Common, w: &mut impl Write) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = resolve_seed(common, &cfg);
    let problem = cfg.problem(seed, common.data_dir.as_deref())?;
    let model_cfg = cfg.model_config(problem.x.cols(), problem.n_targets, seed)?;
    let (model, report) =
        model::train_with_columns(&model_cfg, &problem.x, &problem.target, &problem.columns)?;

    fs::create_dir_all(&common.out)?;
    let model_path = common.out.join(MODEL_FILE);
    model::save_model(&model, &model_path)?;

    let final_loss = report.loss_trace.last().copied().unwrap_or(f64::NAN);
    let mut metrics = vec![
        ("seed", seed.to_string()),
        ("source", problem.source.name().to_string()),
        ("rows", problem.x.rows().to_string()),
        ("input_dim", problem.x.cols().to_string()),
        ("n_targets", problem.n_targets.to_string()),
        ("epochs", report.loss_trace.len().to_string()),
        ("final_loss", fmt17(final_loss)),
        ("final_mse_relations", fmt17(report.final_mse_relations)),
    ];
    if let Some(g) = report.final_mse_gram {
        metrics.push(("final_mse_gram", fmt17(g)));
    }
    fs::write(common.out.join(REPORT_FILE), metric_csv(&metrics))?;
    let mut trace = String::from("epoch,loss\n");
    for (i, l) in report.loss_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{}", i + 1, fmt17(*l));
    }
    fs::write(common.out.join(TRACE_FILE), trace)?;

    for (k, v) in &metrics {
        writeln!(w, "{k}={v}")?;
    }
    writeln!(w, "wall_time_s={:.3}", report.wall_time.as_secs_f64())?;
    writeln!(w, "model={}", model_path.display())?;
    Ok(())
}

/// Evaluates a saved model on the problem described by `config` and prints
/// the masked MSE of the relation predictions and, for square targets, of
/// `Y·Yᵀ`.
pub fn cmd_eval(config: &Path, model_path: &Path, common: &Common, w: &mut impl Write) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = resolve_seed(common, &cfg);
    let problem = cfg.problem(seed, common.data_dir.as_deref())?;
    let model = model::load_model(model_path)?;
    let (rel, gram) = model::evaluate_fit(&model, &problem.x, &problem.target)?;

    let mut metrics = vec![("mse_relations", fmt17(rel))];
    if let Some(g) = gram {
        metrics.push(("mse_gram", fmt17(g)));
    }
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join(EVAL_FILE), metric_csv(&metrics))?;
    for (k, v) in &metrics {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}

/// Runs a named experiment and writes `<name>.csv` under `common.out`.
pub fn cmd_experiment(name: &str, scale: f64, common: &Common, w: &mut impl Write) -> Result<()> {
    let env = Env {
        seed: common.seed.unwrap_or(0),
        data_dir: common.data_dir.clone(),
    };
    let result = experiments::run(name, scale, &env)?;
    fs::create_dir_all(&common.out)?;
    let path = common.out.join(format!("{name}.csv"));
    result.write_csv(&path)?;
    writeln!(w, "experiment={name}")?;
    writeln!(w, "source={}", result.source.name())?;
    writeln!(w, "seed={}", result.seed)?;
    writeln!(w, "{}={}", result.sweep_name, join_g(&result.sweep))?;
    for s in &result.series {
        writeln!(w, "{}={}", s.method, join_g(&s.mse))?;
    }
    writeln!(w, "wall_time_s={:.3}", result.wall_time.as_secs_f64())?;
    writeln!(w, "csv={}", path.display())?;
    Ok(())
}

fn metric_csv(metrics: &[(&str, String)]) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in metrics {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

fn join_g(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(",")
}
