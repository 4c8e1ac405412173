//! Binary model container.
//!
//! ```text
//! "SIMEC1"
//! u32 LE  config length, then that many bytes of UTF-8 key=value lines
//! per matrix: u32 LE rows, u32 LE cols, rows*cols f64 LE (row-major)
//! ```
//!
//! Matrices appear in order: for each encoder layer its weights and, when
//! `encoder_bias=true`, its bias as a `1×width` matrix; then the `k` relation
//! slices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{SimEcConfig, SimEcModel};
use crate::error::{Result, SimecError};
use crate::kv::{self, KeyValues};
use crate::linalg::Matrix;
use crate::net::{self, Activation, LayerParams};

pub const MAGIC: &[u8; 6] = b"SIMEC1";

pub fn write_model<W: Write>(model: &SimEcModel, mut w: W) -> Result<()> {
    let mut header = model.config.to_kv();
    header.set("target_columns", kv::join(&model.target_column_ids));
    let text = header.to_text();
    w.write_all(MAGIC)?;
    w.write_all(&u32::try_from(text.len()).map_err(|_| fmt_err("config too long"))?.to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    for layer in &model.params.encoder_layers {
        write_matrix(&mut w, &layer.weights)?;
        if let Some(b) = &layer.bias {
            write_matrix(&mut w, &Matrix::from_vec(1, b.len(), b.clone())?)?;
        }
    }
    for rel in &model.params.relation_weights {
        write_matrix(&mut w, rel)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<SimEcModel> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| fmt_err("missing header"))?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic bytes"));
    }
    let len = read_u32(&mut r)? as usize;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text).map_err(|_| fmt_err("truncated config"))?;
    let text = String::from_utf8(text).map_err(|_| fmt_err("config is not UTF-8"))?;
    let header = KeyValues::parse(&text)?;
    let config = SimEcConfig::from_kv(&header)?;
    let target_column_ids: Vec<usize> = header.get_list("target_columns")?.unwrap_or_default();
    if target_column_ids.len() != config.n_targets {
        return Err(fmt_err("target_columns does not match n_targets"));
    }

    let shape = config.shape();
    // the expected layout comes from a freshly built network with the same shape
    let template = net::init(&shape, 0)?;
    let mut encoder_layers = Vec::with_capacity(template.encoder_layers.len());
    for t in &template.encoder_layers {
        let weights = read_matrix(&mut r, t.weights.shape())?;
        let bias = match &t.bias {
            Some(b) => Some(read_matrix(&mut r, (1, b.len()))?.into_vec()),
            None => None,
        };
        encoder_layers.push(LayerParams {
            weights,
            bias,
            activation: t.activation,
        });
    }
    debug_assert_eq!(encoder_layers.last().map(|l| l.activation), Some(Activation::Linear));
    let mut relation_weights = Vec::with_capacity(config.k);
    for t in &template.relation_weights {
        relation_weights.push(read_matrix(&mut r, t.shape())?);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(fmt_err("trailing bytes after the last matrix"));
    }
    let params = net::NetworkParams {
        encoder_layers,
        relation_weights,
        output_activation: template.output_activation,
    };
    params.validate()?;
    Ok(SimEcModel {
        params,
        config,
        target_column_ids,
    })
}

pub fn save_model(model: &SimEcModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SimEcModel> {
    read_model(BufReader::new(File::open(path)?))
}

fn fmt_err(msg: &str) -> SimecError {
    SimecError::Format(msg.to_string())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| fmt_err("truncated file"))?;
    Ok(u32::from_le_bytes(b))
}

fn write_matrix<W: Write>(w: &mut W, m: &Matrix) -> Result<()> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| fmt_err("matrix too large"));
    w.write_all(&dim(m.rows())?.to_le_bytes())?;
    w.write_all(&dim(m.cols())?.to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, expected: (usize, usize)) -> Result<Matrix> {
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    if (rows, cols) != expected {
        return Err(fmt_err(&format!(
            "matrix is {rows}x{cols}, expected {}x{}",
            expected.0, expected.1
        )));
    }
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf).map_err(|_| fmt_err("truncated matrix data"))?;
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Matrix::from_vec(rows, cols, values)
}
