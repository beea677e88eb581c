//! `LRS1` model files.
//!
//! ```text
//! "LRS1" | u64 LE metadata length | metadata (UTF-8 JSON) | tensors...
//! ```
//!
//! Tensors follow in the order listed under `tensors` in the metadata, each
//! as row-major little-endian `f32`. Only parameters are stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::{MfModel, Model, ModelBundle, ModelKind, MultVaeModel, RecommendError, TrainingConfig, VaeParams};
use crate::dataset::TrackKey;

pub const MAGIC: &[u8; 4] = b"LRS1";

const MAX_METADATA_BYTES: u64 = 1 << 31;

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    kind: ModelKind,
    n_items: usize,
    n_users: usize,
    factors: Option<usize>,
    hidden: Option<usize>,
    latent: Option<usize>,
    regularization: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    config: TrainingConfig,
    tensors: Vec<TensorInfo>,
    item_keys: Vec<TrackKey>,
}

fn format_err(msg: impl Into<String>) -> RecommendError {
    RecommendError::Format(msg.into())
}

type NamedTensor<'a> = (&'a str, usize, usize, &'a [f64]);

pub fn write_model<W: Write>(mut out: W, bundle: &ModelBundle) -> Result<(), RecommendError> {
    let (meta, tensors): (Metadata, Vec<NamedTensor>) = match &bundle.model {
        Model::Mf(m) => (
            Metadata {
                kind: ModelKind::Mf,
                n_items: m.n_items(),
                n_users: m.n_users(),
                factors: Some(m.factors()),
                hidden: None,
                latent: None,
                regularization: Some(m.regularization()),
                alpha: Some(m.alpha()),
                beta: None,
                config: bundle.config.clone(),
                tensors: Vec::new(),
                item_keys: bundle.item_keys.clone(),
            },
            vec![
                ("user_factors", m.n_users(), m.factors(), m.user_factors().as_slice()),
                ("item_factors", m.n_items(), m.factors(), m.item_factors().as_slice()),
            ],
        ),
        Model::MultVae(m) => {
            let p = m.params();
            let shapes = p.shapes();
            let tensors = VaeParams::TENSOR_NAMES
                .iter()
                .zip(shapes)
                .zip(p.tensors())
                .map(|((name, (r, c)), t)| (*name, r, c, t))
                .collect();
            (
                Metadata {
                    kind: ModelKind::MultVae,
                    n_items: m.n_items(),
                    n_users: 0,
                    factors: None,
                    hidden: Some(m.hidden()),
                    latent: Some(m.latent()),
                    regularization: None,
                    alpha: None,
                    beta: Some(m.beta()),
                    config: bundle.config.clone(),
                    tensors: Vec::new(),
                    item_keys: bundle.item_keys.clone(),
                },
                tensors,
            )
        }
    };
    let meta = Metadata {
        tensors: tensors
            .iter()
            .map(|&(name, rows, cols, _)| TensorInfo {
                name: name.to_string(),
                rows,
                cols,
            })
            .collect(),
        ..meta
    };
    let json = serde_json::to_vec(&meta).map_err(|e| format_err(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, _, _, data) in tensors {
        for &v in data {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_tensor<R: Read>(input: &mut R, info: &TensorInfo) -> Result<Vec<f64>, RecommendError> {
    let len = info
        .rows
        .checked_mul(info.cols)
        .ok_or_else(|| format_err("tensor size overflow"))?;
    let mut bytes = vec![0u8; len * 4];
    input
        .read_exact(&mut bytes)
        .map_err(|_| format_err(format!("truncated tensor {}", info.name)))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect())
}

fn expect_tensors(meta: &Metadata, names: &[&str]) -> Result<(), RecommendError> {
    let got: Vec<&str> = meta.tensors.iter().map(|t| t.name.as_str()).collect();
    if got != names {
        return Err(format_err(format!("unexpected tensor list {got:?}")));
    }
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<ModelBundle, RecommendError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| format_err("missing magic"))?;
    if &magic != MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let mut len = [0u8; 8];
    input
        .read_exact(&mut len)
        .map_err(|_| format_err("missing metadata length"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_METADATA_BYTES {
        return Err(format_err("metadata block too large"));
    }
    let mut json = vec![0u8; len as usize];
    input
        .read_exact(&mut json)
        .map_err(|_| format_err("truncated metadata"))?;
    let meta: Metadata = serde_json::from_slice(&json).map_err(|e| format_err(e.to_string()))?;

    let mut data = Vec::with_capacity(meta.tensors.len());
    for info in &meta.tensors {
        data.push(read_tensor(&mut input, info)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(format_err("trailing bytes after last tensor"));
    }

    let model = match meta.kind {
        ModelKind::Mf => {
            expect_tensors(&meta, &["user_factors", "item_factors"])?;
            let mut data = data.into_iter();
            let (u, i) = (&meta.tensors[0], &meta.tensors[1]);
            let users = Matrix::from_vec(u.rows, u.cols, data.next().unwrap());
            let items = Matrix::from_vec(i.rows, i.cols, data.next().unwrap());
            let lambda = meta
                .regularization
                .ok_or_else(|| format_err("missing regularization"))?;
            let alpha = meta.alpha.ok_or_else(|| format_err("missing alpha"))?;
            Model::Mf(MfModel::new(users, items, lambda, alpha)?)
        }
        ModelKind::MultVae => {
            expect_tensors(&meta, &VaeParams::TENSOR_NAMES)?;
            let mut data = data.into_iter();
            let mut mat = |info: &TensorInfo| Matrix::from_vec(info.rows, info.cols, data.next().unwrap());
            let t = &meta.tensors;
            let enc_hidden_w = mat(&t[0]);
            let enc_hidden_b = mat(&t[1]).as_slice().to_vec();
            let enc_out_w = mat(&t[2]);
            let enc_out_b = mat(&t[3]).as_slice().to_vec();
            let dec_hidden_w = mat(&t[4]);
            let dec_hidden_b = mat(&t[5]).as_slice().to_vec();
            let dec_out_w = mat(&t[6]);
            let dec_out_b = mat(&t[7]).as_slice().to_vec();
            let params = VaeParams {
                enc_hidden_w,
                enc_hidden_b,
                enc_out_w,
                enc_out_b,
                dec_hidden_w,
                dec_hidden_b,
                dec_out_w,
                dec_out_b,
            };
            let beta = meta.beta.ok_or_else(|| format_err("missing beta"))?;
            Model::MultVae(MultVaeModel::new(params, beta)?)
        }
    };
    if !meta.item_keys.is_empty() && meta.item_keys.len() != meta.n_items {
        return Err(format_err("item key count does not match n_items"));
    }
    Ok(ModelBundle::new(model, meta.config, meta.item_keys))
}

pub fn write_model_file(path: &Path, bundle: &ModelBundle) -> Result<(), RecommendError> {
    write_model(BufWriter::new(File::create(path)?), bundle)
}

pub fn read_model_file(path: &Path) -> Result<ModelBundle, RecommendError> {
    read_model(BufReader::new(File::open(path)?))
}
