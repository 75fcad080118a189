//! Versioned single-file model checkpoints.
//!
//! Layout: the 8-byte magic `TXEDCKPT`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then every tensor's raw
//! little-endian values in header order. The header holds the model kind, the full model
//! config, the element type, the vocabulary, training metadata and a tensor table sorted by
//! name. Writing is deterministic, so save, load and save again gives identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::generator::{EditModel, GeneratorKind, ModelConfig, Precision};
use crate::nn::ParamStore;

pub const MAGIC: &[u8; 8] = b"TXEDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub val_loss: Option<f64>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    frozen: bool,
    offset: u64,
    bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: GeneratorKind,
    config: ModelConfig,
    dtype: Precision,
    vocab: Vocabulary,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

fn elem_size(p: Precision) -> usize {
    match p {
        Precision::F32 => 4,
        Precision::F64 => 8,
    }
}

fn tensor_bytes(t: &Tensor, p: Precision, out: &mut Vec<u8>) -> Result<()> {
    let flat = t.flatten_all()?;
    match p {
        Precision::F32 => {
            for v in flat.to_dtype(DType::F32)?.to_vec1::<f32>()? {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Precision::F64 => {
            for v in flat.to_dtype(DType::F64)?.to_vec1::<f64>()? {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(())
}

/// Serializes a model and its metadata.
pub fn checkpoint_bytes(model: &EditModel, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let precision = model.config.precision;
    let mut data = Vec::new();
    let mut tensors = Vec::new();
    for (name, var, frozen) in model.store.iter() {
        let offset = data.len() as u64;
        tensor_bytes(var.as_tensor(), precision, &mut data)?;
        tensors.push(TensorEntry {
            name: name.to_owned(),
            shape: var.dims().to_vec(),
            frozen,
            offset,
            bytes: data.len() as u64 - offset,
        });
    }
    let header = Header {
        kind: model.kind(),
        config: model.config.clone(),
        dtype: precision,
        vocab: model.vocab.clone(),
        meta: meta.clone(),
        tensors,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    Ok(out)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(EditModel, CheckpointMeta)> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(format_err("not a textedit checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_err(format!(
            "checkpoint format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| format_err("truncated checkpoint header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
    if header.kind != header.config.kind || header.dtype != header.config.precision {
        return Err(format_err("checkpoint header disagrees with its config"));
    }
    let data = &bytes[header_end..];
    let size = elem_size(header.dtype);
    let mut store = ParamStore::new(header.dtype.dtype());
    let mut expected_offset = 0u64;
    for t in &header.tensors {
        let count: usize = t.shape.iter().product();
        if t.offset != expected_offset || t.bytes != (count * size) as u64 {
            return Err(format_err(format!(
                "tensor {} has an inconsistent extent",
                t.name
            )));
        }
        let start = t.offset as usize;
        let end = start + t.bytes as usize;
        let raw = data.get(start..end).ok_or_else(|| {
            format_err(format!("tensor {} runs past the end of the file", t.name))
        })?;
        let tensor = match header.dtype {
            Precision::F32 => {
                let v: Vec<f32> = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                Tensor::from_vec(v, t.shape.as_slice(), &Device::Cpu)?
            }
            Precision::F64 => {
                let v: Vec<f64> = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                Tensor::from_vec(v, t.shape.as_slice(), &Device::Cpu)?
            }
        };
        store.insert(t.name.clone(), tensor, t.frozen)?;
        expected_offset = end as u64;
    }
    if expected_offset as usize != data.len() {
        return Err(format_err("trailing bytes after the last tensor"));
    }
    let model = EditModel::from_store(header.config, header.vocab, store)?;
    Ok((model, header.meta))
}

pub fn save_checkpoint(
    model: &EditModel,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(EditModel, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
