//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "HLANCKPT"
//! 8       4     u32 format version (1)
//! 12      8     u64 header length H
//! 20      H     UTF-8 JSON header
//! 20+H    ...   f64 LE tensor data, in the order of header.tensors
//! ```
//!
//! The header records the mode, label list, dimensions, training
//! configuration, vocabulary and every tensor's name and shape. Tensor data
//! follows row-major with no padding between tensors.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, Mode};
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 8] = b"HLANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    mode: Mode,
    labels: Vec<String>,
    dims: ModelDims,
    config: TrainConfig,
    vocab: Vocabulary,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

impl Checkpoint {
    pub fn new(params: ModelParams, vocab: Vocabulary, config: TrainConfig) -> Self {
        Checkpoint { params, vocab, config }
    }

    pub fn labels(&self) -> &[String] {
        &self.params.labels
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.params.tensors();
        let header = Header {
            mode: self.params.mode,
            labels: self.params.labels.clone(),
            dims: self.params.dims(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            tensors: tensors
                .iter()
                .map(|(name, m, _)| TensorEntry {
                    name: name.clone(),
                    rows: m.rows,
                    cols: m.cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let n_values: usize = tensors.iter().map(|(_, m, _)| m.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * n_values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m, _) in &tensors {
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).unwrap_or_default();
        let json = body.get(..header_len).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.labels.len() != header.dims.n_labels || header.vocab.len() != header.dims.vocab_size {
            return Err(bad("header dimensions disagree with labels or vocabulary"));
        }

        let mut params = ModelParams::zeros(header.mode, header.dims, header.labels)?;
        let expected: Vec<TensorEntry> = params
            .tensors()
            .into_iter()
            .map(|(name, m, _)| TensorEntry {
                name,
                rows: m.rows,
                cols: m.cols,
            })
            .collect();
        if expected != header.tensors {
            return Err(bad("tensor list does not match the declared dimensions"));
        }
        let mut data = &body[header_len..];
        for m in params.tensors_mut() {
            let need = 8 * m.len();
            if data.len() < need {
                return Err(bad("truncated tensor data"));
            }
            for (v, chunk) in m.data.iter_mut().zip(data[..need].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            data = &data[need..];
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            params,
            vocab: header.vocab,
            config: header.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        f.sync_all().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
