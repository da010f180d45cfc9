//! Model persistence.
//!
//! A model is a JSON document plus a binary dictionary sidecar next to it.
//! The sidecar layout is the 8-byte magic `SROSRDIC`, the row count `M` and
//! column count `N` as little-endian `u64`, then `M * N` little-endian `f64`
//! in row-major order. The JSON records the sidecar's file name and SHA-256,
//! which is checked on load.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srosr_core::baselines::NaiveModel;
use srosr_core::linalg::Matrix;
use srosr_core::sparse::{Dictionary, SolverConfig};
use srosr_core::srosr::{ClassTailModels, SrosrConfig, SrosrModel};
use srosr_core::ClassId;

use crate::error::{Error, Result};
use crate::io::{parent_dir, write_file};

pub const DICTIONARY_MAGIC: &[u8; 8] = b"SROSRDIC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryRef {
    /// Sidecar file name, relative to the JSON document.
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Srosr {
        config: SrosrConfig,
        tails: BTreeMap<ClassId, ClassTailModels>,
    },
    Naive {
        error_threshold: f64,
        quantile_q: f64,
        epsilon: f64,
        #[serde(default)]
        solver: SolverConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub format_version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
    pub dictionary: DictionaryRef,
    /// Class of every dictionary column.
    pub column_labels: Vec<ClassId>,
}

/// A loaded model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Srosr(SrosrModel),
    Naive(NaiveModel),
}

impl StoredModel {
    pub fn dictionary(&self) -> &Dictionary {
        match self {
            StoredModel::Srosr(m) => m.dictionary(),
            StoredModel::Naive(m) => m.dictionary(),
        }
    }
}

/// Sidecar bytes of a dictionary.
pub fn encode_dictionary(atoms: &Matrix) -> Vec<u8> {
    let (m, n) = (atoms.rows(), atoms.cols());
    let mut out = Vec::with_capacity(24 + 8 * m * n);
    out.extend_from_slice(DICTIONARY_MAGIC);
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in atoms.to_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dictionary(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 24 || &bytes[..8] != DICTIONARY_MAGIC {
        return Err(Error::format(path, "missing SROSRDIC magic"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes")) as usize;
    let (m, n) = (word(8), word(16));
    let body = &bytes[24..];
    if m.checked_mul(n).and_then(|c| c.checked_mul(8)) != Some(body.len()) {
        return Err(Error::format(path, format!("{m}x{n} dictionary needs {} payload bytes, found {}", m * n * 8, body.len())));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Matrix::from_row_major(m, n, &data)?)
}

fn sidecar_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("dic")
}

fn write_envelope(json_path: &Path, body: ModelBody, dict: &Dictionary) -> Result<()> {
    let bytes = encode_dictionary(dict.atoms());
    let sidecar = sidecar_path(json_path);
    write_file(&sidecar, &bytes)?;
    let envelope = ModelEnvelope {
        format_version: FORMAT_VERSION,
        body,
        dictionary: DictionaryRef {
            path: PathBuf::from(sidecar.file_name().expect("sidecar has a file name")),
            sha256: hex::encode(Sha256::digest(&bytes)),
            rows: dict.dim(),
            cols: dict.len(),
        },
        column_labels: dict.column_labels().to_vec(),
    };
    let json = serde_json::to_vec_pretty(&envelope)?;
    write_file(json_path, &json)
}

pub fn save_srosr(model: &SrosrModel, json_path: &Path) -> Result<()> {
    let body = ModelBody::Srosr {
        config: *model.config(),
        tails: model.tails().clone(),
    };
    write_envelope(json_path, body, model.dictionary())
}

pub fn save_naive(model: &NaiveModel, json_path: &Path) -> Result<()> {
    let body = ModelBody::Naive {
        error_threshold: model.error_threshold(),
        quantile_q: model.quantile_q(),
        epsilon: model.epsilon(),
        solver: *model.solver(),
    };
    write_envelope(json_path, body, model.dictionary())
}

/// Loads a model and verifies its sidecar.
pub fn load_model(json_path: &Path) -> Result<StoredModel> {
    let text = std::fs::read(json_path).map_err(|e| Error::io(json_path, e))?;
    let env: ModelEnvelope = serde_json::from_slice(&text)?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::format(json_path, format!("unsupported format version {}", env.format_version)));
    }
    let sidecar = parent_dir(json_path).join(&env.dictionary.path);
    let bytes = std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != env.dictionary.sha256 {
        return Err(Error::format(&sidecar, "dictionary hash does not match the model file"));
    }
    let atoms = decode_dictionary(&sidecar, &bytes)?;
    if atoms.rows() != env.dictionary.rows || atoms.cols() != env.dictionary.cols {
        return Err(Error::format(&sidecar, "dictionary shape does not match the model file"));
    }
    let dict = Dictionary::new(atoms, env.column_labels)?;
    Ok(match env.body {
        ModelBody::Srosr { config, tails } => StoredModel::Srosr(SrosrModel::new(dict, tails, config)?),
        ModelBody::Naive {
            error_threshold,
            quantile_q,
            epsilon,
            solver,
        } => StoredModel::Naive(NaiveModel::new(dict, error_threshold, quantile_q, epsilon, solver)?),
    })
}
