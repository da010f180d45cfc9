//! Dataset and sample readers.
//!
//! IDX files hold big-endian headers: a magic of `0x0000_08NN` where `NN` is
//! the number of dimensions, followed by one `u32` per dimension and `u8`
//! payload. Gzip input is recognised by its magic bytes, not its name.
//!
//! Dataset CSV files hold one sample per row, label first. A first row whose
//! feature cells do not parse as numbers is treated as a header.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use srosr_core::dataset::{block_average, normalize_columns};
use srosr_core::linalg::Matrix;
use srosr_core::{ClassId, LabeledDataset};

use crate::error::{Error, Result};

const IDX_UBYTE: u8 = 0x08;

/// Whole file, transparently gunzipped.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        return Ok(out);
    }
    Ok(raw)
}

/// Dimensions and payload of an unsigned-byte IDX file.
fn parse_idx(path: &Path, bytes: &[u8]) -> Result<(Vec<usize>, Vec<u8>)> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(path, "not an IDX file"));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(Error::format(path, format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if ndim == 0 || bytes.len() < header {
        return Err(Error::format(path, "truncated IDX header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims.iter().product::<usize>();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("IDX payload has {} bytes, header promises {expected}", payload.len()),
        ));
    }
    Ok((dims, payload.to_vec()))
}

/// Reads an IDX image file and its label file. Pixels are scaled to `[0, 1]`
/// and labels become their decimal strings.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let (idims, pixels) = parse_idx(images, &read_maybe_gz(images)?)?;
    let (ldims, label_bytes) = parse_idx(labels, &read_maybe_gz(labels)?)?;
    if idims.len() != 3 {
        return Err(Error::format(images, "image IDX file must be three-dimensional"));
    }
    if ldims.len() != 1 || ldims[0] != idims[0] {
        return Err(Error::format(
            labels,
            format!("expected {} labels in a one-dimensional file", idims[0]),
        ));
    }
    let (n, rows, cols) = (idims[0], idims[1], idims[2]);
    let data: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let features = Matrix::from_col_major(rows * cols, n, data)?;
    let labels = label_bytes.into_iter().map(ClassId::from).collect();
    Ok(LabeledDataset::new(features, labels)?.with_image_shape(rows, cols)?)
}

/// Reads a dataset CSV (label, then features).
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::format(path, format!("row {}: need a label and features", i + 1)));
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::format(path, format!("row {}: {e}", i + 1))),
        };
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::format(path, format!("row {}: {} features, expected {d}", i + 1, values.len())))
            }
            _ => {}
        }
        labels.push(ClassId::new(&rec[0]));
        data.extend(values);
    }
    let dim = dim.ok_or_else(|| Error::format(path, "no samples"))?;
    let features = Matrix::from_col_major(dim, labels.len(), data)?;
    Ok(LabeledDataset::new(features, labels)?)
}

/// Writes a dataset CSV with a `label,f0,f1,...` header.
pub fn write_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for j in 0..data.len() {
        let mut row = vec![data.labels()[j].to_string()];
        row.extend(data.sample(j).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads real numbers separated by whitespace, commas or newlines. Lines
/// starting with `#` are skipped.
pub fn load_samples(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: `{tok}` is not a number", i + 1)))?;
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Idx,
    Csv,
}

/// Where a dataset lives and how to prepare it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub path: PathBuf,
    /// Label file of an IDX dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Block-average factor for image datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downsample: Option<usize>,
}

impl DatasetSpec {
    /// Loads, optionally downsamples, and scales every sample to unit norm.
    pub fn load(&self) -> Result<LabeledDataset> {
        let raw = match self.kind {
            DatasetKind::Idx => {
                let labels = self
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::Config("an IDX dataset needs a label file".into()))?;
                load_idx(&self.path, labels)?
            }
            DatasetKind::Csv => load_csv(&self.path)?,
        };
        let shaped = match self.downsample {
            Some(f) if f > 1 => block_average(&raw, f)?,
            _ => raw,
        };
        Ok(normalize_columns(&shaped)?)
    }

    /// Resolves relative paths against `base`.
    pub fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.path);
        if let Some(l) = self.labels.as_mut() {
            fix(l);
        }
        self
    }
}

/// Writes `bytes` to `path`.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
