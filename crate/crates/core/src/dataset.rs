//! Labelled feature matrices and open-set trial sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Opaque class identifier. Numeric labels are stringified; the derived `Ord`
/// (byte-wise string order) is the total order used for tie breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(String);

impl ClassId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassId {
    fn from(s: &str) -> Self {
        Self(s.into())
    }
}

impl From<String> for ClassId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<u8> for ClassId {
    fn from(v: u8) -> Self {
        Self(v.to_string())
    }
}

/// Feature matrix with one column per sample (`M x N`) and one label per
/// column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<ClassId>,
    /// `(rows, cols)` when columns are flattened row-major images.
    image_shape: Option<(usize, usize)>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != features.cols() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} feature columns",
                labels.len(),
                features.cols()
            )));
        }
        if let Some(pos) = features.as_col_major().iter().position(|v| !v.is_finite()) {
            let rows = features.rows().max(1);
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at row {}, column {}",
                pos % rows,
                pos / rows
            )));
        }
        Ok(Self {
            features,
            labels,
            image_shape: None,
        })
    }

    pub fn with_image_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rows * cols,
            });
        }
        self.image_shape = Some((rows, cols));
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    /// Feature dimension `M`.
    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        self.features.col(j)
    }

    /// Distinct classes in ascending order.
    pub fn classes(&self) -> Vec<ClassId> {
        let set: BTreeSet<&ClassId> = self.labels.iter().collect();
        set.into_iter().cloned().collect()
    }

    /// Column indices per class, ascending within each class.
    pub fn class_columns(&self) -> BTreeMap<ClassId, Vec<usize>> {
        let mut map: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (j, l) in self.labels.iter().enumerate() {
            map.entry(l.clone()).or_default().push(j);
        }
        map
    }

    /// Sub-dataset made of the given columns, in order.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            features: self.features.select_columns(columns),
            labels: columns.iter().map(|&j| self.labels[j].clone()).collect(),
            image_shape: self.image_shape,
        }
    }
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns(data: &LabeledDataset) -> Result<LabeledDataset> {
    let mut features = data.features.clone();
    for j in 0..features.cols() {
        let n = norm2(features.col(j));
        if n == 0.0 {
            return Err(Error::ZeroColumn { index: j });
        }
        features.col_mut(j).iter_mut().for_each(|v| *v /= n);
    }
    Ok(LabeledDataset {
        features,
        labels: data.labels.clone(),
        image_shape: data.image_shape,
    })
}

/// Downsamples image columns by averaging non-overlapping `factor x factor`
/// blocks. Trailing rows/columns that do not fill a block are dropped.
pub fn block_average(data: &LabeledDataset, factor: usize) -> Result<LabeledDataset> {
    let (rows, cols) = data.image_shape.ok_or_else(|| {
        Error::InvalidDataset("block averaging needs image-shaped columns".into())
    })?;
    if factor == 0 || factor > rows || factor > cols {
        return Err(Error::param(
            "factor",
            format!("{factor} does not fit a {rows}x{cols} image"),
        ));
    }
    let (out_r, out_c) = (rows / factor, cols / factor);
    let scale = 1.0 / (factor * factor) as f64;
    let mut out = Matrix::zeros(out_r * out_c, data.len());
    for j in 0..data.len() {
        let src = data.features.col(j);
        let dst = out.col_mut(j);
        for br in 0..out_r {
            for bc in 0..out_c {
                let mut s = 0.0;
                for r in br * factor..(br + 1) * factor {
                    for c in bc * factor..(bc + 1) * factor {
                        s += src[r * cols + c];
                    }
                }
                dst[br * out_c + bc] = s * scale;
            }
        }
    }
    LabeledDataset::new(out, data.labels.clone())?.with_image_shape(out_r, out_c)
}

/// Openness of a recognition problem with `n_ta` training classes, `n_tg`
/// target classes and `n_te` testing classes: `1 - sqrt(2 n_ta / (n_tg + n_te))`.
pub fn openness(n_ta: usize, n_tg: usize, n_te: usize) -> Result<f64> {
    let denom = n_tg + n_te;
    if denom == 0 || 2 * n_ta > denom {
        return Err(Error::param(
            "openness",
            format!("need 2*{n_ta} <= {n_tg} + {n_te}"),
        ));
    }
    Ok(1.0 - libm::sqrt(2.0 * n_ta as f64 / denom as f64))
}

/// Class counts and split sizes for one randomised open-set trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialProtocol {
    pub n_known: usize,
    pub n_open: usize,
    pub train_fraction: f64,
    /// Optional per-class subsample drawn before splitting.
    pub max_per_class: Option<usize>,
}

/// One randomised train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetTrial {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub known_classes: BTreeSet<ClassId>,
    pub open_classes: BTreeSet<ClassId>,
    pub seed: u64,
    /// Source column of every train sample.
    pub train_indices: Vec<usize>,
    /// Source column of every test sample.
    pub test_indices: Vec<usize>,
}

pub fn sample_open_set_trial(
    data: &LabeledDataset,
    n_known: usize,
    n_open: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<OpenSetTrial> {
    sample_open_set_trial_with(
        data,
        &TrialProtocol {
            n_known,
            n_open,
            train_fraction,
            max_per_class: None,
        },
        seed,
    )
}

/// Draws a trial. Randomness is consumed so that, for a fixed seed, the known
/// classes and their train/test split do not depend on `n_open`, and the open
/// classes of a smaller `n_open` are a prefix of those of a larger one. Sweeps
/// over openness therefore compare levels on identical training data.
pub fn sample_open_set_trial_with(
    data: &LabeledDataset,
    protocol: &TrialProtocol,
    seed: u64,
) -> Result<OpenSetTrial> {
    let TrialProtocol {
        n_known,
        n_open,
        train_fraction,
        max_per_class,
    } = *protocol;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(
            "train_fraction",
            format!("{train_fraction} is not in (0, 1)"),
        ));
    }
    if n_known == 0 {
        return Err(Error::param("n_known", "at least one known class is required"));
    }
    if max_per_class == Some(0) {
        return Err(Error::param("max_per_class", "must be positive"));
    }
    let by_class = data.class_columns();
    let classes: Vec<&ClassId> = by_class.keys().collect();
    if classes.len() < n_known + n_open {
        return Err(Error::InsufficientClasses {
            needed: n_known + n_open,
            available: classes.len(),
        });
    }

    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, stream::CLASS_ORDER)));

    let draw = |class_pos: usize| -> Vec<usize> {
        let mut cols = by_class[classes[class_pos]].clone();
        let mut rng = rng_from_seed(derive_seed(seed, stream::CLASS_SAMPLES + class_pos as u64));
        cols.shuffle(&mut rng);
        if let Some(cap) = max_per_class {
            cols.truncate(cap);
        }
        cols
    };

    let mut known_pos: Vec<usize> = order[..n_known].to_vec();
    known_pos.sort_unstable();
    let open_pos = &order[n_known..n_known + n_open];

    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for &p in &known_pos {
        let cols = draw(p);
        let n_train = libm::floor(train_fraction * cols.len() as f64) as usize;
        if n_train == 0 || n_train == cols.len() {
            return Err(Error::InsufficientSamples {
                class: classes[p].clone(),
                needed: libm::ceil(1.0 / train_fraction.min(1.0 - train_fraction)) as usize,
                available: cols.len(),
            });
        }
        train_indices.extend_from_slice(&cols[..n_train]);
        test_indices.extend_from_slice(&cols[n_train..]);
    }
    for &p in open_pos {
        test_indices.extend(draw(p));
    }

    Ok(OpenSetTrial {
        train: data.select(&train_indices),
        test: data.select(&test_indices),
        known_classes: known_pos.iter().map(|&p| classes[p].clone()).collect(),
        open_classes: open_pos.iter().map(|&p| classes[p].clone()).collect(),
        seed,
        train_indices,
        test_indices,
    })
}
