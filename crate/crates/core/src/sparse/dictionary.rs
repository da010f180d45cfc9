use alloc::vec::Vec;

use crate::dataset::{ClassId, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};

/// Tolerance on the unit-norm check of dictionary atoms.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Training samples stacked as unit-norm columns, grouped by class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Matrix,
    column_labels: Vec<ClassId>,
    /// Distinct classes, ascending.
    classes: Vec<ClassId>,
    /// Position in `classes` of every column.
    column_class: Vec<usize>,
    /// Columns of each class, ascending.
    class_columns: Vec<Vec<usize>>,
}

impl Dictionary {
    pub fn new(atoms: Matrix, column_labels: Vec<ClassId>) -> Result<Self> {
        if column_labels.len() != atoms.cols() {
            return Err(Error::DimensionMismatch {
                expected: atoms.cols(),
                got: column_labels.len(),
            });
        }
        if atoms.cols() == 0 {
            return Err(Error::InvalidDataset("dictionary has no atoms".into()));
        }
        for j in 0..atoms.cols() {
            let norm = norm2(atoms.col(j));
            if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
                return Err(Error::NotUnitNorm { index: j, norm });
            }
        }
        let mut classes = column_labels.clone();
        classes.sort();
        classes.dedup();
        let column_class: Vec<usize> = column_labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label present"))
            .collect();
        let mut class_columns = alloc::vec![Vec::new(); classes.len()];
        for (j, &k) in column_class.iter().enumerate() {
            class_columns[k].push(j);
        }
        Ok(Self {
            atoms,
            column_labels,
            classes,
            column_class,
            class_columns,
        })
    }

    /// Uses the dataset's columns as atoms; they must already be unit norm.
    pub fn from_dataset(data: &LabeledDataset) -> Result<Self> {
        Self::new(data.features().clone(), data.labels().to_vec())
    }

    pub fn atoms(&self) -> &Matrix {
        &self.atoms
    }

    /// Feature dimension `M`.
    pub fn dim(&self) -> usize {
        self.atoms.rows()
    }

    /// Number of atoms `N`.
    pub fn len(&self) -> usize {
        self.atoms.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.cols() == 0
    }

    pub fn column_labels(&self) -> &[ClassId] {
        &self.column_labels
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_position(&self, class: &ClassId) -> Option<usize> {
        self.classes.binary_search(class).ok()
    }

    pub fn column_class(&self, j: usize) -> usize {
        self.column_class[j]
    }

    pub fn class_columns(&self, k: usize) -> &[usize] {
        &self.class_columns[k]
    }

    /// Dictionary made of a subset of columns.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        Self::new(
            self.atoms.select_columns(columns),
            columns.iter().map(|&j| self.column_labels[j].clone()).collect(),
        )
    }
}
