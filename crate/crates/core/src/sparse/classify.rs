use alloc::vec;
use alloc::vec::Vec;

use super::{solve_l1, Dictionary, SolverConfig, SparseCode};
use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::linalg::{axpy, norm2};

/// Value returned by [`ratio_score`] when the smallest residual is exactly zero
/// and the second is not; also the ceiling of every ratio.
pub const RATIO_CAP: f64 = 1e6;

/// Per-class reconstruction residuals `r_k = ||y - Y_k x_k||_2`, aligned with
/// [`Dictionary::classes`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    per_class: Vec<f64>,
    classes: Vec<ClassId>,
    argmin: usize,
}

impl ResidualVector {
    /// Builds from residuals aligned with ascending `classes`. Ties go to the
    /// smallest class.
    pub fn new(classes: Vec<ClassId>, per_class: Vec<f64>) -> Result<Self> {
        if classes.len() != per_class.len() || classes.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: classes.len(),
                got: per_class.len(),
            });
        }
        let mut argmin = 0;
        for (k, &r) in per_class.iter().enumerate() {
            if r < per_class[argmin] {
                argmin = k;
            }
        }
        Ok(Self {
            per_class,
            classes,
            argmin,
        })
    }

    pub fn per_class(&self) -> &[f64] {
        &self.per_class
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn argmin(&self) -> usize {
        self.argmin
    }

    pub fn argmin_class(&self) -> &ClassId {
        &self.classes[self.argmin]
    }

    /// Residual of the candidate (argmin) class.
    pub fn matched(&self) -> f64 {
        self.per_class[self.argmin]
    }

    /// Sum of the residuals of every class except `k`.
    pub fn nonmatched_sum_for(&self, k: usize) -> f64 {
        self.per_class
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, r)| r)
            .sum()
    }

    /// Sum of the residuals of every class except the candidate.
    pub fn nonmatched_sum(&self) -> f64 {
        self.nonmatched_sum_for(self.argmin)
    }
}

pub fn class_residuals(dict: &Dictionary, y: &[f64], code: &SparseCode) -> Result<ResidualVector> {
    if code.coefficients.len() != dict.len() {
        return Err(Error::DimensionMismatch {
            expected: dict.len(),
            got: code.coefficients.len(),
        });
    }
    if y.len() != dict.dim() {
        return Err(Error::DimensionMismatch {
            expected: dict.dim(),
            got: y.len(),
        });
    }
    let mut per_class = Vec::with_capacity(dict.n_classes());
    let mut r = vec![0.0; y.len()];
    for k in 0..dict.n_classes() {
        r.copy_from_slice(y);
        for &j in dict.class_columns(k) {
            let xj = code.coefficients[j];
            if xj != 0.0 {
                axpy(-xj, dict.atoms().col(j), &mut r);
            }
        }
        per_class.push(norm2(&r));
    }
    ResidualVector::new(dict.classes().to_vec(), per_class)
}

/// A code together with its class residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcOutcome {
    pub code: SparseCode,
    pub residuals: ResidualVector,
}

impl SrcOutcome {
    pub fn label(&self) -> &ClassId {
        self.residuals.argmin_class()
    }
}

/// Codes `y` and computes its class residuals.
pub fn represent(dict: &Dictionary, y: &[f64], epsilon: f64, solver: &SolverConfig) -> Result<SrcOutcome> {
    let code = solve_l1(dict, y, epsilon, solver)?;
    let residuals = class_residuals(dict, y, &code)?;
    Ok(SrcOutcome { code, residuals })
}

/// Sparse representation based classification: the class with the smallest
/// residual, plus every residual.
pub fn src_classify(
    dict: &Dictionary,
    y: &[f64],
    epsilon: f64,
    solver: &SolverConfig,
) -> Result<(ClassId, ResidualVector)> {
    let out = represent(dict, y, epsilon, solver)?;
    Ok((out.residuals.argmin_class().clone(), out.residuals))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SciScore {
    pub value: f64,
    /// The code was identically zero; `value` is then 0.
    pub zero_code: bool,
}

/// Sparsity concentration index `(K max_k ||x_k||_1 / ||x||_1 - 1) / (K - 1)`.
pub fn sci(code: &SparseCode, dict: &Dictionary) -> Result<SciScore> {
    let k = dict.n_classes();
    if k < 2 {
        return Err(Error::InsufficientClasses {
            needed: 2,
            available: k,
        });
    }
    if code.coefficients.len() != dict.len() {
        return Err(Error::DimensionMismatch {
            expected: dict.len(),
            got: code.coefficients.len(),
        });
    }
    let mut mass = vec![0.0; k];
    for (j, &x) in code.coefficients.iter().enumerate() {
        mass[dict.column_class(j)] += x.abs();
    }
    let total: f64 = mass.iter().sum();
    if total == 0.0 {
        return Ok(SciScore {
            value: 0.0,
            zero_code: true,
        });
    }
    let max = mass.iter().fold(0.0f64, |m, &v| m.max(v));
    let kf = k as f64;
    let value = ((kf * max / total - 1.0) / (kf - 1.0)).clamp(0.0, 1.0);
    Ok(SciScore {
        value,
        zero_code: false,
    })
}

/// Second-smallest over smallest residual, capped at [`RATIO_CAP`].
pub fn ratio_score(residuals: &ResidualVector) -> Result<f64> {
    let r = residuals.per_class();
    if r.len() < 2 {
        return Err(Error::InsufficientClasses {
            needed: 2,
            available: r.len(),
        });
    }
    let (mut first, mut second) = (f64::INFINITY, f64::INFINITY);
    for &v in r {
        if v < first {
            second = first;
            first = v;
        } else if v < second {
            second = v;
        }
    }
    if first == 0.0 {
        return Ok(if second == 0.0 { 1.0 } else { RATIO_CAP });
    }
    Ok((second / first).min(RATIO_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::sparse::{SolverDiagnostics, SolverKind};

    fn code(x: Vec<f64>) -> SparseCode {
        SparseCode {
            coefficients: x,
            residual_norm: 0.0,
            iterations: 0,
            diagnostics: SolverDiagnostics {
                solver: SolverKind::Homotopy,
                lambda: 0.0,
                gap: 0.0,
                feasible: true,
            },
        }
    }

    fn three_class_dict() -> Dictionary {
        // one atom per class, classes a, b, c
        let s = libm::sqrt(0.5);
        let atoms = Matrix::from_columns(3, &[[1.0, 0.0, 0.0], [s, s, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        Dictionary::new(atoms, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn sci_examples() {
        let d = three_class_dict();
        assert_eq!(sci(&code(vec![0.0, 2.0, 0.0]), &d).unwrap().value, 1.0);
        let even = sci(&code(vec![1.0, -1.0, 1.0]), &d).unwrap().value;
        assert!(even.abs() < 1e-15);
        let v = sci(&code(vec![0.5, 0.3, -0.2]), &d).unwrap().value;
        assert!((v - 0.25).abs() < 1e-12);
        let z = sci(&code(vec![0.0; 3]), &d).unwrap();
        assert!(z.zero_code && z.value == 0.0);
    }

    #[test]
    fn sci_needs_two_classes() {
        let atoms = Matrix::from_columns(1, &[[1.0]]).unwrap();
        let d = Dictionary::new(atoms, vec!["a".into()]).unwrap();
        assert!(sci(&code(vec![1.0]), &d).is_err());
    }

    #[test]
    fn ratio_examples() {
        let cls: Vec<ClassId> = vec!["a".into(), "b".into(), "c".into()];
        let rv = |r: Vec<f64>| ResidualVector::new(cls.clone(), r).unwrap();
        assert!((ratio_score(&rv(vec![0.1, 0.5, 0.9])).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(ratio_score(&rv(vec![0.4, 0.4, 0.9])).unwrap(), 1.0);
        assert_eq!(ratio_score(&rv(vec![0.3, 0.0, 0.9])).unwrap(), RATIO_CAP);
        assert_eq!(ratio_score(&rv(vec![0.0, 0.0, 0.9])).unwrap(), 1.0);
        let one = ResidualVector::new(vec!["a".into()], vec![0.2]).unwrap();
        assert!(ratio_score(&one).is_err());
    }

    #[test]
    fn argmin_ties_go_to_smallest_class() {
        let cls: Vec<ClassId> = vec!["a".into(), "b".into(), "c".into()];
        let r = ResidualVector::new(cls, vec![0.5, 0.2, 0.2]).unwrap();
        assert_eq!(r.argmin_class().as_str(), "b");
        assert!((r.nonmatched_sum() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_code_residuals_equal_norm_of_y() {
        let d = three_class_dict();
        let y = [0.3, -0.4, 1.2];
        let r = class_residuals(&d, &y, &code(vec![0.0; 3])).unwrap();
        for &v in r.per_class() {
            assert!((v - 1.3).abs() < 1e-12);
        }
    }

    #[test]
    fn single_atom_code_residuals() {
        // y = atom of class b coded by its indicator: r_b = 0, and the other
        // classes keep no coefficients so r_k = ||y||
        let d = three_class_dict();
        let y = d.atoms().col(1).to_vec();
        let r = class_residuals(&d, &y, &code(vec![0.0, 1.0, 0.0])).unwrap();
        assert!(r.per_class()[1].abs() < 1e-15);
        for k in [0usize, 2] {
            assert!((r.per_class()[k] - norm2(&y)).abs() < 1e-12);
        }
        assert_eq!(r.argmin_class().as_str(), "b");

        // coding y with the class-a atom instead gives r_a = ||y - a|| = sqrt(2 - 2 cos)
        let r = class_residuals(&d, &y, &code(vec![1.0, 0.0, 0.0])).unwrap();
        let cos = crate::linalg::dot(d.atoms().col(0), &y);
        assert!((r.per_class()[0] - libm::sqrt(2.0 - 2.0 * cos)).abs() < 1e-12);
    }
}
