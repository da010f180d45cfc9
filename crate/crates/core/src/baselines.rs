//! Reference rejectors sharing the SRC coding step.
//!
//! * SCI: reject when the sparsity concentration index is below `alpha`.
//! * Ratio: reject when second-smallest over smallest residual is below `tau`.
//! * Naive: reject when the smallest residual exceeds a quantile of the
//!   harvested matched residuals, pooled over classes.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::Label;
use crate::sparse::{ratio_score, represent, sci, Dictionary, ResidualVector, SolverConfig, SrcOutcome};
use crate::srosr::{harvest_errors, Harvest, HarvestConfig};

/// Lower empirical quantile: the order statistic at 1-based index
/// `ceil(q n)` clamped to `[1, n]`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooFewExceedances { needed: 1, available: 0 });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("q", "must lie in [0, 1]"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite score".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = (libm::ceil(q * n as f64) as usize).clamp(1, n);
    Ok(sorted[idx - 1])
}

/// Known-vs-open decision from an SCI score.
pub fn sci_reject(outcome: &SrcOutcome, dict: &Dictionary, alpha: f64) -> Result<Label> {
    check_unit("alpha", alpha)?;
    let s = sci(&outcome.code, dict)?;
    Ok(if s.value < alpha {
        Label::Open
    } else {
        Label::Known(outcome.label().clone())
    })
}

pub fn sci_classify(dict: &Dictionary, y: &[f64], epsilon: f64, alpha: f64, solver: &SolverConfig) -> Result<Label> {
    check_unit("alpha", alpha)?;
    sci_reject(&represent(dict, y, epsilon, solver)?, dict, alpha)
}

/// Known-vs-open decision from the residual ratio.
pub fn ratio_reject(residuals: &ResidualVector, tau: f64) -> Result<Label> {
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(Error::param("tau", "must be finite and at least 1"));
    }
    Ok(if ratio_score(residuals)? < tau {
        Label::Open
    } else {
        Label::Known(residuals.argmin_class().clone())
    })
}

pub fn ratio_classify(dict: &Dictionary, y: &[f64], epsilon: f64, tau: f64, solver: &SolverConfig) -> Result<Label> {
    ratio_reject(&represent(dict, y, epsilon, solver)?.residuals, tau)
}

/// `alpha` such that a fraction `1 - q` of harvested SCI scores fall at or
/// below it.
pub fn calibrated_sci_alpha(harvest: &Harvest, q: f64) -> Result<f64> {
    empirical_quantile(&harvest.sci_scores, 1.0 - q)
}

/// `tau` such that a fraction `1 - q` of harvested ratios fall at or below it;
/// never below 1.
pub fn calibrated_ratio_tau(harvest: &Harvest, q: f64) -> Result<f64> {
    Ok(empirical_quantile(&harvest.ratio_scores, 1.0 - q)?.max(1.0))
}

/// `q`-quantile of the pooled harvested matched residuals.
pub fn naive_threshold(harvest: &Harvest, q: f64) -> Result<f64> {
    empirical_quantile(&harvest.pooled_matched(), q)
}

/// Residual-threshold rejector.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveModel {
    dictionary: Dictionary,
    error_threshold: f64,
    quantile_q: f64,
    epsilon: f64,
    solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveParams {
    pub quantile_q: f64,
    pub epsilon: f64,
    pub rounds: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

pub fn naive_train(data: &LabeledDataset, params: &NaiveParams) -> Result<NaiveModel> {
    let harvest = harvest_errors(
        data,
        &HarvestConfig {
            epsilon: params.epsilon,
            rounds: params.rounds,
            seed: params.seed,
            solver: params.solver,
            ..HarvestConfig::default()
        },
    )?;
    NaiveModel::from_harvest(Dictionary::from_dataset(data)?, &harvest, params.quantile_q, params.epsilon, params.solver)
}

impl NaiveModel {
    /// `error_threshold` must be positive; `+inf` never rejects.
    pub fn new(
        dictionary: Dictionary,
        error_threshold: f64,
        quantile_q: f64,
        epsilon: f64,
        solver: SolverConfig,
    ) -> Result<Self> {
        if !(error_threshold > 0.0) {
            return Err(Error::param("error_threshold", "must be positive"));
        }
        check_unit("quantile_q", quantile_q)?;
        Ok(Self {
            dictionary,
            error_threshold,
            quantile_q,
            epsilon,
            solver,
        })
    }

    pub fn from_harvest(
        dictionary: Dictionary,
        harvest: &Harvest,
        quantile_q: f64,
        epsilon: f64,
        solver: SolverConfig,
    ) -> Result<Self> {
        check_unit("quantile_q", quantile_q)?;
        let t = naive_threshold(harvest, quantile_q)?;
        if !(t > 0.0) {
            return Err(Error::DegenerateSamples);
        }
        Self::new(dictionary, t, quantile_q, epsilon, solver)
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn error_threshold(&self) -> f64 {
        self.error_threshold
    }

    pub fn quantile_q(&self) -> f64 {
        self.quantile_q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn classify(&self, y: &[f64]) -> Result<Label> {
        let out = represent(&self.dictionary, y, self.epsilon, &self.solver)?;
        Ok(self.decide(&out.residuals))
    }

    pub fn decide(&self, residuals: &ResidualVector) -> Label {
        naive_reject(residuals, self.error_threshold)
    }
}

/// Rejects when the smallest residual exceeds `threshold`.
pub fn naive_reject(residuals: &ResidualVector, threshold: f64) -> Label {
    if residuals.matched() > threshold {
        Label::Open
    } else {
        Label::Known(residuals.argmin_class().clone())
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(name, "must lie in [0, 1]"));
    }
    Ok(())
}

/// Pooled scores of every cross-test sample, for threshold calibration.
pub fn pooled_scores(harvest: &Harvest) -> (Vec<f64>, Vec<f64>) {
    (harvest.sci_scores.clone(), harvest.ratio_scores.clone())
}
