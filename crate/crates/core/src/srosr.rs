//! Open-set recognition on top of SRC.
//!
//! Training repeatedly splits every class of the training data into
//! cross-train (80%) and cross-test (20%) parts, codes each cross-test sample
//! over the cross-train dictionary and records, per true class `i`, the
//! matched residual `r_i` and the sum of the other residuals. The right tail
//! of the matched residuals and the right tail of the negated sums (the left
//! tail of the sums) are fitted with Generalized Pareto models.
//!
//! At test time the candidate class `k*` is the SRC decision; its matched
//! residual and negated non-matched sum are mapped through the two tail
//! models of `k*`, fused as `S = S_m + w S_nm` and the sample is declared open
//! when `S > delta_t`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, LabeledDataset};
use crate::error::{Error, Result, TailKind};
use crate::evt::{fit_gpd_tail, GpdModel};
use crate::metrics::Label;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::sparse::{ratio_score, represent, sci, Dictionary, ResidualVector, SolverConfig, SrcOutcome};

/// Default l1 noise level.
pub const DEFAULT_EPSILON: f64 = 0.001;
/// Default number of cross-split rounds.
pub const DEFAULT_ROUNDS: usize = 20;
/// Share of each class used as cross-train in a harvest round.
pub const CROSS_TRAIN_FRACTION: f64 = 0.8;
/// Smallest class size for which both cross splits are non-empty.
pub const MIN_SAMPLES_PER_CLASS: usize = 5;

/// Per-dataset operating points: tail fraction `rho` and the base of the
/// rejection threshold `delta_t = base (1 + w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetPreset {
    Mnist,
    ExtendedYaleB,
    Uiuc,
    Caltech256,
}

impl DatasetPreset {
    pub fn rho(self) -> f64 {
        match self {
            DatasetPreset::Mnist => 0.14,
            DatasetPreset::ExtendedYaleB => 0.10,
            DatasetPreset::Uiuc => 0.39,
            DatasetPreset::Caltech256 => 0.25,
        }
    }

    pub fn delta_base(self) -> f64 {
        match self {
            DatasetPreset::Mnist => 0.006,
            DatasetPreset::ExtendedYaleB => 0.007,
            DatasetPreset::Uiuc => 0.05,
            DatasetPreset::Caltech256 => 0.1,
        }
    }

    /// Rejection threshold at fusion weight `w`.
    pub fn delta_t(self, w: f64) -> f64 {
        self.delta_base() * (1.0 + w)
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mnist" => Some(DatasetPreset::Mnist),
            "yaleb" | "extendedyaleb" => Some(DatasetPreset::ExtendedYaleB),
            "uiuc" => Some(DatasetPreset::Uiuc),
            "caltech256" | "caltech" => Some(DatasetPreset::Caltech256),
            _ => None,
        }
    }
}

/// `w = (1 - openness) / 3`.
pub fn fusion_weight(openness: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&openness) {
        return Err(Error::param("openness", format!("{openness} is not in [0, 1]")));
    }
    Ok((1.0 - openness) / 3.0)
}

/// `s_m + w s_nm`.
pub fn fuse_scores(s_m: f64, s_nm: f64, w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s_m) || !(0.0..=1.0).contains(&s_nm) {
        return Err(Error::param("score", "probabilities must lie in [0, 1]"));
    }
    if !(0.0..=1.0 / 3.0).contains(&w) {
        return Err(Error::param("w", format!("{w} is not in [0, 1/3]")));
    }
    Ok(s_m + w * s_nm)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HarvestedErrors {
    pub matched: Vec<f64>,
    pub nonmatched_sums: Vec<f64>,
}

/// Residual statistics of cross-test samples, collected over all rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harvest {
    pub per_class: BTreeMap<ClassId, HarvestedErrors>,
    /// SCI of every cross-test code, in harvest order.
    pub sci_scores: Vec<f64>,
    /// Residual ratio of every cross-test sample, in harvest order.
    pub ratio_scores: Vec<f64>,
}

impl Harvest {
    /// Matched residuals of every class, pooled in class order.
    pub fn pooled_matched(&self) -> Vec<f64> {
        self.per_class.values().flat_map(|h| h.matched.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestConfig {
    pub epsilon: f64,
    pub rounds: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            rounds: DEFAULT_ROUNDS,
            train_fraction: CROSS_TRAIN_FRACTION,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

/// Collects matched residuals and non-matched sums by repeated cross splits.
/// Every round draws its shuffles from its own derived seed, so a round's
/// output does not depend on the others.
pub fn harvest_errors(data: &LabeledDataset, config: &HarvestConfig) -> Result<Harvest> {
    if config.rounds == 0 {
        return Err(Error::param("rounds", "at least one round is required"));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::param("train_fraction", "must lie in (0, 1)"));
    }
    let dict = Dictionary::from_dataset(data)?;
    if dict.n_classes() < 2 {
        return Err(Error::InsufficientClasses {
            needed: 2,
            available: dict.n_classes(),
        });
    }
    for k in 0..dict.n_classes() {
        let n = dict.class_columns(k).len();
        let n_tr = libm::floor(config.train_fraction * n as f64) as usize;
        if n < MIN_SAMPLES_PER_CLASS || n_tr == 0 || n_tr == n {
            return Err(Error::InsufficientSamples {
                class: dict.classes()[k].clone(),
                needed: MIN_SAMPLES_PER_CLASS,
                available: n,
            });
        }
    }

    let mut per_class: BTreeMap<ClassId, HarvestedErrors> = dict
        .classes()
        .iter()
        .map(|c| (c.clone(), HarvestedErrors::default()))
        .collect();
    let mut sci_scores = Vec::new();
    let mut ratio_scores = Vec::new();

    for round in 0..config.rounds {
        use rand::seq::SliceRandom;
        let mut rng = rng_from_seed(derive_seed(config.seed, stream::HARVEST_ROUND + round as u64));
        let mut train_cols = Vec::new();
        let mut test_cols = Vec::new();
        for k in 0..dict.n_classes() {
            let mut cols = dict.class_columns(k).to_vec();
            cols.shuffle(&mut rng);
            let n_tr = libm::floor(config.train_fraction * cols.len() as f64) as usize;
            train_cols.extend_from_slice(&cols[..n_tr]);
            test_cols.extend_from_slice(&cols[n_tr..]);
        }
        let cross = dict.select(&train_cols)?;
        for &j in &test_cols {
            let class = &dict.column_labels()[j];
            let wrap = |e: Error| Error::Harvest {
                round,
                class: class.clone(),
                source: alloc::boxed::Box::new(e),
            };
            let out = represent(&cross, dict.atoms().col(j), config.epsilon, &config.solver).map_err(wrap)?;
            let k = cross.class_position(class).expect("every class keeps cross-train atoms");
            let entry = per_class.get_mut(class).expect("class registered");
            entry.matched.push(out.residuals.per_class()[k]);
            entry.nonmatched_sums.push(out.residuals.nonmatched_sum_for(k));
            sci_scores.push(sci(&out.code, &cross).map_err(wrap)?.value);
            ratio_scores.push(ratio_score(&out.residuals).map_err(wrap)?);
        }
    }
    Ok(Harvest {
        per_class,
        sci_scores,
        ratio_scores,
    })
}

/// Tail models of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTailModels {
    /// Right tail of matched residuals.
    pub matched: GpdModel,
    /// Right tail of negated non-matched sums.
    pub inverted_nonmatched: GpdModel,
}

/// Hyper-parameters and operating point of a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrosrConfig {
    pub epsilon: f64,
    pub rho: f64,
    pub rounds: usize,
    pub train_fraction: f64,
    pub weight_w: f64,
    pub delta_t: f64,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Training inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub rho: f64,
    pub epsilon: f64,
    pub rounds: usize,
    /// Expected openness of the deployment; sets the fusion weight.
    pub openness_est: f64,
    pub delta_t: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl TrainParams {
    /// Recommended operating point for a dataset family.
    pub fn preset(preset: DatasetPreset, openness_est: f64, seed: u64) -> Result<Self> {
        let w = fusion_weight(openness_est)?;
        Ok(Self {
            rho: preset.rho(),
            epsilon: DEFAULT_EPSILON,
            rounds: DEFAULT_ROUNDS,
            openness_est,
            delta_t: preset.delta_t(w),
            seed,
            solver: SolverConfig::default(),
        })
    }

    pub fn harvest_config(&self) -> HarvestConfig {
        HarvestConfig {
            epsilon: self.epsilon,
            rounds: self.rounds,
            train_fraction: CROSS_TRAIN_FRACTION,
            seed: self.seed,
            solver: self.solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrosrDecision {
    pub label: Label,
    /// SRC decision `k*`.
    pub candidate: ClassId,
    pub s_matched: f64,
    pub s_nonmatched: f64,
    pub fused: f64,
}

/// Trained open-set recognizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SrosrModel {
    dictionary: Dictionary,
    tails: BTreeMap<ClassId, ClassTailModels>,
    config: SrosrConfig,
}

/// Fits both tails of every class.
pub fn fit_class_tails(harvest: &Harvest, rho: f64) -> Result<BTreeMap<ClassId, ClassTailModels>> {
    let mut tails = BTreeMap::new();
    for (class, h) in &harvest.per_class {
        let wrap = |tail: TailKind| {
            move |e: Error| Error::TailFit {
                class: class.clone(),
                tail,
                source: alloc::boxed::Box::new(e),
            }
        };
        let matched = fit_gpd_tail(&h.matched, rho).map_err(wrap(TailKind::Matched))?.model;
        let negated: Vec<f64> = h.nonmatched_sums.iter().map(|v| -v).collect();
        let inverted_nonmatched = fit_gpd_tail(&negated, rho)
            .map_err(wrap(TailKind::InvertedNonMatched))?
            .model;
        tails.insert(
            class.clone(),
            ClassTailModels {
                matched,
                inverted_nonmatched,
            },
        );
    }
    Ok(tails)
}

pub fn train(data: &LabeledDataset, params: &TrainParams) -> Result<SrosrModel> {
    let weight_w = fusion_weight(params.openness_est)?;
    if !(params.delta_t > 0.0) {
        return Err(Error::param("delta_t", "must be positive"));
    }
    let harvest = harvest_errors(data, &params.harvest_config())?;
    let dictionary = Dictionary::from_dataset(data)?;
    let tails = fit_class_tails(&harvest, params.rho)?;
    SrosrModel::new(
        dictionary,
        tails,
        SrosrConfig {
            epsilon: params.epsilon,
            rho: params.rho,
            rounds: params.rounds,
            train_fraction: CROSS_TRAIN_FRACTION,
            weight_w,
            delta_t: params.delta_t,
            seed: params.seed,
            solver: params.solver,
        },
    )
}

impl SrosrModel {
    pub fn new(
        dictionary: Dictionary,
        tails: BTreeMap<ClassId, ClassTailModels>,
        config: SrosrConfig,
    ) -> Result<Self> {
        let classes: Vec<&ClassId> = tails.keys().collect();
        let expected: Vec<&ClassId> = dictionary.classes().iter().collect();
        if classes != expected {
            return Err(Error::InvalidDataset(
                "tail models must cover exactly the dictionary classes".into(),
            ));
        }
        validate_operating_point(config.weight_w, config.delta_t)?;
        for t in tails.values() {
            for m in [&t.matched, &t.inverted_nonmatched] {
                if !(m.sigma > 0.0) || !m.xi.is_finite() || !m.threshold_u.is_finite() {
                    return Err(Error::param("tails", "every tail model needs sigma > 0"));
                }
            }
        }
        Ok(Self {
            dictionary,
            tails,
            config,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn tails(&self) -> &BTreeMap<ClassId, ClassTailModels> {
        &self.tails
    }

    pub fn config(&self) -> &SrosrConfig {
        &self.config
    }

    /// Same model at another fusion weight and threshold.
    pub fn with_operating_point(mut self, weight_w: f64, delta_t: f64) -> Result<Self> {
        validate_operating_point(weight_w, delta_t)?;
        self.config.weight_w = weight_w;
        self.config.delta_t = delta_t;
        Ok(self)
    }

    /// Codes `y` and decides.
    pub fn classify(&self, y: &[f64]) -> Result<SrosrDecision> {
        let out = represent(&self.dictionary, y, self.config.epsilon, &self.config.solver)?;
        self.decide(&out)
    }

    pub fn decide(&self, outcome: &SrcOutcome) -> Result<SrosrDecision> {
        self.decide_at(&outcome.residuals, self.config.weight_w, self.config.delta_t)
    }

    /// Decision from precomputed residuals at an explicit operating point.
    pub fn decide_at(&self, residuals: &ResidualVector, weight_w: f64, delta_t: f64) -> Result<SrosrDecision> {
        let candidate = residuals.argmin_class().clone();
        let tails = self
            .tails
            .get(&candidate)
            .ok_or_else(|| Error::UnknownClass(candidate.clone()))?;
        let s_matched = tails.matched.tail_probability(residuals.matched());
        let s_nonmatched = tails.inverted_nonmatched.tail_probability(-residuals.nonmatched_sum());
        let fused = fuse_scores(s_matched, s_nonmatched, weight_w)?;
        let label = if fused > delta_t {
            Label::Open
        } else {
            Label::Known(candidate.clone())
        };
        Ok(SrosrDecision {
            label,
            candidate,
            s_matched,
            s_nonmatched,
            fused,
        })
    }
}

fn validate_operating_point(weight_w: f64, delta_t: f64) -> Result<()> {
    if !(0.0..=1.0 / 3.0).contains(&weight_w) {
        return Err(Error::param("weight_w", format!("{weight_w} is not in [0, 1/3]")));
    }
    if !(delta_t > 0.0) {
        return Err(Error::param("delta_t", "must be positive"));
    }
    Ok(())
}
