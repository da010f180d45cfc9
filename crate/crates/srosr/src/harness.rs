//! Openness sweeps.
//!
//! Every trial draws one known/open class partition per openness level from
//! the same trial seed. Trial sampling is nested, so all levels of a trial
//! share one training split; each method is trained once per trial and every
//! test sample is coded once per noise level, then reused across levels and
//! methods. Per-level fusion weights follow the level's openness.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srosr_core::baselines::{
    calibrated_ratio_tau, calibrated_sci_alpha, naive_reject, naive_threshold, ratio_reject, sci_reject,
};
use srosr_core::dataset::{openness, sample_open_set_trial_with, TrialProtocol};
use srosr_core::metrics::{accuracy, f_measure, ConfusionCounts, Label};
use srosr_core::rng::derive_seed;
use srosr_core::sparse::{represent, Dictionary, SolverConfig, SrcOutcome};
use srosr_core::srosr::{
    fit_class_tails, fusion_weight, harvest_errors, DatasetPreset, Harvest, HarvestConfig, SrosrConfig, SrosrModel,
    CROSS_TRAIN_FRACTION, DEFAULT_EPSILON, DEFAULT_ROUNDS,
};
use srosr_core::{ClassId, LabeledDataset};

use crate::error::{Error, Result};
use crate::io::{write_file, DatasetSpec};

/// Stream tag for the harvest seed of a trial.
const HARVEST_STREAM: u64 = 0x0400_0000;

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}

fn default_train_fraction() -> f64 {
    CROSS_TRAIN_FRACTION
}

fn default_quantile() -> f64 {
    0.95
}

/// Rejection threshold of the fused score: a constant or a dataset preset
/// scaled by `1 + w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaT {
    Value(f64),
    Preset { preset: DatasetPreset },
}

impl DeltaT {
    pub fn at(self, w: f64) -> f64 {
        match self {
            DeltaT::Value(v) => v,
            DeltaT::Preset { preset } => preset.delta_t(w),
        }
    }
}

/// A fixed threshold, or one calibrated on harvested cross-test scores so
/// that a fraction `1 - calibrate_q` of them would be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Value(f64),
    Calibrated { calibrate_q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    Srosr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        rho: f64,
        #[serde(default = "default_rounds")]
        rounds: usize,
        delta_t: DeltaT,
        /// Score with the matched tail only (`w = 0`), keeping `delta_t`.
        #[serde(default)]
        matched_only: bool,
    },
    Naive {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_quantile")]
        quantile_q: f64,
    },
    Sci {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_rounds")]
        rounds: usize,
        alpha: Threshold,
    },
    Ratio {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_rounds")]
        rounds: usize,
        tau: Threshold,
    },
}

impl MethodConfig {
    pub fn name(&self) -> String {
        match self {
            MethodConfig::Srosr { name: Some(n), .. }
            | MethodConfig::Naive { name: Some(n), .. }
            | MethodConfig::Sci { name: Some(n), .. }
            | MethodConfig::Ratio { name: Some(n), .. } => n.clone(),
            MethodConfig::Srosr { matched_only: true, .. } => "srosr_matched_only".into(),
            MethodConfig::Srosr { .. } => "srosr".into(),
            MethodConfig::Naive { .. } => "naive".into(),
            MethodConfig::Sci { .. } => "sci".into(),
            MethodConfig::Ratio { .. } => "ratio".into(),
        }
    }

    fn epsilon(&self) -> f64 {
        match *self {
            MethodConfig::Srosr { epsilon, .. }
            | MethodConfig::Naive { epsilon, .. }
            | MethodConfig::Sci { epsilon, .. }
            | MethodConfig::Ratio { epsilon, .. } => epsilon,
        }
    }

    fn rounds(&self) -> usize {
        match *self {
            MethodConfig::Srosr { rounds, .. }
            | MethodConfig::Naive { rounds, .. }
            | MethodConfig::Sci { rounds, .. }
            | MethodConfig::Ratio { rounds, .. } => rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset: DatasetSpec,
    pub methods: Vec<MethodConfig>,
    pub n_known: usize,
    /// Number of open classes at each level.
    pub open_levels: Vec<usize>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Per-class subsample drawn before splitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_per_class: Option<usize>,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl SweepConfig {
    /// Parses JSON or TOML, chosen by extension (`.toml`, else JSON).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SweepConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(SweepConfig {
            dataset: cfg.dataset.clone().resolve(base),
            ..cfg
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if self.open_levels.is_empty() {
            return Err(Error::Config("no openness levels configured".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        let names: BTreeSet<String> = self.methods.iter().map(MethodConfig::name).collect();
        if names.len() != self.methods.len() {
            return Err(Error::Config("method names must be unique; set `name`".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub f_measure_mean: f64,
    pub f_measure_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    /// Trials that completed for this method.
    pub trials: usize,
    /// Trials whose F-measure was undefined and scored as 0.
    pub undefined_f_measure: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// SHA-256 over the source indices of the train split.
    pub train_hash: String,
    /// SHA-256 over the source indices of the test split.
    pub test_hash: String,
    pub counts: BTreeMap<String, ConfusionCounts>,
    /// Operating threshold each method used.
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub n_open: usize,
    pub openness: f64,
    pub weight_w: f64,
    pub methods: Vec<MethodSummary>,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub master_seed: u64,
    pub levels: Vec<LevelResult>,
    pub failures: Vec<TrialFailure>,
}

fn index_hash(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// A method trained on one trial's training split.
enum Trained {
    Srosr { model: Box<SrosrModel>, delta_t: DeltaT, matched_only: bool },
    Naive { threshold: f64 },
    Sci { alpha: f64 },
    Ratio { tau: f64 },
}

impl Trained {
    fn decide(&self, out: &SrcOutcome, dict: &Dictionary, w: f64) -> srosr_core::Result<(Label, f64)> {
        Ok(match self {
            Trained::Srosr {
                model,
                delta_t,
                matched_only,
            } => {
                let dt = delta_t.at(w);
                let fuse_w = if *matched_only { 0.0 } else { w };
                (model.decide_at(&out.residuals, fuse_w, dt)?.label, dt)
            }
            Trained::Naive { threshold } => (naive_reject(&out.residuals, *threshold), *threshold),
            Trained::Sci { alpha } => (sci_reject(out, dict, *alpha)?, *alpha),
            Trained::Ratio { tau } => (ratio_reject(&out.residuals, *tau)?, *tau),
        })
    }
}

fn calibrate(t: Threshold, harvest: &Harvest, f: fn(&Harvest, f64) -> srosr_core::Result<f64>) -> srosr_core::Result<f64> {
    match t {
        Threshold::Value(v) => Ok(v),
        Threshold::Calibrated { calibrate_q } => f(harvest, calibrate_q),
    }
}

fn train_method(
    method: &MethodConfig,
    dict: &Dictionary,
    harvest: &Harvest,
    seed: u64,
    solver: SolverConfig,
) -> srosr_core::Result<Trained> {
    Ok(match *method {
        MethodConfig::Srosr {
            epsilon,
            rho,
            rounds,
            delta_t,
            matched_only,
            ..
        } => {
            let tails = fit_class_tails(harvest, rho)?;
            let weight_w = fusion_weight(0.0)?;
            let config = SrosrConfig {
                epsilon,
                rho,
                rounds,
                train_fraction: CROSS_TRAIN_FRACTION,
                weight_w,
                delta_t: delta_t.at(weight_w),
                seed,
                solver,
            };
            Trained::Srosr {
                model: Box::new(SrosrModel::new(dict.clone(), tails, config)?),
                delta_t,
                matched_only,
            }
        }
        MethodConfig::Naive { quantile_q, .. } => Trained::Naive {
            threshold: naive_threshold(harvest, quantile_q)?,
        },
        MethodConfig::Sci { alpha, .. } => Trained::Sci {
            alpha: calibrate(alpha, harvest, calibrated_sci_alpha)?,
        },
        MethodConfig::Ratio { tau, .. } => Trained::Ratio {
            tau: calibrate(tau, harvest, calibrated_ratio_tau)?,
        },
    })
}

#[derive(Default)]
struct Accumulator {
    f: Vec<f64>,
    acc: Vec<f64>,
    undefined: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every configured trial and level. Failures of a method within a
/// trial are logged, recorded in the result and excluded from its means.
pub fn run_openness_sweep(data: &LabeledDataset, config: &SweepConfig, master_seed: u64) -> Result<SweepResult> {
    config.validate()?;
    let names: Vec<String> = config.methods.iter().map(MethodConfig::name).collect();
    let mut levels: Vec<LevelResult> = Vec::with_capacity(config.open_levels.len());
    let mut accs: Vec<Vec<Accumulator>> = Vec::new();
    for &n_open in &config.open_levels {
        let o = openness(config.n_known, config.n_known, config.n_known + n_open)?;
        levels.push(LevelResult {
            n_open,
            openness: o,
            weight_w: fusion_weight(o)?,
            methods: Vec::new(),
            trials: Vec::new(),
        });
        accs.push(names.iter().map(|_| Accumulator::default()).collect());
    }
    let mut failures = Vec::new();

    for t in 0..config.trials {
        let seed = derive_seed(master_seed, t as u64);
        let trials = config
            .open_levels
            .iter()
            .map(|&n_open| {
                sample_open_set_trial_with(
                    data,
                    &TrialProtocol {
                        n_known: config.n_known,
                        n_open,
                        train_fraction: config.train_fraction,
                        max_per_class: config.max_per_class,
                    },
                    seed,
                )
            })
            .collect::<srosr_core::Result<Vec<_>>>()?;
        let train = &trials[0].train;
        debug_assert!(trials.iter().all(|tr| tr.train_indices == trials[0].train_indices));
        let dict = Dictionary::from_dataset(train)?;
        let harvest_seed = derive_seed(seed, HARVEST_STREAM);
        info!("trial {t}: {} training samples, seed {seed:#018x}", train.len());

        let mut harvests: HashMap<(u64, usize), srosr_core::Result<Harvest>> = HashMap::new();
        let mut trained: Vec<Option<Trained>> = Vec::with_capacity(names.len());
        for (m, method) in config.methods.iter().enumerate() {
            let key = (method.epsilon().to_bits(), method.rounds());
            let harvest = harvests.entry(key).or_insert_with(|| {
                harvest_errors(
                    train,
                    &HarvestConfig {
                        epsilon: method.epsilon(),
                        rounds: method.rounds(),
                        train_fraction: CROSS_TRAIN_FRACTION,
                        seed: harvest_seed,
                        solver: config.solver,
                    },
                )
            });
            let model = match harvest {
                Ok(h) => train_method(method, &dict, h, harvest_seed, config.solver),
                Err(e) => Err(e.clone()),
            };
            match model {
                Ok(tr) => trained.push(Some(tr)),
                Err(e) => {
                    warn!("trial {t}, method {}: training failed: {e}", names[m]);
                    failures.push(TrialFailure {
                        trial: t,
                        method: names[m].clone(),
                        error: e.to_string(),
                    });
                    trained.push(None);
                }
            }
        }

        // codes of test samples, shared by levels and by methods with equal epsilon
        let mut codes: HashMap<(u64, usize), srosr_core::Result<SrcOutcome>> = HashMap::new();
        let mut failed: Vec<bool> = trained.iter().map(Option::is_none).collect();
        let mut pending = Vec::new();
        for (li, trial) in trials.iter().enumerate() {
            let w = levels[li].weight_w;
            let truth: Vec<Label> = trial
                .test
                .labels()
                .iter()
                .map(|c| {
                    if trial.known_classes.contains(c) {
                        Label::Known(c.clone())
                    } else {
                        Label::Open
                    }
                })
                .collect();
            let mut record = TrialRecord {
                trial: t,
                seed,
                train_hash: index_hash(&trial.train_indices),
                test_hash: index_hash(&trial.test_indices),
                counts: BTreeMap::new(),
                thresholds: BTreeMap::new(),
            };
            for (m, method) in config.methods.iter().enumerate() {
                let Some(tr) = trained[m].as_ref() else { continue };
                if failed[m] {
                    continue;
                }
                let eps = method.epsilon();
                let mut counts = ConfusionCounts::default();
                let mut threshold = f64::NAN;
                let mut error = None;
                for (k, &src) in trial.test_indices.iter().enumerate() {
                    let out = codes
                        .entry((eps.to_bits(), src))
                        .or_insert_with(|| represent(&dict, data.sample(src), eps, &config.solver));
                    let decided = match out {
                        Ok(o) => tr.decide(o, &dict, w),
                        Err(e) => Err(e.clone()),
                    };
                    match decided {
                        Ok((label, th)) => {
                            counts.add(&label, &truth[k]);
                            threshold = th;
                        }
                        Err(e) => {
                            error = Some(e);
                            break;
                        }
                    }
                }
                if let Some(e) = error {
                    warn!("trial {t}, method {}: classification failed: {e}", names[m]);
                    failures.push(TrialFailure {
                        trial: t,
                        method: names[m].clone(),
                        error: e.to_string(),
                    });
                    failed[m] = true;
                    continue;
                }
                let f = f_measure(&counts);
                if !f.defined {
                    warn!("trial {t}, method {}: F-measure undefined, scored as 0", names[m]);
                }
                pending.push((li, m, f, accuracy(&counts).unwrap_or(0.0)));
                record.counts.insert(names[m].clone(), counts);
                record.thresholds.insert(names[m].clone(), threshold);
            }
            levels[li].trials.push(record);
        }
        // a method that failed part-way through a trial contributes no level of it
        for (m, &bad) in failed.iter().enumerate() {
            if bad && trained[m].is_some() {
                for level in levels.iter_mut() {
                    if let Some(r) = level.trials.last_mut() {
                        r.counts.remove(&names[m]);
                        r.thresholds.remove(&names[m]);
                    }
                }
            }
        }
        for (li, m, f, acc) in pending {
            if failed[m] {
                continue;
            }
            let a = &mut accs[li][m];
            a.f.push(f.value);
            a.acc.push(acc);
            a.undefined += usize::from(!f.defined);
        }
    }

    for (li, level) in levels.iter_mut().enumerate() {
        level.methods = names
            .iter()
            .zip(&accs[li])
            .map(|(name, a)| {
                let (f_measure_mean, f_measure_std) = mean_std(&a.f);
                let (accuracy_mean, accuracy_std) = mean_std(&a.acc);
                MethodSummary {
                    method: name.clone(),
                    f_measure_mean,
                    f_measure_std,
                    accuracy_mean,
                    accuracy_std,
                    trials: a.f.len(),
                    undefined_f_measure: a.undefined,
                }
            })
            .collect();
    }
    Ok(SweepResult {
        config: SweepConfig {
            master_seed: Some(master_seed),
            ..config.clone()
        },
        master_seed,
        levels,
        failures,
    })
}

impl SweepResult {
    pub fn summary(&self, n_open: usize, method: &str) -> Option<&MethodSummary> {
        self.levels
            .iter()
            .find(|l| l.n_open == n_open)?
            .methods
            .iter()
            .find(|m| m.method == method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 7] = [
    "openness",
    "method",
    "f_measure_mean",
    "f_measure_std",
    "accuracy_mean",
    "accuracy_std",
    "trials",
];

pub fn report_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for level in &result.levels {
        for m in &level.methods {
            w.write_record([
                level.openness.to_string(),
                m.method.clone(),
                m.f_measure_mean.to_string(),
                m.f_measure_std.to_string(),
                m.accuracy_mean.to_string(),
                m.accuracy_std.to_string(),
                m.trials.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_report(result: &SweepResult, format: ReportFormat, path: &Path) -> Result<()> {
    let bytes = match format {
        ReportFormat::Csv => report_csv(result)?.into_bytes(),
        ReportFormat::Json => serde_json::to_vec_pretty(result)?,
    };
    write_file(path, &bytes)
}

/// Loads and prepares the dataset named by a config, then runs the sweep.
pub fn run_from_config(config: &SweepConfig, master_seed: u64) -> Result<SweepResult> {
    let data = config.dataset.load()?;
    run_openness_sweep(&data, config, master_seed)
}

/// Classes of a dataset, for diagnostics.
pub fn class_counts(data: &LabeledDataset) -> BTreeMap<ClassId, usize> {
    data.class_columns().into_iter().map(|(c, v)| (c, v.len())).collect()
}
