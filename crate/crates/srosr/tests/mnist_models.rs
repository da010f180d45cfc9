//! Training and deciding on real digits at desk resolution.

mod common;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srosr_core::baselines::{
    empirical_quantile, naive_reject, naive_train, ratio_reject, sci_reject, NaiveModel, NaiveParams,
};
use srosr_core::linalg::norm2;
use srosr_core::metrics::Label;
use srosr_core::sparse::{represent, SrcOutcome};
use srosr_core::srosr::{
    fusion_weight, harvest_errors, train, DatasetPreset, HarvestConfig, SrosrModel, TrainParams,
    CROSS_TRAIN_FRACTION,
};
use srosr_core::LabeledDataset;

const SEED: u64 = 31;

fn subset() -> &'static (LabeledDataset, LabeledDataset) {
    static S: OnceLock<(LabeledDataset, LabeledDataset)> = OnceLock::new();
    S.get_or_init(|| common::six_class_subset(50, 20))
}

fn params() -> TrainParams {
    TrainParams {
        solver: common::solver(),
        ..TrainParams::preset(DatasetPreset::Mnist, 0.0, SEED).unwrap()
    }
}

fn model() -> &'static SrosrModel {
    static M: OnceLock<SrosrModel> = OnceLock::new();
    M.get_or_init(|| train(&subset().0, &params()).expect("training succeeds"))
}

fn naive(q: f64) -> NaiveModel {
    let p = params();
    naive_train(
        &subset().0,
        &NaiveParams {
            quantile_q: q,
            epsilon: p.epsilon,
            rounds: p.rounds,
            seed: SEED,
            solver: p.solver,
        },
    )
    .unwrap()
}

/// Codes of the held-out test digits over the full training dictionary.
fn test_outcomes() -> &'static Vec<SrcOutcome> {
    static O: OnceLock<Vec<SrcOutcome>> = OnceLock::new();
    O.get_or_init(|| {
        let (_, test) = subset();
        let p = params();
        (0..test.len())
            .map(|j| represent(model().dictionary(), test.sample(j), p.epsilon, &p.solver).unwrap())
            .collect()
    })
}

#[test]
fn harvest_count_is_rounds_times_cross_test_size() {
    let (train_set, _) = subset();
    let rounds = 5;
    let h = harvest_errors(
        train_set,
        &HarvestConfig {
            rounds,
            seed: SEED,
            solver: common::solver(),
            ..HarvestConfig::default()
        },
    )
    .unwrap();
    assert_eq!(h.per_class.len(), 6);
    for (class, cols) in train_set.class_columns() {
        let cross_test = cols.len() - (CROSS_TRAIN_FRACTION * cols.len() as f64).floor() as usize;
        let e = &h.per_class[&class];
        assert_eq!(e.matched.len(), rounds * cross_test, "class {class}");
        assert_eq!(e.nonmatched_sums.len(), rounds * cross_test, "class {class}");
    }
    assert_eq!(h.sci_scores.len(), h.pooled_matched().len());
}

#[test]
fn harvest_is_bit_identical_under_a_fixed_seed() {
    let cfg = HarvestConfig {
        rounds: 2,
        seed: SEED,
        solver: common::solver(),
        ..HarvestConfig::default()
    };
    let a = harvest_errors(&subset().0, &cfg).unwrap();
    let b = harvest_errors(&subset().0, &cfg).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for (class, e) in &a.per_class {
        assert_eq!(bits(&e.matched), bits(&b.per_class[class].matched));
        assert_eq!(bits(&e.nonmatched_sums), bits(&b.per_class[class].nonmatched_sums));
    }
}

#[test]
fn trained_model_has_six_positive_scale_tails() {
    let m = model();
    assert_eq!(m.tails().len(), 6);
    for t in m.tails().values() {
        assert!(t.matched.sigma > 0.0 && t.inverted_nonmatched.sigma > 0.0);
    }
    assert_eq!(m.config().weight_w, 1.0 / 3.0);
    assert_eq!(m.config().delta_t, 0.006 * (1.0 + 1.0 / 3.0));
}

#[test]
fn replayed_training_atom_keeps_its_class() {
    let m = model();
    let p = params();
    let (train_set, _) = subset();
    let w = fusion_weight(0.0).unwrap();
    let max_threshold = naive(1.0);
    for j in (0..train_set.len()).step_by(37) {
        let out = represent(m.dictionary(), train_set.sample(j), p.epsilon, &p.solver).unwrap();
        let own = Label::Known(train_set.labels()[j].clone());
        let d = m.decide_at(&out.residuals, w, w + 0.01).unwrap();
        assert_eq!(d.s_matched, 0.0, "sample {j}");
        assert_eq!(d.label, own, "sample {j}");
        assert_eq!(sci_reject(&out, m.dictionary(), 0.5).unwrap(), own, "sample {j}");
        assert_eq!(max_threshold.decide(&out.residuals), own, "sample {j}");
    }
}

#[test]
fn input_far_from_every_digit_is_rejected() {
    let m = model();
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p99 = |class: &srosr_core::ClassId| empirical_quantile(&harvest().per_class[class].matched, 0.99).unwrap();
    for _ in 0..5 {
        let raw: Vec<f64> = (0..m.dictionary().dim()).map(|_| rng.sample(StandardNormal)).collect();
        let s = norm2(&raw);
        let y: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let out = represent(m.dictionary(), &y, p.epsilon, &p.solver).unwrap();
        let k = out.label().clone();
        assert!(out.residuals.matched() > p99(&k), "construction must exceed the harvested 99th percentile");
        let d = m.decide(&out).unwrap();
        assert!(d.fused > m.config().delta_t);
        assert_eq!(d.label, Label::Open);
    }
}

fn harvest() -> &'static srosr_core::srosr::Harvest {
    static H: OnceLock<srosr_core::srosr::Harvest> = OnceLock::new();
    H.get_or_init(|| harvest_errors(&subset().0, &params().harvest_config()).unwrap())
}

#[test]
fn naive_threshold_is_reproducible_bit_exact() {
    let a = naive(0.95).error_threshold();
    let b = naive(0.95).error_threshold();
    assert_eq!(a.to_bits(), b.to_bits());
    let max = harvest().pooled_matched().into_iter().fold(f64::MIN, f64::max);
    assert_eq!(naive(1.0).error_threshold(), max);
}

#[test]
fn naive_rejects_an_input_orthogonal_to_every_atom() {
    let m = naive(0.95);
    let atoms = m.dictionary().atoms();
    // the corner block is blank in every digit
    let blank = (0..atoms.rows())
        .find(|&i| (0..atoms.cols()).all(|j| atoms.get(i, j) == 0.0))
        .expect("a pixel that no training digit lights");
    let mut y = vec![0.0; atoms.rows()];
    y[blank] = 1.0;
    assert_eq!(m.classify(&y).unwrap(), Label::Open);
}

#[test]
fn disabled_rejection_reproduces_src() {
    let m = model();
    let unlimited = NaiveModel::new(m.dictionary().clone(), f64::INFINITY, 1.0, params().epsilon, params().solver).unwrap();
    for out in test_outcomes() {
        let src = Label::Known(out.label().clone());
        assert_eq!(sci_reject(out, m.dictionary(), 0.0).unwrap(), src);
        assert_eq!(ratio_reject(&out.residuals, 1.0).unwrap(), src);
        assert_eq!(naive_reject(&out.residuals, f64::INFINITY), src);
        assert_eq!(unlimited.decide(&out.residuals), src);
        for w in [0.0, 0.2, 1.0 / 3.0] {
            assert_eq!(m.decide_at(&out.residuals, w, 1.0 + w).unwrap().label, src);
        }
    }
}

#[test]
fn stricter_thresholds_never_accept_a_rejected_sample() {
    let m = model();
    for out in test_outcomes() {
        let mut was_open = false;
        for alpha in [0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0] {
            let open = sci_reject(out, m.dictionary(), alpha).unwrap().is_open();
            assert!(open || !was_open);
            was_open = open;
        }
        was_open = false;
        for tau in [1.0, 1.1, 1.5, 2.0, 4.0, 100.0] {
            let open = ratio_reject(&out.residuals, tau).unwrap().is_open();
            assert!(open || !was_open);
            was_open = open;
        }
        was_open = false;
        for threshold in [f64::INFINITY, 1.0, 0.5, 0.3, 0.1, 0.0] {
            let open = naive_reject(&out.residuals, threshold).is_open();
            assert!(open || !was_open);
            was_open = open;
        }
        was_open = false;
        for delta_t in [4.0 / 3.0, 0.5, 0.1, 0.008, 0.0] {
            let open = m.decide_at(&out.residuals, 1.0 / 3.0, delta_t).unwrap().label.is_open();
            assert!(open || !was_open);
            was_open = open;
        }
    }
}

#[test]
fn zero_threshold_rejects_every_positive_fused_score() {
    let m = model();
    let mut positive = 0;
    for out in test_outcomes() {
        let d = m.decide_at(&out.residuals, 1.0 / 3.0, 0.0).unwrap();
        assert_eq!(d.label.is_open(), d.fused > 0.0);
        positive += usize::from(d.fused > 0.0);
    }
    assert!(positive > 0);
}

#[test]
fn matched_only_weight_ignores_the_nonmatched_tail() {
    let m = model();
    for out in test_outcomes() {
        let d = m.decide_at(&out.residuals, 0.0, 0.01).unwrap();
        assert_eq!(d.fused, d.s_matched);
        assert_eq!(d.label.is_open(), d.s_matched > 0.01);
    }
}
