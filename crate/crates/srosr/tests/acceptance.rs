//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srosr::harness::{run_from_config, MethodConfig, SweepConfig, SweepResult};
use srosr_core::dataset::openness;
use srosr_core::evt::{fit_gpd_exceedances, gpd_cdf, GpdModel};
use srosr_core::linalg::{norm1, norm2, Matrix};
use srosr_core::metrics::{accuracy, f_measure, precision, recall, score_predictions, Label};
use srosr_core::sparse::{
    represent, sci, solve_l1_matrix, Dictionary, SolverConfig, SolverDiagnostics, SolverKind, SparseCode,
};
use srosr_core::srosr::{fuse_scores, fusion_weight, train, DatasetPreset, TrainParams};
use srosr_core::ClassId;

const ORACLE_INSTANCES: usize = 200;
const ORACLE_OBJECTIVE_TOL: f64 = 1e-4;
const ORACLE_TIME: Duration = Duration::from_secs(30);

const GPD_TRUTHS: [(f64, f64); 3] = [(1.0, 0.0), (1.0, 0.2), (2.0, -0.2)];
const GPD_DRAWS: usize = 10_000;
const GPD_REPS: usize = 50;
const GPD_PARAM_TOL: f64 = 0.1;
const GPD_MIN_HIT_RATE: f64 = 0.95;
const GPD_TIME: Duration = Duration::from_secs(10);

const CDF_VALUE_TOL: f64 = 1e-4;
const CDF_LIMIT_TOL: f64 = 1e-6;

const FORMULA_TOL: f64 = 1e-4;

const CLOSED_CLASSES: usize = 6;
const CLOSED_TRAIN: usize = 50;
const CLOSED_TEST: usize = 100;
const CLOSED_MIN_ACCURACY: f64 = 0.90;
const CLOSED_TIME: Duration = Duration::from_secs(5 * 60);

const SWEEP_SEED: u64 = 1;
const SWEEP_TRIALS: usize = 10;
const SWEEP_MIN_MARGIN_OVER_SCI: f64 = 0.02;
const SWEEP_TIME: Duration = Duration::from_secs(30 * 60);

const INVARIANT_DRAWS: usize = 2000;

fn desk_config() -> SweepConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/mnist_desk.toml");
    SweepConfig::from_file(&path).expect("desk config parses")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- l1 oracle

/// `min 1't  s.t.  -t <= x <= t,  ||y - A x|| <= eps` over `(x, t)`.
fn socp_l1(a: &Matrix, y: &[f64], eps: f64) -> Option<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    let p = CscMatrix::zeros((2 * n, 2 * n));
    let mut q = vec![0.0; n];
    q.extend(vec![1.0; n]);
    let (mut ri, mut ci, mut v) = (vec![], vec![], vec![]);
    for j in 0..n {
        ri.extend([j, j, n + j, n + j]);
        ci.extend([j, n + j, j, n + j]);
        v.extend([1.0, -1.0, -1.0, -1.0]);
    }
    for j in 0..n {
        for i in 0..m {
            ri.push(2 * n + 1 + i);
            ci.push(j);
            v.push(a.get(i, j));
        }
    }
    let amat = CscMatrix::new_from_triplets(2 * n + 1 + m, 2 * n, ri, ci, v);
    let mut b = vec![0.0; 2 * n];
    b.push(eps);
    b.extend_from_slice(y);
    let cones = [NonnegativeConeT(2 * n), SecondOrderConeT(m + 1)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-11)
        .tol_gap_rel(1e-11)
        .tol_feas(1e-11)
        .build()
        .ok()?;
    let mut solver = DefaultSolver::new(&p, &q, &amat, &b, &cones, settings).ok()?;
    solver.solve();
    matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved)
        .then(|| solver.solution.x[..n].to_vec())
}

fn unit_vector(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let c: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let s = norm2(&c);
    c.into_iter().map(|v| v / s).collect()
}

/// Feasible random instance with `M <= 10`, `N <= 16`.
fn l1_instance(rng: &mut ChaCha8Rng, eps: f64) -> (Matrix, Vec<f64>) {
    let m = rng.random_range(2..=10);
    let n = rng.random_range(2..=16);
    let cols: Vec<Vec<f64>> = (0..n).map(|_| unit_vector(rng, m)).collect();
    let a = Matrix::from_columns(m, &cols).expect("columns share a length");
    if n >= m && rng.random_bool(0.5) {
        return (a, unit_vector(rng, m));
    }
    let mut y = vec![0.0; m];
    for _ in 0..rng.random_range(1..=n.min(3)) {
        let j = rng.random_range(0..n);
        let c: f64 = rng.sample(StandardNormal);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += c * a.get(i, j);
        }
    }
    let noise = unit_vector(rng, m);
    for (yi, e) in y.iter_mut().zip(noise) {
        *yi += 0.5 * eps * e;
    }
    (a, y)
}

fn l1_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for case in 0..ORACLE_INSTANCES {
        let eps = if case % 2 == 0 { 1e-4 } else { 1e-2 };
        let (a, y) = l1_instance(&mut rng, eps);
        let Some(x_ref) = socp_l1(&a, &y, eps) else {
            bad.push(format!("oracle failed on case {case}"));
            continue;
        };
        match solve_l1_matrix(&a, &y, eps, &cfg) {
            Ok(code) => {
                let diff = (code.l1_norm() - norm1(&x_ref)).abs();
                worst = worst.max(diff);
                if diff > ORACLE_OBJECTIVE_TOL || code.residual_norm > eps * (1.0 + 1e-6) + 1e-12 {
                    bad.push(format!("case {case}: objective off by {diff:.2e}"));
                }
            }
            Err(e) => bad.push(format!("case {case}: {e}")),
        }
    }
    let took = start.elapsed();
    outcome(
        bad.is_empty() && took < ORACLE_TIME,
        format!(
            "{ORACLE_INSTANCES} instances, worst |objective - oracle| = {worst:.2e} (tol {ORACLE_OBJECTIVE_TOL:e}), \
             {:.2} s (limit {} s){}",
            took.as_secs_f64(),
            ORACLE_TIME.as_secs(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- GPD

/// Inverse-CDF draw from a Generalized Pareto distribution.
fn gpd_draw(rng: &mut ChaCha8Rng, sigma: f64, xi: f64) -> f64 {
    let u: f64 = rng.random();
    if xi == 0.0 {
        -sigma * (-u).ln_1p()
    } else {
        sigma / xi * ((1.0 - u).powf(-xi) - 1.0)
    }
}

fn gpd_recovery() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (t, &(sigma, xi)) in GPD_TRUTHS.iter().enumerate() {
        let mut hits = 0;
        for rep in 0..GPD_REPS {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * t as u64 + rep as u64);
            let z: Vec<f64> = (0..GPD_DRAWS).map(|_| gpd_draw(&mut rng, sigma, xi)).collect();
            if let Ok(fit) = fit_gpd_exceedances(&z) {
                if (fit.model.sigma - sigma).abs() <= GPD_PARAM_TOL && (fit.model.xi - xi).abs() <= GPD_PARAM_TOL {
                    hits += 1;
                }
            }
        }
        let rate = hits as f64 / GPD_REPS as f64;
        pass &= rate >= GPD_MIN_HIT_RATE;
        parts.push(format!("({sigma}, {xi}): {hits}/{GPD_REPS}"));
    }
    let took = start.elapsed();
    outcome(
        pass && took < GPD_TIME,
        format!(
            "within ±{GPD_PARAM_TOL} in {} (need {:.0}%), n = {GPD_DRAWS}, {:.2} s (limit {} s)",
            parts.join(", "),
            100.0 * GPD_MIN_HIT_RATE,
            took.as_secs_f64(),
            GPD_TIME.as_secs()
        ),
    )
}

fn gpd_cdf_values() -> Outcome {
    let cases = [(1.0, 0.0, 0.0, 0.0), (1.0, 0.0, 1.0, 0.6321), (1.0, 0.5, 1.0, 0.5556)];
    let mut worst_value = 0.0f64;
    for &(s, x, z, want) in &cases {
        let got = gpd_cdf(s, x, z).unwrap_or(f64::NAN);
        worst_value = worst_value.max((got - want).abs());
    }
    let mut worst_limit = 0.0f64;
    for &sigma in &[0.5f64, 1.0, 3.0] {
        for &z in &[0.0, 0.1, 1.0, 2.5, 5.0] {
            let exp = 1.0 - (-z / sigma).exp();
            for &xi in &[1e-7, -1e-7, 1e-9, -1e-9, 1e-12, -1e-12] {
                let got = gpd_cdf(sigma, xi, z).unwrap_or(f64::NAN);
                worst_limit = worst_limit.max((got - exp).abs());
            }
        }
    }
    outcome(
        worst_value <= CDF_VALUE_TOL && worst_limit <= CDF_LIMIT_TOL,
        format!(
            "worst hand-value error {worst_value:.2e} (tol {CDF_VALUE_TOL:e}), \
             worst |xi| -> 0 error {worst_limit:.2e} (tol {CDF_LIMIT_TOL:e})"
        ),
    )
}

fn formulas() -> Outcome {
    let o = openness(6, 6, 10).unwrap_or(f64::NAN);
    let w0 = fusion_weight(0.0).unwrap_or(f64::NAN);
    let w1 = fusion_weight(0.1340).unwrap_or(f64::NAN);
    let pass = (o - 0.1340).abs() <= FORMULA_TOL && w0 == 1.0 / 3.0 && (w1 - 0.2887).abs() <= FORMULA_TOL;
    outcome(
        pass,
        format!("openness(6,6,10) = {o:.6}, w(0) = {w0:?}, w(0.1340) = {w1:.6} (tol {FORMULA_TOL:e})"),
    )
}

// ---------------------------------------------------------------- MNIST

fn closed_set() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config();
    let data = match cfg.dataset.load() {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("dataset: {e}")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let by_class = data.class_columns();
    let mut classes: Vec<&ClassId> = by_class.keys().collect();
    classes.shuffle(&mut rng);
    let (mut train_cols, mut test_cols) = (Vec::new(), Vec::new());
    for c in classes.iter().take(CLOSED_CLASSES) {
        let mut cols = by_class[*c].clone();
        cols.shuffle(&mut rng);
        train_cols.extend_from_slice(&cols[..CLOSED_TRAIN]);
        test_cols.extend_from_slice(&cols[CLOSED_TRAIN..CLOSED_TRAIN + CLOSED_TEST]);
    }
    let train_set = data.select(&train_cols);
    let params = match TrainParams::preset(DatasetPreset::Mnist, 0.0, 7) {
        Ok(p) => TrainParams { solver: cfg.solver, ..p },
        Err(e) => return outcome(false, format!("params: {e}")),
    };
    let model = match train(&train_set, &params) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("training: {e}")),
    };
    let weights = [0.0, fusion_weight(0.1340).unwrap_or(0.0), 1.0 / 3.0];
    let (mut correct, mut agree, mut checked, mut errors) = (0, 0, 0, 0);
    for &src in &test_cols {
        let out = match represent(model.dictionary(), data.sample(src), params.epsilon, &params.solver) {
            Ok(o) => o,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        let src_label = out.label().clone();
        if src_label == data.labels()[src] {
            correct += 1;
        }
        for &w in &weights {
            checked += 1;
            if let Ok(d) = model.decide_at(&out.residuals, w, 1.0 + w) {
                if d.label == Label::Known(src_label.clone()) {
                    agree += 1;
                }
            }
        }
    }
    let acc = correct as f64 / test_cols.len() as f64;
    let took = start.elapsed();
    outcome(
        errors == 0 && acc >= CLOSED_MIN_ACCURACY && agree == checked && took < CLOSED_TIME,
        format!(
            "{CLOSED_CLASSES} classes x {CLOSED_TRAIN}/{CLOSED_TEST}: SRC accuracy {acc:.4} (need {CLOSED_MIN_ACCURACY}), \
             delta_t = 1 + w agreement {agree}/{checked}, {errors} solver errors, {:.1} s (limit {} s)",
            took.as_secs_f64(),
            CLOSED_TIME.as_secs()
        ),
    )
}

fn f_at(result: &SweepResult, level: usize, method: &str) -> f64 {
    result.levels[level]
        .methods
        .iter()
        .find(|m| m.method == method)
        .map_or(f64::NAN, |m| m.f_measure_mean)
}

fn complete(result: &SweepResult) -> bool {
    result.failures.is_empty()
        && result
            .levels
            .iter()
            .all(|l| l.methods.iter().all(|m| m.trials == result.config.trials))
}

fn ordering(result: &SweepResult, took: Duration) -> Outcome {
    let mut pass = complete(result) && took < SWEEP_TIME;
    let mut parts = Vec::new();
    for (li, level) in result.levels.iter().enumerate() {
        let (s, n, c) = (f_at(result, li, "srosr"), f_at(result, li, "naive"), f_at(result, li, "sci"));
        pass &= s >= n && s >= c;
        parts.push(format!("o={:.4}: srosr {s:.4} naive {n:.4} sci {c:.4}", level.openness));
    }
    let last = result.levels.len() - 1;
    let margin = f_at(result, last, "srosr") - f_at(result, last, "sci");
    pass &= margin >= SWEEP_MIN_MARGIN_OVER_SCI;
    outcome(
        pass,
        format!(
            "{}; margin over sci at max openness {margin:.4} (need {SWEEP_MIN_MARGIN_OVER_SCI}); \
             T = {}, {} failures, {:.1} s (limit {} s)",
            parts.join("; "),
            result.config.trials,
            result.failures.len(),
            took.as_secs_f64(),
            SWEEP_TIME.as_secs()
        ),
    )
}

fn ablation(result: &SweepResult) -> Outcome {
    let mut pass = complete(result);
    let mut parts = Vec::new();
    for (li, level) in result.levels.iter().enumerate() {
        let (full, matched) = (f_at(result, li, "srosr"), f_at(result, li, "srosr_matched_only"));
        pass &= full >= matched;
        parts.push(format!("o={:.4}: full {full:.4} matched-only {matched:.4}", level.openness));
    }
    outcome(pass, format!("{}; T = {}", parts.join("; "), result.config.trials))
}

// ---------------------------------------------------------------- invariants

fn zero_diag_code(x: Vec<f64>) -> SparseCode {
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

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failed: Vec<&str> = Vec::new();

    let (m, k, per) = (5, 4, 3);
    let cols: Vec<Vec<f64>> = (0..k * per).map(|_| unit_vector(&mut rng, m)).collect();
    let labels = (0..k * per).map(|j| ClassId::from((j / per) as u8)).collect();
    let dict = Dictionary::new(Matrix::from_columns(m, &cols).expect("shape"), labels).expect("dictionary");
    let mut sci_ok = true;
    for _ in 0..INVARIANT_DRAWS {
        let x: Vec<f64> = (0..k * per)
            .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(-3.0..3.0) })
            .collect();
        let scale = rng.random_range(0.01..100.0);
        let a = sci(&zero_diag_code(x.clone()), &dict).map(|s| s.value);
        let b = sci(&zero_diag_code(x.iter().map(|v| v * scale).collect()), &dict).map(|s| s.value);
        sci_ok &= matches!((a, b), (Ok(a), Ok(b)) if (0.0..=1.0).contains(&a) && (a - b).abs() < 1e-12);
    }
    if !sci_ok {
        failed.push("sci");
    }

    let mut fused_ok = true;
    for _ in 0..INVARIANT_DRAWS {
        let (sm, snm) = (rng.random::<f64>(), rng.random::<f64>());
        let w = rng.random_range(0.0..=1.0 / 3.0);
        fused_ok &= matches!(fuse_scores(sm, snm, w), Ok(f) if (0.0..=1.0 + w).contains(&f));
    }
    if !fused_ok {
        failed.push("fused score");
    }

    let mut tail_ok = true;
    for _ in 0..INVARIANT_DRAWS / 20 {
        let model = GpdModel {
            sigma: rng.random_range(0.01..5.0),
            xi: rng.random_range(-0.5..=0.5),
            threshold_u: rng.random_range(-2.0..2.0),
            tail_fraction: 0.1,
            n_exceedances: 100,
        };
        let mut raw: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..20.0)).collect();
        raw.sort_by(f64::total_cmp);
        let p: Vec<f64> = raw.iter().map(|&r| model.tail_probability(r)).collect();
        tail_ok &= p.windows(2).all(|w| w[0] <= w[1]) && p.iter().all(|v| (0.0..=1.0).contains(v));
    }
    if !tail_ok {
        failed.push("tail probability");
    }

    let mut metric_ok = true;
    let label = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.3) {
            Label::Open
        } else {
            Label::Known(ClassId::from(rng.random_range(0u8..4)))
        }
    };
    for _ in 0..INVARIANT_DRAWS / 10 {
        let n = rng.random_range(1..60);
        let truth: Vec<Label> = (0..n).map(|_| label(&mut rng)).collect();
        let pred: Vec<Label> = (0..n).map(|_| label(&mut rng)).collect();
        let Ok(c) = score_predictions(&pred, &truth) else {
            metric_ok = false;
            continue;
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        metric_ok &= c.total() == n
            && c.tp + c.fn_ == truth.iter().filter(|t| !t.is_open()).count()
            && unit(precision(&c).value)
            && unit(recall(&c).value)
            && unit(f_measure(&c).value)
            && accuracy(&c).is_ok_and(unit);
    }
    if !metric_ok {
        failed.push("metrics");
    }

    let mut small = desk_config();
    small.trials = 2;
    small.open_levels = vec![1, 3];
    small.max_per_class = Some(50);
    small.methods.retain(|m| !matches!(m, MethodConfig::Ratio { .. }));
    let serialized = |seed| run_from_config(&small, seed).and_then(|r| Ok(serde_json::to_vec(&r)?));
    let (first, second, other) = (serialized(5), serialized(5), serialized(6));
    let reproducible = matches!((&first, &second, &other), (Ok(a), Ok(b), Ok(c)) if a == b && a != c);
    if !reproducible {
        failed.push("sweep reproducibility");
    }

    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            "sci bounds and scale invariance, fused bounds, tail monotonicity, metric bounds and \
             count conservation, bit-identical sweep reports"
                .to_string()
        } else {
            format!("violated: {}", failed.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: u32, name: &str, o: Outcome| {
        all &= o.pass;
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "l1 oracle equivalence", l1_oracle());
    report(2, "GPD recovery", gpd_recovery());
    report(3, "GPD CDF values", gpd_cdf_values());
    report(4, "openness and fusion weight", formulas());
    report(5, "closed-set sanity", closed_set());

    let mut cfg = desk_config();
    cfg.trials = SWEEP_TRIALS;
    let start = Instant::now();
    match run_from_config(&cfg, SWEEP_SEED) {
        Ok(result) => {
            let took = start.elapsed();
            report(6, "openness sweep ordering", ordering(&result, took));
            report(7, "fusion ablation", ablation(&result));
        }
        Err(e) => {
            report(6, "openness sweep ordering", outcome(false, format!("sweep failed: {e}")));
            report(7, "fusion ablation", outcome(false, format!("sweep failed: {e}")));
        }
    }
    report(8, "invariant suites", invariants());

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
