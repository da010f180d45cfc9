use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use srosr::harness::{emit_report, run_from_config, ReportFormat, SweepConfig};
use srosr::io::{load_samples, DatasetKind, DatasetSpec};
use srosr::model_file::{load_model, save_naive, save_srosr, StoredModel};
use srosr_core::baselines::{naive_train, NaiveParams};
use srosr_core::evt::fit_gpd_tail;
use srosr_core::linalg::Matrix;
use srosr_core::metrics::Label;
use srosr_core::sparse::{represent, solve_l1_matrix, SolverConfig, SolverKind};
use srosr_core::srosr::{fusion_weight, train, DatasetPreset, TrainParams, DEFAULT_EPSILON, DEFAULT_ROUNDS};
use srosr_core::ErrorKind;

#[derive(Parser)]
#[command(name = "srosr", version, about = "Sparse representation based open set recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a Generalized Pareto tail to a list of samples.
    FitGpd {
        /// Text file of numbers.
        samples: PathBuf,
        #[arg(long)]
        rho: f64,
        /// Write the model JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Classify every sample of a dataset with a stored model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Decisions CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an openness sweep described by a JSON or TOML file.
    Sweep(SweepArgs),
    /// Time the l1 solvers on random unit-norm dictionaries.
    Bench {
        #[arg(long, default_value_t = 49)]
        rows: usize,
        #[arg(long, default_value_t = 400)]
        cols: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = SolverArg::Homotopy)]
        solver: SolverArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Image IDX file or dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Label IDX file (IDX datasets only).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Idx)]
    kind: KindArg,
    /// Block-average factor for image data.
    #[arg(long)]
    downsample: Option<usize>,
}

impl DataArgs {
    fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            kind: match self.kind {
                KindArg::Idx => DatasetKind::Idx,
                KindArg::Csv => DatasetKind::Csv,
            },
            path: self.data.clone(),
            labels: self.labels.clone(),
            downsample: self.downsample,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Idx,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Homotopy,
    Proximal,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Homotopy => SolverKind::Homotopy,
            SolverArg::Proximal => SolverKind::ProximalBisection,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Srosr,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Mnist,
    Yaleb,
    Uiuc,
    Caltech256,
}

impl From<PresetArg> for DatasetPreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Mnist => DatasetPreset::Mnist,
            PresetArg::Yaleb => DatasetPreset::ExtendedYaleB,
            PresetArg::Uiuc => DatasetPreset::Uiuc,
            PresetArg::Caltech256 => DatasetPreset::Caltech256,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Srosr)]
    method: MethodArg,
    /// Supplies rho and delta_t unless given explicitly.
    #[arg(long, value_enum, default_value_t = PresetArg::Mnist)]
    preset: PresetArg,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta_t: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    rounds: usize,
    /// Expected openness at deployment; sets the fusion weight.
    #[arg(long, default_value_t = 0.0)]
    openness: f64,
    /// Quantile of the naive residual threshold.
    #[arg(long, default_value_t = 0.95)]
    quantile: f64,
    #[arg(long, value_enum, default_value_t = SolverArg::Homotopy)]
    solver: SolverArg,
    /// Relative duality gap accepted by the solver.
    #[arg(long)]
    gap_tolerance: Option<f64>,
    /// Code samples outside the span of the dictionary at their smallest
    /// attainable residual instead of failing.
    #[arg(long)]
    allow_infeasible: bool,
    #[arg(long)]
    seed: u64,
    /// Model JSON path; the dictionary goes next to it with extension `.dic`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n_known: Option<usize>,
    /// Comma-separated open class counts.
    #[arg(long, value_delimiter = ',')]
    open_levels: Option<Vec<usize>>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    max_per_class: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    downsample: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let kind = e
        .chain()
        .find_map(|c| {
            c.downcast_ref::<srosr::Error>()
                .map(srosr::Error::kind)
                .or_else(|| c.downcast_ref::<srosr_core::Error>().map(srosr_core::Error::kind))
        })
        .unwrap_or(ErrorKind::Config);
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::FitGpd { samples, rho, out } => {
            let values = load_samples(&samples)?;
            let fit = fit_gpd_tail(&values, rho).map_err(srosr::Error::from)?;
            let json = serde_json::to_string_pretty(&fit.model)?;
            write_or_print(out.as_deref(), &json)
        }
        Command::Train(args) => train_cmd(args),
        Command::Classify { model, data, out } => classify_cmd(&model, &data, out.as_deref()),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Bench {
            rows,
            cols,
            count,
            epsilon,
            solver,
            seed,
        } => bench_cmd(rows, cols, count, epsilon, solver.into(), seed),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| srosr::Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => print!("{text}"),
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let data = a.data.spec().load()?;
    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        kind: a.solver.into(),
        gap_tolerance: a.gap_tolerance.unwrap_or(defaults.gap_tolerance),
        allow_infeasible: a.allow_infeasible,
        ..defaults
    };
    match a.method {
        MethodArg::Srosr => {
            let preset = DatasetPreset::from(a.preset);
            let w = fusion_weight(a.openness).map_err(srosr::Error::from)?;
            let params = TrainParams {
                rho: a.rho.unwrap_or(preset.rho()),
                epsilon: a.epsilon,
                rounds: a.rounds,
                openness_est: a.openness,
                delta_t: a.delta_t.unwrap_or(preset.delta_t(w)),
                seed: a.seed,
                solver,
            };
            let model = train(&data, &params).map_err(srosr::Error::from)?;
            save_srosr(&model, &a.out)?;
        }
        MethodArg::Naive => {
            let model = naive_train(
                &data,
                &NaiveParams {
                    quantile_q: a.quantile,
                    epsilon: a.epsilon,
                    rounds: a.rounds,
                    seed: a.seed,
                    solver,
                },
            )
            .map_err(srosr::Error::from)?;
            save_naive(&model, &a.out)?;
        }
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn classify_cmd(model_path: &Path, data: &DataArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let model = load_model(model_path)?;
    let data = data.spec().load()?;
    if data.dim() != model.dictionary().dim() {
        bail!(srosr::Error::from(srosr_core::Error::DimensionMismatch {
            expected: model.dictionary().dim(),
            got: data.dim(),
        }));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "truth", "prediction", "candidate", "s_matched", "s_nonmatched", "fused"])?;
    for j in 0..data.len() {
        let y = data.sample(j);
        let row = match &model {
            StoredModel::Srosr(m) => {
                let d = m.classify(y).map_err(srosr::Error::from)?;
                [
                    j.to_string(),
                    data.labels()[j].to_string(),
                    d.label.to_string(),
                    d.candidate.to_string(),
                    d.s_matched.to_string(),
                    d.s_nonmatched.to_string(),
                    d.fused.to_string(),
                ]
            }
            StoredModel::Naive(m) => {
                let out = represent(m.dictionary(), y, m.epsilon(), m.solver()).map_err(srosr::Error::from)?;
                let label: Label = m.decide(&out.residuals);
                [
                    j.to_string(),
                    data.labels()[j].to_string(),
                    label.to_string(),
                    out.label().to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]
            }
        };
        w.write_record(&row)?;
    }
    let text = String::from_utf8(w.into_inner().context("flushing decisions")?)?;
    write_or_print(out, &text)
}

fn sweep_cmd(a: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = SweepConfig::from_file(&a.config)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(n) = a.n_known {
        cfg.n_known = n;
    }
    if let Some(l) = a.open_levels {
        cfg.open_levels = l;
    }
    if let Some(f) = a.train_fraction {
        cfg.train_fraction = f;
    }
    if a.max_per_class.is_some() {
        cfg.max_per_class = a.max_per_class;
    }
    if let Some(d) = a.data {
        cfg.dataset.path = d;
    }
    if a.labels.is_some() {
        cfg.dataset.labels = a.labels;
    }
    if a.downsample.is_some() {
        cfg.dataset.downsample = a.downsample;
    }
    let result = run_from_config(&cfg, a.seed)?;
    for f in &result.failures {
        eprintln!("warning: trial {} method {} failed: {}", f.trial, f.method, f.error);
    }
    let format = match a.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    match a.out {
        Some(p) => emit_report(&result, format, &p)?,
        None => match format {
            ReportFormat::Csv => print!("{}", srosr::harness::report_csv(&result)?),
            ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&result)?),
        },
    }
    Ok(())
}

fn bench_cmd(rows: usize, cols: usize, count: usize, epsilon: f64, kind: SolverKind, seed: u64) -> anyhow::Result<()> {
    if rows == 0 || cols == 0 || count == 0 {
        bail!(srosr::Error::Config("rows, cols and count must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut unit = |n: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = srosr_core::linalg::norm2(&v);
        v.into_iter().map(|x| x / s).collect()
    };
    let atoms: Vec<Vec<f64>> = (0..cols).map(|_| unit(rows)).collect();
    let a = Matrix::from_columns(rows, &atoms).map_err(srosr::Error::from)?;
    let ys: Vec<Vec<f64>> = (0..count).map(|_| unit(rows)).collect();
    let cfg = SolverConfig {
        kind,
        allow_infeasible: true,
        ..SolverConfig::default()
    };
    let start = Instant::now();
    let mut iterations = 0;
    let mut worst_gap = 0.0f64;
    for y in &ys {
        let code = solve_l1_matrix(&a, y, epsilon, &cfg).map_err(srosr::Error::from)?;
        iterations += code.iterations;
        worst_gap = worst_gap.max(code.diagnostics.gap);
    }
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{count} solves of {rows}x{cols}: {:.3} ms/solve, {:.1} iterations/solve, worst gap {worst_gap:.3e}",
        1e3 * secs / count as f64,
        iterations as f64 / count as f64
    );
    Ok(())
}
