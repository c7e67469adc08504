//! Subcommand dispatch. [`run`] never exits the process, so tests can drive
//! it directly.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use radcal_core::geometry::Extrinsics;
use radcal_core::losses::{LossError, TargetGeometry};
use radcal_core::model::init_weights;
use radcal_core::optimizer::{run_calibration, OptimizerError};
use radcal_core::pipeline::{boundary_check, evaluate_loss, monte_carlo, reprojection_histogram, run_ablation};
use radcal_core::simulator::{self, CircleScene, SceneSpec, SimWarning};

use crate::checkpoint::{self, CheckpointError};
use crate::config_io::{load_config, ConfigFileError, InitialDoc, ResolvedConfig};
use crate::dataset_io::{self, DatasetFile, LoadError};
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "radcal", version, about = "Target-based RADAR-LIDAR extrinsic calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known extrinsics.
    Simulate(SimulateArgs),
    /// Optimize the extrinsics and print the result.
    Calibrate(CalibrateArgs),
    /// Run every loss configuration from the same initial guess.
    Ablate(RunArgs),
    /// Repeated calibration on random observation subsets.
    Montecarlo(MonteCarloArgs),
    /// Score the configured extrinsics without optimizing.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML config file; missing keys take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set weights.ray=0` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Write a CSV report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Save the trained network here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Fraction of observations kept per run.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Network for the regression term; untrained weights otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate at the dataset's ground truth instead of the configured init.
    #[arg(long)]
    truth: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    /// Returns kept per target and frame (0 keeps every cell).
    #[arg(long, default_value_t = 24)]
    samples_per_target: usize,
    /// No LIDAR noise, no energy noise, no quantization.
    #[arg(long)]
    noise_free: bool,
    /// Also write a config whose initial extrinsics are the truth perturbed
    /// by `--perturb-deg` and `--perturb-m`.
    #[arg(long)]
    init_config: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    perturb_deg: f64,
    #[arg(long, default_value_t = 0.05)]
    perturb_m: f64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Simulator(#[from] simulator::SimulatorError),
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Optimizer(OptimizerError::NonFiniteGradient { .. } | OptimizerError::Diverged { .. })
            | CliError::Optimizer(OptimizerError::Loss(LossError::DegeneratePoint { .. } | LossError::Diff(_)))
            | CliError::Loss(LossError::DegeneratePoint { .. } | LossError::Diff(_)) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => simulate(a, out, err),
        Command::Calibrate(a) => calibrate(a, out),
        Command::Ablate(a) => ablate(a, out),
        Command::Montecarlo(a) => montecarlo(a, out),
        Command::Evaluate(a) => evaluate(a, out),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|source| CliError::Write { path: "<stdout>".into(), source })
}

fn load(args: &RunArgs) -> Result<(DatasetFile, ResolvedConfig), CliError> {
    let config = load_config(args.config.config.as_deref(), &args.config.overrides)?;
    let data = dataset_io::load_dataset(&args.data)?;
    Ok((data, config))
}

fn format_row(label: &str, p: &[f64; 6]) -> String {
    format!(
        "{label:<8} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
        p[0], p[1], p[2], p[3], p[4], p[5]
    )
}

fn table_header() -> String {
    format!(
        "{:<8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "", "θx (deg)", "θy (deg)", "θz (deg)", "tx (m)", "ty (m)", "tz (m)"
    )
}

fn simulate(a: SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if a.frames == 0 {
        return Err(CliError::Usage("--frames must be positive".into()));
    }
    let layout = CircleScene { frames: a.frames, ..CircleScene::default() };
    let mut spec = SceneSpec::circle(&layout, a.seed);
    spec.samples_per_target = a.samples_per_target;
    if a.noise_free {
        spec.lidar_noise = 0.0;
        spec.energy.noise = 0.0;
        spec.quantize = false;
    }
    let synth = simulator::generate(&spec)?;
    for w in &synth.warnings {
        let SimWarning::TargetNeverVisible { target } = w;
        let _ = writeln!(err, "warning: target {target} never inside the RADAR beam");
    }
    let file = DatasetFile { dataset: synth.dataset, ground_truth: Some(synth.truth) };
    write_file(&a.out, &dataset_io::to_toml(&file))?;
    if let Some(path) = &a.init_config {
        let init = simulator::perturb(&synth.truth, a.perturb_deg, a.perturb_m, a.seed);
        let doc = crate::config_io::ConfigDoc { seed: a.seed, initial: initial_doc(&init), ..Default::default() };
        let resolved = ResolvedConfig::try_from(doc)?;
        write_file(path, &resolved.to_toml())?;
    }
    emit(
        out,
        &format!(
            "{} frames, {} observations, {} returns\n{}{}",
            file.dataset.frames.len(),
            file.dataset.observation_count(),
            file.dataset.sample_count(),
            table_header(),
            format_row("truth", &synth.truth.parameter_row())
        ),
    )
}

fn initial_doc(e: &Extrinsics) -> InitialDoc {
    let p = e.parameter_row();
    InitialDoc { euler_deg: [p[0], p[1], p[2]], translation: [p[3], p[4], p[5]] }
}

fn calibrate(a: CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (data, config) = load(&a.run)?;
    let result = run_calibration(&data.dataset, &config.config)?;
    if let Some(path) = &a.run.report {
        write_file(path, &report::calibration_csv(&config, &result))?;
    }
    if let (Some(path), Some(net)) = (&a.checkpoint, &result.network) {
        checkpoint::save(path, net)?;
    }
    let mut text = table_header();
    text += &format_row("initial", &config.initial_row());
    text += &format_row("result", &result.parameter_row());
    text += &format!("loss {} after {} steps ({:?})\n", result.final_loss.total, result.steps(), result.stop);
    emit(out, &text)
}

fn ablate(a: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (data, config) = load(&a)?;
    let mut table = run_ablation(&data.dataset, &config.config)?;
    // Echo the init exactly as written rather than through a rotation round trip.
    table.rows[0].parameters = config.initial_row();
    if let Some(path) = &a.report {
        write_file(path, &report::ablation_csv(&config, &table))?;
    }
    let mut text = table_header();
    for r in &table.rows {
        text += &format_row(&r.label, &r.parameters);
    }
    emit(out, &text)
}

fn montecarlo(a: MonteCarloArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (data, config) = load(&a.run)?;
    let mc = monte_carlo(&data.dataset, &config.config, a.runs, a.fraction, config.config.seed)?;
    if let Some(path) = &a.run.report {
        write_file(path, &report::monte_carlo_csv(&config, a.runs, a.fraction, &mc))?;
    }
    let done = mc.completed().count();
    let mut text = format!("{done} of {} runs completed\n{}", a.runs, table_header());
    for (name, pick) in [("q1", 0usize), ("median", 1), ("q3", 2), ("iqr", 3)] {
        let mut row = [f64::NAN; 6];
        for (p, q) in mc.quantiles.iter().enumerate() {
            if let Some(q) = q {
                row[p] = [q.q1, q.median, q.q3, q.iqr()][pick];
            }
        }
        text += &format_row(name, &row);
    }
    emit(out, &text)
}

fn evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (data, config) = load(&a.run)?;
    let ext = if a.truth {
        data.ground_truth.ok_or_else(|| CliError::Usage("--truth: dataset has no ground truth".into()))?
    } else {
        config.config.initial
    };
    let cfg = &config.config;
    let network = match (&a.checkpoint, cfg.weights.mlp > 0.0) {
        (Some(path), _) => Some(checkpoint::load(path)?),
        (None, true) => Some(init_weights(cfg.seed, cfg.encoding().map_err(ConfigFileError::from)?)),
        (None, false) => None,
    };
    let loss = evaluate_loss(&ext, network.as_ref(), &data.dataset, cfg)?;
    let reprojection = reprojection_histogram(&ext, &data.dataset);
    let boundary = boundary_check(&ext, &data.dataset, &TargetGeometry { radius: cfg.target_radius });
    if let Some(path) = &a.run.report {
        write_file(path, &report::evaluation_csv(&config, &ext, &loss, &reprojection, &boundary))?;
    }
    let mut text = table_header();
    text += &format_row("at", &ext.parameter_row());
    let term = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    text += &format!(
        "loss total {:.6}  rep {}  mlp {}  ray {}\n",
        loss.total,
        term(loss.rep),
        term(loss.mlp),
        term(loss.ray)
    );
    text += &format!(
        "mean |Δrange| {:.4} m, mean |Δazimuth| {:.4}°\n",
        reprojection.mean_range_error(),
        reprojection.mean_azimuth_error().to_degrees()
    );
    text += &report::histogram_text("range error", 1.0, "m", &reprojection.range);
    text += &report::histogram_text("azimuth error", 1f64.to_degrees(), "deg", &reprojection.azimuth);
    text += &format!(
        "elevation boundary: {:.1}% of centers outside ±asin(r/ρ)\n",
        100.0 * boundary.violation_fraction
    );
    emit(out, &text)
}
