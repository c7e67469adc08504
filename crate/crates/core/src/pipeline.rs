//! Experiment orchestration and evaluation metrics.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CalibConfig, LossWeights};
use crate::dataset::{CalibDataset, Frame};
use crate::geometry::{to_spherical, Extrinsics};
use crate::losses::{reprojection_residual, total_loss, LossBreakdown, LossError, TargetGeometry};
use crate::math;
use crate::model::{Encoding, MlpWeights, ModelError, TargetLocalSample};
use crate::optimizer::{fit_energy_field, run_calibration, FitConfig, OptimizerError};

pub const RANGE_BIN: f64 = 0.02;
pub const AZIMUTH_BIN_DEG: f64 = 0.2;
pub const ENERGY_BIN: f64 = 0.02;

/// Counts of non-negative values in `[k·w, (k+1)·w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: impl IntoIterator<Item = f64>, bin_width: f64) -> Self {
        let mut counts: Vec<usize> = Vec::new();
        for v in values {
            let k = math::floor(math::abs(v) / bin_width) as usize;
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        Self { bin_width, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(lower edge, upper edge, count)` per bin.
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width, c))
    }
}

// ---------------------------------------------------------------------------
// ablation

/// The four loss configurations compared against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Rep,
    Mlp,
    MlpRay,
    RepRay,
}

impl Objective {
    pub const ALL: [Objective; 4] = [Objective::Rep, Objective::Mlp, Objective::MlpRay, Objective::RepRay];

    pub fn label(self) -> &'static str {
        match self {
            Objective::Rep => "rep",
            Objective::Mlp => "mlp",
            Objective::MlpRay => "mlp+ray",
            Objective::RepRay => "rep+ray",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.label() == s)
    }

    /// Zeroes the outer weights this objective leaves out; the others keep
    /// their configured values.
    pub fn apply(self, base: &LossWeights) -> LossWeights {
        let mut w = *base;
        match self {
            Objective::Rep => {
                w.mlp = 0.0;
                w.ray = 0.0;
            }
            Objective::Mlp => w.ray = 0.0,
            Objective::MlpRay => {}
            Objective::RepRay => w.mlp = 0.0,
        }
        w
    }

    pub fn config(self, base: &CalibConfig) -> CalibConfig {
        CalibConfig { weights: self.apply(&base.weights), ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub parameters: [f64; 6],
    /// Total loss at the initial parameters and at the result; `None` for
    /// the initial row.
    pub loss: Option<(LossBreakdown, LossBreakdown)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Runs every objective from the configured initial extrinsics. The first
/// row echoes the initial parameters.
pub fn run_ablation(dataset: &CalibDataset, config: &CalibConfig) -> Result<AblationTable, OptimizerError> {
    config.validate_for_run()?;
    let mut rows = alloc::vec![AblationRow {
        label: String::from("initial"),
        parameters: config.initial.parameter_row(),
        loss: None,
    }];
    for objective in Objective::ALL {
        let cfg = objective.config(config);
        let result = run_calibration(dataset, &cfg)?;
        let start = result.trajectory.first().map_or(result.final_loss, |r| r.loss);
        rows.push(AblationRow {
            label: String::from(objective.label()),
            parameters: result.parameter_row(),
            loss: Some((start, result.final_loss)),
        });
    }
    Ok(AblationTable { rows })
}

// ---------------------------------------------------------------------------
// Monte Carlo

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub index: usize,
    pub observations: usize,
    /// `None` when the subsample could not be calibrated.
    pub parameters: Option<[f64; 6]>,
    pub skipped: Option<String>,
}

/// Five-number summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quantiles {
    /// Linear interpolation between order statistics; `None` for no data.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = math::floor(pos) as usize;
            let hi = (lo + 1).min(v.len() - 1);
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self { min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub runs: Vec<MonteCarloRun>,
    /// Per parameter in `[θx, θy, θz, tx, ty, tz]` order, over completed runs.
    pub quantiles: [Option<Quantiles>; 6],
}

impl MonteCarloReport {
    pub fn completed(&self) -> impl Iterator<Item = &[f64; 6]> {
        self.runs.iter().filter_map(|r| r.parameters.as_ref())
    }

    pub fn iqr(&self, parameter: usize) -> Option<f64> {
        self.quantiles[parameter].map(|q| q.iqr())
    }
}

/// Keeps `⌈frac·N⌉` observations drawn without replacement. Frames keep
/// their poses; each kept observation keeps the returns of its target in
/// that frame, and frames with nothing kept are dropped.
pub fn subsample(dataset: &CalibDataset, frac: f64, rng: &mut ChaCha8Rng) -> CalibDataset {
    let index: Vec<(usize, usize)> = dataset
        .frames
        .iter()
        .enumerate()
        .flat_map(|(f, frame)| (0..frame.observations.len()).map(move |k| (f, k)))
        .collect();
    let n = index.len();
    let keep = (math::ceil(frac * n as f64) as usize).min(n);
    let mut chosen = alloc::vec![false; n];
    for i in sample(rng, n, keep).into_iter() {
        chosen[i] = true;
    }
    let mut frames = Vec::new();
    let mut i = 0;
    for frame in &dataset.frames {
        let mut observations = Vec::new();
        for obs in &frame.observations {
            if chosen[i] {
                observations.push(obs.clone());
            }
            i += 1;
        }
        if observations.is_empty() {
            continue;
        }
        let samples = frame
            .samples
            .iter()
            .filter(|s| observations.iter().any(|o| o.target == s.target))
            .cloned()
            .collect();
        frames.push(Frame { id: frame.id, poses: frame.poses.clone(), observations, samples });
    }
    CalibDataset { frames }
}

/// Repeated calibration on random observation subsets. Every run uses the
/// same network seed; only the subset differs.
pub fn monte_carlo(
    dataset: &CalibDataset,
    config: &CalibConfig,
    runs: usize,
    frac: f64,
    seed: u64,
) -> Result<MonteCarloReport, OptimizerError> {
    config.validate_for_run()?;
    dataset.validate()?;
    if dataset.observation_count() < 4 {
        return Err(OptimizerError::InvalidArgument("Monte Carlo needs at least 4 observations"));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(OptimizerError::InvalidArgument("subsample fraction must be in (0, 1]"));
    }
    let mut out = Vec::with_capacity(runs);
    for index in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let subset = subsample(dataset, frac, &mut rng);
        let observations = subset.observation_count();
        let run = match run_calibration(&subset, config) {
            Ok(r) => MonteCarloRun { index, observations, parameters: Some(r.parameter_row()), skipped: None },
            Err(OptimizerError::Loss(e @ LossError::EmptyBatch(_))) => {
                MonteCarloRun { index, observations, parameters: None, skipped: Some(alloc::format!("{e}")) }
            }
            Err(e) => return Err(e),
        };
        out.push(run);
    }
    let quantiles = core::array::from_fn(|p| {
        let values: Vec<f64> = out.iter().filter_map(|r| r.parameters.map(|x| x[p])).collect();
        Quantiles::of(&values)
    });
    Ok(MonteCarloReport { runs: out, quantiles })
}

// ---------------------------------------------------------------------------
// boundary check

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryRecord {
    pub frame: u32,
    pub target: u32,
    /// Distance from the RADAR origin to the projected LIDAR center, meters.
    pub radial_distance: f64,
    /// Angle above the RADAR x-y plane, radians.
    pub elevation: f64,
    /// `asin(r/ρ)`; `None` when the origin lies inside the sphere.
    pub limit: Option<f64>,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub records: Vec<BoundaryRecord>,
    /// Violations over records that have a limit.
    pub violation_fraction: f64,
    pub inside_sphere: usize,
}

pub fn boundary_limit(radial_distance: f64, radius: f64) -> Option<f64> {
    (radial_distance > radius).then(|| math::asin(radius / radial_distance))
}

/// Projects every LIDAR center into the RADAR frame and checks whether a
/// RADAR-plane ray can still touch the reflector's circumscribed sphere.
pub fn boundary_check(extrinsics: &Extrinsics, dataset: &CalibDataset, geom: &TargetGeometry) -> BoundaryReport {
    let mut records = Vec::with_capacity(dataset.observation_count());
    for frame in &dataset.frames {
        for obs in &frame.observations {
            let x = extrinsics.transform_point(&obs.center);
            let (rho, elevation) = match to_spherical(&x) {
                Ok(s) => (s.range, s.elevation),
                Err(_) => (0.0, 0.0),
            };
            let limit = boundary_limit(rho, geom.radius);
            let violation = limit.is_some_and(|l| math::abs(elevation) > l);
            records.push(BoundaryRecord { frame: frame.id, target: obs.target, radial_distance: rho, elevation, limit, violation });
        }
    }
    let checked = records.iter().filter(|r| r.limit.is_some()).count();
    let violations = records.iter().filter(|r| r.violation).count();
    BoundaryReport {
        violation_fraction: if checked == 0 { 0.0 } else { violations as f64 / checked as f64 },
        inside_sphere: records.len() - checked,
        records,
    }
}

// ---------------------------------------------------------------------------
// reprojection histogram

#[derive(Debug, Clone, PartialEq)]
pub struct ReprojectionReport {
    /// Per observation `(|Δrange| m, |Δazimuth| rad)`; `None` for a center
    /// mapping onto the RADAR origin.
    pub errors: Vec<Option<(f64, f64)>>,
    pub range: Histogram,
    /// Bin width in radians (0.2°).
    pub azimuth: Histogram,
}

impl ReprojectionReport {
    pub fn mean_range_error(&self) -> f64 {
        let v: Vec<f64> = self.errors.iter().flatten().map(|e| e.0).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    pub fn mean_azimuth_error(&self) -> f64 {
        let v: Vec<f64> = self.errors.iter().flatten().map(|e| e.1).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

pub fn reprojection_histogram(extrinsics: &Extrinsics, dataset: &CalibDataset) -> ReprojectionReport {
    let errors: Vec<Option<(f64, f64)>> = dataset
        .frames
        .iter()
        .flat_map(|f| f.observations.iter())
        .map(|obs| reprojection_residual(extrinsics, obs).ok().map(|(dr, da)| (math::abs(dr), math::abs(da))))
        .collect();
    let range = Histogram::new(errors.iter().flatten().map(|e| e.0), RANGE_BIN);
    let azimuth = Histogram::new(errors.iter().flatten().map(|e| e.1), AZIMUTH_BIN_DEG.to_radians());
    ReprojectionReport { errors, range, azimuth }
}

// ---------------------------------------------------------------------------
// regression errors

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub encoding: Encoding,
    pub errors: Vec<f64>,
    pub histogram: Histogram,
}

impl RegressionReport {
    pub fn mean_error(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len().max(1) as f64
    }
}

pub fn regression_error_report(weights: &MlpWeights, samples: &[TargetLocalSample]) -> Result<RegressionReport, ModelError> {
    let predictions = weights.predict_batch(samples)?;
    let errors: Vec<f64> = predictions.iter().zip(samples).map(|(p, s)| math::abs(p - s.energy)).collect();
    let histogram = Histogram::new(errors.iter().copied(), ENERGY_BIN);
    Ok(RegressionReport { encoding: weights.encoding, errors, histogram })
}

/// Trains one network with the configured encoding and one on raw inputs
/// under the same budget and seed, and reports both.
pub fn compare_encodings(
    samples: &[TargetLocalSample],
    encoding: Encoding,
    iterations: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<(RegressionReport, RegressionReport), OptimizerError> {
    let fit = |encoding| {
        let r = fit_energy_field(samples, &FitConfig { encoding, iterations, learning_rate, seed })?;
        regression_error_report(&r.weights, samples).map_err(|e| OptimizerError::Loss(e.into()))
    };
    Ok((fit(encoding)?, fit(Encoding::Raw)?))
}

/// Loss at the configured extrinsics without optimizing, with an untrained
/// network when the regression term is on.
pub fn evaluate_loss(
    extrinsics: &Extrinsics,
    network: Option<&MlpWeights>,
    dataset: &CalibDataset,
    config: &CalibConfig,
) -> Result<LossBreakdown, LossError> {
    total_loss(extrinsics, network, dataset, config)
}
