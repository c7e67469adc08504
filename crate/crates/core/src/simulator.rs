//! Synthetic scenes with known extrinsics.
//!
//! A robot carrying both sensors drives a circle around a few reflectors.
//! The LIDAR sees each reflector center with small Gaussian noise; the RADAR
//! reports a quantized range/azimuth detection plus returns on its polar
//! grid whose energy is a Gaussian bump in angular and radial offset from the
//! true sensor→center ray.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::{CalibDataset, Frame, FramePoseSet, LidarTargetObservation, RadarSample, TargetPose};
use crate::geometry::{self, dot, norm, AxisAngle, Extrinsics, Pose, Vec3};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub peak: f64,
    /// Angular falloff σ, degrees.
    pub sigma_angular_deg: f64,
    /// Radial falloff σ, meters.
    pub sigma_radial: f64,
    /// Additive Gaussian noise σ before clamping to [0, 1].
    pub noise: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { peak: 1.0, sigma_angular_deg: 1.0, sigma_radial: 0.1, noise: 0.01 }
    }
}

impl EnergyModel {
    /// Noise-free energy of the return at `cell` along `direction` (unit)
    /// for a reflector centered at `center`, all in the RADAR frame.
    pub fn energy(&self, center: &Vec3, cell: &Vec3, direction: &Vec3) -> f64 {
        let range = norm(center);
        let cos = (dot(direction, center) / range).clamp(-1.0, 1.0);
        let d_ang = math::acos(cos);
        let d_rad = norm(cell) - range;
        let s_ang = self.sigma_angular_deg.to_radians();
        self.peak
            * math::exp(-d_ang * d_ang / (2.0 * s_ang * s_ang))
            * math::exp(-d_rad * d_rad / (2.0 * self.sigma_radial * self.sigma_radial))
    }
}

/// RADAR discretization and beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarGrid {
    pub range_bin: f64,
    pub azimuth_bin_deg: f64,
    pub vertical_fov_deg: f64,
}

impl Default for RadarGrid {
    fn default() -> Self {
        Self { range_bin: 0.044, azimuth_bin_deg: 0.9, vertical_fov_deg: 1.8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub extrinsics: Extrinsics,
    /// world ← target, indexed by target id.
    pub targets: Vec<Pose>,
    /// world ← LIDAR, one per frame.
    pub lidar_poses: Vec<Pose>,
    pub energy: EnergyModel,
    pub grid: RadarGrid,
    /// Round detections to the grid.
    pub quantize: bool,
    /// Per-axis σ of the LIDAR center estimate, meters.
    pub lidar_noise: f64,
    pub target_radius: f64,
    pub sampling_radius: f64,
    /// Returns kept per target and frame (0 keeps every cell). Half are the
    /// strongest cells, the rest drawn uniformly from the remainder.
    pub samples_per_target: usize,
    pub seed: u64,
}

/// Knobs of the default circular scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleScene {
    pub frames: usize,
    /// Frame `k` sits on the circle of radius `radii[k % 2]`, so neighboring
    /// headings are seen from different distances.
    pub radii: [f64; 2],
    pub lidar_height: f64,
    /// σ of per-frame roll and pitch, degrees.
    pub attitude_jitter_deg: f64,
    /// Height of each reflector center above the RADAR plane of a level
    /// robot, meters.
    pub target_heights: [f64; 3],
}

impl Default for CircleScene {
    fn default() -> Self {
        Self { frames: 30, radii: [4.5, 7.5], lidar_height: 0.8, attitude_jitter_deg: 1.0, target_heights: [0.0, 0.15, -0.12] }
    }
}

/// Ground truth used by the default scenes.
pub fn default_extrinsics() -> Extrinsics {
    Pose::from_euler_translation([0.4, 0.6, 1.5], [0.52, -0.27, 0.08]).expect("finite")
}

impl SceneSpec {
    /// Three tilted reflectors near the origin, robot on a circle around them.
    pub fn circle(layout: &CircleScene, seed: u64) -> Self {
        let extrinsics = default_extrinsics();
        let radar_height = layout.lidar_height + extrinsics.inverse().translation[2];
        let targets = [
            ([0.0, 0.0, 0.0], [0.0, 0.0, radar_height + layout.target_heights[0]]),
            ([25.0, 0.0, 40.0], [2.2, 1.0, radar_height + layout.target_heights[1]]),
            ([0.0, -30.0, -70.0], [-1.0, 2.3, radar_height + layout.target_heights[2]]),
        ]
        .iter()
        .map(|&(e, t)| Pose::from_euler_translation(e, t).expect("finite"))
        .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c17c);
        let jitter = Normal::new(0.0, layout.attitude_jitter_deg).expect("σ ≥ 0");
        let center = [0.4, 1.1];
        let lidar_poses = (0..layout.frames)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / layout.frames as f64;
                let heading = (phi + PI / 2.0).to_degrees();
                let roll = jitter.sample(&mut rng);
                let pitch = jitter.sample(&mut rng);
                let pos = [
                    center[0] + layout.radii[k % 2] * math::cos(phi),
                    center[1] + layout.radii[k % 2] * math::sin(phi),
                    layout.lidar_height,
                ];
                Pose::from_euler_translation([roll, pitch, heading], pos).expect("finite")
            })
            .collect();
        Self {
            extrinsics,
            targets,
            lidar_poses,
            energy: EnergyModel::default(),
            grid: RadarGrid::default(),
            quantize: true,
            lidar_noise: 0.005,
            target_radius: 0.3,
            sampling_radius: 0.6,
            samples_per_target: 24,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let positive = [
            ("energy.sigma_angular_deg", self.energy.sigma_angular_deg),
            ("energy.sigma_radial", self.energy.sigma_radial),
            ("grid.range_bin", self.grid.range_bin),
            ("grid.azimuth_bin_deg", self.grid.azimuth_bin_deg),
            ("grid.vertical_fov_deg", self.grid.vertical_fov_deg),
            ("target_radius", self.target_radius),
            ("sampling_radius", self.sampling_radius),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimulatorError::OutOfRange(key));
            }
        }
        for (key, v) in [("energy.noise", self.energy.noise), ("lidar_noise", self.lidar_noise), ("energy.peak", self.energy.peak)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimulatorError::OutOfRange(key));
            }
        }
        if self.targets.is_empty() {
            return Err(SimulatorError::OutOfRange("targets"));
        }
        if self.lidar_poses.len() < 3 {
            return Err(SimulatorError::OutOfRange("lidar_poses"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulatorError {
    #[error("scene parameter `{0}` out of range")]
    OutOfRange(&'static str),
    #[error("no target was ever inside the RADAR beam")]
    NothingVisible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimWarning {
    /// Target outside the vertical field of view in every frame.
    TargetNeverVisible { target: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: CalibDataset,
    pub truth: Extrinsics,
    pub warnings: Vec<SimWarning>,
}

/// Grid index nearest to `x / bin`.
fn quantize(x: f64, bin: f64) -> f64 {
    math::round(x / bin) * bin
}

pub fn generate(spec: &SceneSpec) -> Result<SyntheticDataset, SimulatorError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lidar_noise = Normal::new(0.0, spec.lidar_noise).expect("σ ≥ 0");
    let energy_noise = Normal::new(0.0, spec.energy.noise).expect("σ ≥ 0");
    let az_bin = spec.grid.azimuth_bin_deg.to_radians();
    let half_fov = spec.grid.vertical_fov_deg.to_radians() / 2.0;
    let mut seen = alloc::vec![false; spec.targets.len()];

    let mut frames = Vec::with_capacity(spec.lidar_poses.len());
    for (f, lidar_pose) in spec.lidar_poses.iter().enumerate() {
        let world_to_lidar = lidar_pose.inverse();
        let mut observations = Vec::new();
        let mut samples = Vec::new();
        for (k, target_pose) in spec.targets.iter().enumerate() {
            let id = k as u32;
            let center_l = world_to_lidar.transform_point(&target_pose.translation);
            let center_r = spec.extrinsics.transform_point(&center_l);
            let Ok(sph) = geometry::to_spherical(&center_r) else { continue };
            let reach = math::asin((spec.target_radius / sph.range).min(1.0));
            if math::abs(sph.elevation) > half_fov + reach {
                continue;
            }
            seen[k] = true;

            let noisy = [0, 1, 2].map(|i| center_l[i] + lidar_noise.sample(&mut rng));
            let (range, azimuth) = if spec.quantize {
                (quantize(sph.range, spec.grid.range_bin), geometry::wrap_angle(quantize(sph.azimuth, az_bin)))
            } else {
                (sph.range, sph.azimuth)
            };
            observations.push(LidarTargetObservation { target: id, center: noisy, radar_range: range, radar_azimuth: azimuth });

            let cells = grid_cells(spec, &center_r, az_bin);
            let chosen = select_cells(cells, spec.samples_per_target, &mut rng);
            for (position, direction, clean) in chosen {
                let e = (clean + energy_noise.sample(&mut rng)).clamp(0.0, 1.0);
                samples.push(RadarSample { target: id, position, direction, energy: e });
            }
        }
        frames.push(Frame {
            id: f as u32,
            poses: FramePoseSet {
                lidar: *lidar_pose,
                targets: spec
                    .targets
                    .iter()
                    .enumerate()
                    .map(|(k, p)| TargetPose { target: k as u32, pose: *p })
                    .collect(),
            },
            observations,
            samples,
        });
    }
    if !seen.iter().any(|&s| s) {
        return Err(SimulatorError::NothingVisible);
    }
    let warnings = seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .map(|(k, _)| SimWarning::TargetNeverVisible { target: k as u32 })
        .collect();
    Ok(SyntheticDataset { dataset: CalibDataset { frames }, truth: spec.extrinsics, warnings })
}

type Cell = (Vec3, Vec3, f64);

/// Polar-grid cells (RADAR plane) within the sampling radius of `center`.
fn grid_cells(spec: &SceneSpec, center: &Vec3, az_bin: f64) -> Vec<Cell> {
    let rho = norm(center);
    let radius = spec.sampling_radius;
    let az = math::atan2(center[1], center[0]);
    let half_width = math::asin((radius / rho).min(1.0)) + az_bin;
    let j0 = math::floor((az - half_width) / az_bin) as i64;
    let j1 = math::ceil((az + half_width) / az_bin) as i64;
    let i0 = (math::floor((rho - radius) / spec.grid.range_bin) as i64).max(1);
    let i1 = math::ceil((rho + radius) / spec.grid.range_bin) as i64;
    let mut cells = Vec::new();
    for j in j0..=j1 {
        let a = j as f64 * az_bin;
        let direction = [math::cos(a), math::sin(a), 0.0];
        for i in i0..=i1 {
            let position = geometry::scale(&direction, i as f64 * spec.grid.range_bin);
            if norm(&geometry::sub(&position, center)) <= radius {
                let e = spec.energy.energy(center, &position, &direction);
                cells.push((position, direction, e));
            }
        }
    }
    cells
}

fn select_cells(mut cells: Vec<Cell>, n: usize, rng: &mut ChaCha8Rng) -> Vec<Cell> {
    if n == 0 || cells.len() <= n {
        return cells;
    }
    cells.sort_by(|a, b| b.2.total_cmp(&a.2));
    let strong = n / 2;
    let mut rest = cells.split_off(strong);
    rest.shuffle(rng);
    rest.truncate(n - strong);
    cells.extend(rest);
    cells
}

/// Applies a random rotation of `rotation_deg` about a uniformly drawn axis
/// (composed on the left) and a translation offset of norm `translation_m`
/// in a uniformly drawn direction.
pub fn perturb(extrinsics: &Extrinsics, rotation_deg: f64, translation_m: f64, seed: u64) -> Extrinsics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_unit(&mut rng);
    let dir = random_unit(&mut rng);
    let delta = AxisAngle::from_axis_angle(axis, rotation_deg.to_radians()).unwrap_or(AxisAngle::ZERO);
    let r = geometry::mat_mul(&delta.matrix(), &extrinsics.matrix());
    let t = geometry::add(&extrinsics.translation, &geometry::scale(&dir, translation_m));
    let rotation = if rotation_deg == 0.0 { extrinsics.rotation } else { geometry::log_so3(&r).unwrap_or(extrinsics.rotation) };
    Pose { rotation, translation: t }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v: Vec3 = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = norm(&v);
        if n > 1e-6 {
            return geometry::scale(&v, 1.0 / n);
        }
    }
}
