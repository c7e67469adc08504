//! The three calibration objectives and their weighted sum.
//!
//! Each objective exists twice: a per-record `f64` function used for
//! evaluation and reference checks, and a batched tape builder
//! ([`LossProblem`]) used by the optimizer. Both reduce with the batch mean.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::config::{CalibConfig, LossWeights};
use crate::dataset::{CalibDataset, LidarTargetObservation, RadarSample};
use crate::diff::{DiffError, Tape, Tensor, Var};
use crate::geometry::{self, dot, norm, rodrigues_coefficients, to_spherical, wrap_angle, Extrinsics, Mat3, Pose, Vec3, IDENTITY, SMALL_ANGLE};
use crate::math;
use crate::model::{encode_on_tape, forward_on_tape, MlpVars, MlpWeights, ModelError, TargetLocalSample};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("observation {index}: LIDAR center maps onto the RADAR origin")]
    DegeneratePoint { index: usize },
    #[error("`{0}` term enabled but has no data")]
    EmptyBatch(&'static str),
    #[error("all outer loss weights are zero")]
    AllWeightsZero,
    #[error("network weights required for the regression term")]
    MissingNetwork,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Circumscribed sphere of the reflector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    pub radius: f64,
}

/// Detection point and ray of an observation, RADAR frame.
pub fn detection_sample(obs: &LidarTargetObservation) -> RadarSample {
    let dir = [math::cos(obs.radar_azimuth), math::sin(obs.radar_azimuth), 0.0];
    RadarSample {
        target: obs.target,
        position: geometry::scale(&dir, obs.radar_range),
        direction: dir,
        energy: 1.0,
    }
}

/// RADAR frame → target frame: `target⁻¹ ∘ lidar ∘ extrinsics⁻¹`.
pub fn radar_to_target(extrinsics: &Extrinsics, lidar_pose: &Pose, target_pose: &Pose) -> Pose {
    target_pose.inverse().compose(lidar_pose).compose(&extrinsics.inverse())
}

pub fn to_target_frame(
    extrinsics: &Extrinsics,
    lidar_pose: &Pose,
    target_pose: &Pose,
    sample: &RadarSample,
) -> TargetLocalSample {
    let chain = radar_to_target(extrinsics, lidar_pose, target_pose);
    TargetLocalSample {
        position: chain.transform_point(&sample.position),
        direction: chain.rotate(&sample.direction),
        energy: sample.energy,
    }
}

/// `w_r·|r_radar − r_lidar| + w_θ·|wrap(θ_radar − θ_lidar)|`.
pub fn reprojection_loss(
    extrinsics: &Extrinsics,
    obs: &LidarTargetObservation,
    w_range: f64,
    w_azimuth: f64,
) -> Result<f64, LossError> {
    let (dr, da) = reprojection_residual(extrinsics, obs).map_err(|_| LossError::DegeneratePoint { index: 0 })?;
    Ok(w_range * math::abs(dr) + w_azimuth * math::abs(da))
}

/// Signed `(range, wrapped azimuth)` residual of the projected LIDAR center
/// against the RADAR detection.
pub fn reprojection_residual(
    extrinsics: &Extrinsics,
    obs: &LidarTargetObservation,
) -> Result<(f64, f64), geometry::GeometryError> {
    let s = to_spherical(&extrinsics.transform_point(&obs.center))?;
    Ok((s.range - obs.radar_range, wrap_angle(s.azimuth - obs.radar_azimuth)))
}

/// Mean absolute energy error over a batch.
pub fn regression_loss(weights: &MlpWeights, samples: &[TargetLocalSample]) -> Result<f64, LossError> {
    if samples.is_empty() {
        return Err(LossError::EmptyBatch("mlp"));
    }
    let pred = weights.predict_batch(samples)?;
    Ok(pred.iter().zip(samples).map(|(p, s)| math::abs(p - s.energy)).sum::<f64>() / samples.len() as f64)
}

/// Distance from the target-frame origin to the half-line
/// `o + s·d, s ≥ 0`.
pub fn ray_distance(origin: &Vec3, direction: &Vec3) -> f64 {
    let s = (-dot(origin, direction)).max(0.0);
    norm(&geometry::add(origin, &geometry::scale(direction, s)))
}

/// `max(0, d − r)` for the ray through `sample` from the RADAR origin.
pub fn ray_pass_loss(
    extrinsics: &Extrinsics,
    lidar_pose: &Pose,
    target_pose: &Pose,
    sample: &RadarSample,
    geom: &TargetGeometry,
) -> f64 {
    let chain = radar_to_target(extrinsics, lidar_pose, target_pose);
    let origin = chain.translation;
    let direction = chain.rotate(&sample.direction);
    (ray_distance(&origin, &direction) - geom.radius).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Unweighted term values; `None` when the term's weight is zero.
    pub rep: Option<f64>,
    pub mlp: Option<f64>,
    pub ray: Option<f64>,
}

impl LossBreakdown {
    pub fn recombine(&self, w: &LossWeights) -> f64 {
        w.rep * self.rep.unwrap_or(0.0) + w.mlp * self.mlp.unwrap_or(0.0) + w.ray * self.ray.unwrap_or(0.0)
    }
}

/// Weighted sum of the enabled terms; terms with zero weight are skipped.
pub fn combine(weights: &LossWeights, rep: Option<f64>, mlp: Option<f64>, ray: Option<f64>) -> Result<LossBreakdown, LossError> {
    if weights.rep == 0.0 && weights.mlp == 0.0 && weights.ray == 0.0 {
        return Err(LossError::AllWeightsZero);
    }
    let rep = if weights.rep > 0.0 { rep } else { None };
    let mlp = if weights.mlp > 0.0 { mlp } else { None };
    let ray = if weights.ray > 0.0 { ray } else { None };
    let mut b = LossBreakdown { total: 0.0, rep, mlp, ray };
    b.total = b.recombine(weights);
    Ok(b)
}

/// Total loss of a dataset evaluated record by record.
pub fn total_loss(
    extrinsics: &Extrinsics,
    network: Option<&MlpWeights>,
    dataset: &CalibDataset,
    config: &CalibConfig,
) -> Result<LossBreakdown, LossError> {
    let w = &config.weights;
    if w.rep == 0.0 && w.mlp == 0.0 && w.ray == 0.0 {
        return Err(LossError::AllWeightsZero);
    }
    let geom = TargetGeometry { radius: config.target_radius };
    let mut rep = None;
    let mut ray = None;
    let mut mlp = None;
    if w.rep > 0.0 || w.ray > 0.0 {
        let mut rep_sum = 0.0;
        let mut ray_sum = 0.0;
        let mut n = 0usize;
        for frame in &dataset.frames {
            for obs in &frame.observations {
                if w.rep > 0.0 {
                    rep_sum += reprojection_loss(extrinsics, obs, w.range, w.azimuth)
                        .map_err(|_| LossError::DegeneratePoint { index: n })?;
                }
                if w.ray > 0.0 {
                    let target = frame.poses.target_pose(obs.target).copied().unwrap_or(Pose::IDENTITY);
                    ray_sum += ray_pass_loss(extrinsics, &frame.poses.lidar, &target, &detection_sample(obs), &geom);
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(LossError::EmptyBatch(if w.rep > 0.0 { "rep" } else { "ray" }));
        }
        if w.rep > 0.0 {
            rep = Some(rep_sum / n as f64);
        }
        if w.ray > 0.0 {
            ray = Some(ray_sum / n as f64);
        }
    }
    if w.mlp > 0.0 {
        let network = network.ok_or(LossError::MissingNetwork)?;
        let samples = target_local_samples(extrinsics, dataset, config.sampling_radius);
        mlp = Some(regression_loss(network, &samples)?);
    }
    combine(w, rep, mlp, ray)
}

/// Samples near their target's RADAR detection, moved into target frames.
pub fn target_local_samples(extrinsics: &Extrinsics, dataset: &CalibDataset, sampling_radius: f64) -> Vec<TargetLocalSample> {
    let mut out = Vec::new();
    for frame in &dataset.frames {
        for s in &frame.samples {
            if !within_sampling_radius(frame, s, sampling_radius) {
                continue;
            }
            if let Some(target) = frame.poses.target_pose(s.target) {
                out.push(to_target_frame(extrinsics, &frame.poses.lidar, target, s));
            }
        }
    }
    out
}

fn within_sampling_radius(frame: &crate::dataset::Frame, s: &RadarSample, radius: f64) -> bool {
    match frame.observations.iter().find(|o| o.target == s.target) {
        Some(obs) => norm(&geometry::sub(&s.position, &detection_sample(obs).position)) <= radius,
        None => true,
    }
}

// ---------------------------------------------------------------------------
// batched tape construction

/// Extrinsic parameters on a tape, both 1×3.
#[derive(Debug, Clone, Copy)]
pub struct ExtrinsicVars {
    pub rotation: Var,
    pub translation: Var,
}

impl ExtrinsicVars {
    pub fn record(tape: &mut Tape, extrinsics: &Extrinsics, trainable: bool) -> Self {
        let w = Tensor::row(&extrinsics.rotation.vector());
        let t = Tensor::row(&extrinsics.translation);
        if trainable {
            Self { rotation: tape.leaf(w), translation: tape.leaf(t) }
        } else {
            Self { rotation: tape.constant(w), translation: tape.constant(t) }
        }
    }
}

/// Rodrigues formula on the tape; 1×3 rotation vector → 3×3 matrix.
pub fn rotation_matrix_on_tape(tape: &mut Tape, w: Var) -> Var {
    let ww = tape.mul(w, w);
    let theta_sq = tape.sum(ww);
    let (a, b) = if math::sqrt(tape.value(theta_sq).item()) < SMALL_ANGLE {
        let a = tape.scale(theta_sq, -1.0 / 6.0);
        let a = tape.offset(a, 1.0);
        let b = tape.scale(theta_sq, -1.0 / 24.0);
        let b = tape.offset(b, 0.5);
        (a, b)
    } else {
        let theta = tape.sqrt(theta_sq);
        let s = tape.sin(theta);
        let a = tape.div(s, theta);
        let c = tape.cos(theta);
        let c = tape.neg(c);
        let one_minus_cos = tape.offset(c, 1.0);
        let b = tape.div(one_minus_cos, theta_sq);
        (a, b)
    };
    debug_assert!({
        let (pa, pb) = rodrigues_coefficients(tape.value(theta_sq).item());
        (pa - tape.value(a).item()).abs() < 1e-15 && (pb - tape.value(b).item()).abs() < 1e-15
    });
    let k = tape.skew(w);
    let k2 = tape.matmul(k, k);
    let ak = tape.mul(a, k);
    let bk2 = tape.mul(b, k2);
    let eye = tape.constant(Tensor::from_rows(&IDENTITY));
    let r = tape.add(eye, ak);
    tape.add(r, bk2)
}

struct ObservationBatch {
    centers: Tensor,
    ranges: Tensor,
    azimuths: Tensor,
    directions: Tensor,
    maps: Arc<[Mat3]>,
    offsets: Tensor,
}

struct SampleBatch {
    positions: Tensor,
    directions: Tensor,
    energies: Tensor,
    maps: Arc<[Mat3]>,
    offsets: Tensor,
}

/// Graph handles of one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub rep: Option<Var>,
    pub mlp: Option<Var>,
    pub ray: Option<Var>,
}

impl LossTerms {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        let v = |x: Option<Var>| x.map(|x| tape.value(x).item());
        LossBreakdown { total: tape.value(self.total).item(), rep: v(self.rep), mlp: v(self.mlp), ray: v(self.ray) }
    }
}

/// Dataset constants arranged for batched evaluation on a tape.
pub struct LossProblem {
    weights: LossWeights,
    radius: f64,
    observations: Option<ObservationBatch>,
    samples: Option<SampleBatch>,
}

impl LossProblem {
    pub fn new(dataset: &CalibDataset, config: &CalibConfig) -> Result<Self, LossError> {
        let w = config.weights;
        if w.rep == 0.0 && w.mlp == 0.0 && w.ray == 0.0 {
            return Err(LossError::AllWeightsZero);
        }
        let mut centers = Vec::new();
        let mut ranges = Vec::new();
        let mut azimuths = Vec::new();
        let mut obs_dirs = Vec::new();
        let mut obs_maps = Vec::new();
        let mut obs_offsets = Vec::new();
        let mut positions = Vec::new();
        let mut directions = Vec::new();
        let mut energies = Vec::new();
        let mut maps = Vec::new();
        let mut offsets = Vec::new();

        for frame in &dataset.frames {
            for obs in &frame.observations {
                let target = frame.poses.target_pose(obs.target).copied().unwrap_or(Pose::IDENTITY);
                let chain = target.inverse().compose(&frame.poses.lidar);
                centers.push(obs.center);
                ranges.push(obs.radar_range);
                azimuths.push(obs.radar_azimuth);
                obs_dirs.push(detection_sample(obs).direction);
                obs_maps.push(chain.matrix());
                obs_offsets.push(chain.translation);
            }
            if w.mlp > 0.0 {
                for s in &frame.samples {
                    if !within_sampling_radius(frame, s, config.sampling_radius) {
                        continue;
                    }
                    let Some(target) = frame.poses.target_pose(s.target) else { continue };
                    let chain = target.inverse().compose(&frame.poses.lidar);
                    positions.push(s.position);
                    directions.push(s.direction);
                    energies.push(s.energy);
                    maps.push(chain.matrix());
                    offsets.push(chain.translation);
                }
            }
        }

        if (w.rep > 0.0 || w.ray > 0.0) && centers.is_empty() {
            return Err(LossError::EmptyBatch(if w.rep > 0.0 { "rep" } else { "ray" }));
        }
        if w.mlp > 0.0 && positions.is_empty() {
            return Err(LossError::EmptyBatch("mlp"));
        }
        let observations = (!centers.is_empty()).then(|| ObservationBatch {
            centers: Tensor::from_rows(&centers),
            ranges: Tensor::column(&ranges),
            azimuths: Tensor::column(&azimuths),
            directions: Tensor::from_rows(&obs_dirs),
            maps: obs_maps.into(),
            offsets: Tensor::from_rows(&obs_offsets),
        });
        let samples = (!positions.is_empty()).then(|| SampleBatch {
            positions: Tensor::from_rows(&positions),
            directions: Tensor::from_rows(&directions),
            energies: Tensor::column(&energies),
            maps: maps.into(),
            offsets: Tensor::from_rows(&offsets),
        });
        Ok(Self { weights: w, radius: config.target_radius, observations, samples })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn observation_count(&self) -> usize {
        self.observations.as_ref().map_or(0, |o| o.centers.rows())
    }

    pub fn sample_count(&self) -> usize {
        self.samples.as_ref().map_or(0, |s| s.positions.rows())
    }

    /// Records the weighted total loss on `tape`.
    pub fn record(&self, tape: &mut Tape, ext: ExtrinsicVars, network: Option<&MlpVars>) -> Result<LossTerms, LossError> {
        let w = self.weights;
        let r = rotation_matrix_on_tape(tape, ext.rotation);
        let rep = if w.rep > 0.0 { Some(self.record_reprojection(tape, r, ext.translation)?) } else { None };
        let ray = if w.ray > 0.0 { Some(self.record_ray(tape, r, ext.translation)) } else { None };
        let mlp = if w.mlp > 0.0 {
            let net = network.ok_or(LossError::MissingNetwork)?;
            Some(self.record_regression(tape, r, ext.translation, net)?)
        } else {
            None
        };

        let mut total: Option<Var> = None;
        for (weight, term) in [(w.rep, rep), (w.mlp, mlp), (w.ray, ray)] {
            if let Some(term) = term {
                let scaled = tape.scale(term, weight);
                total = Some(match total {
                    Some(acc) => tape.add(acc, scaled),
                    None => scaled,
                });
            }
        }
        let total = total.ok_or(LossError::AllWeightsZero)?;
        Ok(LossTerms { total, rep, mlp, ray })
    }

    fn record_reprojection(&self, tape: &mut Tape, r: Var, t: Var) -> Result<Var, LossError> {
        let obs = self.observations.as_ref().ok_or(LossError::EmptyBatch("rep"))?;
        let centers = tape.constant(obs.centers.clone());
        let rt = tape.transpose(r);
        let xr = tape.matmul(centers, rt);
        let xr = tape.add(xr, t);
        let range = tape.row_norm(xr);
        if let Some(index) = tape.value(range).data().iter().position(|&v| v == 0.0) {
            return Err(LossError::DegeneratePoint { index });
        }
        let x = tape.column(xr, 0);
        let y = tape.column(xr, 1);
        let azimuth = tape.atan2(y, x);

        let measured_range = tape.constant(obs.ranges.clone());
        let measured_azimuth = tape.constant(obs.azimuths.clone());
        let dr = tape.sub(range, measured_range);
        let da = tape.sub(azimuth, measured_azimuth);
        let s = tape.sin(da);
        let c = tape.cos(da);
        let wrapped = tape.atan2(s, c);
        let er = tape.abs(dr);
        let ea = tape.abs(wrapped);
        let er = tape.scale(er, self.weights.range);
        let ea = tape.scale(ea, self.weights.azimuth);
        let per_obs = tape.add(er, ea);
        Ok(tape.mean(per_obs))
    }

    fn record_ray(&self, tape: &mut Tape, r: Var, t: Var) -> Var {
        let obs = self.observations.as_ref().expect("observation batch checked at construction");
        let n = obs.centers.rows();
        // sensor origin in the LIDAR frame: −Rᵀt, as a row: −tᵀR
        let tr = tape.matmul(t, r);
        let origin_lidar = tape.neg(tr);
        let zeros = tape.constant(Tensor::zeros(n, 3));
        let origin_lidar = tape.add(zeros, origin_lidar);
        let origin = tape.row_linear(origin_lidar, obs.maps.clone());
        let offsets = tape.constant(obs.offsets.clone());
        let origin = tape.add(origin, offsets);

        let dirs = tape.constant(obs.directions.clone());
        let dirs_lidar = tape.matmul(dirs, r);
        let dirs = tape.row_linear(dirs_lidar, obs.maps.clone());

        let od = tape.mul(origin, dirs);
        let proj = tape.sum_cols(od);
        let s = tape.neg(proj);
        let s = tape.max_const(s, 0.0);
        let step = tape.mul(s, dirs);
        let closest = tape.add(origin, step);
        let dist = tape.row_norm(closest);
        let excess = tape.offset(dist, -self.radius);
        let hinge = tape.max_const(excess, 0.0);
        tape.mean(hinge)
    }

    fn record_regression(&self, tape: &mut Tape, r: Var, t: Var, net: &MlpVars) -> Result<Var, LossError> {
        let batch = self.samples.as_ref().ok_or(LossError::EmptyBatch("mlp"))?;
        let positions = tape.constant(batch.positions.clone());
        let shifted = tape.sub(positions, t);
        let lidar = tape.matmul(shifted, r);
        let local = tape.row_linear(lidar, batch.maps.clone());
        let offsets = tape.constant(batch.offsets.clone());
        let local = tape.add(local, offsets);

        let dirs = tape.constant(batch.directions.clone());
        let dirs_lidar = tape.matmul(dirs, r);
        let local_dirs = tape.row_linear(dirs_lidar, batch.maps.clone());

        let (rows, cols) = tape.value(net.layers[0].0).shape();
        if rows != net.encoding.input_dim() {
            return Err(ModelError::ShapeMismatch {
                layer: 0,
                expected: (net.encoding.input_dim(), cols),
                found: (rows, cols),
            }
            .into());
        }
        let features = encode_on_tape(tape, local, local_dirs, &net.encoding);
        let predicted = forward_on_tape(tape, net, features);
        let energies = tape.constant(batch.energies.clone());
        let err = tape.sub(predicted, energies);
        let err = tape.abs(err);
        Ok(tape.mean(err))
    }
}

/// Extrinsics rebuilt from the two 1×3 parameter tensors.
pub fn extrinsics_from_tensors(rotation: &Tensor, translation: &Tensor) -> Result<Extrinsics, geometry::GeometryError> {
    let w = rotation.data();
    let t = translation.data();
    Pose::from_vectors([w[0], w[1], w[2]], [t[0], t[1], t[2]])
}
