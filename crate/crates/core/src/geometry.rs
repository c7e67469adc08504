//! Rigid-body and coordinate-conversion math.
//!
//! Rotations are carried as rotation vectors ([`AxisAngle`]) and expanded to
//! matrices with the Rodrigues formula. Matrices are row-major `[[f64; 3]; 3]`.
//! Euler angles are only used for reporting and follow the intrinsic
//! X-then-Y-then-Z convention, i.e. `R = Rx(θx) · Ry(θy) · Rz(θz)`.

use core::f64::consts::PI;
use core::fmt;

use crate::math;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Below this rotation angle `exp_so3` switches to the Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Orthonormality tolerance accepted by [`log_so3`].
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// Distance from ±90° pitch (in degrees) at which Euler angles are flagged.
pub const GIMBAL_LOCK_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("degenerate point: zero norm")]
    DegeneratePoint,
}

// ---------------------------------------------------------------------------
// small vector helpers

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    math::sqrt(dot(a, a))
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn is_finite3(a: &Vec3) -> bool {
    a.iter().all(|v| v.is_finite())
}

#[inline]
pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub fn skew(w: &Vec3) -> Mat3 {
    [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
}

pub fn determinant(m: &Mat3) -> f64 {
    dot(&m[0], &cross(&m[1], &m[2]))
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error(m: &Mat3) -> f64 {
    let mtm = mat_mul(&transpose(m), m);
    let mut worst: f64 = 0.0;
    for (i, row) in mtm.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max(math::abs(v - IDENTITY[i][j]));
        }
    }
    worst
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = mat_mul(&transpose(a), b);
    let v = [rel[2][1] - rel[1][2], rel[0][2] - rel[2][0], rel[1][0] - rel[0][1]];
    let trace = rel[0][0] + rel[1][1] + rel[2][2];
    math::atan2(0.5 * norm(&v), 0.5 * (trace - 1.0))
}

// ---------------------------------------------------------------------------
// rotations

/// Rotation vector: direction is the axis, magnitude the angle in radians.
///
/// Construction wraps the vector onto its canonical representative with
/// `‖w‖ ≤ π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle(Vec3);

impl AxisAngle {
    pub const ZERO: AxisAngle = AxisAngle([0.0; 3]);

    pub fn new(w: Vec3) -> Result<Self, GeometryError> {
        if !is_finite3(&w) {
            return Err(GeometryError::InvalidArgument("non-finite rotation vector"));
        }
        Ok(Self(canonicalize(w)))
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, GeometryError> {
        let n = norm(&axis);
        if !(n > 0.0) || !angle.is_finite() {
            return Err(GeometryError::InvalidArgument("degenerate rotation axis"));
        }
        Self::new(scale(&axis, angle / n))
    }

    pub fn vector(&self) -> Vec3 {
        self.0
    }

    pub fn angle(&self) -> f64 {
        norm(&self.0)
    }

    pub fn matrix(&self) -> Mat3 {
        exp_so3_unchecked(&self.0)
    }
}

fn canonicalize(w: Vec3) -> Vec3 {
    let theta = norm(&w);
    if theta <= PI {
        return w;
    }
    let axis = scale(&w, 1.0 / theta);
    let two_pi = 2.0 * PI;
    let mut wrapped = theta - two_pi * math::floor(theta / two_pi);
    let mut dir = axis;
    if wrapped > PI {
        wrapped = two_pi - wrapped;
        dir = scale(&axis, -1.0);
    }
    scale(&dir, wrapped)
}

/// Rodrigues formula `R = I + a·K + b·K²` with `K = [w]×`,
/// `a = sin θ / θ`, `b = (1 − cos θ) / θ²`.
pub fn exp_so3(w: &Vec3) -> Result<Mat3, GeometryError> {
    if !is_finite3(w) {
        return Err(GeometryError::InvalidArgument("non-finite rotation vector"));
    }
    Ok(exp_so3_unchecked(w))
}

/// Rodrigues coefficients `(sin θ / θ, (1 − cos θ) / θ²)` from `θ²`.
pub fn rodrigues_coefficients(theta_sq: f64) -> (f64, f64) {
    let theta = math::sqrt(theta_sq);
    if theta < SMALL_ANGLE {
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        (math::sin(theta) / theta, (1.0 - math::cos(theta)) / theta_sq)
    }
}

fn exp_so3_unchecked(w: &Vec3) -> Mat3 {
    let (a, b) = rodrigues_coefficients(dot(w, w));
    let k = skew(w);
    let k2 = mat_mul(&k, &k);
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// Inverse of [`exp_so3`]; returns the canonical vector with `‖w‖ ≤ π`.
pub fn log_so3(r: &Mat3) -> Result<AxisAngle, GeometryError> {
    if r.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GeometryError::InvalidArgument("non-finite rotation matrix"));
    }
    if orthonormality_error(r) > ORTHONORMAL_TOLERANCE || determinant(r) <= 0.0 {
        return Err(GeometryError::InvalidArgument("matrix is not a rotation"));
    }
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let sin_theta = 0.5 * norm(&v);
    let cos_theta = 0.5 * (r[0][0] + r[1][1] + r[2][2] - 1.0);
    let theta = math::atan2(sin_theta, cos_theta);

    if theta < 1e-6 {
        // θ / (2 sin θ) ≈ 1/2 + θ²/12
        let f = 0.5 + theta * theta / 12.0;
        return Ok(AxisAngle(scale(&v, f)));
    }
    if theta < PI - 1e-2 {
        return Ok(AxisAngle(scale(&v, theta / (2.0 * sin_theta))));
    }

    // Near π the antisymmetric part vanishes; recover the axis from the
    // symmetric part (1 − cos θ)·n nᵀ = (R + Rᵀ)/2 − cos θ·I.
    let one_minus_cos = 1.0 - cos_theta;
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = 0.5 * (r[i][j] + r[j][i]) / one_minus_cos;
        }
        b[i][i] -= cos_theta / one_minus_cos;
    }
    let k = (0..3)
        .max_by(|&i, &j| b[i][i].partial_cmp(&b[j][j]).unwrap_or(core::cmp::Ordering::Equal))
        .unwrap_or(0);
    let scale_k = math::sqrt(b[k][k].max(0.0));
    let mut axis = [b[0][k] / scale_k, b[1][k] / scale_k, b[2][k] / scale_k];
    if dot(&axis, &v) < 0.0 {
        axis = scale(&axis, -1.0);
    }
    let n = norm(&axis);
    Ok(AxisAngle(canonicalize(scale(&axis, theta / n))))
}

// ---------------------------------------------------------------------------
// Euler angles (reporting only)

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    /// `[θx, θy, θz]` in degrees, each in (−180, 180].
    pub degrees: Vec3,
    /// Set when |θy| is within [`GIMBAL_LOCK_TOLERANCE_DEG`] of 90°; θz is then
    /// reported as 0 and θx carries the combined rotation.
    pub gimbal_lock: bool,
}

fn wrap_degrees(d: f64) -> f64 {
    if d <= -180.0 {
        d + 360.0
    } else {
        d
    }
}

pub fn matrix_to_euler(r: &Mat3) -> EulerAngles {
    let sy = r[0][2].clamp(-1.0, 1.0);
    let theta_y = math::asin(sy);
    let deg = 180.0 / PI;
    let gimbal_lock = math::abs(90.0 - math::abs(theta_y * deg)) < GIMBAL_LOCK_TOLERANCE_DEG;
    let (theta_x, theta_z) = if gimbal_lock {
        (math::atan2(r[2][1], r[1][1]), 0.0)
    } else {
        (math::atan2(-r[1][2], r[2][2]), math::atan2(-r[0][1], r[0][0]))
    };
    EulerAngles {
        degrees: [
            wrap_degrees(theta_x * deg),
            wrap_degrees(theta_y * deg),
            wrap_degrees(theta_z * deg),
        ],
        gimbal_lock,
    }
}

pub fn euler_to_matrix(degrees: &Vec3) -> Mat3 {
    let rad = PI / 180.0;
    let (sx, cx) = (math::sin(degrees[0] * rad), math::cos(degrees[0] * rad));
    let (sy, cy) = (math::sin(degrees[1] * rad), math::cos(degrees[1] * rad));
    let (sz, cz) = (math::sin(degrees[2] * rad), math::cos(degrees[2] * rad));
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&mat_mul(&rx, &ry), &rz)
}

pub fn to_euler(w: &AxisAngle) -> EulerAngles {
    matrix_to_euler(&w.matrix())
}

pub fn from_euler(e: &EulerAngles) -> Result<AxisAngle, GeometryError> {
    if !is_finite3(&e.degrees) {
        return Err(GeometryError::InvalidArgument("non-finite Euler angles"));
    }
    log_so3(&euler_to_matrix(&e.degrees))
}

impl EulerAngles {
    pub fn new(degrees: Vec3) -> Self {
        let wrapped = degrees.map(|d| {
            let m = d - 360.0 * math::floor((d + 180.0) / 360.0);
            wrap_degrees(m)
        });
        EulerAngles {
            degrees: wrapped,
            gimbal_lock: math::abs(90.0 - math::abs(wrapped[1])) < GIMBAL_LOCK_TOLERANCE_DEG,
        }
    }
}

// ---------------------------------------------------------------------------
// rigid transforms

/// SE(3) element `x ↦ R(w)·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: AxisAngle,
    pub translation: Vec3,
}

/// LIDAR → RADAR transform: a LIDAR-frame point maps to `R(w)·x + t` in the
/// RADAR frame.
pub type Extrinsics = Pose;

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rotation: AxisAngle::ZERO, translation: [0.0; 3] };

    pub fn new(rotation: AxisAngle, translation: Vec3) -> Result<Self, GeometryError> {
        if !is_finite3(&translation) {
            return Err(GeometryError::InvalidArgument("non-finite translation"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_vectors(rotation: Vec3, translation: Vec3) -> Result<Self, GeometryError> {
        Self::new(AxisAngle::new(rotation)?, translation)
    }

    /// Builds a pose from Euler angles in degrees and a translation in meters.
    pub fn from_euler_translation(degrees: Vec3, translation: Vec3) -> Result<Self, GeometryError> {
        Self::new(from_euler(&EulerAngles::new(degrees))?, translation)
    }

    pub fn from_matrix(r: &Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        Self::new(log_so3(r)?, translation)
    }

    pub fn matrix(&self) -> Mat3 {
        self.rotation.matrix()
    }

    pub fn euler(&self) -> EulerAngles {
        to_euler(&self.rotation)
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        add(&mat_vec(&self.matrix(), x), &self.translation)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        mat_vec(&self.matrix(), v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let ra = self.matrix();
        let rb = other.matrix();
        let r = mat_mul(&ra, &rb);
        let t = add(&mat_vec(&ra, &other.translation), &self.translation);
        Pose { rotation: log_so3(&r).unwrap_or(AxisAngle::ZERO), translation: t }
    }

    pub fn inverse(&self) -> Pose {
        let rt = transpose(&self.matrix());
        let t = scale(&mat_vec(&rt, &self.translation), -1.0);
        Pose { rotation: AxisAngle(scale(&self.rotation.0, -1.0)), translation: t }
    }

    /// Table-style parameter row `[θx, θy, θz (deg), tx, ty, tz (m)]`.
    pub fn parameter_row(&self) -> [f64; 6] {
        let e = self.euler().degrees;
        let t = self.translation;
        [e[0], e[1], e[2], t[0], t[1], t[2]]
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.parameter_row();
        write!(
            f,
            "θ=({:.4}°, {:.4}°, {:.4}°) t=({:.4}, {:.4}, {:.4}) m",
            p[0], p[1], p[2], p[3], p[4], p[5]
        )
    }
}

pub fn transform_point(t: &Pose, x: &Vec3) -> Vec3 {
    t.transform_point(x)
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(a: &Pose) -> Pose {
    a.inverse()
}

// ---------------------------------------------------------------------------
// spherical projection

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    /// Slant range ‖x‖, meters.
    pub range: f64,
    /// atan2(y, x), radians in (−π, π].
    pub azimuth: f64,
    /// asin(z / ‖x‖), radians in [−π/2, π/2].
    pub elevation: f64,
}

pub fn to_spherical(x: &Vec3) -> Result<SphericalPoint, GeometryError> {
    if !is_finite3(x) {
        return Err(GeometryError::InvalidArgument("non-finite point"));
    }
    let range = norm(x);
    if range == 0.0 {
        return Err(GeometryError::DegeneratePoint);
    }
    let mut azimuth = math::atan2(x[1], x[0]);
    if azimuth <= -PI {
        azimuth = PI;
    }
    let elevation = math::asin((x[2] / range).clamp(-1.0, 1.0));
    Ok(SphericalPoint { range, azimuth, elevation })
}

/// Wraps an angle difference into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = math::atan2(math::sin(a), math::cos(a));
    if w <= -PI {
        PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn close3(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    fn mat_close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (0..3).all(|i| close3(&a[i], &b[i], tol))
    }

    #[test]
    fn exp_zero_is_identity() {
        assert_eq!(exp_so3(&[0.0; 3]).unwrap(), IDENTITY);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = exp_so3(&[0.0, 0.0, FRAC_PI_2]).unwrap();
        assert!(close3(&mat_vec(&r, &[1.0, 0.0, 0.0]), &[0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn exp_of_negation_is_inverse() {
        let w = [0.3, -0.2, 0.5];
        let r = exp_so3(&w).unwrap();
        let r_neg = exp_so3(&scale(&w, -1.0)).unwrap();
        assert!(orthonormality_error(&r) < 1e-9);
        assert!(mat_close(&mat_mul(&r, &r_neg), &IDENTITY, 1e-9));
    }

    #[test]
    fn exp_rejects_non_finite() {
        assert!(matches!(
            exp_so3(&[f64::NAN, 0.0, 0.0]),
            Err(GeometryError::InvalidArgument(_))
        ));
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let below = exp_so3(&[0.5e-8, 0.0, 0.0]).unwrap();
        let above = exp_so3(&[2e-8, 0.0, 0.0]).unwrap();
        assert!(mat_close(&below, &above, 1e-7));
        assert!(orthonormality_error(&below) < 1e-15);
    }

    #[test]
    fn log_identity_and_quarter_turn() {
        assert_eq!(log_so3(&IDENTITY).unwrap().vector(), [0.0; 3]);
        let w = [0.0, 0.0, FRAC_PI_2];
        let back = log_so3(&exp_so3(&w).unwrap()).unwrap();
        assert!(close3(&back.vector(), &w, 1e-9));
    }

    #[test]
    fn log_near_pi() {
        let w = [0.0, PI - 1e-5, 0.0];
        let back = log_so3(&exp_so3(&w).unwrap()).unwrap();
        assert!(close3(&back.vector(), &w, 1e-7), "{:?}", back);
        let w = scale(&[1.0, 2.0, -2.0], (PI - 1e-3) / 3.0);
        let back = log_so3(&exp_so3(&w).unwrap()).unwrap();
        assert!(close3(&back.vector(), &w, 1e-7), "{:?}", back);
    }

    #[test]
    fn log_rejects_non_orthonormal() {
        let mut r = IDENTITY;
        r[0][0] = 1.1;
        assert!(matches!(log_so3(&r), Err(GeometryError::InvalidArgument(_))));
        let reflection = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(log_so3(&reflection).is_err());
    }

    #[test]
    fn axis_angle_wraps_to_canonical() {
        let w = AxisAngle::new([0.0, 0.0, 1.5 * PI]).unwrap();
        assert!(close3(&w.vector(), &[0.0, 0.0, -0.5 * PI], 1e-12));
        let w = AxisAngle::new([2.0 * PI + 0.1, 0.0, 0.0]).unwrap();
        assert!(close3(&w.vector(), &[0.1, 0.0, 0.0], 1e-12));
        assert!(AxisAngle::new([f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn euler_examples() {
        let e = to_euler(&AxisAngle::ZERO);
        assert_eq!(e.degrees, [0.0, 0.0, 0.0]);
        assert!(!e.gimbal_lock);

        let w = from_euler(&EulerAngles::new([0.0, 3.0, 0.0])).unwrap();
        let expected = 3.0 * PI / 180.0;
        assert!(close3(&w.vector(), &[0.0, expected, 0.0], 1e-15));
    }

    #[test]
    fn euler_convention_is_intrinsic_xyz() {
        let e = [10.0, 20.0, 30.0];
        let r = euler_to_matrix(&e);
        let rx = AxisAngle::new([10f64.to_radians(), 0.0, 0.0]).unwrap().matrix();
        let ry = AxisAngle::new([0.0, 20f64.to_radians(), 0.0]).unwrap().matrix();
        let rz = AxisAngle::new([0.0, 0.0, 30f64.to_radians()]).unwrap().matrix();
        assert!(mat_close(&r, &mat_mul(&mat_mul(&rx, &ry), &rz), 1e-14));
        let back = matrix_to_euler(&r);
        assert!(close3(&back.degrees, &e, 1e-12));
    }

    #[test]
    fn gimbal_lock_is_flagged_but_returned() {
        let w = from_euler(&EulerAngles::new([0.0, 90.0, 0.0])).unwrap();
        let e = to_euler(&w);
        assert!(e.gimbal_lock);
        assert!((e.degrees[1] - 90.0).abs() < 1e-6);
    }

    #[test]
    fn transform_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(Pose::IDENTITY.transform_point(&x), x);
        let t = Pose::from_vectors([0.0; 3], [0.50, -0.25, 0.05]).unwrap();
        assert_eq!(t.transform_point(&[0.0; 3]), [0.50, -0.25, 0.05]);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(Pose::IDENTITY.inverse().translation, [0.0; 3]);
        assert_eq!(Pose::IDENTITY.inverse().rotation.vector(), [0.0; 3]);
        let a = Pose::from_vectors([0.0; 3], [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(invert(&a).translation, [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn spherical_examples() {
        let s = to_spherical(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!((s.range, s.azimuth, s.elevation), (1.0, 0.0, 0.0));
        let s = to_spherical(&[0.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.range, 2.0);
        assert!((s.azimuth - FRAC_PI_2).abs() < 1e-15 && s.elevation == 0.0);
        let s = to_spherical(&[1.0, 1.0, 2f64.sqrt()]).unwrap();
        assert!((s.range - 2.0).abs() < 1e-15);
        assert!((s.azimuth - PI / 4.0).abs() < 1e-15);
        assert!((s.elevation - PI / 4.0).abs() < 1e-15);
        assert_eq!(to_spherical(&[0.0; 3]), Err(GeometryError::DegeneratePoint));
    }

    #[test]
    fn azimuth_on_negative_x_axis_is_plus_pi() {
        let s = to_spherical(&[-1.0, -0.0, 0.0]).unwrap();
        assert_eq!(s.azimuth, PI);
    }

    #[test]
    fn wrap_angle_examples() {
        assert!((wrap_angle((PI - 0.01) - (-PI + 0.01)) + 0.02).abs() < 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn rotation_angle_between_matches_construction() {
        let a = AxisAngle::new([0.1, 0.2, 0.3]).unwrap().matrix();
        let d = AxisAngle::from_axis_angle([1.0, -1.0, 0.5], 0.05).unwrap().matrix();
        assert!((rotation_angle_between(&a, &mat_mul(&d, &a)) - 0.05).abs() < 1e-12);
    }
}
