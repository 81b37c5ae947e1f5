//! Elementary SO(3) and pinhole imaging geometry shared by every other module.
//!
//! Conventions:
//! - `[a]x b = a x b` (right-handed skew matrix).
//! - A [`CameraPose`] maps world points into the camera frame as
//!   `X_c = R (X_w - t)`, so `t` is the camera center in world coordinates.
//! - Observations are normalized image points `(x, y, 1)`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Depth magnitude below which a point counts as lying on the camera plane.
pub const MIN_DEPTH: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point depth {depth:e} is at or behind the camera plane")]
    BehindCamera { depth: f64 },
    #[error("matrix is not a rotation (orthogonality error {ortho:e}, det {det})")]
    NotARotation { ortho: f64, det: f64 },
    #[error("quaternion norm {norm} deviates from 1 beyond tolerance")]
    NonUnitQuaternion { norm: f64 },
}

/// Skew-symmetric cross-product matrix, `skew(v) * w == v.cross(&w)`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`.
#[inline]
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// A proper rotation matrix (`R^T R = I`, `det R = +1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    /// Frobenius tolerance used by [`Rotation::from_matrix`].
    pub const TOLERANCE: f64 = 1e-9;

    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthonormality and handedness within [`Rotation::TOLERANCE`].
    pub fn from_matrix(m: Mat3) -> Result<Self, GeometryError> {
        let ortho = (m.transpose() * m - Mat3::identity()).norm();
        let det = m.determinant();
        if !ortho.is_finite() || ortho > Self::TOLERANCE || (det - 1.0).abs() > Self::TOLERANCE {
            return Err(GeometryError::NotARotation { ortho, det });
        }
        Ok(Rotation(m))
    }

    /// Wraps `m` without checking; callers guarantee it is a rotation.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Nearest rotation in the Frobenius sense (polar factor of `m`).
    pub fn project(m: &Mat3) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd requested u");
        let v_t = svd.v_t.expect("svd requested v_t");
        let mut d = Mat3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Rotation(u * d * v_t)
    }

    /// Re-orthonormalizes after long multiplicative update chains.
    pub fn renormalized(&self) -> Self {
        Self::project(&self.0)
    }

    pub fn about_axis(axis: &Vec3, angle: f64) -> Self {
        exp_so3(&(axis.normalize() * angle))
    }

    pub fn about_x(angle: f64) -> Self {
        Self::about_axis(&Vec3::x(), angle)
    }

    pub fn about_y(angle: f64) -> Self {
        Self::about_axis(&Vec3::y(), angle)
    }

    pub fn about_z(angle: f64) -> Self {
        Self::about_axis(&Vec3::z(), angle)
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    #[inline]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn exp(omega: &Vec3) -> Self {
        exp_so3(omega)
    }

    pub fn log(&self) -> Vec3 {
        log_so3(self)
    }

    /// Unit quaternion `(w, x, y, z)` with `w >= 0`.
    pub fn to_quaternion_wxyz(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0));
        let q = q.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    /// Builds a rotation from a quaternion whose norm is within `tol` of one.
    /// The quaternion is renormalized before conversion.
    pub fn from_quaternion_wxyz(q: [f64; 4], tol: f64) -> Result<Self, GeometryError> {
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > tol {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        Ok(Rotation(*uq.to_rotation_matrix().matrix()))
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rodrigues formula for an axis-angle vector.
pub fn exp_so3(omega: &Vec3) -> Rotation {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let (a, b) = if theta2 < 1e-8 {
        // Taylor expansions of sin(t)/t and (1 - cos t)/t^2.
        (1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Mat3::identity() + k * a + k * k * b)
}

/// Within this distance of pi the axis is read from the symmetric part.
const NEAR_PI: f64 = 1e-6;

/// Logarithm map; the inverse of [`exp_so3`] for angles below pi.
pub fn log_so3(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let axis_sin = vee(m);
    let sin = axis_sin.norm();
    let angle = sin.atan2(cos);
    if angle < 1e-7 {
        // vee(R) = sin(t) n; first-order correction in t^2.
        return axis_sin * (1.0 + angle * angle / 6.0);
    }
    if std::f64::consts::PI - angle < NEAR_PI {
        // (R + R^T)/2 = cos(t) I + (1 - cos t) n n^T
        let sym = (m + m.transpose()) * 0.5;
        let outer = (sym - Mat3::identity() * cos) / (1.0 - cos);
        let (mut best, mut diag) = (0, outer[(0, 0)]);
        for i in 1..3 {
            if outer[(i, i)] > diag {
                best = i;
                diag = outer[(i, i)];
            }
        }
        let mut axis = outer.column(best).into_owned() / diag.max(f64::MIN_POSITIVE).sqrt();
        axis.normalize_mut();
        if axis.dot(&axis_sin) < 0.0 {
            axis = -axis;
        }
        return axis * angle;
    }
    axis_sin * (angle / sin)
}

/// Normalized image point; the homogeneous form is `(x, y, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
}

impl Observation {
    pub fn new(x: f64, y: f64) -> Self {
        Observation { x, y }
    }

    #[inline]
    pub fn hom(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 1.0)
    }

    /// Unit bearing vector along the homogeneous point.
    #[inline]
    pub fn bearing(&self) -> Vec3 {
        self.hom().normalize()
    }

    /// Intersects the ray `v` with the `z = 1` plane.
    pub fn from_ray(v: &Vec3) -> Result<Self, GeometryError> {
        if v.z.abs() < MIN_DEPTH * v.norm().max(1.0) {
            return Err(GeometryError::BehindCamera { depth: v.z });
        }
        Ok(Observation { x: v.x / v.z, y: v.y / v.z })
    }
}

/// Camera pose `[R | t]` with `t` the camera center in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        CameraPose { rotation, translation }
    }

    pub fn identity() -> Self {
        CameraPose { rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    /// World point expressed in the camera frame.
    #[inline]
    pub fn to_camera(&self, point_world: &Vec3) -> Vec3 {
        self.rotation.apply(&(point_world - self.translation))
    }

    /// World point on the ray of `obs` at the given depth.
    pub fn back_project(&self, obs: &Observation, depth: f64) -> Vec3 {
        self.rotation.transpose().apply(&(obs.hom() * depth)) + self.translation
    }
}

/// Relative rotation `R_j R_i^T` and translation `R_j (t_i - t_j)`.
pub fn relative_pose(pose_i: &CameraPose, pose_j: &CameraPose) -> (Rotation, Vec3) {
    let r_ij = pose_j.rotation * pose_i.rotation.transpose();
    let t_ij = pose_j.rotation.apply(&(pose_i.translation - pose_j.translation));
    (r_ij, t_ij)
}

/// Projects a world point; returns the normalized observation and its depth.
pub fn project(pose: &CameraPose, point_world: &Vec3) -> Result<(Observation, f64), GeometryError> {
    let pc = pose.to_camera(point_world);
    if pc.z.abs() < MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    Ok((Observation { x: pc.x / pc.z, y: pc.y / pc.z }, pc.z))
}

/// Epipolar normal `[R x_i]x x_j`; zero iff the correspondence is consistent with
/// pure rotation.
#[inline]
pub fn theta(r_ij: &Rotation, x_i: &Observation, x_j: &Observation) -> Vec3 {
    r_ij.apply(&x_i.hom()).cross(&x_j.hom())
}

/// Angle of `r_gt^T r_e` in radians.
///
/// Evaluated as `atan2(|vee|, (tr - 1)/2)`, which equals
/// `arccos((tr - 1)/2)` but keeps full precision for small angles.
pub fn rotation_error(r_gt: &Rotation, r_e: &Rotation) -> f64 {
    let d = r_gt.matrix().transpose() * r_e.matrix();
    let cos = ((d.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = vee(&d).norm().min(1.0);
    sin.atan2(cos)
}
