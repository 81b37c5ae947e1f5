//! Independent numerical references used to cross-check the closed-form paths.

use thiserror::Error;

use crate::geometry::{CameraPose, Mat3, Observation, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("need at least two views, got {0}")]
    TooFewViews(usize),
    #[error("pose and observation counts differ ({poses} vs {observations})")]
    LengthMismatch { poses: usize, observations: usize },
    #[error("rays are nearly parallel (condition number {condition:e})")]
    Degenerate { condition: f64 },
}

/// Condition number above which [`triangulate_midpoint`] reports degeneracy.
pub const MAX_CONDITION: f64 = 1e8;

/// Classical cyclic-by-largest Jacobi eigen-decomposition of a symmetric 3x3
/// matrix. Eigenvalues ascend; eigenvectors are the matching columns.
pub fn jacobi_eigen(sym: &Mat3) -> ([f64; 3], Mat3) {
    let mut a = *sym;
    let mut v = Mat3::identity();
    let scale = a.norm();
    for _ in 0..100 {
        let (mut p, mut q, mut off) = (0, 1, a[(0, 1)].abs());
        for &(i, j) in &[(0, 2), (1, 2)] {
            if a[(i, j)].abs() > off {
                off = a[(i, j)].abs();
                p = i;
                q = j;
            }
        }
        let off_norm = (2.0 * (a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2))).sqrt();
        if off_norm <= 1e-14 * scale || off == 0.0 {
            break;
        }
        let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
        let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
        let t = if tau == 0.0 { 1.0 } else { t };
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = t * c;
        let mut g = Mat3::identity();
        g[(p, p)] = c;
        g[(q, q)] = c;
        g[(p, q)] = s;
        g[(q, p)] = -s;
        a = g.transpose() * a * g;
        a[(p, q)] = 0.0;
        a[(q, p)] = 0.0;
        v *= g;
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = [a[(idx[0], idx[0])], a[(idx[1], idx[1])], a[(idx[2], idx[2])]];
    let vectors = Mat3::from_columns(&[v.column(idx[0]), v.column(idx[1]), v.column(idx[2])]);
    (values, vectors)
}

/// Least-squares point closest to all viewing rays.
pub fn triangulate_midpoint(poses: &[CameraPose], obs: &[Observation]) -> Result<Vec3, OracleError> {
    if poses.len() != obs.len() {
        return Err(OracleError::LengthMismatch { poses: poses.len(), observations: obs.len() });
    }
    if poses.len() < 2 {
        return Err(OracleError::TooFewViews(poses.len()));
    }
    let mut a = Mat3::zeros();
    let mut b = Vec3::zeros();
    for (pose, o) in poses.iter().zip(obs) {
        let d = pose.rotation.transpose().apply(&o.bearing());
        let proj = Mat3::identity() - d * d.transpose();
        a += proj;
        b += proj * pose.translation;
    }
    let (vals, _) = jacobi_eigen(&a);
    let condition = if vals[0] > 0.0 { vals[2] / vals[0] } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(OracleError::Degenerate { condition });
    }
    a.lu().solve(&b).ok_or(OracleError::Degenerate { condition })
}
