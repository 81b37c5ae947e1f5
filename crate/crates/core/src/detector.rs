//! Two-view scene-structure detection.
//!
//! Pure rotation (and points on the baseline or at infinity) is recognized by
//! a vanishing mean `|theta|^2`. Rotation-singular structure (all points
//! coplanar with both centers, or collinear) makes the observation Gram
//! matrices `G = sum X X^T` rank deficient, which `v_rs` measures.
//! All values are in normalized image coordinates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Rotation};
use crate::graph::MatchedPair;
use crate::translation::{accumulate_ps, eigenvalues_cardano, TranslationError};

pub const DEFAULT_THRESHOLD_RS: f64 = 1e-4;
pub const DEFAULT_THRESHOLD_PR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SceneLabel {
    PureRotationLike,
    RotationSingular,
    Regular,
}

impl SceneLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneLabel::PureRotationLike => "PureRotationLike",
            SceneLabel::RotationSingular => "RotationSingular",
            SceneLabel::Regular => "Regular",
        }
    }
}

impl fmt::Display for SceneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionReport {
    pub g_i_lambda_min: f64,
    pub g_j_lambda_min: f64,
    pub v_rs: f64,
    pub theta_mean_sq: f64,
    pub label: SceneLabel,
}

/// Gram matrices of the homogeneous observations in each view.
pub fn detection_matrices(pair: &MatchedPair) -> (Mat3, Mat3) {
    pair.points.iter().fold((Mat3::zeros(), Mat3::zeros()), |(gi, gj), c| {
        let (a, b) = (c.left.hom(), c.right.hom());
        (gi + a * a.transpose(), gj + b * b.transpose())
    })
}

fn gram_minima(pair: &MatchedPair) -> Result<(f64, f64), TranslationError> {
    let (gi, gj) = detection_matrices(pair);
    Ok((eigenvalues_cardano(&gi)?[0], eigenvalues_cardano(&gj)?[0]))
}

fn v_rs_from(gi: f64, gj: f64, m: usize) -> f64 {
    (gi.max(gj) / m.max(1) as f64).max(0.0)
}

/// Larger of the two Gram-matrix minimum eigenvalues, divided by the point count.
pub fn v_rs(pair: &MatchedPair) -> Result<f64, TranslationError> {
    let (gi, gj) = gram_minima(pair)?;
    Ok(v_rs_from(gi, gj, pair.len()))
}

/// Labels the pair: pure-rotation first, then rotation-singular, else regular.
pub fn classify(
    pair: &MatchedPair,
    r_ij: &Rotation,
    threshold_rs: f64,
    threshold_pr: f64,
) -> Result<DetectionReport, TranslationError> {
    let (gi, gj) = gram_minima(pair)?;
    let v = v_rs_from(gi, gj, pair.len());
    let theta_mean_sq = accumulate_ps(pair, r_ij).trace / pair.len().max(1) as f64;
    let label = if theta_mean_sq < threshold_pr {
        SceneLabel::PureRotationLike
    } else if v < threshold_rs {
        SceneLabel::RotationSingular
    } else {
        SceneLabel::Regular
    };
    Ok(DetectionReport { g_i_lambda_min: gi, g_j_lambda_min: gj, v_rs: v, theta_mean_sq, label })
}
