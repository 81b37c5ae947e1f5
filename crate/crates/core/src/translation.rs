//! Analytic relative-translation recovery from a matched pair and a rotation.
//!
//! `P^S = sum_k theta_k theta_k^T` has the translation direction in its null
//! space. The smallest eigenvalue is found in closed form (trigonometric
//! Cardano) and the eigenvector as the largest cross product of two rows of
//! `P^S - lambda I`.

use std::f64::consts::PI;

use nalgebra::Matrix3xX;
use thiserror::Error;

use crate::geometry::{theta, Mat3, Observation, Rotation, Vec3};
use crate::graph::MatchedPair;

/// Relative threshold on eigenvalues when counting rank.
pub const TOL_RANK: f64 = 1e-8;
/// Absolute floor for the rank threshold.
pub const EPS_ABS: f64 = 1e-14;
/// Relative threshold (against `trace^2`) below which every cross product is treated as zero.
pub const TOL_XI: f64 = 1e-12;
/// `|p| <= TOL_TRIPLE * trace^2` is handled as a triple root.
pub const TOL_TRIPLE: f64 = 1e-14;
/// Largest tolerated overshoot of the arccos argument before it is clamped.
pub const ARCCOS_SLACK: f64 = 1e-9;
/// Largest relative move accepted from the smallest-root polish.
pub const POLISH_WINDOW: f64 = 1e-6;
/// Minimum cross-product norm, relative to `|A - lo I|_F^2`, for the polish to apply.
pub const POLISH_RELIABLE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslationError {
    #[error("cubic arccos argument {argument} lies outside [-1, 1] beyond tolerance")]
    CardanoDomain { argument: f64 },
    #[error("non-finite entries in the observation matrix")]
    NonFinite,
}

/// `P^S` together with its trace and the number of points that built it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationSummary {
    pub ps: Mat3,
    pub m: usize,
    pub trace: f64,
}

impl ObservationSummary {
    pub fn from_matrix(ps: Mat3, m: usize) -> Self {
        ObservationSummary { ps, m, trace: ps.trace() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RankClass {
    /// No eigenvalue above threshold: pure rotation, baseline or infinity points.
    Rank0,
    /// One dominant eigenvalue: all finite points coplanar with both centers.
    Rank1,
    /// Two or more eigenvalues above threshold (general scene; noise lifts the third).
    Rank2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TranslationSolution {
    /// Unit translation direction, or `None` when the null space is not one-dimensional.
    pub direction: Option<Vec3>,
    pub lambda_min: f64,
    pub rank_class: RankClass,
    pub xi_norms: [f64; 3],
}

/// Per-point summand `theta theta^T`.
pub fn point_matrix(r_ij: &Rotation, x_i: &Observation, x_j: &Observation) -> Mat3 {
    let th = theta(r_ij, x_i, x_j);
    th * th.transpose()
}

/// Builds `P^S` as `M M^T` with the `theta` vectors stacked as columns of `M`.
pub fn accumulate_ps(pair: &MatchedPair, r_ij: &Rotation) -> ObservationSummary {
    let m = Matrix3xX::from_iterator(
        pair.points.len(),
        pair.points.iter().flat_map(|c| {
            let th = theta(r_ij, &c.left, &c.right);
            [th.x, th.y, th.z]
        }),
    );
    ObservationSummary::from_matrix(&m * m.transpose(), pair.points.len())
}

/// Depressed-cubic coefficients `(p, q)` and the shift `trace/3`.
///
/// With `B = A - (tr/3) I` the characteristic polynomial becomes
/// `y^3 + p y + q` where `p = -tr(B^2)/2` and `q = -det B`.
fn depressed_cubic(a: &Mat3) -> (f64, f64, f64) {
    let shift = a.trace() / 3.0;
    let b = a - Mat3::identity() * shift;
    let p = -0.5 * (b.transpose() * b).trace();
    let q = -b.determinant();
    (p, q, shift)
}

/// All three eigenvalues of a symmetric matrix in ascending order.
pub fn eigenvalues_cardano(a: &Mat3) -> Result<[f64; 3], TranslationError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(TranslationError::NonFinite);
    }
    let (p, q, shift) = depressed_cubic(a);
    let tr = a.trace();
    if p.abs() <= TOL_TRIPLE * tr * tr {
        return Ok([shift; 3]);
    }
    let mut arg = 0.5 * q * (-27.0 / (p * p * p)).sqrt();
    if arg.abs() > 1.0 {
        if arg.abs() - 1.0 >= ARCCOS_SLACK {
            return Err(TranslationError::CardanoDomain { argument: arg });
        }
        arg = arg.clamp(-1.0, 1.0);
    }
    let phi = arg.acos();
    let r = 2.0 * (-p / 3.0).sqrt();
    let root = |k: f64| -r * ((phi + 2.0 * PI * k) / 3.0).cos() + shift;
    let (lo, hi) = (root(0.0), root(1.0));
    let lo = polish_smallest(a, lo, hi);
    let mid = tr - hi - lo;
    Ok([lo, mid.clamp(lo, hi), hi])
}

/// Rayleigh quotient along the row-cross-product null vector of `A - lo I`.
///
/// Near a repeated smallest root the trigonometric form loses half the digits;
/// the quotient recovers them. Rejected if it moves farther than Cardano's error could.
fn polish_smallest(a: &Mat3, lo: f64, hi: f64) -> f64 {
    let b = a - Mat3::identity() * lo;
    let rows = [b.row(0).transpose(), b.row(1).transpose(), b.row(2).transpose()];
    let xi = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])]
        .into_iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .expect("three candidates");
    let n = xi.norm();
    // Below this the cross product is dominated by rounding, which only
    // happens when `lo` is already accurate.
    if !n.is_finite() || n < POLISH_RELIABLE * b.norm_squared() {
        return lo;
    }
    let v = xi / n;
    let rq = v.dot(&(a * v));
    if (rq - lo).abs() <= POLISH_WINDOW * hi.abs().max(lo.abs()) {
        rq
    } else {
        lo
    }
}

/// Smallest eigenvalue of `P^S` by the trigonometric Cardano formula.
pub fn lambda_min_cardano(s: &ObservationSummary) -> Result<f64, TranslationError> {
    eigenvalues_cardano(&s.ps).map(|v| v[0])
}

fn rank_from_eigenvalues(eig: &[f64; 3], trace: f64) -> RankClass {
    let threshold = TOL_RANK * trace.max(EPS_ABS);
    match eig.iter().filter(|&&l| l > threshold).count() {
        0 => RankClass::Rank0,
        1 => RankClass::Rank1,
        _ => RankClass::Rank2,
    }
}

/// Rank class of `P^S` from its eigenvalues.
pub fn rank_classify(s: &ObservationSummary) -> Result<RankClass, TranslationError> {
    Ok(rank_from_eigenvalues(&eigenvalues_cardano(&s.ps)?, s.trace))
}

/// Flips `v` so that its first component with magnitude above `1e-12` is positive.
pub fn canonical_sign(v: Vec3) -> Vec3 {
    match v.iter().find(|c| c.abs() > 1e-12) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// Null-space direction of `P^S - lambda I` from row cross products.
pub fn min_eigenvector_xi(s: &ObservationSummary, lambda_min: f64) -> Result<TranslationSolution, TranslationError> {
    let a = s.ps - Mat3::identity() * lambda_min;
    let rows = [a.row(0).transpose(), a.row(1).transpose(), a.row(2).transpose()];
    let xis = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
    let xi_norms = [xis[0].norm(), xis[1].norm(), xis[2].norm()];
    let max = xi_norms.iter().cloned().fold(0.0, f64::max);
    let best = xi_norms.iter().position(|&n| n >= max - 1e-12 * max).unwrap_or(0);
    let direction = if max > 0.0 && max >= TOL_XI * s.trace * s.trace {
        Some(canonical_sign(xis[best] / xi_norms[best]))
    } else {
        None
    };
    let eig = eigenvalues_cardano(&s.ps)?;
    Ok(TranslationSolution { direction, lambda_min, rank_class: rank_from_eigenvalues(&eig, s.trace), xi_norms })
}

/// Accumulates `P^S` and solves for the translation direction.
pub fn solve_translation(pair: &MatchedPair, r_ij: &Rotation) -> Result<TranslationSolution, TranslationError> {
    solve_summary(&accumulate_ps(pair, r_ij))
}

pub fn solve_summary(s: &ObservationSummary) -> Result<TranslationSolution, TranslationError> {
    let lambda = lambda_min_cardano(s)?;
    min_eigenvector_xi(s, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_so3, skew};
    use crate::graph::Correspondence;
    use crate::sim::oracle::jacobi_eigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_obs(rng: &mut ChaCha8Rng) -> Observation {
        Observation::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn summary_of(m: Mat3) -> ObservationSummary {
        ObservationSummary::from_matrix(m, 1)
    }

    #[test]
    fn point_matrix_examples() {
        let r = Rotation::about_z(0.4);
        let xi = Observation::new(0.1, -0.2);
        let xj = Observation::from_ray(&r.apply(&xi.hom())).unwrap();
        assert!(point_matrix(&r, &xi, &xj).norm() < 1e-24);
        let p = point_matrix(&Rotation::identity(), &Observation::new(0.0, 0.0), &Observation::new(1.0, 0.0));
        let mut expect = Mat3::zeros();
        expect[(1, 1)] = 1.0;
        assert_eq!(p, expect);
    }

    #[test]
    fn point_matrix_matches_long_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let r = exp_so3(&Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let (xi, xj) = (rand_obs(&mut rng), rand_obs(&mut rng));
            let (a, b) = (r.apply(&xi.hom()), xj.hom());
            let th = skew(&a) * b;
            let long = -b * th.transpose() * skew(&a) + a * th.transpose() * skew(&b) + Mat3::identity() * th.norm_squared();
            let p = point_matrix(&r, &xi, &xj);
            assert!((long - p).norm() <= 1e-10 * p.norm().max(1e-300));
        }
    }

    #[test]
    fn cardano_examples() {
        let s = summary_of(Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0)));
        assert!((lambda_min_cardano(&s).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lambda_min_cardano(&summary_of(Mat3::zeros())).unwrap(), 0.0);
        assert_eq!(eigenvalues_cardano(&(Mat3::identity() * 2.0)).unwrap(), [2.0; 3]);
    }

    #[test]
    fn cardano_matches_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for i in 0..2000 {
            let rank = 1 + i % 3;
            let mut m = Mat3::zeros();
            for _ in 0..rank {
                let v = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                m += v * v.transpose();
            }
            let ours = eigenvalues_cardano(&m).unwrap();
            let (reference, _) = jacobi_eigen(&m);
            let tol = 1e-9 * m.trace().max(1.0);
            for k in 0..3 {
                assert!((ours[k] - reference[k]).abs() <= tol, "{ours:?} vs {reference:?}");
            }
        }
    }

    #[test]
    fn xi_examples() {
        let s = summary_of(Mat3::from_diagonal(&Vec3::new(3.0, 2.0, 0.0)));
        let sol = min_eigenvector_xi(&s, 0.0).unwrap();
        assert_eq!(sol.direction, Some(Vec3::z()));
        assert_eq!(sol.rank_class, RankClass::Rank2);
        let zero = min_eigenvector_xi(&summary_of(Mat3::zeros()), 0.0).unwrap();
        assert_eq!(zero.direction, None);
        assert_eq!(zero.rank_class, RankClass::Rank0);
        let th = Vec3::new(1.0, 2.0, 3.0);
        let rank1 = solve_summary(&summary_of(th * th.transpose())).unwrap();
        assert_eq!(rank1.rank_class, RankClass::Rank1);
        assert_eq!(rank1.direction, None);
    }

    #[test]
    fn canonical_sign_rule() {
        assert_eq!(canonical_sign(Vec3::new(-1.0, 0.0, 0.0)), Vec3::x());
        assert_eq!(canonical_sign(Vec3::new(1e-13, -1.0, 0.0)), Vec3::new(-1e-13, 1.0, 0.0));
        assert_eq!(canonical_sign(Vec3::zeros()), Vec3::zeros());
    }

    #[test]
    fn noise_free_pair_recovers_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let r = exp_so3(&Vec3::new(0.2, -0.1, 0.3));
        let t = Vec3::new(0.3, -1.0, 0.4);
        let mut pts = Vec::new();
        for k in 0..50 {
            let xc = Vec3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(6.0..12.0));
            let xj = r.apply(&xc) + t;
            pts.push(Correspondence {
                left: Observation::from_ray(&xc).unwrap(),
                right: Observation::from_ray(&xj).unwrap(),
                track: k,
            });
        }
        let pair = MatchedPair::new(0, 1, pts).unwrap();
        let s = accumulate_ps(&pair, &r);
        assert!((s.ps * t).norm() < 1e-10 * s.trace * t.norm());
        let sol = solve_translation(&pair, &r).unwrap();
        let d = sol.direction.unwrap();
        assert!(d.cross(&t.normalize()).norm() < 1e-9);
        assert_eq!(sol.rank_class, RankClass::Rank2);
        assert!((s.ps * d).norm() <= 10.0 * sol.lambda_min.abs() + 1e-12 * s.trace);
        let mut rev = pair.clone();
        rev.points.reverse();
        assert!((accumulate_ps(&rev, &r).ps - s.ps).norm() <= 1e-12 * s.trace);
    }
}
