//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::DVector;
use rand::Rng;
use rotonly::geometry::{exp_so3, relative_pose, skew, Mat3, Observation, Rotation, Vec3};
use rotonly::graph::{TrackId, ViewGraph, ViewId};
use rotonly::lm::{LMConfig, LmProblem};
use rotonly::sim::triangulate_midpoint;

pub fn rand_vec(rng: &mut impl Rng, s: f64) -> Vec3 {
    Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

pub fn rand_rotation(rng: &mut impl Rng) -> Rotation {
    exp_so3(&rand_vec(rng, std::f64::consts::PI / 1.8))
}

pub fn rand_obs(rng: &mut impl Rng) -> Observation {
    Observation::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Per-point observation matrix written out term by term, without forming theta first.
pub fn long_form_point_matrix(r: &Rotation, x_i: &Observation, x_j: &Observation) -> Mat3 {
    let (a, b) = (r.apply(&x_i.hom()), x_j.hom());
    let th = skew(&a) * b;
    -b * th.transpose() * skew(&a) + a * th.transpose() * skew(&b) + Mat3::identity() * th.norm_squared()
}

/// Derivative column by Richardson extrapolation of central differences at
/// steps `h0`, `h0/2`, `h0/4` (error of order `h0^6`).
pub fn richardson_column<P: LmProblem>(problem: &P, state: &P::State, layout: &P::Layout, cfg: &LMConfig, param: usize, h0: f64) -> DVector<f64> {
    let central = |h: f64| {
        let mut d = vec![0.0; problem.n_params()];
        d[param] = h;
        let p = problem.residuals(&problem.retract(state, &d), layout, cfg).expect("probe inside domain");
        d[param] = -h;
        let m = problem.residuals(&problem.retract(state, &d), layout, cfg).expect("probe inside domain");
        (p - m) / (2.0 * h)
    };
    let (d1, d2, d3) = (central(h0), central(h0 / 2.0), central(h0 / 4.0));
    let e1 = (&d2 * 4.0 - &d1) / 3.0;
    let e2 = (&d3 * 4.0 - &d2) / 3.0;
    (&e2 * 16.0 - &e1) / 15.0
}

/// Richardson reference with the step chosen per entry: of the estimates at
/// `h0` in {1e-2, 1e-3, 1e-4}, keeps the finer one of the consecutive pair
/// that agrees best.
pub fn reference_column<P: LmProblem>(problem: &P, state: &P::State, layout: &P::Layout, cfg: &LMConfig, param: usize) -> DVector<f64> {
    let est: Vec<DVector<f64>> = [1e-2, 1e-3, 1e-4].iter().map(|&h| richardson_column(problem, state, layout, cfg, param, h)).collect();
    DVector::from_fn(est[0].len(), |i, _| {
        if (est[0][i] - est[1][i]).abs() <= (est[1][i] - est[2][i]).abs() {
            est[1][i]
        } else {
            est[2][i]
        }
    })
}

/// Reprojection residual (predicted minus observed, image plane) of track `k`
/// in view `i` against the point rebuilt from analytic depths.
///
/// Each edge `(i, j)` carrying the track contributes the back-projection of
/// the view-`j` observation at its analytic depth, using ground-truth
/// translations; contributions are weighted by `|theta|` normalized over edges.
pub fn weighted_depth_point_residual(graph: &ViewGraph, i: ViewId, k: TrackId) -> Option<Vec3> {
    let gt = graph.ground_truth.as_ref()?;
    let mut point = Vec3::zeros();
    let mut total = 0.0;
    for e in &graph.edges {
        let j = if e.left_view == i {
            e.right_view
        } else if e.right_view == i {
            e.left_view
        } else {
            continue;
        };
        let Some(c) = e.points.iter().find(|c| c.track == k) else { continue };
        let (x_i, x_j) = if e.left_view == i { (c.left, c.right) } else { (c.right, c.left) };
        let (r_ij, t_ij) = relative_pose(&gt[i], &gt[j]);
        let a = r_ij.apply(&x_i.hom());
        let th = a.cross(&x_j.hom()).norm();
        if th == 0.0 {
            continue;
        }
        let depth_j = a.cross(&t_ij).norm() / th;
        point += gt[j].back_project(&x_j, depth_j) * th;
        total += th;
    }
    if total == 0.0 {
        return None;
    }
    let pc = gt[i].to_camera(&(point / total));
    let obs = graph.tracks.iter().find(|t| t.id == k)?.observation_in(i)?;
    Some(pc / pc.z - obs.hom())
}

/// Reprojection residual against the midpoint triangulation of the whole track.
pub fn midpoint_residual(graph: &ViewGraph, i: ViewId, k: TrackId) -> Option<Vec3> {
    let gt = graph.ground_truth.as_ref()?;
    let track = graph.tracks.iter().find(|t| t.id == k)?;
    let poses: Vec<_> = track.observations.iter().map(|(v, _)| gt[*v]).collect();
    let obs: Vec<_> = track.observations.iter().map(|(_, o)| *o).collect();
    let x = triangulate_midpoint(&poses, &obs).ok()?;
    let pc = gt[i].to_camera(&x);
    Some(pc / pc.z - track.observation_in(i)?.hom())
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
