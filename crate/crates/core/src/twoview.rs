//! Pose-only reprojection residuals and two-view rotation optimization.
//!
//! The predicted ray in view `j` is `Y = |[X_j]x t| R X_i + |theta| t`, with
//! `t` oriented so that `theta` and `[X_j]x t` point the same way. The single
//! point functions orient per point; pair residuals orient once per pair by
//! majority, which keeps `Y` continuous in `R`. Scaling `t` by any non-zero
//! factor therefore only rescales `Y`.
//! Noise-free, `|theta| Y = S t` with `S = -[[X_j]x theta]x [R X_i]x`.
//! When `theta` vanishes the prediction falls back to `R X_i`.

use nalgebra::DVector;
use thiserror::Error;

use crate::detector::{classify, SceneLabel};
use crate::geometry::{exp_so3, skew, Observation, Rotation, Vec3};
use crate::graph::{MatchedPair, TrackId};
use crate::lm::{minimize, LMConfig, LmError, LmProblem, LmReport, Termination};
use crate::translation::{solve_translation, TranslationError};

/// `|theta|` at or below this fraction of `|R X_i| |X_j|` counts as zero parallax.
pub const THETA_TOL: f64 = 1e-12;
/// `|Y_3|` below this fraction of `|Y|` makes the image-plane coordinate undefined.
pub const COORD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwoViewError {
    #[error("pair is rotation-singular; translation and rotation are not jointly observable")]
    RotationSingular,
    #[error("translation direction is undetermined for a pair labelled {0}")]
    DegeneratePair(SceneLabel),
    #[error("predicted ray of track {0} is parallel to the image plane")]
    CoordinateUndefined(TrackId),
    #[error("initial translation must be non-zero and finite")]
    ZeroTranslation,
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Lm(#[from] LmError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResidualForm {
    /// Chordal difference of unit bearing vectors.
    #[default]
    Bearing,
    /// Difference on the `z = 1` image plane.
    Coordinate,
}

/// Predicted reprojection of `x_i` into view `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseOnlyCoord {
    /// Homogeneous image point with third component 1, if defined.
    pub coord: Option<Vec3>,
    pub bearing: Vec3,
}

/// Predicted ray in view `j` for an already oriented `t`, or `R X_i` when parallax vanishes.
fn predicted_ray(r_ij: &Rotation, t: &Vec3, x_i: &Observation, x_j: &Observation) -> Vec3 {
    let a = r_ij.apply(&x_i.hom());
    let b = x_j.hom();
    let th_n = a.cross(&b).norm();
    if th_n <= THETA_TOL * a.norm() * b.norm() {
        return a;
    }
    let y = a * b.cross(t).norm() + t * th_n;
    let n = y.norm();
    if n == 0.0 || !n.is_finite() {
        return a;
    }
    y
}

/// `theta . ([X_j]x t)`; positive when `t` is oriented for this point.
fn chirality(r_ij: &Rotation, t: &Vec3, x_i: &Observation, x_j: &Observation) -> f64 {
    let a = r_ij.apply(&x_i.hom());
    let b = x_j.hom();
    a.cross(&b).dot(&b.cross(t))
}

/// `t` or `-t`, whichever the majority of points orient towards.
/// Ties go to the sign of the summed chirality.
pub fn orient_translation<'a>(
    r_ij: &Rotation,
    t: &Vec3,
    points: impl IntoIterator<Item = (&'a Observation, &'a Observation)>,
) -> Vec3 {
    let (mut votes, mut sum) = (0i64, 0.0);
    for (x_i, x_j) in points {
        let c = chirality(r_ij, t, x_i, x_j);
        votes += (c > 0.0) as i64 - (c < 0.0) as i64;
        sum += c;
    }
    if votes < 0 || (votes == 0 && sum < 0.0) {
        -t
    } else {
        *t
    }
}

fn coord_from_ray(y: Vec3) -> PoseOnlyCoord {
    let coord = (y.z.abs() >= COORD_TOL * y.norm()).then(|| y / y.z);
    PoseOnlyCoord { coord, bearing: y.normalize() }
}

/// Prediction with `t` oriented for this point alone.
pub fn pose_only_coord(r_ij: &Rotation, t_dir: &Vec3, x_i: &Observation, x_j: &Observation) -> PoseOnlyCoord {
    let t = if chirality(r_ij, t_dir, x_i, x_j) < 0.0 { -t_dir } else { *t_dir };
    coord_from_ray(predicted_ray(r_ij, &t, x_i, x_j))
}

/// Prediction with `t` used as given, for callers that orient it per pair.
pub fn oriented_pose_only_coord(r_ij: &Rotation, t: &Vec3, x_i: &Observation, x_j: &Observation) -> PoseOnlyCoord {
    coord_from_ray(predicted_ray(r_ij, t, x_i, x_j))
}

/// `S = -[[X_j]x theta]x [R X_i]x`.
pub fn s_matrix(r_ij: &Rotation, x_i: &Observation, x_j: &Observation) -> crate::geometry::Mat3 {
    let a = r_ij.apply(&x_i.hom());
    let b = x_j.hom();
    let th = a.cross(&b);
    -skew(&(skew(&b) * th)) * skew(&a)
}

fn block(obs: &Observation, pred: &PoseOnlyCoord, form: ResidualForm, track: TrackId) -> Result<[f64; 3], TwoViewError> {
    let v = match form {
        ResidualForm::Bearing => obs.bearing() - pred.bearing,
        ResidualForm::Coordinate => obs.hom() - pred.coord.ok_or(TwoViewError::CoordinateUndefined(track))?,
    };
    Ok([v.x, v.y, v.z])
}

/// View-`i` and view-`j` residual blocks for one correspondence, observed minus predicted.
pub fn pa_residual_form(
    r_ij: &Rotation,
    t_dir: &Vec3,
    x_i: &Observation,
    x_j: &Observation,
    form: ResidualForm,
) -> Result<[f64; 6], TwoViewError> {
    let r_ji = r_ij.transpose();
    let t_ji = -r_ji.apply(t_dir);
    let pred_i = pose_only_coord(&r_ji, &t_ji, x_j, x_i);
    let pred_j = pose_only_coord(r_ij, t_dir, x_i, x_j);
    let bi = block(x_i, &pred_i, form, 0)?;
    let bj = block(x_j, &pred_j, form, 0)?;
    Ok([bi[0], bi[1], bi[2], bj[0], bj[1], bj[2]])
}

/// Bearing-form residual for one correspondence.
pub fn pa_residual(r_ij: &Rotation, t_dir: &Vec3, x_i: &Observation, x_j: &Observation) -> [f64; 6] {
    pa_residual_form(r_ij, t_dir, x_i, x_j, ResidualForm::Bearing).expect("bearing form is always defined")
}

/// Residual blocks for the pure-rotation case, independent of translation.
pub fn pure_rotation_residual(r_ij: &Rotation, x_i: &Observation, x_j: &Observation) -> [f64; 6] {
    let vi = x_i.bearing() - r_ij.transpose().apply(&x_j.hom()).normalize();
    let vj = x_j.bearing() - r_ij.apply(&x_i.hom()).normalize();
    [vi.x, vi.y, vi.z, vj.x, vj.y, vj.z]
}

/// Stacked per-point residual blocks with the track of each block.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualVector {
    pub blocks: Vec<[f64; 6]>,
    pub tracks: Vec<TrackId>,
}

impl ResidualVector {
    pub fn cost(&self) -> f64 {
        self.blocks.iter().flatten().map(|v| v * v).sum()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(self.blocks.len() * 6, self.blocks.iter().flatten().copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoViewProblem {
    pub pair: MatchedPair,
    pub r_init: Rotation,
    pub scene_label: SceneLabel,
}

impl TwoViewProblem {
    pub fn new(pair: MatchedPair, r_init: Rotation, scene_label: SceneLabel) -> Self {
        TwoViewProblem { pair, r_init, scene_label }
    }

    /// Labels the pair with the detector evaluated at `r_init`.
    pub fn classified(pair: MatchedPair, r_init: Rotation, threshold_rs: f64, threshold_pr: f64) -> Result<Self, TwoViewError> {
        let label = classify(&pair, &r_init, threshold_rs, threshold_pr)?.label;
        Ok(Self::new(pair, r_init, label))
    }
}

/// Residual blocks with an externally supplied translation (no analytic solve).
/// The translation is oriented once per direction over the whole pair.
pub fn residual_with_translation(pair: &MatchedPair, r_ij: &Rotation, t: &Vec3, form: ResidualForm) -> Result<ResidualVector, TwoViewError> {
    let r_ji = r_ij.transpose();
    let t_ij = orient_translation(r_ij, t, pair.points.iter().map(|c| (&c.left, &c.right)));
    let t_ji = orient_translation(&r_ji, &-r_ji.apply(t), pair.points.iter().map(|c| (&c.right, &c.left)));
    let mut blocks = Vec::with_capacity(pair.len());
    for c in &pair.points {
        let pred_i = oriented_pose_only_coord(&r_ji, &t_ji, &c.right, &c.left);
        let pred_j = oriented_pose_only_coord(r_ij, &t_ij, &c.left, &c.right);
        let bi = block(&c.left, &pred_i, form, c.track)?;
        let bj = block(&c.right, &pred_j, form, c.track)?;
        blocks.push([bi[0], bi[1], bi[2], bj[0], bj[1], bj[2]]);
    }
    Ok(ResidualVector { blocks, tracks: pair.points.iter().map(|c| c.track).collect() })
}

/// Rotation-only residual: the translation is re-solved from `r_ij` and the observations.
pub fn trrm_residual_form(problem: &TwoViewProblem, r_ij: &Rotation, form: ResidualForm) -> Result<ResidualVector, TwoViewError> {
    match problem.scene_label {
        SceneLabel::RotationSingular => Err(TwoViewError::RotationSingular),
        SceneLabel::PureRotationLike => Ok(ResidualVector {
            blocks: problem.pair.points.iter().map(|c| pure_rotation_residual(r_ij, &c.left, &c.right)).collect(),
            tracks: problem.pair.points.iter().map(|c| c.track).collect(),
        }),
        SceneLabel::Regular => {
            let t = solve_translation(&problem.pair, r_ij)?
                .direction
                .ok_or(TwoViewError::DegeneratePair(problem.scene_label))?;
            residual_with_translation(&problem.pair, r_ij, &t, form)
        }
    }
}

pub fn trrm_residual(problem: &TwoViewProblem, r_ij: &Rotation) -> Result<ResidualVector, TwoViewError> {
    trrm_residual_form(problem, r_ij, ResidualForm::Bearing)
}

pub fn trrm_cost(problem: &TwoViewProblem, r_ij: &Rotation) -> Result<f64, TwoViewError> {
    Ok(trrm_residual(problem, r_ij)?.cost())
}

/// LM objective over the relative rotation, `R <- exp(delta) R`.
pub struct TrrmObjective<'a> {
    pub problem: &'a TwoViewProblem,
}

impl LmProblem for TrrmObjective<'_> {
    type State = Rotation;
    type Layout = ();

    fn n_params(&self) -> usize {
        3
    }

    fn layout(&self, state: &Rotation) -> Result<(), String> {
        trrm_residual(self.problem, state).map(|_| ()).map_err(|e| e.to_string())
    }

    fn residuals(&self, state: &Rotation, _: &(), cfg: &LMConfig) -> Option<DVector<f64>> {
        let mut r = trrm_residual(self.problem, state).ok()?.to_dvector();
        cfg.robustify_all(r.as_mut_slice());
        Some(r)
    }

    fn retract(&self, state: &Rotation, delta: &[f64]) -> Rotation {
        exp_so3(&Vec3::new(delta[0], delta[1], delta[2])) * *state
    }

    fn renormalize(&self, state: &Rotation) -> Rotation {
        state.renormalized()
    }
}

#[derive(Clone, Debug)]
pub struct TwoViewResult {
    pub rotation: Rotation,
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Option<Termination>,
    /// True when the solver returned the input unchanged (rotation-singular pair).
    pub skipped: bool,
}

impl TwoViewResult {
    fn from_report(rep: LmReport<Rotation>) -> Self {
        TwoViewResult {
            rotation: rep.state,
            cost_trace: rep.cost_trace,
            iterations: rep.iterations,
            converged: rep.converged,
            termination: Some(rep.termination),
            skipped: false,
        }
    }
}

/// Minimizes the rotation-only two-view cost from `problem.r_init`.
pub fn optimize_two_view(problem: &TwoViewProblem, cfg: &LMConfig) -> Result<TwoViewResult, TwoViewError> {
    if problem.scene_label == SceneLabel::RotationSingular {
        log::info!("rotation-singular pair ({}, {}) skipped", problem.pair.left_view, problem.pair.right_view);
        return Ok(TwoViewResult {
            rotation: problem.r_init,
            cost_trace: Vec::new(),
            iterations: 0,
            converged: false,
            termination: None,
            skipped: true,
        });
    }
    let rep = minimize(&TrrmObjective { problem }, problem.r_init, cfg)?;
    Ok(TwoViewResult::from_report(rep))
}

/// Orthonormal basis of the plane orthogonal to unit `t`.
fn tangent_basis(t: &Vec3) -> (Vec3, Vec3) {
    let pick = if t.x.abs() <= t.y.abs() && t.x.abs() <= t.z.abs() {
        Vec3::x()
    } else if t.y.abs() <= t.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let u = t.cross(&pick).normalize();
    (u, t.cross(&u))
}

/// Joint rotation and translation-direction objective (5 DoF).
pub struct PaObjective<'a> {
    pub pair: &'a MatchedPair,
}

impl LmProblem for PaObjective<'_> {
    type State = (Rotation, Vec3);
    type Layout = ();

    fn n_params(&self) -> usize {
        5
    }

    fn layout(&self, _: &(Rotation, Vec3)) -> Result<(), String> {
        Ok(())
    }

    fn residuals(&self, (r, t): &(Rotation, Vec3), _: &(), cfg: &LMConfig) -> Option<DVector<f64>> {
        let mut v = residual_with_translation(self.pair, r, t, ResidualForm::Bearing).ok()?.to_dvector();
        cfg.robustify_all(v.as_mut_slice());
        Some(v)
    }

    fn retract(&self, (r, t): &(Rotation, Vec3), d: &[f64]) -> (Rotation, Vec3) {
        let (u, w) = tangent_basis(t);
        (exp_so3(&Vec3::new(d[0], d[1], d[2])) * *r, (t + u * d[3] + w * d[4]).normalize())
    }

    fn renormalize(&self, (r, t): &(Rotation, Vec3)) -> (Rotation, Vec3) {
        (r.renormalized(), t.normalize())
    }
}

#[derive(Clone, Debug)]
pub struct PaResult {
    pub rotation: Rotation,
    pub translation: Vec3,
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The translation direction does not influence the cost.
    pub degenerate: bool,
}

/// Pose-adjustment baseline: joint LM over rotation and translation direction.
pub fn optimize_two_view_pa(problem: &TwoViewProblem, t_init: &Vec3, cfg: &LMConfig) -> Result<PaResult, TwoViewError> {
    let n = t_init.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(TwoViewError::ZeroTranslation);
    }
    let objective = PaObjective { pair: &problem.pair };
    let rep = minimize(&objective, (problem.r_init, t_init / n), cfg)?;
    let r = objective.residuals(&rep.state, &(), cfg).expect("bearing residual is total");
    let jac = objective.jacobian(&rep.state, &(), &r, cfg).to_dense();
    let col_sq = |c: usize| jac.column(c).norm_squared();
    let rot_scale = (0..3).map(col_sq).sum::<f64>();
    let trans_scale = col_sq(3) + col_sq(4);
    let degenerate = trans_scale <= 1e-12 * rot_scale.max(f64::MIN_POSITIVE);
    let (rotation, translation) = rep.state;
    Ok(PaResult { rotation, translation, cost_trace: rep.cost_trace, iterations: rep.iterations, converged: rep.converged, degenerate })
}
