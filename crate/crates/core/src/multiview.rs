//! Global rotation estimation over a view graph.
//!
//! Each edge contributes pose-only predictions for both of its views, built
//! from the edge's relative rotation `R_j R_i^T` and its analytic translation
//! direction. The residual of view `i` and track `k` is the
//! `|theta|`-weighted average of the predictions minus the observation.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::DVector;
use thiserror::Error;

use crate::geometry::{exp_so3, rotation_error, theta, Mat3, Observation, Rotation, Vec3};
use crate::graph::{GraphError, TrackId, ViewGraph, ViewId};
use crate::lm::{minimize, LMConfig, LmError, LmProblem, SparseJacobian, Termination};
use crate::par::Execution;
use crate::translation::solve_translation;
use crate::twoview::{oriented_pose_only_coord, orient_translation, ResidualForm};

/// Parallax below which analytic depths are undefined.
pub const DEPTH_THETA_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiViewError {
    #[error("depth undefined: |theta| = {0:e}")]
    UndefinedDepth(f64),
    #[error("expected {expected} rotations, got {got}")]
    RotationCount { expected: usize, got: usize },
    #[error("track {track} has no usable edge in view {view}")]
    NoContributor { view: ViewId, track: TrackId },
    #[error("track {track} is not observed in view {view}")]
    NotObserved { view: ViewId, track: TrackId },
    #[error("no residual block survives at the initial rotations")]
    NoBlocks,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// Depths of the point in views `i` and `j`; `t_ij` carries the baseline scale.
pub fn analytical_depths(r_ij: &Rotation, t_ij: &Vec3, x_i: &Observation, x_j: &Observation) -> Result<(f64, f64), MultiViewError> {
    let a = r_ij.apply(&x_i.hom());
    let b = x_j.hom();
    let th = a.cross(&b).norm();
    if th < DEPTH_THETA_TOL {
        return Err(MultiViewError::UndefinedDepth(th));
    }
    Ok((b.cross(t_ij).norm() / th, a.cross(t_ij).norm() / th))
}

/// Global rotations with one view pinned as the gauge.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalRotations {
    pub rotations: Vec<Rotation>,
    pub gauge: ViewId,
}

impl GlobalRotations {
    pub fn new(rotations: Vec<Rotation>) -> Self {
        GlobalRotations { rotations, gauge: 0 }
    }

    /// Relative rotation `R_j R_i^T`.
    pub fn relative(&self, i: ViewId, j: ViewId) -> Rotation {
        self.rotations[j] * self.rotations[i].transpose()
    }

    /// Re-expresses all rotations so that the gauge view is the identity.
    pub fn regauged(&self) -> Self {
        let g = self.rotations[self.gauge].transpose();
        GlobalRotations { rotations: self.rotations.iter().map(|r| *r * g).collect(), gauge: self.gauge }
    }
}

/// `|theta|` per edge point and the resulting normalized weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeWeighting {
    /// Aligned with `graph.edges[e].points`.
    pub theta_norms: Vec<Vec<f64>>,
    /// Sum of `|theta|` over the edges observing `(view, track)`.
    pub omega: HashMap<(ViewId, TrackId), f64>,
}

impl EdgeWeighting {
    /// Weight of edge `e`, point `p` in the block of `view`; zero when the block has no parallax.
    pub fn weight(&self, graph: &ViewGraph, e: usize, p: usize, view: ViewId) -> f64 {
        let track = graph.edges[e].points[p].track;
        match self.omega.get(&(view, track)) {
            Some(&w) if w > 0.0 => self.theta_norms[e][p] / w,
            _ => 0.0,
        }
    }
}

pub fn edge_weights(graph: &ViewGraph, rotations: &GlobalRotations) -> Result<EdgeWeighting, MultiViewError> {
    check_count(graph, rotations)?;
    let mut omega = HashMap::new();
    let theta_norms = graph
        .edges
        .iter()
        .map(|e| {
            let r = rotations.relative(e.left_view, e.right_view);
            e.points
                .iter()
                .map(|c| {
                    let n = theta(&r, &c.left, &c.right).norm();
                    *omega.entry((e.left_view, c.track)).or_insert(0.0) += n;
                    *omega.entry((e.right_view, c.track)).or_insert(0.0) += n;
                    n
                })
                .collect()
        })
        .collect();
    Ok(EdgeWeighting { theta_norms, omega })
}

fn check_count(graph: &ViewGraph, rotations: &GlobalRotations) -> Result<(), MultiViewError> {
    if rotations.rotations.len() != graph.n_views {
        return Err(MultiViewError::RotationCount { expected: graph.n_views, got: rotations.rotations.len() });
    }
    Ok(())
}

/// One edge observation feeding a residual block.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Contributor {
    edge: usize,
    point: usize,
    /// The block's view is the edge's left view.
    left: bool,
}

#[derive(Clone, Debug)]
struct Block {
    view: ViewId,
    track: TrackId,
    target: Vec3,
    contributors: Vec<Contributor>,
}

/// Per-edge predictions at one set of rotations.
#[derive(Clone, Debug)]
struct EdgeEval {
    ok: bool,
    theta: Vec<f64>,
    pred_left: Vec<Option<Vec3>>,
    pred_right: Vec<Option<Vec3>>,
}

/// Blocks and contributors frozen for one LM iteration.
#[derive(Clone, Debug)]
pub struct GrrmLayout {
    active: Vec<(usize, Vec<usize>)>,
}

impl GrrmLayout {
    pub fn n_blocks(&self) -> usize {
        self.active.len()
    }
}

/// The multi-view rotation-only objective.
pub struct GrrmProblem<'a> {
    pub graph: &'a ViewGraph,
    pub form: ResidualForm,
    pub gauge: ViewId,
    blocks: Vec<Block>,
    block_index: HashMap<(ViewId, TrackId), usize>,
    incident: Vec<Vec<usize>>,
    /// Blocks fed by each edge, ascending.
    edge_blocks: Vec<Vec<usize>>,
    params: Vec<ViewId>,
}

impl<'a> GrrmProblem<'a> {
    pub fn new(graph: &'a ViewGraph, form: ResidualForm, gauge: ViewId) -> Self {
        let mut map: BTreeMap<(ViewId, TrackId), Vec<Contributor>> = BTreeMap::new();
        for (ei, e) in graph.edges.iter().enumerate() {
            for (pi, c) in e.points.iter().enumerate() {
                map.entry((e.left_view, c.track)).or_default().push(Contributor { edge: ei, point: pi, left: true });
                map.entry((e.right_view, c.track)).or_default().push(Contributor { edge: ei, point: pi, left: false });
            }
        }
        let blocks: Vec<Block> = map
            .into_iter()
            .map(|((view, track), contributors)| {
                let c0 = contributors[0];
                let cor = graph.edges[c0.edge].points[c0.point];
                let obs = if c0.left { cor.left } else { cor.right };
                let target = match form {
                    ResidualForm::Bearing => obs.bearing(),
                    ResidualForm::Coordinate => obs.hom(),
                };
                Block { view, track, target, contributors }
            })
            .collect();
        let block_index = blocks.iter().enumerate().map(|(i, b)| ((b.view, b.track), i)).collect();
        let mut edge_blocks = vec![Vec::new(); graph.edges.len()];
        for (bi, b) in blocks.iter().enumerate() {
            for c in &b.contributors {
                edge_blocks[c.edge].push(bi);
            }
        }
        for v in &mut edge_blocks {
            v.dedup();
        }
        let incident = graph.adjacency().into_iter().map(|a| a.into_iter().map(|(_, e)| e).collect()).collect();
        let params = (0..graph.n_views).filter(|&v| v != gauge).collect();
        GrrmProblem { graph, form, gauge, blocks, block_index, incident, edge_blocks, params }
    }

    fn eval_edge(&self, e: usize, rotations: &[Rotation]) -> EdgeEval {
        let edge = &self.graph.edges[e];
        let r = rotations[edge.right_view] * rotations[edge.left_view].transpose();
        let n = edge.points.len();
        let theta_n: Vec<f64> = edge.points.iter().map(|c| theta(&r, &c.left, &c.right).norm()).collect();
        let t = match solve_translation(edge, &r) {
            Ok(sol) => sol.direction,
            Err(_) => None,
        };
        let Some(t) = t else {
            return EdgeEval { ok: false, theta: theta_n, pred_left: vec![None; n], pred_right: vec![None; n] };
        };
        let r_t = r.transpose();
        let t_rev = orient_translation(&r_t, &-r_t.apply(&t), edge.points.iter().map(|c| (&c.right, &c.left)));
        let t = orient_translation(&r, &t, edge.points.iter().map(|c| (&c.left, &c.right)));
        let pick = |p: crate::twoview::PoseOnlyCoord| match self.form {
            ResidualForm::Bearing => Some(p.bearing),
            ResidualForm::Coordinate => p.coord,
        };
        let pred_right = edge.points.iter().map(|c| pick(oriented_pose_only_coord(&r, &t, &c.left, &c.right))).collect();
        let pred_left = edge.points.iter().map(|c| pick(oriented_pose_only_coord(&r_t, &t_rev, &c.right, &c.left))).collect();
        EdgeEval { ok: true, theta: theta_n, pred_left, pred_right }
    }

    fn eval_edges(&self, rotations: &[Rotation], exec: Execution) -> Vec<EdgeEval> {
        exec.map_indexed(self.graph.edges.len(), |e| self.eval_edge(e, rotations))
    }

    fn contribution(evals: &[&EdgeEval], c: &Contributor) -> Option<(f64, Vec3)> {
        let ev = evals[c.edge];
        if !ev.ok {
            return None;
        }
        let pred = if c.left { ev.pred_left[c.point] } else { ev.pred_right[c.point] }?;
        Some((ev.theta[c.point], pred))
    }

    /// Weighted residual of one block over the given contributor subset.
    fn block_value(&self, block: usize, subset: &[usize], evals: &[&EdgeEval]) -> Option<Vec3> {
        let b = &self.blocks[block];
        let (mut omega, mut acc) = (0.0, Vec3::zeros());
        for &ci in subset {
            let (w, pred) = Self::contribution(evals, &b.contributors[ci])?;
            omega += w;
            acc += (pred - b.target) * w;
        }
        (omega > 0.0).then(|| acc / omega)
    }

    fn build_layout(&self, evals: &[&EdgeEval]) -> GrrmLayout {
        let mut active = Vec::new();
        let mut dropped = 0usize;
        for (bi, b) in self.blocks.iter().enumerate() {
            let subset: Vec<usize> = (0..b.contributors.len())
                .filter(|&ci| Self::contribution(evals, &b.contributors[ci]).is_some_and(|(w, _)| w > 0.0))
                .collect();
            if subset.is_empty() {
                dropped += 1;
            } else {
                active.push((bi, subset));
            }
        }
        if dropped > 0 {
            log::debug!("{dropped} residual blocks dropped (no parallax or undetermined translation)");
        }
        GrrmLayout { active }
    }

    fn residual_from(&self, layout: &GrrmLayout, evals: &[&EdgeEval], cfg: Option<&LMConfig>) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(layout.active.len() * 3);
        for (row, (bi, subset)) in layout.active.iter().enumerate() {
            let v = self.block_value(*bi, subset, evals)?;
            let mut blk = [v.x, v.y, v.z];
            if let Some(cfg) = cfg {
                cfg.robustify(&mut blk);
            }
            out.rows_mut(row * 3, 3).copy_from_slice(&blk);
        }
        Some(out)
    }

    /// Layout valid at `rotations`.
    pub fn layout_at(&self, rotations: &[Rotation]) -> GrrmLayout {
        let evals = self.eval_edges(rotations, Execution::Sequential);
        let refs: Vec<&EdgeEval> = evals.iter().collect();
        self.build_layout(&refs)
    }

    /// Unrobustified residual blocks, keyed by `(view, track)`.
    pub fn residual_blocks(&self, rotations: &[Rotation]) -> Vec<((ViewId, TrackId), Vec3)> {
        let evals = self.eval_edges(rotations, Execution::Sequential);
        let refs: Vec<&EdgeEval> = evals.iter().collect();
        let layout = self.build_layout(&refs);
        layout
            .active
            .iter()
            .map(|(bi, subset)| {
                let b = &self.blocks[*bi];
                ((b.view, b.track), self.block_value(*bi, subset, &refs).expect("layout built here"))
            })
            .collect()
    }

    pub fn block_of(&self, view: ViewId, track: TrackId) -> Option<usize> {
        self.block_index.get(&(view, track)).copied()
    }

    fn row_of_blocks(layout: &GrrmLayout) -> HashMap<usize, usize> {
        layout.active.iter().enumerate().map(|(row, (bi, _))| (*bi, row)).collect()
    }

    /// Residual rows touched by a probe of `view`, and their values.
    fn probe(
        &self,
        base: &[EdgeEval],
        rotations: &[Rotation],
        view: ViewId,
        layout: &GrrmLayout,
        rows: &HashMap<usize, usize>,
        cfg: &LMConfig,
    ) -> Option<Vec<(usize, [f64; 3])>> {
        let fresh: HashMap<usize, EdgeEval> = self.incident[view].iter().map(|&e| (e, self.eval_edge(e, rotations))).collect();
        let refs: Vec<&EdgeEval> = base.iter().enumerate().map(|(e, ev)| fresh.get(&e).unwrap_or(ev)).collect();
        let mut touched: Vec<usize> = self.incident[view].iter().flat_map(|&e| self.edge_blocks[e].iter().copied()).collect();
        touched.sort_unstable();
        touched.dedup();
        let mut out = Vec::with_capacity(touched.len());
        for bi in touched {
            let Some(&row) = rows.get(&bi) else { continue };
            let v = self.block_value(bi, &layout.active[row].1, &refs)?;
            let mut blk = [v.x, v.y, v.z];
            cfg.robustify(&mut blk);
            out.push((row, blk));
        }
        Some(out)
    }
}

impl LmProblem for GrrmProblem<'_> {
    type State = Vec<Rotation>;
    type Layout = GrrmLayout;

    fn n_params(&self) -> usize {
        3 * self.params.len()
    }

    fn layout(&self, state: &Vec<Rotation>) -> Result<GrrmLayout, String> {
        let layout = self.layout_at(state);
        if layout.active.is_empty() {
            return Err(MultiViewError::NoBlocks.to_string());
        }
        Ok(layout)
    }

    fn residuals(&self, state: &Vec<Rotation>, layout: &GrrmLayout, cfg: &LMConfig) -> Option<DVector<f64>> {
        let evals = self.eval_edges(state, cfg.execution);
        let refs: Vec<&EdgeEval> = evals.iter().collect();
        self.residual_from(layout, &refs, Some(cfg))
    }

    fn retract(&self, state: &Vec<Rotation>, delta: &[f64]) -> Vec<Rotation> {
        let mut out = state.clone();
        for (k, &v) in self.params.iter().enumerate() {
            let d = Vec3::new(delta[3 * k], delta[3 * k + 1], delta[3 * k + 2]);
            if d != Vec3::zeros() {
                out[v] = exp_so3(&d) * state[v];
            }
        }
        out
    }

    fn renormalize(&self, state: &Vec<Rotation>) -> Vec<Rotation> {
        state.iter().map(Rotation::renormalized).collect()
    }

    fn jacobian(&self, state: &Vec<Rotation>, layout: &GrrmLayout, r0: &DVector<f64>, cfg: &LMConfig) -> SparseJacobian {
        let base = self.eval_edges(state, cfg.execution);
        let rows = Self::row_of_blocks(layout);
        let h = cfg.fd_step;
        let columns = cfg.execution.map_indexed(self.n_params(), |col| {
            let view = self.params[col / 3];
            let axis = col % 3;
            let probe = |sign: f64| {
                let mut w = Vec3::zeros();
                w[axis] = sign * h;
                let mut rot = state.clone();
                rot[view] = exp_so3(&w) * state[view];
                self.probe(&base, &rot, view, layout, &rows, cfg)
            };
            let base_rows = |rows: &[(usize, [f64; 3])]| -> Vec<(usize, [f64; 3])> {
                rows.iter().map(|(r, _)| (*r, [r0[3 * r], r0[3 * r + 1], r0[3 * r + 2]])).collect()
            };
            let (hi, lo, scale) = match (probe(1.0), probe(-1.0)) {
                (Some(p), Some(m)) => (p, m, 2.0 * h),
                (Some(p), None) => {
                    let b = base_rows(&p);
                    (p, b, h)
                }
                (None, Some(m)) => (base_rows(&m), m, h),
                (None, None) => return Vec::new(),
            };
            let mut entries = Vec::with_capacity(hi.len() * 3);
            for ((row, a), (_, b)) in hi.iter().zip(&lo) {
                for k in 0..3 {
                    let v = (a[k] - b[k]) / scale;
                    if v != 0.0 {
                        entries.push((3 * row + k, v));
                    }
                }
            }
            entries
        });
        SparseJacobian { n_rows: r0.len(), columns }
    }
}

/// Residual of `view` and `track` at `rotations`, evaluated from scratch.
pub fn grrm_residual_form(
    graph: &ViewGraph,
    rotations: &GlobalRotations,
    view: ViewId,
    track: TrackId,
    form: ResidualForm,
) -> Result<Vec3, MultiViewError> {
    check_count(graph, rotations)?;
    let problem = GrrmProblem::new(graph, form, rotations.gauge);
    let bi = problem.block_of(view, track).ok_or(MultiViewError::NotObserved { view, track })?;
    let evals: Vec<EdgeEval> = (0..graph.edges.len()).map(|e| problem.eval_edge(e, &rotations.rotations)).collect();
    let refs: Vec<&EdgeEval> = evals.iter().collect();
    let subset: Vec<usize> = (0..problem.blocks[bi].contributors.len()).collect();
    let usable: Vec<usize> = subset
        .into_iter()
        .filter(|&ci| GrrmProblem::contribution(&refs, &problem.blocks[bi].contributors[ci]).is_some())
        .collect();
    problem.block_value(bi, &usable, &refs).ok_or(MultiViewError::NoContributor { view, track })
}

/// Coordinate-form residual of `view` and `track`.
pub fn grrm_residual(graph: &ViewGraph, rotations: &GlobalRotations, view: ViewId, track: TrackId) -> Result<Vec3, MultiViewError> {
    grrm_residual_form(graph, rotations, view, track, ResidualForm::Coordinate)
}

pub fn f_grrm_form(graph: &ViewGraph, rotations: &GlobalRotations, form: ResidualForm) -> Result<f64, MultiViewError> {
    check_count(graph, rotations)?;
    let problem = GrrmProblem::new(graph, form, rotations.gauge);
    Ok(problem.residual_blocks(&rotations.rotations).iter().map(|(_, v)| v.norm_squared()).sum())
}

/// Sum of squared coordinate-form residual blocks.
pub fn f_grrm(graph: &ViewGraph, rotations: &GlobalRotations) -> Result<f64, MultiViewError> {
    f_grrm_form(graph, rotations, ResidualForm::Coordinate)
}

#[derive(Clone, Debug)]
pub struct GlobalResult {
    pub rotations: GlobalRotations,
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Minimizes the global cost over all non-gauge rotations.
pub fn optimize_global_form(
    graph: &ViewGraph,
    init: &GlobalRotations,
    cfg: &LMConfig,
    form: ResidualForm,
) -> Result<GlobalResult, MultiViewError> {
    check_count(graph, init)?;
    graph.ensure_connected()?;
    let problem = GrrmProblem::new(graph, form, init.gauge);
    let rep = minimize(&problem, init.rotations.clone(), cfg)?;
    Ok(GlobalResult {
        rotations: GlobalRotations { rotations: rep.state, gauge: init.gauge },
        cost_trace: rep.cost_trace,
        iterations: rep.iterations,
        converged: rep.converged,
        termination: rep.termination,
    })
}

pub fn optimize_global(graph: &ViewGraph, init: &GlobalRotations, cfg: &LMConfig) -> Result<GlobalResult, MultiViewError> {
    optimize_global_form(graph, init, cfg, ResidualForm::Coordinate)
}

/// Rotation-averaging settings for [`init_rotations`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AveragingConfig {
    pub max_sweeps: usize,
    pub irls_iterations: usize,
    /// Cauchy scale as a multiple of the median chordal residual.
    pub cauchy_factor: f64,
    pub tolerance: f64,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig { max_sweeps: 100, irls_iterations: 10, cauchy_factor: 5.0, tolerance: 1e-13 }
    }
}

fn chordal_sweeps(graph: &ViewGraph, relative: &[Rotation], rot: &mut [Rotation], weights: &[f64], gauge: ViewId, cfg: &AveragingConfig) {
    let adj = graph.adjacency();
    for _ in 0..cfg.max_sweeps {
        let mut change: f64 = 0.0;
        for v in 0..graph.n_views {
            if v == gauge || adj[v].is_empty() {
                continue;
            }
            let mut m = Mat3::zeros();
            for &(_, e) in &adj[v] {
                let edge = &graph.edges[e];
                let est = if edge.left_view == v {
                    relative[e].transpose() * rot[edge.right_view]
                } else {
                    relative[e] * rot[edge.left_view]
                };
                m += est.matrix() * weights[e];
            }
            let new = Rotation::project(&m);
            change = change.max((new.matrix() - rot[v].matrix()).norm());
            rot[v] = new;
        }
        if change < cfg.tolerance {
            break;
        }
    }
}

/// Chordal rotation averaging: spanning-tree seed, L2 sweeps, Cauchy IRLS.
/// `relative[e]` is `R_j R_i^T` for `graph.edges[e] = (i, j)`.
pub fn init_rotations_with(graph: &ViewGraph, relative: &[Rotation], cfg: &AveragingConfig) -> Result<GlobalRotations, MultiViewError> {
    if relative.len() != graph.edges.len() {
        return Err(MultiViewError::RotationCount { expected: graph.edges.len(), got: relative.len() });
    }
    graph.ensure_connected()?;
    let gauge = 0;
    let adj = graph.adjacency();
    let mut rot = vec![Rotation::identity(); graph.n_views];
    let mut seen = vec![false; graph.n_views];
    seen[gauge] = true;
    let mut queue = VecDeque::from([gauge]);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adj[v] {
            if seen[w] {
                continue;
            }
            let edge = &graph.edges[e];
            rot[w] = if edge.left_view == v { relative[e] * rot[v] } else { relative[e].transpose() * rot[v] };
            seen[w] = true;
            queue.push_back(w);
        }
    }
    let mut weights = vec![1.0; graph.edges.len()];
    chordal_sweeps(graph, relative, &mut rot, &weights, gauge, cfg);
    for _ in 0..cfg.irls_iterations {
        let res: Vec<f64> = graph
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| (rot[edge.right_view].matrix() - relative[e].matrix() * rot[edge.left_view].matrix()).norm())
            .collect();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let scale = cfg.cauchy_factor * median;
        if scale.is_nan() || scale <= 0.0 {
            break;
        }
        weights = res.iter().map(|r| 1.0 / (1.0 + (r / scale).powi(2))).collect();
        chordal_sweeps(graph, relative, &mut rot, &weights, gauge, cfg);
    }
    Ok(GlobalRotations { rotations: rot, gauge }.regauged())
}

pub fn init_rotations(graph: &ViewGraph, relative: &[Rotation]) -> Result<GlobalRotations, MultiViewError> {
    init_rotations_with(graph, relative, &AveragingConfig::default())
}

/// Right-acting world rotation `Q` that best maps `estimated` onto `truth`
/// in the chordal sense, and the per-view errors after alignment.
pub fn align(estimated: &[Rotation], truth: &[Rotation]) -> (Rotation, Vec<f64>) {
    let m = estimated.iter().zip(truth).fold(Mat3::zeros(), |acc, (e, g)| acc + e.matrix().transpose() * g.matrix());
    let q = Rotation::project(&m);
    let errors = estimated.iter().zip(truth).map(|(e, g)| rotation_error(g, &(*e * q))).collect();
    (q, errors)
}

/// Mean per-view rotation error after gauge alignment.
pub fn aligned_mean_error(estimated: &[Rotation], truth: &[Rotation]) -> f64 {
    let (_, errs) = align(estimated, truth);
    errs.iter().sum::<f64>() / errs.len().max(1) as f64
}
