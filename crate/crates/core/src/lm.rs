//! Levenberg-Marquardt driver shared by the two-view and multi-view solvers.
//!
//! A problem freezes its residual layout (which blocks exist) at the start of
//! every iteration; trial points and Jacobian probes are evaluated against that
//! layout so that costs inside one iteration are always comparable.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::par::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("invalid LM configuration: {0}")]
    Config(&'static str),
    #[error("cost is not finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("residual could not be evaluated at the initial state: {0}")]
    InitialState(String),
}

/// Step-control and termination parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LMConfig {
    pub damping_init: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Relative cost-change tolerance.
    pub epsilon: f64,
    pub k_max: usize,
    /// Central-difference step on the local coordinates.
    pub fd_step: f64,
    /// Huber scale applied per 3-vector block, if any.
    pub huber: Option<f64>,
    pub execution: Execution,
}

/// Damping above this value aborts the solve as non-converged.
pub const DAMPING_MAX: f64 = 1e12;
/// Steps shorter than this terminate the solve as converged.
pub const STEP_TOL: f64 = 1e-12;
/// Accepted steps between re-orthonormalizations of the state.
pub const RENORMALIZE_EVERY: usize = 100;

impl LMConfig {
    pub fn two_view() -> Self {
        LMConfig {
            damping_init: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            epsilon: 1e-10,
            k_max: 100,
            fd_step: 1e-6,
            huber: None,
            execution: Execution::Parallel,
        }
    }

    pub fn multi_view() -> Self {
        LMConfig { k_max: 50, ..Self::two_view() }
    }

    pub fn with_execution(self, execution: Execution) -> Self {
        LMConfig { execution, ..self }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let positive = [self.damping_init, self.damping_up, self.damping_down, self.epsilon, self.fd_step];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.k_max == 0 {
            return Err(LmError::Config("all parameters must be positive"));
        }
        if !(self.damping_up > 1.0 && self.damping_down < 1.0) {
            return Err(LmError::Config("need damping_up > 1 > damping_down"));
        }
        if self.huber.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
            return Err(LmError::Config("huber scale must be positive"));
        }
        Ok(())
    }

    /// Rescales a residual block so its squared norm equals the Huber loss.
    pub fn robustify(&self, block: &mut [f64]) {
        let Some(s) = self.huber else { return };
        let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > s {
            let w = (2.0 * s * n - s * s).sqrt() / n;
            block.iter_mut().for_each(|v| *v *= w);
        }
    }

    pub fn robustify_all(&self, r: &mut [f64]) {
        if self.huber.is_some() {
            r.chunks_mut(3).for_each(|b| self.robustify(b));
        }
    }
}

impl Default for LMConfig {
    fn default() -> Self {
        Self::two_view()
    }
}

/// Jacobian stored column-wise with sorted row indices; exact zeros omitted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseJacobian {
    pub n_rows: usize,
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl SparseJacobian {
    pub fn from_dense_columns(n_rows: usize, cols: Vec<DVector<f64>>) -> Self {
        let columns = cols
            .into_iter()
            .map(|c| c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect())
            .collect();
        SparseJacobian { n_rows, columns }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.columns.len());
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `J^T J` and `J^T r`.
    pub fn normal_equations(&self, r: &DVector<f64>, exec: Execution) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.columns.len();
        let rows: Vec<Vec<f64>> = exec.map_indexed(n, |a| {
            (a..n).map(|b| sparse_dot(&self.columns[a], &self.columns[b])).collect()
        });
        let mut jtj = DMatrix::zeros(n, n);
        for (a, row) in rows.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                jtj[(a, a + off)] = *v;
                jtj[(a + off, a)] = *v;
            }
        }
        let g = DVector::from_iterator(n, self.columns.iter().map(|col| col.iter().map(|&(i, v)| v * r[i]).sum()));
        (jtj, g)
    }
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// A least-squares problem on a manifold with a frozen per-iteration layout.
pub trait LmProblem: Sync {
    type State: Clone + Send + Sync;
    type Layout: Send + Sync;

    fn n_params(&self) -> usize;

    /// Residual layout valid at `state`, or a description of why none exists.
    fn layout(&self, state: &Self::State) -> Result<Self::Layout, String>;

    /// Robustified residual under a frozen layout; `None` if the layout breaks at `state`.
    fn residuals(&self, state: &Self::State, layout: &Self::Layout, cfg: &LMConfig) -> Option<DVector<f64>>;

    /// Applies a local-coordinate step.
    fn retract(&self, state: &Self::State, delta: &[f64]) -> Self::State;

    fn renormalize(&self, state: &Self::State) -> Self::State {
        state.clone()
    }

    /// Central finite-difference Jacobian; problems may override with a sparse version.
    fn jacobian(
        &self,
        state: &Self::State,
        layout: &Self::Layout,
        r0: &DVector<f64>,
        cfg: &LMConfig,
    ) -> SparseJacobian {
        let cols = cfg.execution.map_indexed(self.n_params(), |p| fd_column(self, state, layout, r0, cfg, p, cfg.fd_step));
        SparseJacobian::from_dense_columns(r0.len(), cols)
    }
}

/// One central-difference column, falling back to a one-sided difference when a
/// probe leaves the layout's domain.
pub fn fd_column<P: LmProblem + ?Sized>(
    problem: &P,
    state: &P::State,
    layout: &P::Layout,
    r0: &DVector<f64>,
    cfg: &LMConfig,
    param: usize,
    h: f64,
) -> DVector<f64> {
    let mut delta = vec![0.0; problem.n_params()];
    delta[param] = h;
    let plus = problem.residuals(&problem.retract(state, &delta), layout, cfg);
    delta[param] = -h;
    let minus = problem.residuals(&problem.retract(state, &delta), layout, cfg);
    match (plus, minus) {
        (Some(p), Some(m)) => (p - m) / (2.0 * h),
        (Some(p), None) => (p - r0) / h,
        (None, Some(m)) => (r0 - m) / h,
        (None, None) => DVector::zeros(r0.len()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    CostChange,
    SmallStep,
    SmallGradient,
    MaxIterations,
    DampingOverflow,
}

#[derive(Clone, Debug)]
pub struct LmReport<S> {
    pub state: S,
    /// Cost before the first iteration followed by the cost of every accepted step.
    pub cost_trace: Vec<f64>,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Number of Jacobian evaluations.
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

fn solve_damped(jtj: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let n = jtj.nrows();
    let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
    let mut a = jtj.clone();
    for i in 0..n {
        a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
    }
    let rhs = -g;
    match a.clone().cholesky() {
        Some(ch) => Some(ch.solve(&rhs)),
        None => a.lu().solve(&rhs),
    }
    .filter(|d| d.iter().all(|v| v.is_finite()))
}

/// Runs Levenberg-Marquardt from `init`.
pub fn minimize<P: LmProblem>(problem: &P, init: P::State, cfg: &LMConfig) -> Result<LmReport<P::State>, LmError> {
    cfg.validate()?;
    let mut state = init;
    let mut layout = problem.layout(&state).map_err(LmError::InitialState)?;
    let mut r = problem
        .residuals(&state, &layout, cfg)
        .ok_or_else(|| LmError::InitialState("residual undefined under its own layout".into()))?;
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(LmError::NonFinite { iteration: 0 });
    }
    let initial_cost = cost;
    let mut trace = vec![cost];
    let mut lambda = cfg.damping_init;
    let mut accepted = 0usize;
    let mut iterations = 0usize;
    let mut termination = Termination::MaxIterations;

    'outer: while iterations < cfg.k_max {
        if problem.n_params() == 0 || cost == 0.0 {
            termination = Termination::SmallGradient;
            break;
        }
        let jac = problem.jacobian(&state, &layout, &r, cfg);
        iterations += 1;
        let (jtj, g) = jac.normal_equations(&r, cfg.execution);
        if g.amax() <= 1e-15 * cost.sqrt().max(f64::MIN_POSITIVE) * jtj.diagonal().amax().sqrt().max(1.0) {
            termination = Termination::SmallGradient;
            break;
        }
        loop {
            let Some(delta) = solve_damped(&jtj, &g, lambda) else {
                lambda *= cfg.damping_up;
                if lambda > DAMPING_MAX {
                    termination = Termination::DampingOverflow;
                    break 'outer;
                }
                continue;
            };
            if delta.norm() < STEP_TOL {
                termination = Termination::SmallStep;
                break 'outer;
            }
            let trial = problem.retract(&state, delta.as_slice());
            let trial_r = problem.residuals(&trial, &layout, cfg);
            let trial_cost = trial_r.as_ref().map(|v| v.norm_squared());
            if let Some(c) = trial_cost {
                if !c.is_finite() {
                    return Err(LmError::NonFinite { iteration: iterations });
                }
            }
            match (trial_r, trial_cost) {
                (Some(_), Some(c)) if c <= cost => {
                    let rel = (cost - c) / cost;
                    accepted += 1;
                    state = if accepted.is_multiple_of(RENORMALIZE_EVERY) { problem.renormalize(&trial) } else { trial };
                    trace.push(c);
                    lambda = (lambda * cfg.damping_down).max(1e-15);
                    match problem.layout(&state) {
                        Ok(l) => layout = l,
                        Err(_) => {
                            cost = c;
                            termination = Termination::DampingOverflow;
                            break 'outer;
                        }
                    }
                    r = problem.residuals(&state, &layout, cfg).expect("layout built at this state");
                    cost = r.norm_squared();
                    if rel < cfg.epsilon {
                        termination = Termination::CostChange;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= cfg.damping_up;
                    if lambda > DAMPING_MAX {
                        termination = Termination::DampingOverflow;
                        break 'outer;
                    }
                }
            }
        }
    }
    let converged = !matches!(termination, Termination::MaxIterations | Termination::DampingOverflow);
    if !converged {
        log::debug!("LM stopped without convergence: {termination:?} after {iterations} iterations");
    }
    Ok(LmReport { state, cost_trace: trace, initial_cost, final_cost: cost, iterations, converged, termination })
}
