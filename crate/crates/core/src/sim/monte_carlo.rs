//! Monte-Carlo experiment driver.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scene::{add_noise, generate, perturb_rotation_with, GeneratedScene, SceneSpec, SimError};
use super::stats;
use crate::detector::{classify, DEFAULT_THRESHOLD_PR, DEFAULT_THRESHOLD_RS};
use crate::geometry::{rotation_error, Rotation};
use crate::lm::LMConfig;
use crate::multiview::{aligned_mean_error, init_rotations, optimize_global, GlobalRotations};
use crate::par::Execution;
use crate::translation::solve_translation;
use crate::twoview::{optimize_two_view, optimize_two_view_pa, TwoViewProblem};

const STREAM_INIT: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// The perturbed initial rotation (two-view).
    Init,
    Trrm,
    Pa,
    /// Chordal rotation averaging (multi-view initializer).
    Averaging,
    Grrm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Init, Method::Trrm, Method::Pa, Method::Averaging, Method::Grrm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Init => "init",
            Method::Trrm => "trrm",
            Method::Pa => "pa",
            Method::Averaging => "averaging",
            Method::Grrm => "grrm",
        }
    }

    pub fn is_two_view(self) -> bool {
        matches!(self, Method::Init | Method::Trrm | Method::Pa)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown method '{s}'")))
    }
}

/// Scene template, noise sweep, methods and trial count of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub scene: SceneSpec,
    pub noise_levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub master_seed: u64,
    /// Angle of the random initial rotation error (per edge for multi-view).
    pub init_perturb_rad: f64,
    pub execution: Execution,
    /// Record wall-clock time per trial; makes the output non-reproducible.
    pub timing: bool,
}

impl RunSpec {
    pub fn new(scene: SceneSpec) -> Self {
        let two_view = scene.kind.is_two_view();
        RunSpec {
            scene,
            noise_levels: vec![scene.noise_max_px],
            methods: if two_view { vec![Method::Init, Method::Trrm, Method::Pa] } else { vec![Method::Averaging, Method::Grrm] },
            trials: if two_view { 200 } else { 30 },
            master_seed: scene.seed,
            init_perturb_rad: if two_view { 0.05 } else { 0.02 },
            execution: Execution::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        self.scene.validate()?;
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return bad("noise levels must be finite and non-negative".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        for m in &self.methods {
            if m.is_two_view() != self.scene.kind.is_two_view() {
                return bad(format!("method '{m}' does not apply to scene kind '{}'", self.scene.kind));
            }
        }
        if !(self.init_perturb_rad.is_finite() && self.init_perturb_rad >= 0.0) {
            return bad("init perturbation must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// One method's outcome on one trial. `error_rad` is `None` on failure.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub scene_kind: super::SceneKind,
    pub noise_max_px: f64,
    pub n_points: usize,
    pub error_rad: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub wall_ms: Option<f64>,
}

/// Aggregate over successful trials of one method at one noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub noise_max_px: f64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<TrialRecord>,
}

impl ResultTable {
    /// Errors of successful trials for `method` at `noise`, in trial order.
    pub fn errors(&self, method: Method, noise: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.noise_max_px == noise)
            .filter_map(|r| r.error_rad)
            .collect()
    }

    /// Errors of `a` and `b` on the trials where both succeeded.
    pub fn paired(&self, a: Method, b: Method, noise: f64) -> (Vec<f64>, Vec<f64>) {
        let find = |m: Method, t: usize| {
            self.rows.iter().find(|r| r.method == m && r.trial == t && r.noise_max_px == noise).and_then(|r| r.error_rad)
        };
        let mut trials: Vec<usize> = self.rows.iter().filter(|r| r.noise_max_px == noise).map(|r| r.trial).collect();
        trials.dedup();
        trials.into_iter().filter_map(|t| Some((find(a, t)?, find(b, t)?))).unzip()
    }

    pub fn summaries(&self) -> Vec<Summary> {
        let mut keys: Vec<(f64, Method)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|&(n, m)| n == r.noise_max_px && m == r.method) {
                keys.push((r.noise_max_px, r.method));
            }
        }
        keys.into_iter()
            .map(|(noise, method)| {
                let rows: Vec<_> = self.rows.iter().filter(|r| r.method == method && r.noise_max_px == noise).collect();
                let ok: Vec<f64> = rows.iter().filter_map(|r| r.error_rad).collect();
                Summary {
                    method,
                    noise_max_px: noise,
                    mean: stats::mean(&ok),
                    median: stats::median(&ok),
                    succeeded: ok.len(),
                    failed: rows.len() - ok.len(),
                }
            })
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial`; shared by all noise levels so a sweep reuses geometry.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(trial as u64))
}

fn noise_seed(trial_seed: u64, noise_index: usize) -> u64 {
    splitmix64(trial_seed ^ splitmix64(0x6e6f_6973_6500_0000 ^ noise_index as u64))
}

/// The scene of `trial` at `spec.noise_levels[noise_index]`, as the driver builds it.
pub fn trial_scene(spec: &RunSpec, trial: usize, noise_index: usize) -> Result<GeneratedScene, SimError> {
    let seed = trial_seed(spec.master_seed, trial);
    let base = generate(&SceneSpec { seed, noise_max_px: 0.0, ..spec.scene })?;
    let noise = *spec.noise_levels.get(noise_index).ok_or_else(|| SimError::InvalidSpec("noise index out of range".into()))?;
    add_noise(&base, noise, noise_seed(seed, noise_index))
}

/// The perturbed initial relative rotation the driver uses for a two-view trial.
pub fn two_view_init(spec: &RunSpec, trial: usize, scene: &GeneratedScene) -> Rotation {
    let mut rng = init_rng(trial_seed(spec.master_seed, trial));
    let (r_gt, _) = scene.relative(0, 1);
    perturb_rotation_with(&r_gt, spec.init_perturb_rad, &mut rng)
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_INIT);
    rng
}

struct Outcome {
    error: Option<f64>,
    converged: bool,
    iterations: usize,
}

impl Outcome {
    fn failed() -> Self {
        Outcome { error: None, converged: false, iterations: 0 }
    }
}

fn timed<T>(enabled: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = enabled.then(Instant::now);
    let out = f();
    (out, start.map(|s| s.elapsed().as_secs_f64() * 1e3))
}

fn run_two_view(scene: &GeneratedScene, r_init: Rotation, method: Method, cfg: &LMConfig) -> Outcome {
    let pair = scene.pair().clone();
    let (r_gt, _) = scene.relative(0, 1);
    let report = match classify(&pair, &r_init, DEFAULT_THRESHOLD_RS, DEFAULT_THRESHOLD_PR) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("classification failed: {e}");
            return Outcome::failed();
        }
    };
    let problem = TwoViewProblem::new(pair, r_init, report.label);
    match method {
        Method::Init => Outcome { error: Some(rotation_error(&r_gt, &r_init)), converged: true, iterations: 0 },
        Method::Trrm => match optimize_two_view(&problem, cfg) {
            Ok(res) => Outcome { error: Some(rotation_error(&r_gt, &res.rotation)), converged: res.converged, iterations: res.iterations },
            Err(e) => {
                log::warn!("trrm trial failed: {e}");
                Outcome::failed()
            }
        },
        Method::Pa => {
            let t_init = match solve_translation(&problem.pair, &r_init) {
                Ok(sol) => sol.direction,
                Err(_) => None,
            };
            let Some(t_init) = t_init else {
                return Outcome::failed();
            };
            match optimize_two_view_pa(&problem, &t_init, cfg) {
                Ok(res) => Outcome { error: Some(rotation_error(&r_gt, &res.rotation)), converged: res.converged, iterations: res.iterations },
                Err(e) => {
                    log::warn!("pa trial failed: {e}");
                    Outcome::failed()
                }
            }
        }
        Method::Averaging | Method::Grrm => Outcome::failed(),
    }
}

fn run_multi_view(scene: &GeneratedScene, init: &Result<GlobalRotations, String>, method: Method, cfg: &LMConfig) -> Outcome {
    let truth = scene.rotations();
    let init = match init {
        Ok(i) => i,
        Err(e) => {
            log::warn!("rotation averaging failed: {e}");
            return Outcome::failed();
        }
    };
    match method {
        Method::Averaging => Outcome { error: Some(aligned_mean_error(&init.rotations, &truth)), converged: true, iterations: 0 },
        Method::Grrm => match optimize_global(&scene.graph, init, cfg) {
            Ok(res) => Outcome {
                error: Some(aligned_mean_error(&res.rotations.rotations, &truth)),
                converged: res.converged,
                iterations: res.iterations,
            },
            Err(e) => {
                log::warn!("global optimization failed: {e}");
                Outcome::failed()
            }
        },
        _ => Outcome::failed(),
    }
}

fn run_trial(spec: &RunSpec, trial: usize) -> Vec<TrialRecord> {
    let seed = trial_seed(spec.master_seed, trial);
    let base = generate(&SceneSpec { seed, noise_max_px: 0.0, ..spec.scene });
    let two_view = spec.scene.kind.is_two_view();
    let cfg = if two_view { LMConfig::two_view() } else { LMConfig::multi_view() }.with_execution(Execution::Sequential);
    let mut rows = Vec::new();
    for (ni, &noise) in spec.noise_levels.iter().enumerate() {
        let scene = base.as_ref().map_err(|e| e.clone()).and_then(|b| add_noise(b, noise, noise_seed(seed, ni)));
        let mut rng = init_rng(seed);
        let outcomes: Vec<(Outcome, Option<f64>)> = match &scene {
            Err(e) => {
                log::warn!("trial {trial}: scene generation failed: {e}");
                spec.methods.iter().map(|_| (Outcome::failed(), None)).collect()
            }
            Ok(scene) if two_view => {
                let (r_gt, _) = scene.relative(0, 1);
                let r_init = perturb_rotation_with(&r_gt, spec.init_perturb_rad, &mut rng);
                spec.methods.iter().map(|&m| timed(spec.timing, || run_two_view(scene, r_init, m, &cfg))).collect()
            }
            Ok(scene) => {
                let relative: Vec<Rotation> = scene
                    .graph
                    .edges
                    .iter()
                    .map(|e| {
                        let (r, _) = scene.relative(e.left_view, e.right_view);
                        perturb_rotation_with(&r, spec.init_perturb_rad, &mut rng)
                    })
                    .collect();
                let (init, init_ms) = timed(spec.timing, || init_rotations(&scene.graph, &relative).map_err(|e| e.to_string()));
                spec.methods
                    .iter()
                    .map(|&m| {
                        let (o, ms) = timed(spec.timing, || run_multi_view(scene, &init, m, &cfg));
                        (o, if m == Method::Averaging { init_ms } else { ms.zip(init_ms).map(|(a, b)| a + b) })
                    })
                    .collect()
            }
        };
        let n_points = scene.as_ref().map_or(0, |s| s.graph.tracks.len());
        for (&method, (o, ms)) in spec.methods.iter().zip(outcomes) {
            rows.push(TrialRecord {
                trial,
                method,
                scene_kind: spec.scene.kind,
                noise_max_px: noise,
                n_points,
                error_rad: o.error,
                converged: o.converged,
                iterations: o.iterations,
                wall_ms: ms,
            });
        }
    }
    rows
}

/// Runs every trial of `spec`; rows are ordered by noise level, trial, then method.
pub fn monte_carlo(spec: &RunSpec) -> Result<ResultTable, SimError> {
    spec.validate()?;
    let per_trial = spec.execution.map_indexed(spec.trials, |t| run_trial(spec, t));
    let n_noise = spec.noise_levels.len();
    let n_methods = spec.methods.len();
    let mut rows = Vec::with_capacity(spec.trials * n_noise * n_methods);
    for ni in 0..n_noise {
        for trial_rows in &per_trial {
            rows.extend_from_slice(&trial_rows[ni * n_methods..(ni + 1) * n_methods]);
        }
    }
    Ok(ResultTable { rows })
}
