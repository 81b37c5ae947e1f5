//! Command-line front end: scene simulation, detection, optimization,
//! benchmarking and evaluation over the text formats in `rotonly::io`.
//!
//! Settings resolve as flags, then the `--config` file (`key = value`, keys
//! named like the long flags), then built-in defaults.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rotonly::detector::{DEFAULT_THRESHOLD_PR, DEFAULT_THRESHOLD_RS};
use rotonly::geometry::relative_pose;
use rotonly::io::{self, IoError, SceneFile};
use rotonly::lm::LMConfig;
use rotonly::multiview::{align, init_rotations, optimize_global_form, GlobalRotations, MultiViewError};
use rotonly::sim::{generate, monte_carlo, perturb_rotation, trial_seed};
use rotonly::twoview::{optimize_two_view, trrm_cost, TwoViewError, TwoViewProblem};
use rotonly::{classify, rotation_error, MatchedPair, ResidualForm, Rotation, ViewGraph};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TwoViewError> for CliError {
    fn from(e: TwoViewError) -> Self {
        match e {
            TwoViewError::Lm(_) | TwoViewError::CoordinateUndefined(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MultiViewError> for CliError {
    fn from(e: MultiViewError) -> Self {
        match e {
            MultiViewError::Lm(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "rotonly", version, about = "Rotation-only two-view and multi-view rotation estimation")]
struct Cli {
    /// Settings file with `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log verbosity on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene file.
    Simulate(SimulateArgs),
    /// Classify every matched pair of a scene; one JSON object per line.
    Detect(DetectArgs),
    /// Optimize the relative rotation of one pair.
    OptimizeTwoView(TwoViewArgs),
    /// Optimize all camera rotations of a scene.
    OptimizeMultiView(MultiViewArgs),
    /// Run a Monte-Carlo experiment described by a run-spec file; writes CSV.
    Benchmark(BenchmarkArgs),
    /// Compare two rotation files view by view.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// standard, planar, pure-rotation, holoplane, rank-regular-line, circular, square, linear, outward.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cameras: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    /// Maximum pixel noise.
    #[arg(long)]
    noise: Option<f64>,
    /// radial or per-axis.
    #[arg(long)]
    noise_model: Option<String>,
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long)]
    image: Option<u32>,
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Thresholds {
    /// Rotation-singular threshold on v_rs (normalized image coordinates).
    #[arg(long)]
    threshold_rs: Option<f64>,
    /// Pure-rotation threshold on the mean squared parallax.
    #[arg(long)]
    threshold_pr: Option<f64>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    scene: PathBuf,
    /// Global rotations to evaluate the parallax at; defaults to the ground truth.
    #[arg(long)]
    rotations: Option<PathBuf>,
    #[command(flatten)]
    thresholds: Thresholds,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TwoViewArgs {
    scene: PathBuf,
    /// View pair `a,b`; defaults to the first pair in the file.
    #[arg(long)]
    pair: Option<String>,
    /// `gt-perturb:<rad>` or a rotation file.
    #[arg(long)]
    init: Option<String>,
    /// Seed of the initial perturbation.
    #[arg(long)]
    seed: Option<u64>,
    /// Residual form; two-view optimization supports bearing only.
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[command(flatten)]
    thresholds: Thresholds,
    /// Rotation file receiving the optimized relative rotation.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MultiViewArgs {
    scene: PathBuf,
    /// `gt-perturb:<rad>` (per relative rotation, then averaging) or a rotation file.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// coordinate or bearing.
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Rotation file receiving the optimized rotations.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Run-spec file of `key = value` lines.
    spec: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// parallel or sequential.
    #[arg(long)]
    execution: Option<String>,
    /// Record per-trial wall time (output is then not reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    truth: PathBuf,
    estimate: PathBuf,
    /// Remove the global gauge before comparing.
    #[arg(long)]
    align: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Long-flag names accepted as config keys.
const CONFIG_KEYS: [&str; 22] = [
    "kind",
    "seed",
    "cameras",
    "points",
    "noise",
    "noise-model",
    "focal",
    "image",
    "depth",
    "neighbors",
    "threshold-rs",
    "threshold-pr",
    "pair",
    "init",
    "form",
    "max-iterations",
    "trials",
    "execution",
    "timing",
    "rotations",
    "align",
    "output",
];

/// Flag values layered over the config file.
struct Settings {
    config: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let config = match path {
            Some(p) => io::parse_key_values(&io::read_text(p)?)?,
            None => BTreeMap::new(),
        };
        if let Some(k) = config.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("unknown config key '{k}'")));
        }
        Ok(Settings { config })
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.config
            .get(key)
            .map(|v| v.parse().map_err(|_| CliError::Usage(format!("invalid config value '{v}' for '{key}'"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    fn switch(&self, flag: bool, key: &str) -> CliResult<bool> {
        self.or(flag.then_some(true), key, false)
    }

    fn path(&self, flag: Option<PathBuf>, key: &str) -> CliResult<Option<PathBuf>> {
        self.pick(flag, key)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            } else {
                let _ = err.write_all(text.as_bytes());
                EXIT_USAGE
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).is_test(cfg!(test)).try_init();
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(a, &settings, out),
        Command::Detect(a) => detect(a, &settings, out),
        Command::OptimizeTwoView(a) => optimize_pair(a, &settings, out),
        Command::OptimizeMultiView(a) => optimize_views(a, &settings, out),
        Command::Benchmark(a) => benchmark(a, &settings, out),
        Command::Eval(a) => eval(a, &settings, out),
    }
}

/// Writes `text` to `path` when given, else to `out`.
fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => io::write_text(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn line(v: &Value) -> String {
    format!("{v}\n")
}

fn load_graph(path: &Path) -> CliResult<(SceneFile, ViewGraph)> {
    let file = io::parse_scene(path)?;
    let graph = file.to_graph()?;
    Ok((file, graph))
}

fn load_rotations(path: &Path) -> CliResult<Vec<Rotation>> {
    Ok(io::parse_rotations(&io::read_text(path)?)?)
}

fn parse_form(v: &str) -> CliResult<ResidualForm> {
    match v {
        "bearing" => Ok(ResidualForm::Bearing),
        "coordinate" => Ok(ResidualForm::Coordinate),
        _ => Err(CliError::Usage(format!("unknown residual form '{v}' (bearing or coordinate)"))),
    }
}

fn form_name(form: ResidualForm) -> &'static str {
    match form {
        ResidualForm::Bearing => "bearing",
        ResidualForm::Coordinate => "coordinate",
    }
}

enum Init {
    Perturb(f64),
    File(PathBuf),
}

fn parse_init(v: &str) -> CliResult<Init> {
    match v.strip_prefix("gt-perturb:") {
        Some(rad) => {
            let rad: f64 = rad.parse().map_err(|_| CliError::Usage(format!("invalid perturbation angle '{rad}'")))?;
            if !(rad.is_finite() && rad >= 0.0) {
                return Err(CliError::Usage(format!("perturbation angle must be finite and non-negative, got {rad}")));
            }
            Ok(Init::Perturb(rad))
        }
        None => Ok(Init::File(PathBuf::from(v))),
    }
}

fn quat(r: &Rotation) -> Value {
    json!(r.to_quaternion_wxyz())
}

fn simulate(a: SimulateArgs, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let mut map = BTreeMap::new();
    let mut put = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(key.replace('-', "_"), v);
        }
    };
    put("kind", s.pick(a.kind, "kind")?);
    put("seed", s.pick(a.seed, "seed")?.map(|v| v.to_string()));
    put("cameras", s.pick(a.cameras, "cameras")?.map(|v| v.to_string()));
    put("points", s.pick(a.points, "points")?.map(|v| v.to_string()));
    put("noise", s.pick(a.noise, "noise")?.map(|v| v.to_string()));
    put("noise-model", s.pick(a.noise_model, "noise-model")?);
    put("focal", s.pick(a.focal, "focal")?.map(|v| v.to_string()));
    put("image", s.pick(a.image, "image")?.map(|v| v.to_string()));
    put("depth", s.pick(a.depth, "depth")?.map(|v| v.to_string()));
    put("neighbors", s.pick(a.neighbors, "neighbors")?.map(|v| v.to_string()));
    let spec = io::run_spec_from_map(&map).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut scene_spec = spec.scene;
    scene_spec.noise_max_px = spec.noise_levels[0];
    let scene = generate(&scene_spec).map_err(|e| CliError::Data(e.to_string()))?;
    log::info!("generated {} with {} tracks", scene_spec.kind, scene.graph.tracks.len());
    emit(s.path(a.output, "output")?.as_deref(), &SceneFile::from_scene(&scene).to_text(), out)
}

/// Global rotations from `--rotations`, falling back to the scene's ground truth.
fn global_rotations(path: Option<&Path>, graph: &ViewGraph) -> CliResult<Vec<Rotation>> {
    let rotations = match path {
        Some(p) => load_rotations(p)?,
        None => graph
            .ground_truth
            .as_ref()
            .ok_or_else(|| CliError::Data("scene has no ground truth; pass --rotations".into()))?
            .iter()
            .map(|p| p.rotation)
            .collect(),
    };
    if rotations.len() != graph.n_views {
        return Err(CliError::Data(format!("{} rotations for {} views", rotations.len(), graph.n_views)));
    }
    Ok(rotations)
}

fn detect(a: DetectArgs, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let (_, graph) = load_graph(&a.scene)?;
    let rotations = global_rotations(s.path(a.rotations, "rotations")?.as_deref(), &graph)?;
    let thr_rs = s.or(a.thresholds.threshold_rs, "threshold-rs", DEFAULT_THRESHOLD_RS)?;
    let thr_pr = s.or(a.thresholds.threshold_pr, "threshold-pr", DEFAULT_THRESHOLD_PR)?;
    let mut text = String::new();
    for e in &graph.edges {
        let r = rotations[e.right_view] * rotations[e.left_view].transpose();
        let rep = classify(e, &r, thr_rs, thr_pr).map_err(|err| CliError::Data(format!("pair ({}, {}): {err}", e.left_view, e.right_view)))?;
        text += &line(&json!({
            "pair": [e.left_view, e.right_view],
            "v_rs": rep.v_rs,
            "theta_mean_sq": rep.theta_mean_sq,
            "label": rep.label.as_str(),
        }));
    }
    emit(s.path(a.output, "output")?.as_deref(), &text, out)
}

fn select_pair(graph: &ViewGraph, spec: Option<&str>) -> CliResult<MatchedPair> {
    let Some(spec) = spec else {
        return graph.edges.first().cloned().ok_or_else(|| CliError::Data("scene has no matched pairs".into()));
    };
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("invalid pair '{spec}', expected a,b")));
    let (a, b) = spec.split_once(',').ok_or_else(|| CliError::Usage(format!("invalid pair '{spec}', expected a,b")))?;
    let (a, b) = (parse(a)?, parse(b)?);
    graph
        .edges
        .iter()
        .find_map(|e| match (e.left_view, e.right_view) {
            (l, r) if (l, r) == (a, b) => Some(e.clone()),
            (l, r) if (l, r) == (b, a) => Some(e.swapped()),
            _ => None,
        })
        .ok_or_else(|| CliError::Data(format!("scene has no pair ({a}, {b})")))
}

fn optimize_pair(a: TwoViewArgs, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let (_, graph) = load_graph(&a.scene)?;
    let pair = select_pair(&graph, s.pick(a.pair, "pair")?.as_deref())?;
    let (va, vb) = (pair.left_view, pair.right_view);
    let truth = graph.ground_truth.as_ref().map(|gt| relative_pose(&gt[va], &gt[vb]).0);
    let seed = s.or(a.seed, "seed", 0)?;
    let r_init = match parse_init(&s.or(a.init, "init", "gt-perturb:0.05".to_string())?)? {
        Init::Perturb(rad) => {
            let gt = truth.ok_or_else(|| CliError::Data("gt-perturb needs ground truth in the scene".into()))?;
            perturb_rotation(&gt, rad, seed)
        }
        Init::File(p) => match load_rotations(&p)?.as_slice() {
            [r] => *r,
            all if all.len() == graph.n_views => all[vb] * all[va].transpose(),
            all => return Err(CliError::Data(format!("init file holds {} rotations; expected 1 or {}", all.len(), graph.n_views))),
        },
    };
    let thr_rs = s.or(a.thresholds.threshold_rs, "threshold-rs", DEFAULT_THRESHOLD_RS)?;
    let thr_pr = s.or(a.thresholds.threshold_pr, "threshold-pr", DEFAULT_THRESHOLD_PR)?;
    let form = parse_form(&s.or(a.form, "form", "bearing".to_string())?)?;
    if form != ResidualForm::Bearing {
        return Err(CliError::Usage("two-view optimization uses the bearing form".into()));
    }
    let mut cfg = LMConfig::two_view();
    cfg.k_max = s.or(a.max_iterations, "max-iterations", cfg.k_max)?;
    let problem = TwoViewProblem::classified(pair, r_init, thr_rs, thr_pr)?;
    let cost_initial = trrm_cost(&problem, &r_init).ok();
    let res = optimize_two_view(&problem, &cfg)?;
    let report = json!({
        "pair": [va, vb],
        "label": problem.scene_label.as_str(),
        "skipped": res.skipped,
        "converged": res.converged,
        "iterations": res.iterations,
        "termination": res.termination.map(|t| format!("{t:?}")),
        "cost_initial": cost_initial,
        "cost_final": res.cost_trace.last(),
        "rotation_wxyz": quat(&res.rotation),
        "init_error_rad": truth.map(|g| rotation_error(&g, &r_init)),
        "error_rad": truth.map(|g| rotation_error(&g, &res.rotation)),
    });
    if let Some(p) = s.path(a.output, "output")? {
        io::write_text(&p, &io::rotations_to_text(&[res.rotation]))?;
    }
    out.write_all(line(&report).as_bytes())?;
    Ok(())
}

fn optimize_views(a: MultiViewArgs, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let (_, graph) = load_graph(&a.scene)?;
    graph.ensure_connected().map_err(|e| CliError::Data(e.to_string()))?;
    let truth: Option<Vec<Rotation>> = graph.ground_truth.as_ref().map(|gt| gt.iter().map(|p| p.rotation).collect());
    let seed = s.or(a.seed, "seed", 0)?;
    let init = match parse_init(&s.or(a.init, "init", "gt-perturb:0.02".to_string())?)? {
        Init::Perturb(rad) => {
            let gt = graph.ground_truth.as_ref().ok_or_else(|| CliError::Data("gt-perturb needs ground truth in the scene".into()))?;
            let relative: Vec<Rotation> = graph
                .edges
                .iter()
                .enumerate()
                .map(|(k, e)| perturb_rotation(&relative_pose(&gt[e.left_view], &gt[e.right_view]).0, rad, trial_seed(seed, k)))
                .collect();
            init_rotations(&graph, &relative)?
        }
        Init::File(p) => GlobalRotations::new(global_rotations(Some(&p), &graph)?),
    };
    let form = parse_form(&s.or(a.form, "form", "coordinate".to_string())?)?;
    let mut cfg = LMConfig::multi_view();
    cfg.k_max = s.or(a.max_iterations, "max-iterations", cfg.k_max)?;
    let res = optimize_global_form(&graph, &init, &cfg, form)?;
    let errors = |r: &[Rotation]| truth.as_ref().map(|t| align(r, t).1);
    let mean = |e: &Option<Vec<f64>>| e.as_ref().map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64);
    let (init_err, final_err) = (errors(&init.rotations), errors(&res.rotations.rotations));
    let report = json!({
        "views": graph.n_views,
        "pairs": graph.edges.len(),
        "form": form_name(form),
        "converged": res.converged,
        "iterations": res.iterations,
        "termination": format!("{:?}", res.termination),
        "cost_initial": res.cost_trace.first(),
        "cost_final": res.cost_trace.last(),
        "init_mean_error_rad": mean(&init_err),
        "mean_error_rad": mean(&final_err),
        "per_view_error_rad": final_err,
    });
    if let Some(p) = s.path(a.output, "output")? {
        io::write_text(&p, &io::rotations_to_text(&res.rotations.rotations))?;
    }
    out.write_all(line(&report).as_bytes())?;
    Ok(())
}

fn benchmark(a: BenchmarkArgs, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let mut map = s.config.clone();
    map.retain(|k, _| matches!(k.as_str(), "trials" | "seed" | "execution" | "timing"));
    map.extend(io::parse_key_values(&io::read_text(&a.spec)?)?);
    let mut set = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(key.to_string(), v);
        }
    };
    set("trials", a.trials.map(|v| v.to_string()));
    set("seed", a.seed.map(|v| v.to_string()));
    set("execution", a.execution);
    set("timing", a.timing.then(|| "true".to_string()));
    let spec = io::run_spec_from_map(&map)?;
    log::info!("running {} trials of {} over {} noise levels", spec.trials, spec.scene.kind, spec.noise_levels.len());
    let table = monte_carlo(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    emit(s.path(a.output, "output")?.as_deref(), &io::result_table_csv(&table), out)
}

fn eval(a: EvalArgs, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let truth = load_rotations(&a.truth)?;
    let est = load_rotations(&a.estimate)?;
    if truth.len() != est.len() {
        return Err(CliError::Data(format!("{} reference rotations but {} estimated", truth.len(), est.len())));
    }
    let per_view: Vec<f64> = if s.switch(a.align, "align")? {
        align(&est, &truth).1
    } else {
        truth.iter().zip(&est).map(|(g, e)| rotation_error(g, e)).collect()
    };
    let mean = per_view.iter().sum::<f64>() / per_view.len().max(1) as f64;
    let text = line(&json!({ "views": per_view.len(), "per_view_error_rad": per_view, "mean_error_rad": mean }));
    emit(s.path(a.output, "output")?.as_deref(), &text, out)
}
