use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use thiserror::Error;

use crate::geometry::{exp_so3, project, relative_pose, CameraPose, Observation, Rotation, Vec3};
use crate::graph::{GraphError, MatchedPair, Track, ViewGraph, ViewId};

/// Stream ids used with the scene seed.
const STREAM_SCENE: u64 = 0;
const STREAM_NOISE: u64 = 1;
/// Attempts per requested point before giving up.
const MAX_ATTEMPTS_PER_POINT: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("could only place {placed} of {requested} points")]
    Infeasible { placed: usize, requested: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SceneKind {
    Standard,
    PlanarScene,
    Holoplane,
    RankRegularLine,
    PureRotation,
    Circular,
    Square,
    Linear,
    OutwardLooking,
}

impl SceneKind {
    pub const ALL: [SceneKind; 9] = [
        SceneKind::Standard,
        SceneKind::PlanarScene,
        SceneKind::Holoplane,
        SceneKind::RankRegularLine,
        SceneKind::PureRotation,
        SceneKind::Circular,
        SceneKind::Square,
        SceneKind::Linear,
        SceneKind::OutwardLooking,
    ];

    pub fn is_two_view(self) -> bool {
        matches!(
            self,
            SceneKind::Standard | SceneKind::PlanarScene | SceneKind::Holoplane | SceneKind::RankRegularLine | SceneKind::PureRotation
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SceneKind::Standard => "standard",
            SceneKind::PlanarScene => "planar",
            SceneKind::Holoplane => "holoplane",
            SceneKind::RankRegularLine => "rank-regular-line",
            SceneKind::PureRotation => "pure-rotation",
            SceneKind::Circular => "circular",
            SceneKind::Square => "square",
            SceneKind::Linear => "linear",
            SceneKind::OutwardLooking => "outward",
        }
    }

    /// Ball radius, plane height or maximum point height, by kind.
    pub fn default_depth(self) -> f64 {
        match self {
            SceneKind::Standard | SceneKind::PureRotation | SceneKind::Holoplane => 20.0,
            SceneKind::PlanarScene | SceneKind::RankRegularLine => 10.0,
            SceneKind::Circular | SceneKind::Square | SceneKind::Linear => 400.0,
            SceneKind::OutwardLooking => 3000.0,
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown scene kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseModel {
    /// Magnitude uniform in `[0, max]` pixels with uniform direction.
    #[default]
    Radial,
    /// Each axis uniform in `[-max, max]` pixels.
    PerAxis,
}

impl FromStr for NoiseModel {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "radial" => Ok(NoiseModel::Radial),
            "per-axis" => Ok(NoiseModel::PerAxis),
            _ => Err(SimError::InvalidSpec(format!("unknown noise model '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub n_cameras: usize,
    pub n_points: usize,
    pub noise_max_px: f64,
    pub focal_px: f64,
    pub image_px: u32,
    pub depth_param: f64,
    pub seed: u64,
    pub noise_model: NoiseModel,
    /// Nearest neighbours matched per camera in multi-view scenes.
    pub neighbors: usize,
}

impl SceneSpec {
    pub const DEFAULT_FOCAL_PX: f64 = 480.0;
    pub const DEFAULT_IMAGE_PX: u32 = 960;

    pub fn new(kind: SceneKind, seed: u64) -> Self {
        let (n_cameras, n_points) = if kind.is_two_view() { (2, 1000) } else { (10, 500) };
        SceneSpec {
            kind,
            n_cameras,
            n_points,
            noise_max_px: 0.0,
            focal_px: Self::DEFAULT_FOCAL_PX,
            image_px: Self::DEFAULT_IMAGE_PX,
            depth_param: kind.default_depth(),
            seed,
            noise_model: NoiseModel::Radial,
            neighbors: 6,
        }
    }

    pub fn with_points(self, n_points: usize) -> Self {
        SceneSpec { n_points, ..self }
    }

    pub fn with_cameras(self, n_cameras: usize) -> Self {
        SceneSpec { n_cameras, ..self }
    }

    pub fn with_noise(self, noise_max_px: f64) -> Self {
        SceneSpec { noise_max_px, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SceneSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if self.n_points == 0 {
            return bad("n_points must be positive");
        }
        if self.kind.is_two_view() && self.n_cameras != 2 {
            return bad("two-view scene kinds need exactly 2 cameras");
        }
        if !self.kind.is_two_view() && self.n_cameras < 3 {
            return bad("multi-view scene kinds need at least 3 cameras");
        }
        if !(self.noise_max_px >= 0.0 && self.noise_max_px.is_finite()) {
            return bad("noise must be finite and non-negative");
        }
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) || self.image_px == 0 {
            return bad("focal length and image size must be positive");
        }
        if !(self.depth_param > 0.0 && self.depth_param.is_finite()) {
            return bad("depth parameter must be positive");
        }
        if !self.kind.is_two_view() && self.neighbors == 0 {
            return bad("neighbors must be positive");
        }
        Ok(())
    }

    /// Half the image side in normalized coordinates.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.image_px as f64 / self.focal_px
    }
}

/// Ground truth and observations of a synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    pub spec: SceneSpec,
    pub poses: Vec<CameraPose>,
    pub points_world: Vec<Vec3>,
    /// Observations with noise applied.
    pub graph: ViewGraph,
    /// Noise-free observations.
    pub clean: ViewGraph,
}

impl GeneratedScene {
    /// The first edge, which is the whole problem for two-view kinds.
    pub fn pair(&self) -> &MatchedPair {
        &self.graph.edges[0]
    }

    /// Relative rotation and translation between views `i` and `j`.
    pub fn relative(&self, i: ViewId, j: ViewId) -> (Rotation, Vec3) {
        relative_pose(&self.poses[i], &self.poses[j])
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        self.poses.iter().map(|p| p.rotation).collect()
    }
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    let d: [f64; 3] = UnitSphere.sample(rng);
    Vec3::from(d) * radius * rng.random::<f64>().cbrt()
}

/// `Rz(c) Ry(b) Rx(a)` with each angle uniform in `[-0.5, 0.5]`.
fn random_relative_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let a = rng.random_range(-0.5..=0.5);
    let b = rng.random_range(-0.5..=0.5);
    let c = rng.random_range(-0.5..=0.5);
    Rotation::about_z(c) * Rotation::about_y(b) * Rotation::about_x(a)
}

fn visible(spec: &SceneSpec, pose: &CameraPose, x: &Vec3) -> Option<Observation> {
    let (o, depth) = project(pose, x).ok()?;
    let h = spec.half_extent();
    (depth > 0.0 && o.x.abs() <= h && o.y.abs() <= h).then_some(o)
}

fn two_view_cameras(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<CameraPose> {
    let r = random_relative_rotation(rng);
    let center = match spec.kind {
        SceneKind::PureRotation => Vec3::zeros(),
        SceneKind::Holoplane => loop {
            let c = uniform_in_ball(rng, 2.0);
            if c.norm() > 0.1 && c.cross(&Vec3::z()).norm() > 0.1 * c.norm() {
                break c;
            }
        },
        _ => uniform_in_ball(rng, 2.0),
    };
    vec![CameraPose::identity(), CameraPose::new(r, center)]
}

/// Draws one candidate point for a two-view kind.
struct TwoViewSampler {
    line: Option<(Vec3, Vec3)>,
    plane: Option<(Vec3, Vec3)>,
}

impl TwoViewSampler {
    fn new(spec: &SceneSpec, poses: &[CameraPose], rng: &mut ChaCha8Rng) -> Self {
        let line = (spec.kind == SceneKind::RankRegularLine).then(|| {
            // The anchor is redrawn until both cameras see it.
            let mut p0 = Vec3::zeros();
            for _ in 0..1000 {
                p0 = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), spec.depth_param);
                if poses.iter().all(|pose| visible(spec, pose, &p0).is_some()) {
                    break;
                }
            }
            let phi = rng.random_range(0.0..2.0 * PI);
            (p0, Vec3::new(phi.cos(), phi.sin(), 0.0))
        });
        let plane = (spec.kind == SceneKind::Holoplane).then(|| {
            let normal = poses[1].translation.cross(&Vec3::z()).normalize();
            (normal.cross(&Vec3::z()).normalize(), Vec3::z())
        });
        TwoViewSampler { line, plane }
    }

    fn sample(&self, spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec3 {
        let d = spec.depth_param;
        match spec.kind {
            SceneKind::PlanarScene => Vec3::new(rng.random_range(-d..d), rng.random_range(-d..d), d),
            SceneKind::Holoplane => {
                let (u, v) = self.plane.expect("plane set for holoplane");
                u * rng.random_range(-0.5 * d..0.5 * d) + v * rng.random_range(0.0..d)
            }
            SceneKind::RankRegularLine => {
                let (p0, dir) = self.line.expect("line set for line scenes");
                p0 + dir * rng.random_range(-d..d)
            }
            _ => uniform_in_ball(rng, d),
        }
    }
}

fn camera_centers(spec: &SceneSpec) -> Vec<Vec3> {
    let n = spec.n_cameras;
    let spacing = 10.0;
    match spec.kind {
        SceneKind::Circular | SceneKind::OutwardLooking => {
            let radius = spacing / (2.0 * (PI / n as f64).sin());
            (0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    Vec3::new(radius * a.cos(), radius * a.sin(), 0.0)
                })
                .collect()
        }
        SceneKind::Square => {
            let side = spacing * n as f64 / 4.0;
            let corners = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(side, 0.0, 0.0), Vec3::new(side, side, 0.0), Vec3::new(0.0, side, 0.0)];
            (0..n)
                .map(|k| {
                    let s = spacing * k as f64;
                    let edge = ((s / side) as usize).min(3);
                    let f = (s - edge as f64 * side) / side;
                    corners[edge] + (corners[(edge + 1) % 4] - corners[edge]) * f
                })
                .collect()
        }
        _ => (0..n).map(|k| Vec3::new(spacing * k as f64, 0.0, 0.0)).collect(),
    }
}

fn multi_view_cameras(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<CameraPose> {
    camera_centers(spec)
        .into_iter()
        .map(|c| {
            let tilt = Rotation::about_x(rng.random_range(-0.1..=0.1)) * Rotation::about_y(rng.random_range(-0.1..=0.1));
            let base = if spec.kind == SceneKind::OutwardLooking {
                let (s, co) = (c.y.atan2(c.x).sin(), c.y.atan2(c.x).cos());
                Rotation::from_matrix_unchecked(crate::geometry::Mat3::new(s, -co, 0.0, 0.0, 0.0, -1.0, co, s, 0.0))
            } else {
                Rotation::about_z(rng.random_range(-PI..PI))
            };
            CameraPose::new(tilt * base, c)
        })
        .collect()
}

fn multi_view_point(spec: &SceneSpec, centers: &[Vec3], rng: &mut ChaCha8Rng) -> Vec3 {
    if spec.kind == SceneKind::OutwardLooking {
        let (r_in, r_out) = (200.0, spec.depth_param);
        let r = rng.random_range(r_in * r_in..r_out * r_out).sqrt();
        let a = rng.random_range(0.0..2.0 * PI);
        return Vec3::new(r * a.cos(), r * a.sin(), rng.random_range(-200.0..200.0));
    }
    let margin = 50.0;
    let (mut lo, mut hi) = (centers[0], centers[0]);
    for c in centers {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    Vec3::new(
        rng.random_range(lo.x - margin..hi.x + margin),
        rng.random_range(lo.y - margin..hi.y + margin),
        rng.random_range(0.0..spec.depth_param),
    )
}

/// Camera pairs to match: `k` nearest neighbours sharing at least 8 tracks,
/// plus every pair sharing at least 30.
fn matching_pairs(spec: &SceneSpec, poses: &[CameraPose], tracks: &[Track]) -> Vec<(ViewId, ViewId)> {
    let n = poses.len();
    let mut shared = vec![vec![0usize; n]; n];
    for t in tracks {
        for (a, (va, _)) in t.observations.iter().enumerate() {
            for (vb, _) in &t.observations[a + 1..] {
                shared[*va][*vb] += 1;
                shared[*vb][*va] += 1;
            }
        }
    }
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<ViewId> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            let da = (poses[a].translation - poses[i].translation).norm();
            let db = (poses[b].translation - poses[i].translation).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        for &j in others.iter().take(spec.neighbors) {
            if shared[i][j] >= 8 {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
        for (j, &count) in shared[i].iter().enumerate().skip(i + 1) {
            if count >= 30 {
                pairs.insert((i, j));
            }
        }
    }
    pairs.into_iter().collect()
}

/// Builds a deterministic scene from `spec`, including noise at `spec.noise_max_px`.
pub fn generate(spec: &SceneSpec) -> Result<GeneratedScene, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_SCENE);
    let two_view = spec.kind.is_two_view();
    let poses = if two_view { two_view_cameras(spec, &mut rng) } else { multi_view_cameras(spec, &mut rng) };
    let centers: Vec<Vec3> = poses.iter().map(|p| p.translation).collect();
    let sampler = two_view.then(|| TwoViewSampler::new(spec, &poses, &mut rng));
    let mut points = Vec::with_capacity(spec.n_points);
    let mut tracks = Vec::with_capacity(spec.n_points);
    let mut attempts = 0usize;
    while points.len() < spec.n_points {
        attempts += 1;
        if attempts > MAX_ATTEMPTS_PER_POINT * spec.n_points {
            return Err(SimError::Infeasible { placed: points.len(), requested: spec.n_points });
        }
        let x = match &sampler {
            Some(s) => s.sample(spec, &mut rng),
            None => multi_view_point(spec, &centers, &mut rng),
        };
        let obs: Vec<(ViewId, Observation)> =
            poses.iter().enumerate().filter_map(|(v, p)| visible(spec, p, &x).map(|o| (v, o))).collect();
        let enough = if two_view { obs.len() == 2 } else { obs.len() >= 2 };
        if enough {
            tracks.push(Track { id: points.len(), observations: obs });
            points.push(x);
        }
    }
    let pairs = if two_view { vec![(0, 1)] } else { matching_pairs(spec, &poses, &tracks) };
    let clean = ViewGraph::from_tracks(poses.len(), tracks, &pairs, Some(poses.clone()))?;
    if !two_view {
        clean.ensure_connected()?;
    }
    let graph = noisy_graph(&clean, &pairs, spec, spec.noise_max_px, spec.seed)?;
    Ok(GeneratedScene { spec: *spec, poses, points_world: points, graph, clean })
}

fn noisy_graph(clean: &ViewGraph, pairs: &[(ViewId, ViewId)], spec: &SceneSpec, noise_max_px: f64, seed: u64) -> Result<ViewGraph, SimError> {
    if noise_max_px == 0.0 {
        return Ok(clean.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_NOISE);
    let f = spec.focal_px;
    let tracks = clean
        .tracks
        .iter()
        .map(|t| Track {
            id: t.id,
            observations: t
                .observations
                .iter()
                .map(|(v, o)| {
                    let (dx, dy) = match spec.noise_model {
                        NoiseModel::Radial => {
                            let m = rng.random_range(0.0..=noise_max_px);
                            let a = rng.random_range(0.0..2.0 * PI);
                            (m * a.cos(), m * a.sin())
                        }
                        NoiseModel::PerAxis => {
                            (rng.random_range(-noise_max_px..=noise_max_px), rng.random_range(-noise_max_px..=noise_max_px))
                        }
                    };
                    (*v, Observation::new(o.x + dx / f, o.y + dy / f))
                })
                .collect(),
        })
        .collect();
    Ok(ViewGraph::from_tracks(clean.n_views, tracks, pairs, clean.ground_truth.clone())?)
}

/// Re-noises the clean observations of `scene` with a new bound and seed.
pub fn add_noise(scene: &GeneratedScene, noise_max_px: f64, seed: u64) -> Result<GeneratedScene, SimError> {
    if !(noise_max_px >= 0.0 && noise_max_px.is_finite()) {
        return Err(SimError::InvalidSpec("noise must be finite and non-negative".into()));
    }
    let pairs: Vec<_> = scene.clean.edges.iter().map(|e| (e.left_view, e.right_view)).collect();
    let spec = SceneSpec { noise_max_px, ..scene.spec };
    let graph = noisy_graph(&scene.clean, &pairs, &spec, noise_max_px, seed)?;
    Ok(GeneratedScene { spec, graph, ..scene.clone() })
}

/// `exp(angle * axis) * r` with a random unit axis.
pub fn perturb_rotation_with(r: &Rotation, angle: f64, rng: &mut impl Rng) -> Rotation {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    exp_so3(&(Vec3::from(axis) * angle)) * *r
}

pub fn perturb_rotation(r: &Rotation, angle: f64, seed: u64) -> Rotation {
    perturb_rotation_with(r, angle, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_error;

    #[test]
    fn generation_is_deterministic() {
        for kind in SceneKind::ALL {
            let spec = SceneSpec::new(kind, 7).with_points(if kind.is_two_view() { 50 } else { 200 }).with_noise(2.0);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap(), "{kind}");
        }
    }

    #[test]
    fn observations_obey_chirality_and_bounds() {
        for kind in SceneKind::ALL {
            let spec = SceneSpec::new(kind, 3).with_points(if kind.is_two_view() { 80 } else { 200 });
            let s = generate(&spec).unwrap();
            let h = spec.half_extent();
            for (t, x) in s.clean.tracks.iter().zip(&s.points_world) {
                for (v, o) in &t.observations {
                    let pc = s.poses[*v].to_camera(x);
                    assert!(pc.z > 0.0);
                    assert!(o.x.abs() <= h && o.y.abs() <= h);
                }
            }
            if !kind.is_two_view() {
                assert!(s.clean.ensure_connected().is_ok());
                assert!(s.clean.tracks.iter().all(|t| t.observations.len() >= 2));
            }
        }
    }

    #[test]
    fn pure_rotation_and_holoplane_geometry() {
        let s = generate(&SceneSpec::new(SceneKind::PureRotation, 1)).unwrap();
        assert_eq!(s.poses[0].translation, s.poses[1].translation);
        let (r, _) = s.relative(0, 1);
        for c in &s.pair().points {
            assert!(crate::geometry::theta(&r, &c.left, &c.right).norm() < 1e-12);
        }
        let h = generate(&SceneSpec::new(SceneKind::Holoplane, 2)).unwrap();
        let n = h.poses[1].translation.cross(&Vec3::z());
        assert!(n.dot(&Vec3::z()).abs() < 1e-12);
        for x in &h.points_world {
            assert!(n.dot(x).abs() < 1e-10 * n.norm() * x.norm().max(1.0));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&SceneSpec::new(SceneKind::PureRotation, 0).with_cameras(3)).is_err());
        assert!(generate(&SceneSpec::new(SceneKind::Standard, 0).with_points(0)).is_err());
        assert!(generate(&SceneSpec::new(SceneKind::Circular, 0).with_cameras(2)).is_err());
        assert!(generate(&SceneSpec::new(SceneKind::Standard, 0).with_noise(-1.0)).is_err());
    }

    #[test]
    fn noise_properties() {
        let s = generate(&SceneSpec::new(SceneKind::Standard, 4)).unwrap();
        assert_eq!(add_noise(&s, 0.0, 9).unwrap().graph, s.clean);
        assert_eq!(add_noise(&s, 3.0, 9).unwrap(), add_noise(&s, 3.0, 9).unwrap());
        let big = generate(&SceneSpec::new(SceneKind::Standard, 5).with_points(5000)).unwrap();
        let spec = SceneSpec { focal_px: 800.0, ..big.spec };
        let big = GeneratedScene { spec, ..big };
        let noisy = add_noise(&big, 5.0, 11).unwrap();
        let mut total = 0.0;
        let mut n = 0;
        for (a, b) in big.clean.tracks.iter().zip(&noisy.graph.tracks) {
            for ((_, oa), (_, ob)) in a.observations.iter().zip(&b.observations) {
                let d = ((oa.x - ob.x).powi(2) + (oa.y - ob.y).powi(2)).sqrt() * 800.0;
                assert!(d <= 5.0 + 1e-9);
                total += d;
                n += 1;
            }
        }
        assert!((total / n as f64 - 2.5).abs() < 0.1);
    }

    #[test]
    fn perturbation_angle_is_exact() {
        let r = exp_so3(&Vec3::new(0.3, -0.2, 0.1));
        assert_eq!(perturb_rotation(&r, 0.0, 5), r);
        for seed in 0..100 {
            assert!((rotation_error(&r, &perturb_rotation(&r, 0.05, seed)) - 0.05).abs() < 1e-12);
        }
    }
}
