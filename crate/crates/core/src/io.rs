//! Text formats: scene files, rotation files, result CSVs and key=value run specs.
//!
//! Scene file layout (one record per line, `#` starts a comment line):
//!
//! ```text
//! rotscene 1
//! intrinsics <focal_px> <image_px>
//! counts <cameras> <tracks> <pairs>
//! camera <id> <qw> <qx> <qy> <qz> <cx> <cy> <cz> <gt:0|1>
//! track <id> <has_point:0|1> [<X> <Y> <Z>] <n> (<view> <x_px> <y_px>){n}
//! pair <view_a> <view_b>
//! ```
//!
//! Pixel coordinates use a principal point at the image center.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{CameraPose, Observation, Rotation, Vec3};
use crate::graph::{GraphError, Track, ViewGraph, ViewId};
use crate::par::Execution;
use crate::sim::{GeneratedScene, Method, NoiseModel, ResultTable, RunSpec, SceneKind, SceneSpec, SimError};

pub const SCENE_MAGIC: &str = "rotscene";
pub const SCENE_VERSION: u32 = 1;
pub const ROTATION_MAGIC: &str = "rotations";
/// Quaternion norms off by more than this are rejected.
pub const QUAT_REJECT: f64 = 1e-6;
/// Quaternion norms off by more than this are renormalized with a warning.
pub const QUAT_WARN: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// Whitespace tokens of a line, with typed accessors reporting the line number.
struct Fields<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        Fields { line, tokens: text.split_whitespace() }
    }

    fn word(&mut self, what: &str) -> Result<&'a str, IoError> {
        self.tokens.next().ok_or_else(|| parse_err(self.line, format!("missing {what}")))
    }

    fn keyword(&mut self, expected: &str) -> Result<(), IoError> {
        let w = self.word(expected)?;
        if w != expected {
            return Err(parse_err(self.line, format!("expected '{expected}', found '{w}'")));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, IoError> {
        let w = self.word(what)?;
        w.parse().map_err(|_| parse_err(self.line, format!("invalid {what} '{w}'")))
    }

    fn real(&mut self, what: &str) -> Result<f64, IoError> {
        let v: f64 = self.parse(what)?;
        if !v.is_finite() {
            return Err(parse_err(self.line, format!("non-finite {what}")));
        }
        Ok(v)
    }

    fn flag(&mut self, what: &str) -> Result<bool, IoError> {
        match self.word(what)? {
            "0" => Ok(false),
            "1" => Ok(true),
            w => Err(parse_err(self.line, format!("invalid {what} '{w}' (expected 0 or 1)"))),
        }
    }

    fn finish(mut self) -> Result<(), IoError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(w) => Err(parse_err(self.line, format!("unexpected trailing token '{w}'"))),
        }
    }
}

/// Numbered, non-empty, non-comment lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn check_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, magic: &str, version: u32) -> Result<(), IoError> {
    let (n, l) = lines.next().ok_or_else(|| parse_err(1, format!("empty file, expected '{magic} {version}'")))?;
    let mut f = Fields::new(n, l);
    f.keyword(magic)?;
    let v = f.word("version")?;
    if v != version.to_string() {
        return Err(IoError::Version { found: v.to_string(), expected: version });
    }
    f.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRecord {
    pub id: ViewId,
    pub quaternion_wxyz: [f64; 4],
    pub center: [f64; 3],
    pub ground_truth: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackRecord {
    pub id: usize,
    pub point: Option<[f64; 3]>,
    /// `(view, x_px, y_px)`.
    pub observations: Vec<(ViewId, f64, f64)>,
}

/// Parsed scene file, kept in file units so it re-serializes byte-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFile {
    pub focal_px: f64,
    pub image_px: u32,
    pub cameras: Vec<CameraRecord>,
    pub tracks: Vec<TrackRecord>,
    pub pairs: Vec<(ViewId, ViewId)>,
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut lines = content_lines(text);
        check_header(&mut lines, SCENE_MAGIC, SCENE_VERSION)?;
        let (n, l) = lines.next().ok_or_else(|| parse_err(2, "missing intrinsics line"))?;
        let mut f = Fields::new(n, l);
        f.keyword("intrinsics")?;
        let focal_px = f.real("focal length")?;
        let image_px: u32 = f.parse("image size")?;
        f.finish()?;
        if focal_px <= 0.0 || image_px == 0 {
            return Err(parse_err(n, "focal length and image size must be positive"));
        }
        let (n, l) = lines.next().ok_or_else(|| parse_err(3, "missing counts line"))?;
        let mut f = Fields::new(n, l);
        f.keyword("counts")?;
        let (nc, nt, np): (usize, usize, usize) = (f.parse("camera count")?, f.parse("track count")?, f.parse("pair count")?);
        f.finish()?;
        let counts_line = n;

        let mut scene = SceneFile { focal_px, image_px, cameras: Vec::new(), tracks: Vec::new(), pairs: Vec::new() };
        let mut last_line = counts_line;
        for (n, l) in lines {
            last_line = n;
            let mut f = Fields::new(n, l);
            match f.word("record type")? {
                "camera" => {
                    if scene.cameras.len() == nc {
                        return Err(parse_err(n, format!("more camera records than the {nc} declared on line {counts_line}")));
                    }
                    let id: ViewId = f.parse("camera id")?;
                    if id != scene.cameras.len() {
                        return Err(parse_err(n, format!("camera id {id} out of sequence (expected {})", scene.cameras.len())));
                    }
                    let q = [f.real("qw")?, f.real("qx")?, f.real("qy")?, f.real("qz")?];
                    let c = [f.real("cx")?, f.real("cy")?, f.real("cz")?];
                    let gt = f.flag("ground-truth flag")?;
                    f.finish()?;
                    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > QUAT_REJECT {
                        return Err(parse_err(n, format!("quaternion norm {norm} is not unit")));
                    }
                    scene.cameras.push(CameraRecord { id, quaternion_wxyz: q, center: c, ground_truth: gt });
                }
                "track" => {
                    if scene.tracks.len() == nt {
                        return Err(parse_err(n, format!("more track records than the {nt} declared on line {counts_line}")));
                    }
                    let id: usize = f.parse("track id")?;
                    let point = if f.flag("point flag")? { Some([f.real("X")?, f.real("Y")?, f.real("Z")?]) } else { None };
                    let k: usize = f.parse("observation count")?;
                    let mut observations = Vec::with_capacity(k);
                    for _ in 0..k {
                        let v: ViewId = f.parse("view id")?;
                        if v >= nc {
                            return Err(parse_err(n, format!("view id {v} out of range")));
                        }
                        observations.push((v, f.real("x_px")?, f.real("y_px")?));
                    }
                    f.finish()?;
                    scene.tracks.push(TrackRecord { id, point, observations });
                }
                "pair" => {
                    if scene.pairs.len() == np {
                        return Err(parse_err(n, format!("more pair records than the {np} declared on line {counts_line}")));
                    }
                    let (a, b): (ViewId, ViewId) = (f.parse("view id")?, f.parse("view id")?);
                    f.finish()?;
                    if a >= nc || b >= nc || a == b {
                        return Err(parse_err(n, format!("invalid pair ({a}, {b})")));
                    }
                    scene.pairs.push((a, b));
                }
                other => return Err(parse_err(n, format!("unknown record type '{other}'"))),
            }
        }
        if (scene.cameras.len(), scene.tracks.len(), scene.pairs.len()) != (nc, nt, np) {
            return Err(parse_err(
                last_line,
                format!(
                    "record counts ({}, {}, {}) do not match counts on line {counts_line} ({nc}, {nt}, {np})",
                    scene.cameras.len(),
                    scene.tracks.len(),
                    scene.pairs.len()
                ),
            ));
        }
        Ok(scene)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{SCENE_MAGIC} {SCENE_VERSION}");
        let _ = writeln!(s, "intrinsics {} {}", self.focal_px, self.image_px);
        let _ = writeln!(s, "counts {} {} {}", self.cameras.len(), self.tracks.len(), self.pairs.len());
        for c in &self.cameras {
            let [w, x, y, z] = c.quaternion_wxyz;
            let [cx, cy, cz] = c.center;
            let _ = writeln!(s, "camera {} {w} {x} {y} {z} {cx} {cy} {cz} {}", c.id, u8::from(c.ground_truth));
        }
        for t in &self.tracks {
            let _ = write!(s, "track {}", t.id);
            match t.point {
                Some([x, y, z]) => {
                    let _ = write!(s, " 1 {x} {y} {z}");
                }
                None => s.push_str(" 0"),
            }
            let _ = write!(s, " {}", t.observations.len());
            for (v, x, y) in &t.observations {
                let _ = write!(s, " {v} {x} {y}");
            }
            s.push('\n');
        }
        for (a, b) in &self.pairs {
            let _ = writeln!(s, "pair {a} {b}");
        }
        s
    }

    fn principal(&self) -> f64 {
        0.5 * self.image_px as f64
    }

    /// Converts to normalized observations; ground truth is present when every camera carries it.
    pub fn to_graph(&self) -> Result<ViewGraph, IoError> {
        let (f, c) = (self.focal_px, self.principal());
        let tracks = self
            .tracks
            .iter()
            .map(|t| Track {
                id: t.id,
                observations: t.observations.iter().map(|&(v, x, y)| (v, Observation::new((x - c) / f, (y - c) / f))).collect(),
            })
            .collect();
        let ground_truth = if !self.cameras.is_empty() && self.cameras.iter().all(|c| c.ground_truth) {
            Some(self.poses()?)
        } else {
            None
        };
        Ok(ViewGraph::from_tracks(self.cameras.len(), tracks, &self.pairs, ground_truth)?)
    }

    /// Camera poses as stored, renormalizing slightly non-unit quaternions.
    pub fn poses(&self) -> Result<Vec<CameraPose>, IoError> {
        self.cameras
            .iter()
            .map(|cam| {
                let q = cam.quaternion_wxyz;
                let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > QUAT_WARN {
                    log::warn!("camera {}: quaternion norm {norm} renormalized", cam.id);
                }
                let unit = q.map(|v| v / norm);
                let r = Rotation::from_quaternion_wxyz(unit, QUAT_REJECT).map_err(|e| parse_err(0, e.to_string()))?;
                Ok(CameraPose::new(r, Vec3::from(cam.center)))
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Option<Vec3>> {
        self.tracks.iter().map(|t| t.point.map(Vec3::from)).collect()
    }

    /// Exports a graph; `points` (indexed like `graph.tracks`) are optional.
    pub fn from_graph(graph: &ViewGraph, points: Option<&[Vec3]>, focal_px: f64, image_px: u32) -> Self {
        let c = 0.5 * image_px as f64;
        let cameras = (0..graph.n_views)
            .map(|id| {
                let pose = graph.ground_truth.as_ref().map(|gt| gt[id]);
                let p = pose.unwrap_or_else(CameraPose::identity);
                CameraRecord {
                    id,
                    quaternion_wxyz: p.rotation.to_quaternion_wxyz(),
                    center: [p.translation.x, p.translation.y, p.translation.z],
                    ground_truth: pose.is_some(),
                }
            })
            .collect();
        let tracks = graph
            .tracks
            .iter()
            .enumerate()
            .map(|(k, t)| TrackRecord {
                id: t.id,
                point: points.and_then(|p| p.get(k)).map(|x| [x.x, x.y, x.z]),
                observations: t.observations.iter().map(|(v, o)| (*v, o.x * focal_px + c, o.y * focal_px + c)).collect(),
            })
            .collect();
        let pairs = graph.edges.iter().map(|e| (e.left_view, e.right_view)).collect();
        SceneFile { focal_px, image_px, cameras, tracks, pairs }
    }

    /// Exports the noisy observations of a generated scene with its ground truth.
    pub fn from_scene(scene: &GeneratedScene) -> Self {
        Self::from_graph(&scene.graph, Some(&scene.points_world), scene.spec.focal_px, scene.spec.image_px)
    }
}

pub fn parse_scene(path: &Path) -> Result<SceneFile, IoError> {
    SceneFile::parse(&read_text(path)?)
}

pub fn write_scene(path: &Path, scene: &SceneFile) -> Result<(), IoError> {
    write_text(path, &scene.to_text())
}

/// Parses `rotations 1`, `count <n>`, then `rotation <id> <qw> <qx> <qy> <qz>` lines.
pub fn parse_rotations(text: &str) -> Result<Vec<Rotation>, IoError> {
    let mut lines = content_lines(text);
    check_header(&mut lines, ROTATION_MAGIC, 1)?;
    let (n, l) = lines.next().ok_or_else(|| parse_err(2, "missing count line"))?;
    let mut f = Fields::new(n, l);
    f.keyword("count")?;
    let count: usize = f.parse("rotation count")?;
    f.finish()?;
    let mut out = Vec::with_capacity(count);
    let mut last = n;
    for (n, l) in lines {
        last = n;
        let mut f = Fields::new(n, l);
        f.keyword("rotation")?;
        let id: usize = f.parse("rotation id")?;
        if id != out.len() {
            return Err(parse_err(n, format!("rotation id {id} out of sequence (expected {})", out.len())));
        }
        let q = [f.real("qw")?, f.real("qx")?, f.real("qy")?, f.real("qz")?];
        f.finish()?;
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > QUAT_REJECT {
            return Err(parse_err(n, format!("quaternion norm {norm} is not unit")));
        }
        if (norm - 1.0).abs() > QUAT_WARN {
            log::warn!("line {n}: quaternion norm {norm} renormalized");
        }
        let r = Rotation::from_quaternion_wxyz(q.map(|v| v / norm), QUAT_REJECT).map_err(|e| parse_err(n, e.to_string()))?;
        out.push(r);
    }
    if out.len() != count {
        return Err(parse_err(last, format!("found {} rotations, count says {count}", out.len())));
    }
    Ok(out)
}

pub fn rotations_to_text(rotations: &[Rotation]) -> String {
    let mut s = format!("{ROTATION_MAGIC} 1\ncount {}\n", rotations.len());
    for (i, r) in rotations.iter().enumerate() {
        let [w, x, y, z] = r.to_quaternion_wxyz();
        let _ = writeln!(s, "rotation {i} {w} {x} {y} {z}");
    }
    s
}

/// Formats `x` with 12 significant digits, fixed notation for moderate magnitudes.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const CSV_HEADER: &str = "trial,method,scene_kind,noise_max_px,n_points,error_rad,converged,iterations,wall_ms";

/// Renders a result table; failed trials leave `error_rad` empty.
pub fn result_table_csv(table: &ResultTable) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.method,
            r.scene_kind,
            fmt_sig12(r.noise_max_px),
            r.n_points,
            r.error_rad.map(fmt_sig12).unwrap_or_default(),
            r.converged,
            r.iterations,
            r.wall_ms.map(fmt_sig12).unwrap_or_default(),
        );
    }
    s
}

/// Parses `key = value` lines; `#` starts a comment line. Later keys override earlier ones.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut map = BTreeMap::new();
    for (n, l) in content_lines(text) {
        let (k, v) = l.split_once('=').ok_or_else(|| parse_err(n, format!("expected key = value, found '{l}'")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(parse_err(n, "empty key"));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub const RUN_SPEC_KEYS: [&str; 15] = [
    "kind",
    "cameras",
    "points",
    "noise",
    "noise_model",
    "focal",
    "image",
    "depth",
    "neighbors",
    "seed",
    "trials",
    "methods",
    "init_perturb",
    "execution",
    "timing",
];

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, IoError> {
    v.parse().map_err(|_| parse_err(0, format!("invalid value '{v}' for key '{key}'")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, IoError> {
    v.split(',').map(|s| value(key, s.trim())).collect()
}

/// Builds a run spec from merged key/value settings; unset keys take defaults.
pub fn run_spec_from_map(map: &BTreeMap<String, String>) -> Result<RunSpec, IoError> {
    if let Some(k) = map.keys().find(|k| !RUN_SPEC_KEYS.contains(&k.as_str())) {
        return Err(parse_err(0, format!("unknown key '{k}'")));
    }
    let get = |k: &str| map.get(k).map(String::as_str);
    let kind: SceneKind = match get("kind") {
        Some(v) => v.parse()?,
        None => SceneKind::Standard,
    };
    let seed: u64 = get("seed").map(|v| value("seed", v)).transpose()?.unwrap_or(0);
    let mut scene = SceneSpec::new(kind, seed);
    if let Some(v) = get("cameras") {
        scene.n_cameras = value("cameras", v)?;
    }
    if let Some(v) = get("points") {
        scene.n_points = value("points", v)?;
    }
    if let Some(v) = get("noise_model") {
        scene.noise_model = v.parse::<NoiseModel>()?;
    }
    if let Some(v) = get("focal") {
        scene.focal_px = value("focal", v)?;
    }
    if let Some(v) = get("image") {
        scene.image_px = value("image", v)?;
    }
    if let Some(v) = get("depth") {
        scene.depth_param = value("depth", v)?;
    }
    if let Some(v) = get("neighbors") {
        scene.neighbors = value("neighbors", v)?;
    }
    let mut spec = RunSpec::new(scene);
    if let Some(v) = get("noise") {
        spec.noise_levels = list("noise", v)?;
    }
    if let Some(v) = get("trials") {
        spec.trials = value("trials", v)?;
    }
    if let Some(v) = get("methods") {
        spec.methods = v.split(',').map(|m| m.trim().parse::<Method>()).collect::<Result<_, _>>()?;
    }
    if let Some(v) = get("init_perturb") {
        spec.init_perturb_rad = value("init_perturb", v)?;
    }
    if let Some(v) = get("execution") {
        spec.execution = match v {
            "parallel" => Execution::Parallel,
            "sequential" => Execution::Sequential,
            _ => return Err(parse_err(0, format!("invalid execution '{v}'"))),
        };
    }
    if let Some(v) = get("timing") {
        spec.timing = value("timing", v)?;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn parse_run_spec(text: &str) -> Result<RunSpec, IoError> {
    run_spec_from_map(&parse_key_values(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate, Summary};

    const MINIMAL: &str = "rotscene 1\nintrinsics 480 960\ncounts 2 1 1\n\
camera 0 1 0 0 0 0 0 0 1\ncamera 1 0.9950041652780258 0 0.09983341664682815 0 1 0 0 1\n\
track 0 1 0.5 -0.25 10 2 0 504 468 1 460.5 470.25\npair 0 1\n";

    #[test]
    fn minimal_file_round_trips_byte_identically() {
        let s = SceneFile::parse(MINIMAL).unwrap();
        assert_eq!(s.to_text(), MINIMAL);
        let g = s.to_graph().unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.tracks[0].observations[0].1, Observation::new(0.05, -0.025));
        assert!(g.ground_truth.is_some());
    }

    #[test]
    fn errors_name_the_line() {
        let bad = MINIMAL.replace("counts 2 1 1", "counts 2 2 1");
        let e = SceneFile::parse(&bad).unwrap_err().to_string();
        assert!(e.starts_with("line 7:"), "{e}");
        let bad = MINIMAL.replace("counts 2 1 1", "counts 1 1 1");
        let e = SceneFile::parse(&bad).unwrap_err().to_string();
        assert!(e.starts_with("line 5:"), "{e}");
        let bad = MINIMAL.replace("camera 0 1 0", "camera 0 1.1 0");
        assert!(SceneFile::parse(&bad).unwrap_err().to_string().starts_with("line 4:"));
        let bad = MINIMAL.replace("rotscene 1", "rotscene 2");
        assert!(matches!(SceneFile::parse(&bad), Err(IoError::Version { .. })));
        let bad = MINIMAL.replace("pair 0 1", "pair 0 1 7");
        assert!(SceneFile::parse(&bad).unwrap_err().to_string().starts_with("line 7:"));
    }

    #[test]
    fn slightly_non_unit_quaternion_is_renormalized() {
        let text = MINIMAL.replace("camera 0 1 0 0 0", "camera 0 1.0000001 0 0 0");
        let s = SceneFile::parse(&text).unwrap();
        let poses = s.poses().unwrap();
        assert!((poses[0].rotation.matrix() - crate::geometry::Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn generated_scene_reimports() {
        let scene = generate(&SceneSpec::new(SceneKind::Circular, 3).with_points(200).with_cameras(6).with_noise(1.0)).unwrap();
        let file = SceneFile::from_scene(&scene);
        let back = SceneFile::parse(&file.to_text()).unwrap();
        assert_eq!(back, file);
        let g = back.to_graph().unwrap();
        assert_eq!(g.edges.len(), scene.graph.edges.len());
        let mut max = 0.0f64;
        for (a, b) in g.tracks.iter().zip(&scene.graph.tracks) {
            for ((va, oa), (vb, ob)) in a.observations.iter().zip(&b.observations) {
                assert_eq!(va, vb);
                max = max.max((oa.x - ob.x).abs()).max((oa.y - ob.y).abs());
            }
        }
        assert!(max < 1e-12, "{max}");
        for (p, q) in g.ground_truth.unwrap().iter().zip(&scene.poses) {
            assert!((p.rotation.matrix() - q.rotation.matrix()).norm() < 1e-12);
            assert_eq!(p.translation, q.translation);
        }
    }

    #[test]
    fn rotation_files_round_trip() {
        let rs = vec![Rotation::identity(), Rotation::about_z(0.3), Rotation::about_x(-2.0)];
        let text = rotations_to_text(&rs);
        let back = parse_rotations(&text).unwrap();
        for (a, b) in rs.iter().zip(&back) {
            assert!((a.matrix() - b.matrix()).norm() < 1e-15);
        }
        let again = parse_rotations(&rotations_to_text(&back)).unwrap();
        for (a, b) in again.iter().zip(&back) {
            assert!((a.matrix() - b.matrix()).norm() < 1e-15);
        }
        assert!(parse_rotations("rotations 1\ncount 2\nrotation 0 1 0 0 0\n").unwrap_err().to_string().starts_with("line 3:"));
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(5.0), "5");
        assert_eq!(fmt_sig12(0.1), "0.1");
        assert_eq!(fmt_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig12(123456.789), "123456.789");
        assert_eq!(fmt_sig12(1.234e-9), "1.234e-9");
        assert_eq!(fmt_sig12(-2.0 / 3.0 * 1e-7), "-6.66666666667e-8");
        assert_eq!(fmt_sig12(1e15), "1e15");
        for x in [1.0 / 7.0, 2.5e-6, 9.999999999999e-3, 314.159265358979] {
            let y: f64 = fmt_sig12(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 1e-11);
        }
    }

    #[test]
    fn run_spec_parsing() {
        let text = "# sweep\nkind = planar\nnoise = 0, 1, 2.5\ntrials = 3\nmethods = trrm,init\nseed = 9\n";
        let spec = parse_run_spec(text).unwrap();
        assert_eq!(spec.scene.kind, SceneKind::PlanarScene);
        assert_eq!(spec.noise_levels, vec![0.0, 1.0, 2.5]);
        assert_eq!(spec.methods, vec![Method::Trrm, Method::Init]);
        assert_eq!((spec.trials, spec.master_seed), (3, 9));
        assert!(parse_run_spec("bogus = 1").is_err());
        assert!(parse_run_spec("kind = circular\nmethods = trrm").is_err());
        assert!(parse_run_spec("no equals sign").unwrap_err().to_string().starts_with("line 1:"));
    }

    #[test]
    fn csv_layout() {
        let spec = parse_run_spec("trials = 2\npoints = 40\nmethods = init,trrm\n").unwrap();
        let table = crate::sim::monte_carlo(&spec).unwrap();
        let csv = result_table_csv(&table);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,init,standard,0,40,"));
        assert!(lines[1].ends_with(",true,0,"));
        let _: Vec<Summary> = table.summaries();
    }
}
