use std::path::Path;

use rotonly_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use serde_json::Value;
use tempfile::TempDir;

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("rotonly").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn simulate(dir: &TempDir, name: &str, extra: &[&str]) -> String {
    let p = path(dir, name);
    let mut args = vec!["simulate", "-o", &p];
    args.extend_from_slice(extra);
    let (code, _, err) = call(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    p
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (code, _, err) = call(&["simulate", "--bogus"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(call(&["--help"]).0, EXIT_OK);
}

#[test]
fn missing_input_is_a_data_error() {
    let (code, _, err) = call(&["detect", "/nonexistent/scene.txt"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.starts_with("error:"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.txt", &["--kind", "standard", "--seed", "4", "--points", "60", "--noise", "1"]);
    let b = simulate(&dir, "b.txt", &["--kind", "standard", "--seed", "4", "--points", "60", "--noise", "1"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn flags_override_config_and_config_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "cfg.txt");
    std::fs::write(&cfg, "kind = planar\npoints = 40\nseed = 2\n").unwrap();
    let from_cfg = path(&dir, "c.txt");
    assert_eq!(call(&["--config", &cfg, "simulate", "-o", &from_cfg]).0, EXIT_OK);
    let flagged = path(&dir, "f.txt");
    assert_eq!(call(&["--config", &cfg, "simulate", "--points", "25", "-o", &flagged]).0, EXIT_OK);
    let tracks = |p: &str| std::fs::read_to_string(p).unwrap().lines().filter(|l| l.starts_with("track ")).count();
    assert_eq!(tracks(&from_cfg), 40);
    assert_eq!(tracks(&flagged), 25);
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(call(&["--config", &cfg, "simulate", "-o", &flagged]).0, EXIT_USAGE);
}

#[test]
fn detect_labels_holoplane_rotation_singular() {
    let dir = TempDir::new().unwrap();
    let holo = simulate(&dir, "h.txt", &["--kind", "holoplane", "--seed", "1", "--points", "200"]);
    let (code, out, err) = call(&["detect", &holo]);
    assert_eq!(code, EXIT_OK, "{err}");
    let rows = json_lines(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["label"], "RotationSingular");
    assert_eq!(rows[0]["pair"], serde_json::json!([0, 1]));
    assert!(rows[0]["v_rs"].as_f64().unwrap() < 1e-4);

    let std_scene = simulate(&dir, "s.txt", &["--kind", "standard", "--seed", "1", "--points", "200"]);
    let (_, out, _) = call(&["detect", &std_scene]);
    assert_eq!(json_lines(&out)[0]["label"], "Regular");
}

#[test]
fn two_view_optimization_recovers_rotation() {
    let dir = TempDir::new().unwrap();
    let scene = simulate(&dir, "s.txt", &["--kind", "standard", "--seed", "3", "--points", "200"]);
    let rot = path(&dir, "r.txt");
    let (code, out, err) = call(&["optimize-two-view", &scene, "--init", "gt-perturb:0.03", "--seed", "5", "-o", &rot]);
    assert_eq!(code, EXIT_OK, "{err}");
    let rep = &json_lines(&out)[0];
    assert_eq!(rep["label"], "Regular");
    assert!((rep["init_error_rad"].as_f64().unwrap() - 0.03).abs() < 1e-9);
    assert!(rep["error_rad"].as_f64().unwrap() < 1e-7, "{rep}");

    // The written rotation restarts the solver at its own optimum.
    let (code, out, _) = call(&["optimize-two-view", &scene, "--init", &rot]);
    assert_eq!(code, EXIT_OK);
    assert!(json_lines(&out)[0]["init_error_rad"].as_f64().unwrap() < 1e-7);
    assert_eq!(call(&["optimize-two-view", &scene, "--pair", "0,7"]).0, EXIT_DATA);
    assert_eq!(call(&["optimize-two-view", &scene, "--init", "gt-perturb:x"]).0, EXIT_USAGE);
}

#[test]
fn multi_view_optimization_and_eval() {
    let dir = TempDir::new().unwrap();
    let scene = simulate(&dir, "m.txt", &["--kind", "circular", "--seed", "2", "--cameras", "6", "--points", "150", "--noise", "1"]);
    let rot = path(&dir, "r.txt");
    let (code, out, err) = call(&["optimize-multi-view", &scene, "-o", &rot]);
    assert_eq!(code, EXIT_OK, "{err}");
    let rep = &json_lines(&out)[0];
    assert_eq!(rep["views"], 6);
    let (init, fin) = (rep["init_mean_error_rad"].as_f64().unwrap(), rep["mean_error_rad"].as_f64().unwrap());
    assert!(fin < init, "{rep}");

    let (code, out, _) = call(&["eval", &rot, &rot]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(json_lines(&out)[0]["mean_error_rad"], 0.0);

    let truth = path(&dir, "gt.txt");
    let text = std::fs::read_to_string(&scene).unwrap();
    let file = rotonly::io::SceneFile::parse(&text).unwrap();
    let gt: Vec<_> = file.poses().unwrap().iter().map(|p| p.rotation).collect();
    std::fs::write(&truth, rotonly::io::rotations_to_text(&gt)).unwrap();
    let (_, out, _) = call(&["eval", &truth, &rot, "--align"]);
    let aligned = json_lines(&out)[0]["mean_error_rad"].as_f64().unwrap();
    assert!((aligned - fin).abs() < 1e-9, "{aligned} vs {fin}");
}

#[test]
fn eval_rejects_mismatched_counts() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.txt"), path(&dir, "b.txt"));
    let id = rotonly::Rotation::identity();
    std::fs::write(&a, rotonly::io::rotations_to_text(&[id])).unwrap();
    std::fs::write(&b, rotonly::io::rotations_to_text(&[id, id])).unwrap();
    assert_eq!(call(&["eval", &a, &b]).0, EXIT_DATA);
}

#[test]
fn benchmark_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let spec = path(&dir, "spec.txt");
    std::fs::write(&spec, "kind = standard\npoints = 80\nnoise = 0, 2\ntrials = 3\nseed = 11\n").unwrap();
    let (code, first, err) = call(&["benchmark", &spec]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (_, second, _) = call(&["benchmark", &spec, "--execution", "sequential"]);
    assert_eq!(first, second);
    assert!(first.starts_with(rotonly::io::CSV_HEADER));
    assert_eq!(first.lines().count(), 1 + 3 * 2 * 3);
    let (_, fewer, _) = call(&["benchmark", &spec, "--trials", "1"]);
    assert_eq!(fewer.lines().count(), 1 + 2 * 3);
    assert!(Path::new(&spec).exists());
}
