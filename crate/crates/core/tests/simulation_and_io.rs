use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rotonly::geometry::{log_so3, rotation_error, Rotation};
use rotonly::io::{parse_rotations, parse_run_spec, result_table_csv, rotations_to_text, IoError, SceneFile};
use rotonly::par::Execution;
use rotonly::sim::{generate, monte_carlo, perturb_rotation_with, RunSpec, SceneKind, SceneSpec};

const KINDS: [SceneKind; 9] = [
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

fn small(kind: SceneKind, seed: u64) -> SceneSpec {
    if kind.is_two_view() {
        SceneSpec::new(kind, seed).with_points(60)
    } else {
        SceneSpec::new(kind, seed).with_points(150).with_cameras(5)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn observations_lie_in_front_and_inside(seed in any::<u64>(), k in 0usize..KINDS.len()) {
        let scene = generate(&small(KINDS[k], seed)).unwrap();
        let gt = scene.graph.ground_truth.as_ref().unwrap();
        let half = 0.5 * scene.spec.image_px as f64 / scene.spec.focal_px;
        for (track, x) in scene.graph.tracks.iter().zip(&scene.points_world) {
            for (v, obs) in &track.observations {
                let pc = gt[*v].to_camera(x);
                prop_assert!(pc.z > 0.0);
                prop_assert!(obs.x.abs() <= half && obs.y.abs() <= half);
            }
        }
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), k in 0usize..KINDS.len()) {
        let spec = small(KINDS[k], seed).with_noise(2.0);
        prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn scene_files_round_trip(seed in any::<u64>(), k in 0usize..KINDS.len()) {
        let scene = generate(&small(KINDS[k], seed).with_noise(1.0)).unwrap();
        let text = SceneFile::from_scene(&scene).to_text();
        let parsed = SceneFile::parse(&text).unwrap();
        prop_assert_eq!(parsed.to_text(), text);
        let graph = parsed.to_graph().unwrap();
        for (a, b) in graph.tracks.iter().zip(&scene.graph.tracks) {
            for ((_, oa), (_, ob)) in a.observations.iter().zip(&b.observations) {
                prop_assert!((oa.x - ob.x).abs() < 1e-12 && (oa.y - ob.y).abs() < 1e-12);
            }
        }
        let gt = graph.ground_truth.unwrap();
        for (a, b) in gt.iter().zip(scene.graph.ground_truth.as_ref().unwrap()) {
            prop_assert!(rotation_error(&a.rotation, &b.rotation) < 1e-11);
        }
    }
}

#[test]
fn perturbation_axes_cover_all_octants() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 8000;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        let p = perturb_rotation_with(&Rotation::identity(), 0.3, &mut rng);
        let w = log_so3(&p);
        assert!((w.norm() - 0.3).abs() < 1e-12);
        let octant = (w.x > 0.0) as usize | ((w.y > 0.0) as usize) << 1 | ((w.z > 0.0) as usize) << 2;
        counts[octant] += 1;
    }
    let expected = n as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Critical value of chi-square with 7 degrees of freedom at p = 0.01.
    assert!(chi2 < 18.475, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn monte_carlo_is_identical_across_execution_modes() {
    let mut spec = RunSpec { trials: 6, noise_levels: vec![0.0, 2.0], ..RunSpec::new(SceneSpec::new(SceneKind::PlanarScene, 9).with_points(100)) };
    let a = result_table_csv(&monte_carlo(&spec).unwrap());
    spec.execution = Execution::Sequential;
    let b = result_table_csv(&monte_carlo(&spec).unwrap());
    assert_eq!(a, b);
}

#[test]
fn minimal_scene_round_trips_byte_identically() {
    let text = "rotscene 1\nintrinsics 480 960\ncounts 2 1 1\ncamera 0 1 0 0 0 0 0 0 1\ncamera 1 1 0 0 0 1 0 0 1\ntrack 0 1 0 0 10 2 0 480 480 1 432 480\npair 0 1\n";
    let parsed = SceneFile::parse(text).unwrap();
    assert_eq!(parsed.to_text(), text);
}

#[test]
fn count_mismatch_names_the_line() {
    let text = "rotscene 1\nintrinsics 480 960\ncounts 3 1 0\ncamera 0 1 0 0 0 0 0 0 1\ncamera 1 1 0 0 0 1 0 0 1\ntrack 0 0 2 0 480 480 1 432 480\n";
    match SceneFile::parse(text) {
        Err(IoError::Parse { line, message }) => {
            assert_eq!(line, 6, "{message}");
            assert!(message.contains("counts on line 3"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn rotation_files_and_run_specs_parse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rots: Vec<_> = (0..4).map(|_| perturb_rotation_with(&Rotation::identity(), 1.0, &mut rng)).collect();
    let back = parse_rotations(&rotations_to_text(&rots)).unwrap();
    for (a, b) in rots.iter().zip(&back) {
        assert!(rotation_error(a, b) < 1e-12);
    }
    let spec = parse_run_spec("# sweep\nkind = planar\nnoise = 0, 1.5\ntrials = 7\nseed = 3\nmethods = init, trrm\n").unwrap();
    assert_eq!(spec.scene.kind, SceneKind::PlanarScene);
    assert_eq!(spec.noise_levels, vec![0.0, 1.5]);
    assert_eq!((spec.trials, spec.master_seed, spec.methods.len()), (7, 3, 2));
    assert!(parse_run_spec("kind = circular\nmethods = trrm\n").is_err());
    assert!(parse_run_spec("colour = blue\n").is_err());
}
