mod common;

use common::{rand_obs, rand_rotation, rand_vec, spearman};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rotonly::detector::{classify, detection_matrices, v_rs, DEFAULT_THRESHOLD_PR, DEFAULT_THRESHOLD_RS};
use rotonly::geometry::{theta, Mat3};
use rotonly::graph::{Correspondence, MatchedPair};
use rotonly::sim::{add_noise, generate, jacobi_eigen, SceneKind, SceneSpec};
use rotonly::translation::{accumulate_ps, eigenvalues_cardano, lambda_min_cardano, solve_translation};

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> MatchedPair {
    let points = (0..n).map(|k| Correspondence { left: rand_obs(rng), right: rand_obs(rng), track: k }).collect();
    MatchedPair::new(0, 1, points).unwrap()
}

fn shuffled(pair: &MatchedPair, rng: &mut ChaCha8Rng) -> MatchedPair {
    let mut points = pair.points.clone();
    points.shuffle(rng);
    MatchedPair { points, ..pair.clone() }
}

fn rel_frobenius(a: &Mat3, b: &Mat3) -> f64 {
    (a - b).norm() / a.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ps_is_permutation_invariant(seed in any::<u64>(), n in 3usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(&mut rng, n);
        let r = rand_rotation(&mut rng);
        let other = shuffled(&pair, &mut rng);
        let (a, b) = (accumulate_ps(&pair, &r), accumulate_ps(&other, &r));
        prop_assert!(rel_frobenius(&a.ps, &b.ps) <= 1e-12);
        let (va, vb) = (v_rs(&pair).unwrap(), v_rs(&other).unwrap());
        prop_assert!((va - vb).abs() <= 1e-12 * va.abs().max(1e-300));
    }

    #[test]
    fn ps_is_positive_semidefinite(seed in any::<u64>(), n in 2usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(&mut rng, n);
        let s = accumulate_ps(&pair, &rand_rotation(&mut rng));
        prop_assert!(lambda_min_cardano(&s).unwrap() >= -1e-9 * s.trace);
    }

    #[test]
    fn cardano_agrees_with_jacobi(seed in any::<u64>(), scale in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Mat3::from_fn(|_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let a = m * m.transpose() * 10f64.powf(scale);
        let ours = eigenvalues_cardano(&a).unwrap();
        let (oracle, _) = jacobi_eigen(&a);
        for (x, y) in ours.iter().zip(&oracle) {
            prop_assert!((x - y).abs() <= 1e-9 * a.trace().max(1.0));
        }
    }

    #[test]
    fn gram_spectrum_survives_a_common_rotation(seed in any::<u64>(), n in 3usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = rand_rotation(&mut rng);
        let rays: Vec<_> = (0..n).map(|_| rand_vec(&mut rng, 1.0)).collect();
        let g = rays.iter().fold(Mat3::zeros(), |acc, a| acc + a * a.transpose());
        let gq = rays.iter().map(|a| q.apply(a)).fold(Mat3::zeros(), |acc, a| acc + a * a.transpose());
        let (e, eq) = (eigenvalues_cardano(&g).unwrap(), eigenvalues_cardano(&gq).unwrap());
        for (x, y) in e.iter().zip(&eq) {
            prop_assert!((x - y).abs() <= 1e-9 * g.trace());
        }
    }
}

#[test]
fn solution_is_a_near_null_vector() {
    for seed in 0..50 {
        let scene = generate(&SceneSpec::new(SceneKind::Standard, seed).with_points(150).with_noise(3.0)).unwrap();
        let (r, _) = scene.relative(0, 1);
        let s = accumulate_ps(scene.pair(), &r);
        let sol = solve_translation(scene.pair(), &r).unwrap();
        let t = sol.direction.expect("regular scene");
        assert!((s.ps * t).norm() <= 10.0 * sol.lambda_min * t.norm() + 1e-12 * s.trace, "seed {seed}");
    }
}

#[test]
fn theta_and_beta_are_collinear_without_noise() {
    for (kind, seed) in [(SceneKind::Standard, 1), (SceneKind::PlanarScene, 2), (SceneKind::RankRegularLine, 3)] {
        let scene = generate(&SceneSpec::new(kind, seed).with_points(200)).unwrap();
        let (r, t) = scene.relative(0, 1);
        for c in &scene.pair().points {
            let th = theta(&r, &c.left, &c.right);
            let beta = c.right.hom().cross(&t);
            let angle = th.cross(&beta).norm().atan2(th.dot(&beta).abs());
            assert!(angle < 1e-9, "{kind}: angle {angle}");
        }
    }
}

#[test]
fn noise_free_lambda_min_vanishes() {
    for seed in 0..20 {
        let scene = generate(&SceneSpec::new(SceneKind::Standard, seed).with_points(300)).unwrap();
        let (r, _) = scene.relative(0, 1);
        let s = accumulate_ps(scene.pair(), &r);
        assert!(lambda_min_cardano(&s).unwrap() / s.trace < 1e-12);
    }
}

#[test]
fn lambda_min_grows_with_noise() {
    let levels: Vec<f64> = (0..=10).map(f64::from).collect();
    let mut means = Vec::new();
    for (li, &noise) in levels.iter().enumerate() {
        let mut acc = 0.0;
        for seed in 0..30u64 {
            let base = generate(&SceneSpec::new(SceneKind::Standard, 500 + seed).with_points(200)).unwrap();
            let scene = add_noise(&base, noise, 9000 + 100 * seed + li as u64).unwrap();
            let (r, _) = scene.relative(0, 1);
            let s = accumulate_ps(scene.pair(), &r);
            acc += lambda_min_cardano(&s).unwrap() / s.trace;
        }
        means.push(acc / 30.0);
    }
    let rho = spearman(&levels, &means);
    assert!(rho > 0.9, "spearman {rho}, means {means:?}");
}

#[test]
fn classification_is_repeatable() {
    let scene = generate(&SceneSpec::new(SceneKind::Standard, 5).with_points(200).with_noise(2.0)).unwrap();
    let (r, _) = scene.relative(0, 1);
    let a = classify(scene.pair(), &r, DEFAULT_THRESHOLD_RS, DEFAULT_THRESHOLD_PR).unwrap();
    let b = classify(scene.pair(), &r, DEFAULT_THRESHOLD_RS, DEFAULT_THRESHOLD_PR).unwrap();
    assert_eq!(a, b);
    let (gi, gj) = detection_matrices(scene.pair());
    assert_eq!(a.g_i_lambda_min, eigenvalues_cardano(&gi).unwrap()[0]);
    assert_eq!(a.g_j_lambda_min, eigenvalues_cardano(&gj).unwrap()[0]);
}
