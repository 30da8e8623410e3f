use std::f64::consts::PI;

use mitopo_core::coil::Vec3;
use mitopo_core::demodulation::{
    add_awgn, blind_detect, build_pilot_codebook, ml_detect, pairwise_error_bound, precompute_for_scene, q_zero,
    upsilon_matrix, Approximation, BasisOptions, Fusion, NoiseModel, PrecomputedBasis,
};
use mitopo_core::linalg::CVector;
use mitopo_core::modulation::{
    enumerate_constellation, normalize_symbol_power, symbol_power, Equalize, FrequencyPlan, PlanMode, PowerBudget,
    Scheme,
};
use mitopo_core::scene::{distance_prior, GeometrySample, MacScene};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const THERMAL: f64 = 4.0 * 1.38e-23 * 300.0 * 0.065;

fn pilot_plan() -> FrequencyPlan {
    FrequencyPlan {
        mode: PlanMode::SharedSet,
        band: (0.99, 1.01),
        n_omega: 32,
        n_sets: 1,
        seed: 1,
    }
}

#[test]
fn pilot_detector_is_exact_without_noise() {
    let f0 = 1e6;
    let sets = pilot_plan().frequency_sets(2.0 * PI * f0).unwrap();
    for d in [1.0, 2.0, 5.0, 10.0] {
        let scene = MacScene::two_user(d, f0).unwrap();
        let c = enumerate_constellation(&scene.patterns, scene.users(), Scheme::Mod3, true).unwrap();
        let nets = scene.networks(&c).unwrap();
        let powers: Vec<_> = nets.iter().map(|n| symbol_power(n, &sets).unwrap()).collect();
        let etas = normalize_symbol_power(&powers, &PowerBudget::new(1e-3, Equalize::Received)).unwrap();
        let cb = build_pilot_codebook(&nets, &sets[0], &etas, THERMAL).unwrap();
        for (k, s) in cb.symbols.iter().enumerate() {
            assert_eq!(ml_detect(s, &cb).unwrap().k_hat, k, "D = {d}");
        }
        // codebook entries are the measured currents up to eta
        let measured = upsilon_matrix(&nets[1], &sets[0], Approximation::Exact).unwrap()
            * q_zero(&nets[1])
            * Complex64::new(etas[1], 0.0);
        assert!((&measured - &cb.symbols[1]).norm() <= 1e-12 * measured.norm());
    }
}

#[test]
fn pilot_bound_orders_by_noise_and_falls_with_snr() {
    let f0 = 1e6;
    let sets = pilot_plan().frequency_sets(2.0 * PI * f0).unwrap();
    let scene = MacScene::two_user(5.0, f0).unwrap();
    let c = enumerate_constellation(&scene.patterns, scene.users(), Scheme::Mod3, true).unwrap();
    let nets = scene.networks(&c).unwrap();
    let powers: Vec<_> = nets.iter().map(|n| symbol_power(n, &sets).unwrap()).collect();
    let etas = normalize_symbol_power(&powers, &PowerBudget::new(1e-3, Equalize::Received)).unwrap();
    let mut last = -1.0;
    for n0 in [THERMAL, 1e-16, 1e-12] {
        let b = pairwise_error_bound(&build_pilot_codebook(&nets, &sets[0], &etas, n0).unwrap()).unwrap();
        assert!(b >= last);
        last = b;
    }
}

fn blind_setup(d_values: &[f64]) -> (MacScene, Vec<Vec<f64>>, PrecomputedBasis) {
    let f0 = 10e6;
    let plan = FrequencyPlan {
        mode: PlanMode::SharedSet,
        band: (0.92, 1.08),
        n_omega: 24,
        n_sets: 24,
        seed: 7,
    };
    let sets = plan.frequency_sets(2.0 * PI * f0).unwrap();
    let scene = MacScene::two_user(d_values[0], f0).unwrap();
    let c = enumerate_constellation(&scene.patterns, scene.users(), Scheme::Mod3, true).unwrap();
    let prior = distance_prior(1.0, 10.0, 10, Vec3::z()).unwrap();
    let basis = precompute_for_scene(&scene, &c, &prior, &sets, &BasisOptions::default()).unwrap();
    (scene, sets, basis)
}

fn blind_observations(scene: &MacScene, sets: &[Vec<f64>], k: usize, eta: f64) -> Vec<CVector> {
    let c = enumerate_constellation(&scene.patterns, scene.users(), Scheme::Mod3, true).unwrap();
    let net = scene.network(&c[k]).unwrap();
    let q0 = q_zero(&net);
    sets.iter()
        .map(|f| upsilon_matrix(&net, f, Approximation::Exact).unwrap() * &q0 * Complex64::new(eta, 0.0))
        .collect()
}

#[test]
fn blind_detector_is_exact_without_noise() {
    let (scene, sets, basis) = blind_setup(&[1.0]);
    for d in [1.0, 2.0, 5.0, 10.0] {
        let at = scene.at_distance(d);
        for k in 0..3 {
            let obs = blind_observations(&at, &sets, k, 1.0);
            let r = blind_detect(&obs, &basis, Fusion::Vote).unwrap();
            assert_eq!(r.k_hat, k, "D = {d}");
            assert_eq!(r.per_set_decisions.len(), sets.len());
        }
    }
}

#[test]
fn blind_detector_with_thermal_noise_at_short_range() {
    let (scene, sets, basis) = blind_setup(&[2.0]);
    let at = scene.at_distance(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = NoiseModel { n0: THERMAL, seed: 3 };
    let mut errors = 0;
    for trial in 0..60 {
        let k = trial % 3;
        let obs: Vec<CVector> = blind_observations(&at, &sets, k, 1e-2)
            .iter()
            .map(|o| add_awgn(o, &model, &mut rng).unwrap())
            .collect();
        if blind_detect(&obs, &basis, Fusion::Vote).unwrap().k_hat != k {
            errors += 1;
        }
    }
    assert_eq!(errors, 0);
}

#[test]
fn single_sample_prior_and_single_set() {
    let f0 = 10e6;
    let scene = MacScene::two_user(3.0, f0).unwrap();
    let c = enumerate_constellation(&scene.patterns, scene.users(), Scheme::Mod3, true).unwrap();
    let sets = FrequencyPlan {
        mode: PlanMode::SharedSet,
        band: (0.92, 1.08),
        n_omega: 24,
        n_sets: 1,
        seed: 2,
    }
    .frequency_sets(2.0 * PI * f0)
    .unwrap();
    let options = BasisOptions {
        approximation: Approximation::Exact,
        rank_tol: 1e-7,
        merge_tol: 0.0,
    };
    let basis = precompute_for_scene(&scene, &c, &[GeometrySample::facing(3.0)], &sets, &options).unwrap();
    for (k, symbol) in c.iter().enumerate() {
        // with one prior sample the stored matrix is the exact one
        let net = scene.network(symbol).unwrap();
        let u = upsilon_matrix(&net, &sets[0], Approximation::Exact).unwrap();
        assert!((&basis.sets[0][k].upsilon_bar - &u).norm() <= 1e-14 * u.norm());
        let obs = blind_observations(&scene, &sets, k, 1.0);
        assert_eq!(blind_detect(&obs, &basis, Fusion::SumScore).unwrap().k_hat, k);
    }
    let back = PrecomputedBasis::from_json(&basis.to_json().unwrap()).unwrap();
    assert_eq!(back, basis);
}
