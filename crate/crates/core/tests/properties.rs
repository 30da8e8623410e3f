use std::f64::consts::PI;

use mitopo_core::coil::{mutual_inductance_with, CoilPose, CoilSpec, ElectricalParams, MutualModel, Vec3};
use mitopo_core::demodulation::{q_zero_residual, upsilon_eigenform, upsilon_perturbation};
use mitopo_core::linalg::{self, pseudo_inverse, symmetric_eigen, CMatrix};
use mitopo_core::modulation::{
    enumerate_constellation, normalize_symbol_power, sample_frequency_sets, Equalize, FrequencyPlan, PlanMode,
    PowerBudget, Scheme, SymbolPower, TopologySymbol,
};
use mitopo_core::network::{relative_max_error, CoupledNetwork};
use mitopo_core::scene::random_layout;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutual_inductance_is_symmetric(
        ax in -0.2..0.2f64, ay in -0.2..0.2f64, dz in 0.05..1.0f64,
        na in unit(), nb in unit(),
    ) {
        let spec = CoilSpec::reference(1e6);
        let a = CoilPose::new(Vec3::new(ax, ay, 0.0), na).unwrap();
        let b = CoilPose::new(Vec3::new(0.0, 0.0, dz), nb).unwrap();
        let model = MutualModel::with_nodes(32);
        let m1 = mutual_inductance_with(&a, &b, &spec, &model).unwrap();
        let m2 = mutual_inductance_with(&b, &a, &spec, &model).unwrap();
        prop_assert_eq!(m1.to_bits(), m2.to_bits());
    }

    #[test]
    fn eigen_decomposition_reconstructs(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rand::Rng::random_range(&mut rng, -1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        let (lambda, q) = symmetric_eigen(&m).unwrap();
        let orth = linalg::max_abs_real(&(q.transpose() * &q - DMatrix::identity(n, n)));
        prop_assert!(orth < 1e-13);
        let rec = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
        prop_assert!(linalg::max_abs_real(&(rec - &m)) < 1e-13);
        for i in 1..n {
            prop_assert!(lambda[i - 1] >= lambda[i]);
        }
    }

    #[test]
    fn pseudo_inverse_identities(seed in any::<u64>(), rows in 1usize..10, cols in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rand::Rng::random_range(&mut rng, -1.0..1.0), rand::Rng::random_range(&mut rng, -1.0..1.0))
        });
        let (p, rank) = pseudo_inverse(&a, 1e-12);
        prop_assert!(rank <= rows.min(cols));
        let s = linalg::max_abs(&a).max(1.0);
        prop_assert!(linalg::max_abs(&(&a * &p * &a - &a)) < 1e-9 * s);
        prop_assert!(linalg::max_abs(&(&p * &a * &p - &p)) < 1e-9 * linalg::max_abs(&p).max(1.0));
        let ap = &a * &p;
        prop_assert!(linalg::max_abs(&(&ap - ap.adjoint())) < 1e-9);
        let pa = &p * &a;
        prop_assert!(linalg::max_abs(&(&pa - pa.adjoint())) < 1e-9);
    }

    #[test]
    fn sampled_frequency_sets_are_valid(
        seed in any::<u64>(), n_omega in 1usize..40, n_sets in 1usize..6,
        lo in 0.8..0.99f64, width in 0.01..0.3f64,
    ) {
        let plan = FrequencyPlan { mode: PlanMode::SharedSet, band: (lo, lo + width), n_omega, n_sets, seed };
        let w0 = 2.0 * PI * 1e6;
        let sets = sample_frequency_sets(&plan, w0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(sets.len(), n_sets);
        for s in &sets {
            prop_assert_eq!(s.len(), n_omega);
            for w in s {
                prop_assert!(*w >= lo * w0 && *w <= (lo + width) * w0);
            }
            for pair in s.windows(2) {
                prop_assert!(pair[0] < pair[1]);
            }
        }
        prop_assert_eq!(plan.frequency_sets(w0).unwrap(), plan.frequency_sets(w0).unwrap());
    }

    #[test]
    fn constellation_sizes(n in 2usize..6, k in 2usize..5, merge in any::<bool>()) {
        let patterns: Vec<_> = (0..n).map(|i| TopologySymbol::new(vec![i + 1], 3).unwrap()).collect();
        let tdma = enumerate_constellation(&patterns, k, Scheme::Mod4, merge).unwrap();
        prop_assert_eq!(tdma.len(), n);
        let conc = enumerate_constellation(&patterns, k, Scheme::Mod3, merge).unwrap();
        let expected = if merge { binomial(n + k - 2, k - 1) } else { n.pow((k - 1) as u32) };
        prop_assert_eq!(conc.len(), expected);
        for (i, s) in conc.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert_eq!(s.patterns.len(), k - 1);
        }
    }

    #[test]
    fn power_normalization_contracts(
        tx in prop::collection::vec(1e-6..1e3f64, 1..8),
        frac in prop::collection::vec(0.01..0.99f64, 8),
        total in 1e-6..1.0f64,
    ) {
        let powers: Vec<SymbolPower> = tx.iter().zip(&frac).map(|(&t, &f)| SymbolPower { transmit: t, received: t * f }).collect();
        let n = powers.len() as f64;
        let etas = normalize_symbol_power(&powers, &PowerBudget::new(total, Equalize::Transmit)).unwrap();
        for (p, e) in powers.iter().zip(&etas) {
            prop_assert!((p.scaled(*e).transmit * n / total - 1.0).abs() < 1e-12);
        }
        let etas = normalize_symbol_power(&powers, &PowerBudget::new(total, Equalize::Received)).unwrap();
        let scaled: Vec<_> = powers.iter().zip(&etas).map(|(p, e)| p.scaled(*e)).collect();
        for s in &scaled {
            prop_assert!((s.received / scaled[0].received - 1.0).abs() < 1e-12);
        }
        let mean_tx = scaled.iter().map(|s| s.transmit).sum::<f64>() / n;
        prop_assert!((mean_tx * n / total - 1.0).abs() < 1e-12);
        // idempotent
        let again = normalize_symbol_power(&scaled, &PowerBudget::new(total, Equalize::Received)).unwrap();
        for e in again {
            prop_assert!((e - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_networks_keep_route_and_sum_invariants(seed in any::<u64>(), scale in 0.9..1.1f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = random_layout(&mut rng, 10, 0.3, 0.03).unwrap();
        let spec = CoilSpec::reference(1e6);
        let p = ElectricalParams::table_defaults(1e6).unwrap();
        let net = CoupledNetwork::new(layout, &spec, p, p.resistance, &MutualModel::with_nodes(48)).unwrap();
        prop_assert!(q_zero_residual(&net) < 1e-12);
        let w = 2.0 * PI * 1e6 * scale;
        prop_assert!(relative_max_error(&net.gamma_eigen(w).unwrap().gamma, &net.gamma(w).unwrap().gamma) < 1e-8);
        if net.loaded() == 1 {
            let c = net.coefficients(w).unwrap();
            let a = upsilon_eigenform(&net.basis, &c, 1).unwrap();
            let b = upsilon_perturbation(&net.basis, &c).unwrap();
            prop_assert!(relative_max_error(&b, &a) < 1e-9);
        }
    }
}
