mod common;

use harvest_core::diffusion_sim::{run_diffusion_batch, DiffusionConfig};
use harvest_core::hjb::{lipschitz_regularize, pointwise_max, Grid, PolicyTable};
use harvest_core::lyapunov::{v2, LyapunovParams};
use harvest_core::markov_noise::{center_noise, diffusion_matrix, is_centered, solve_poisson, stationary_distribution};
use harvest_core::model::{
    persistence_check, DiffusionCoeffs, Effectiveness, HarvestSpec, ModelParams, Regime, State2D, Yield,
};
use harvest_core::rng::stream_key;
use harvest_core::sim::{ConstantEffort, PathOptions};
use harvest_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain_from_seed(n: usize, seed: u64) -> harvest_core::markov_noise::JumpChainSpec {
    common::random_chain(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_law_is_a_probability_vector_annihilating_q(n in 2usize..20, seed: u64) {
        let spec = chain_from_seed(n, seed);
        let pi = stationary_distribution(&spec);
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pi.iter().all(|&p| p > 0.0));
        let q = common::generator(&spec);
        for j in 0..n {
            let s: f64 = (0..n).map(|i| pi[i] * q[(i, j)]).sum();
            prop_assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_solution_satisfies_equation_and_gauge(n in 2usize..20, seed: u64) {
        let spec = chain_from_seed(n, seed);
        let pi = stationary_distribution(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean: f64 = raw.iter().zip(&pi).map(|(a, p)| a * p).sum();
        let phi: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let psi = solve_poisson(&spec, &phi).unwrap();
        let qpsi = spec.apply_generator(&psi);
        for k in 0..n {
            prop_assert!((qpsi[k] + phi[k]).abs() < 1e-12);
        }
        prop_assert!(psi.iter().zip(&pi).map(|(a, p)| a * p).sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn poisson_refuses_uncentered_rhs(n in 2usize..10, seed: u64) {
        let spec = chain_from_seed(n, seed);
        let phi = vec![1.0; n];
        prop_assert!(
            matches!(solve_poisson(&spec, &phi), Err(Error::UncenteredRhs { .. })),
            "expected the uncentered right-hand side to be refused"
        );
    }

    #[test]
    fn covariance_is_symmetric_psd_with_matching_root(n in 2usize..12, seed: u64) {
        let spec = center_noise(&chain_from_seed(n, seed));
        prop_assert!(is_centered(&spec));
        let c = diffusion_matrix(&spec).unwrap();
        prop_assert_eq!(c.a[0][1], c.a[1][0]);
        prop_assert!(c.a[0][0] >= -1e-12 && c.a[1][1] >= -1e-12);
        prop_assert!(c.a[0][0] * c.a[1][1] - c.a[0][1] * c.a[0][1] >= -1e-10);
        let s = c.sigma;
        for i in 0..2 {
            for j in 0..2 {
                let sq = s[i][0] * s[0][j] + s[i][1] * s[1][j];
                prop_assert!((sq - c.a[i][j]).abs() < 1e-9 * (1.0 + c.a[i][j].abs()));
            }
        }
    }

    #[test]
    fn diffusion_paths_stay_in_the_open_quadrant(
        a1 in 0.5f64..3.0,
        s2 in -2.0f64..0.5,
        u in 0.0f64..2.0,
        x0 in 0.01f64..5.0,
        y0 in 0.01f64..5.0,
        seed: u64,
    ) {
        let p = ModelParams::new(a1, 1.0, 1.0, s2, 1.0, 1.0, 2.0).unwrap();
        let hs = HarvestSpec::new(Effectiveness::Michaelis { kappa: 0.5 }, Yield::Linear).unwrap();
        let spec = center_noise(&common::two_state(1.0, 1.0));
        let coeffs = DiffusionCoeffs::new(&p, &diffusion_matrix(&spec).unwrap());
        let cfg = DiffusionConfig {
            dt: 0.001,
            t_end: 20.0,
            burn_in: 1.0,
            seed,
            initial: State2D { x: x0, y: y0 },
            record_dt: 1.0,
        };
        let opts = PathOptions { record_dt: Some(0.5), tight_box: None };
        let b = run_diffusion_batch(&p, &hs, &coeffs, &ConstantEffort(u), &cfg, 2, &opts).unwrap();
        for rec in b.records() {
            prop_assert!(rec.states.iter().all(|s| s.x > 0.0 && s.y > 0.0 && s.x.is_finite() && s.y.is_finite()));
            prop_assert!(rec.running_average.iter().all(|r| *r >= 0.0 && r.is_finite()));
        }
    }

    #[test]
    fn pointwise_max_beats_every_sampled_effort(y in 0.001f64..10.0, dvdy in -3.0f64..3.0, c in 0.1f64..5.0) {
        let m = 2.0;
        for hs in [
            HarvestSpec::new(Effectiveness::Michaelis { kappa: 0.5 }, Yield::Linear).unwrap(),
            HarvestSpec::new(Effectiveness::Ramp { kappa: 0.3 }, Yield::Saturating { c }).unwrap(),
        ] {
            let gain = y * hs.h(y);
            let obj = |u: f64| hs.phi(gain * u) - dvdy * gain * u;
            let u_star = pointwise_max(&hs, m, y, dvdy);
            prop_assert!((0.0..=m).contains(&u_star));
            for k in 0..=100 {
                let u = m * k as f64 / 100.0;
                prop_assert!(obj(u_star) >= obj(u) - 1e-9);
            }
        }
    }

    #[test]
    fn regularized_policy_stays_in_range(seed: u64, radius in 0usize..4) {
        let grid = Grid::new(0.1, 5.0, 0.1, 5.0, 16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let efforts = (0..grid.len()).map(|_| if rng.random_bool(0.5) { 2.0 } else { 0.0 }).collect();
        let raw = PolicyTable::new(grid, 2.0, efforts, 0).unwrap();
        let reg = lipschitz_regularize(&raw, radius);
        prop_assert!(reg.efforts().iter().all(|&u| (0.0..=2.0).contains(&u)));
        let jump = |p: &PolicyTable| {
            (0..16).flat_map(|j| (0..15).map(move |i| (i, j)))
                .map(|(i, j)| (p.at(i + 1, j) - p.at(i, j)).abs())
                .fold(0.0, f64::max)
        };
        prop_assert!(jump(&reg) <= jump(&raw) + 1e-12);
        if radius > 0 {
            prop_assert!(jump(&reg) <= 2.0 / radius as f64 + 1e-12);
        }
    }

    #[test]
    fn lyapunov_function_is_positive(x in 1e-6f64..1e6, y in 1e-6f64..1e6) {
        let p = ModelParams::new(2.0, 1.0, 1.0, -1.0, 1.0, 1.0, 2.0).unwrap();
        let lp = LyapunovParams { p0: 0.1, p1: 0.2, p2: 0.2, lambda: 0.02, h: 8.0 };
        prop_assert!(lp.v(&p, x, y) > 0.0);
        prop_assert!(v2(&p, x, y) > 0.0);
    }

    #[test]
    fn persistence_regime_follows_the_margin_sign(a1 in 0.1f64..3.0, s2 in -3.0f64..1.0, c2 in 0.1f64..2.0) {
        let p = ModelParams::new(a1, 1.0, 1.0, s2, 1.0, c2, 1.0).unwrap();
        let r = persistence_check(&p);
        prop_assert!((r.margin - (s2 + c2 * a1)).abs() < 1e-12);
        prop_assert_eq!(r.regime == Regime::Persistent, r.margin > 0.0);
    }

    #[test]
    fn stream_keys_differ_across_stages_and_paths(seed: u64, path in 0u64..1_000_000) {
        let k = stream_key(seed, 2, path);
        prop_assert_ne!(k, stream_key(seed, 3, path));
        prop_assert_ne!(k, stream_key(seed, 2, path + 1));
        prop_assert_eq!(k, stream_key(seed, 2, path));
    }
}
