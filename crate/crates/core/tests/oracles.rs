mod common;

use approx::assert_relative_eq;
use harvest_core::diffusion_sim::{simulate_diffusion, DiffusionConfig};
use harvest_core::hjb::{build_mdp, constant_policy_reward, Grid};
use harvest_core::markov_noise::{diffusion_matrix, solve_poisson, stationary_distribution};
use harvest_core::model::{DiffusionCoeffs, Effectiveness, HarvestSpec, ModelParams, State2D, Yield};
use harvest_core::sim::ConstantEffort;
use harvest_core::wideband_sim::{simulate_wideband, WidebandConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hs() -> HarvestSpec {
    HarvestSpec::new(Effectiveness::Michaelis { kappa: 0.5 }, Yield::Linear).unwrap()
}

#[test]
fn two_state_covariance_matches_closed_form() {
    for (q, rbar) in [(1.0, 1.0), (2.0, 0.8), (0.3, 1.7)] {
        let a = diffusion_matrix(&common::two_state(q, rbar)).unwrap().a;
        assert_relative_eq!(a[0][0], rbar * rbar / q, max_relative = 1e-9);
        assert!(a[0][1].abs() < 1e-12 && a[1][1].abs() < 1e-12);
    }
}

#[test]
fn two_state_covariance_matches_monte_carlo() {
    let (q, rbar) = (2.0, 0.8);
    let mc = common::mc_integrated_autocovariance(q, rbar, 2e5, 25.0, 11);
    assert_relative_eq!(mc, rbar * rbar / q, max_relative = 0.05);
}

#[test]
fn covariance_matches_deviation_matrix_on_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..12 {
        let spec = common::centered(&common::random_chain(n, &mut rng));
        let got = diffusion_matrix(&spec).unwrap().a;
        let want = common::covariance_oracle(&spec);
        for i in 0..2 {
            for j in 0..2 {
                assert!((got[i][j] - want[i][j]).abs() < 1e-10, "n={n}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn stationary_law_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 2..15 {
        let spec = common::random_chain(n, &mut rng);
        let got = stationary_distribution(&spec);
        let want = common::stationary(&spec);
        for k in 0..n {
            assert!((got[k] - want[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn poisson_solution_is_deviation_matrix_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = common::centered(&common::random_chain(7, &mut rng));
    let psi = solve_poisson(&spec, spec.r1()).unwrap();
    let d = common::deviation_matrix(&spec);
    let want = d * nalgebra::DVector::from_column_slice(spec.r1());
    for k in 0..7 {
        assert!((psi[k] - want[k]).abs() < 1e-10);
    }
}

#[test]
fn both_simulators_hold_the_noise_free_equilibrium() {
    let p = ModelParams::new(2.0, 1.0, 1.0, -1.0, 1.0, 1.0, 2.0).unwrap();
    let (x, y) = common::equilibrium(&p);
    let start = State2D { x, y };
    let dcfg = DiffusionConfig {
        dt: 0.005,
        t_end: 100.0,
        burn_in: 10.0,
        seed: 1,
        initial: start,
        record_dt: 0.5,
    };
    let rec = simulate_diffusion(
        &p,
        &hs(),
        &DiffusionCoeffs::deterministic(&p),
        &ConstantEffort(0.0),
        &dcfg,
    )
    .unwrap();
    let chain = common::two_state(1.0, 0.0);
    let wcfg = WidebandConfig {
        epsilon: 0.2,
        t_end: 100.0,
        burn_in: 10.0,
        max_substep: 0.01,
        seed: 1,
        initial: start,
        record_dt: 0.5,
        max_substep_budget: 5e8,
    };
    let wrec = simulate_wideband(&p, &hs(), &chain, &ConstantEffort(0.0), &wcfg).unwrap();
    for s in rec.states.iter().chain(&wrec.states) {
        assert!((s.x - x).abs() < 1e-6 && (s.y - y).abs() < 1e-6);
    }
}

#[test]
fn zero_effort_chain_reward_is_zero_and_full_effort_positive() {
    let p = ModelParams::new(2.0, 1.0, 1.0, -1.0, 1.0, 1.0, 2.0).unwrap();
    let grid = Grid::new(0.05, 8.0, 0.01, 5.0, 24, 24).unwrap();
    let coeffs = DiffusionCoeffs::new(&p, &diffusion_matrix(&common::two_state(2.0, 0.5)).unwrap());
    let mdp = build_mdp(&p, &hs(), &coeffs, &grid).unwrap();
    assert_eq!(constant_policy_reward(&mdp, 0.0).unwrap(), 0.0);
    assert!(constant_policy_reward(&mdp, 2.0).unwrap() > 0.0);
}
