//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the library's linear
//! algebra or samplers.

#![allow(dead_code)]

use std::path::PathBuf;

use harvest_core::markov_noise::JumpChainSpec;
use harvest_core::model::ModelParams;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

/// Path of a shipped configuration file.
pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// Symmetric two-state chain with rate `q`, `r1 = (rbar, -rbar)`, `r2 = 0`.
pub fn two_state(q: f64, rbar: f64) -> JumpChainSpec {
    JumpChainSpec::new(
        vec!["up".into(), "down".into()],
        vec![q, q],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![rbar, -rbar],
        vec![0.0, 0.0],
    )
    .unwrap()
}

/// Random chain with strictly positive off-diagonal kernel, hence
/// irreducible, and uncentered noise maps.
pub fn random_chain(n: usize, rng: &mut impl Rng) -> JumpChainSpec {
    let rates = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let kernel = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| if i == j { 0.0 } else { rng.random_range(0.05..1.0) })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();
    let r1 = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r2 = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    JumpChainSpec::new((0..n).map(|i| format!("s{i}")).collect(), rates, kernel, r1, r2).unwrap()
}

/// Dense generator assembled from rates and kernel.
pub fn generator(spec: &JumpChainSpec) -> DMatrix<f64> {
    let n = spec.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -spec.rates()[i]
        } else {
            spec.rates()[i] * spec.kernel()[i][j]
        }
    })
}

/// Stationary law from `pi (Q + E) = 1`, `E` the all-ones matrix.
pub fn stationary(spec: &JumpChainSpec) -> DVector<f64> {
    let n = spec.len();
    let m = (generator(spec) + DMatrix::from_element(n, n, 1.0)).transpose();
    m.lu().solve(&DVector::from_element(n, 1.0)).unwrap()
}

/// Deviation matrix `D = (Pi - Q)^{-1} - Pi` with `Pi = 1 pi`.
pub fn deviation_matrix(spec: &JumpChainSpec) -> DMatrix<f64> {
    let n = spec.len();
    let pi = stationary(spec);
    let big_pi = DMatrix::from_fn(n, n, |_, j| pi[j]);
    (&big_pi - generator(spec)).try_inverse().unwrap() - big_pi
}

/// `a_ij = sum_k pi_k (r_i(k) (D r_j)(k) + r_j(k) (D r_i)(k))` for centered maps.
pub fn covariance_oracle(spec: &JumpChainSpec) -> [[f64; 2]; 2] {
    let pi = stationary(spec);
    let d = deviation_matrix(spec);
    let r = [
        DVector::from_column_slice(spec.r1()),
        DVector::from_column_slice(spec.r2()),
    ];
    let dr = [&d * &r[0], &d * &r[1]];
    let mut a = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = (0..spec.len())
                .map(|k| pi[k] * (r[i][k] * dr[j][k] + r[j][k] * dr[i][k]))
                .sum();
        }
    }
    a
}

/// Subtracts the stationary mean from both noise maps.
pub fn centered(spec: &JumpChainSpec) -> JumpChainSpec {
    let pi = stationary(spec);
    let shift = |r: &[f64]| {
        let m: f64 = r.iter().zip(pi.iter()).map(|(a, p)| a * p).sum();
        r.iter().map(|v| v - m).collect::<Vec<_>>()
    };
    spec.with_noise(shift(spec.r1()), shift(spec.r2())).unwrap()
}

/// Monte Carlo estimate of the integrated autocovariance `2 int_0^inf
/// E[r(xi_0) r(xi_t)] dt` of the symmetric two-state chain by batch means:
/// `Var(int_batch r dt) / L` over consecutive batches of length `L`.
pub fn mc_integrated_autocovariance(q: f64, rbar: f64, t_total: f64, batch: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hold = Exp::new(q).unwrap();
    let mut sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let n_batches = (t_total / batch) as usize;
    let mut sums = vec![0.0; n_batches];
    let mut t = 0.0;
    let mut next = hold.sample(&mut rng);
    for (b, sum) in sums.iter_mut().enumerate() {
        let end = (b + 1) as f64 * batch;
        while t < end {
            let seg_end = next.min(end);
            *sum += sign * rbar * (seg_end - t);
            t = seg_end;
            if t == next {
                sign = -sign;
                next += hold.sample(&mut rng);
            }
        }
    }
    let mean = sums.iter().sum::<f64>() / n_batches as f64;
    sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64 / batch
}

/// Interior rest point of the noise-free system by Cramer's rule on
/// `b1 x + c1 y = a1`, `-c2 x + b2 y = s2`.
pub fn equilibrium(p: &ModelParams) -> (f64, f64) {
    let det = p.b1 * p.b2 + p.c1 * p.c2;
    ((p.a1 * p.b2 - p.c1 * p.s2) / det, (p.b1 * p.s2 + p.c2 * p.a1) / det)
}
