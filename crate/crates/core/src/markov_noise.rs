//! Finite-state pure-jump noise process.
//!
//! The noise `xi(t)` is a continuous-time Markov chain on a finite label set
//! with generator `Q = diag(q) (Lambda - I)`. This module provides the
//! stationary law, the centering of the noise maps `r1`, `r2`, the Poisson
//! equation `Q psi = -phi` and the averaged covariance matrix `A` of the
//! limit diffusion together with its symmetric square root.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const ROW_SUM_TOL: f64 = 1e-12;
const CENTER_TOL: f64 = 1e-10;
const SOLVE_TOL: f64 = 1e-12;
const EIG_CLIP: f64 = 1e-10;

/// Generator data of the noise chain plus the two noise maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain", into = "RawChain")]
pub struct JumpChainSpec {
    states: Vec<String>,
    rates: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawChain {
    states: Vec<String>,
    rates: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    r1: Vec<f64>,
    r2: Vec<f64>,
}

impl TryFrom<RawChain> for JumpChainSpec {
    type Error = Error;

    fn try_from(raw: RawChain) -> Result<Self> {
        JumpChainSpec::new(raw.states, raw.rates, raw.kernel, raw.r1, raw.r2)
    }
}

impl From<JumpChainSpec> for RawChain {
    fn from(spec: JumpChainSpec) -> Self {
        RawChain {
            states: spec.states,
            rates: spec.rates,
            kernel: spec.kernel,
            r1: spec.r1,
            r2: spec.r2,
        }
    }
}

impl JumpChainSpec {
    /// Validates and builds a chain. Fails on bad shapes, non-positive rates,
    /// kernels that are not row-stochastic with zero diagonal, and reducible
    /// chains.
    pub fn new(
        states: Vec<String>,
        rates: Vec<f64>,
        kernel: Vec<Vec<f64>>,
        r1: Vec<f64>,
        r2: Vec<f64>,
    ) -> Result<Self> {
        let n = states.len();
        if n < 2 {
            return Err(Error::InvalidChain(format!("need at least 2 states, got {n}")));
        }
        for (name, len) in [
            ("rates", rates.len()),
            ("kernel", kernel.len()),
            ("r1", r1.len()),
            ("r2", r2.len()),
        ] {
            if len != n {
                return Err(Error::InvalidChain(format!("{name} has length {len}, expected {n}")));
            }
        }
        for (w, &q) in rates.iter().enumerate() {
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::InvalidChain(format!(
                    "rate of state {} must be positive, got {q}",
                    states[w]
                )));
            }
        }
        for (w, row) in kernel.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidChain(format!(
                    "kernel row {w} has length {}, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidChain(format!(
                    "kernel row {w} has a negative or non-finite entry"
                )));
            }
            if row[w] != 0.0 {
                return Err(Error::InvalidChain(format!(
                    "kernel diagonal entry {w} must be 0, got {}",
                    row[w]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidChain(format!("kernel row {w} sums to {sum}, expected 1")));
            }
        }
        if r1.iter().chain(r2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidChain("noise maps must be finite".into()));
        }
        check_irreducible(&states, &kernel)?;

        let cumulative = kernel
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            states,
            rates,
            kernel,
            r1,
            r2,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn r1(&self) -> &[f64] {
        &self.r1
    }

    pub fn r2(&self) -> &[f64] {
        &self.r2
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }

    /// Index of a state label.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// Replaces the noise maps, keeping the generator.
    pub fn with_noise(&self, r1: Vec<f64>, r2: Vec<f64>) -> Result<Self> {
        let n = self.len();
        if r1.len() != n || r2.len() != n {
            return Err(Error::InvalidChain("noise map length mismatch".into()));
        }
        Ok(Self { r1, r2, ..self.clone() })
    }

    /// Dense generator matrix `Q`.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -self.rates[i]
            } else {
                self.rates[i] * self.kernel[i][j]
            }
        })
    }

    /// Applies `Q` to a function on the states.
    pub fn apply_generator(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|w| {
                let jump: f64 = self.kernel[w].iter().zip(f).map(|(p, v)| p * v).sum();
                self.rates[w] * (jump - f[w])
            })
            .collect()
    }

    /// Exponential holding time in state `w` when all rates are multiplied by
    /// `rate_scale`.
    pub fn holding_time<R: Rng + ?Sized>(&self, w: usize, rate_scale: f64, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        e / (self.rates[w] * rate_scale)
    }

    /// Draws the post-jump state from `Lambda(w, .)`.
    pub fn next_state<R: Rng + ?Sized>(&self, w: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.cumulative[w];
        match row.iter().position(|&c| u < c) {
            Some(j) => j,
            // u landed in the rounding gap above the last partial sum
            None => row
                .iter()
                .zip(&self.kernel[w])
                .rposition(|(_, &p)| p > 0.0)
                .unwrap_or(w),
        }
    }

    /// Draws a state from the probability vector `dist`.
    pub fn draw_from<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                return w;
            }
        }
        dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

fn check_irreducible(states: &[String], kernel: &[Vec<f64>]) -> Result<()> {
    let n = states.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|start| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for (j, &p) in kernel[i].iter().enumerate() {
                    if p > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        })
        .collect();
    if reach.iter().all(|r| r.iter().all(|&b| b)) {
        return Ok(());
    }
    // Report a closed communicating class: one whose reachable set equals
    // its own class.
    for i in 0..n {
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        let closed = (0..n).all(|j| !reach[i][j] || class.contains(&j));
        if closed && class.len() < n {
            let names = |idx: &mut dyn Iterator<Item = usize>| idx.map(|k| states[k].clone()).collect();
            return Err(Error::Reducible {
                class: names(&mut class.iter().copied()),
                outside: names(&mut (0..n).filter(|k| !class.contains(k))),
            });
        }
    }
    unreachable!("a finite reducible chain always has a proper closed class")
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `m x = b` with LU and one round of iterative refinement.
fn refined_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = m.clone().lu();
    let mut x = lu.solve(b)?;
    let r = b - m * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Some(x)
}

/// Stationary law `pi` of the chain: `pi Q = 0`, `sum pi = 1`.
pub fn stationary_distribution(spec: &JumpChainSpec) -> Vec<f64> {
    let n = spec.len();
    let q = spec.generator();
    let mut m = q.transpose();
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = refined_solve(&m, &rhs).expect("irreducible generator has a unique stationary law");
    let mut pi: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    pi
}

/// Returns the chain with `r_i` replaced by `r_i - pi . r_i`.
pub fn center_noise(spec: &JumpChainSpec) -> JumpChainSpec {
    let pi = stationary_distribution(spec);
    let center = |r: &[f64]| {
        let mean = dot(&pi, r);
        if mean == 0.0 {
            r.to_vec()
        } else {
            r.iter().map(|v| v - mean).collect()
        }
    };
    spec.with_noise(center(&spec.r1), center(&spec.r2))
        .expect("centering keeps lengths")
}

/// True when both noise maps have zero stationary mean.
pub fn is_centered(spec: &JumpChainSpec) -> bool {
    let pi = stationary_distribution(spec);
    [&spec.r1, &spec.r2]
        .iter()
        .all(|r| dot(&pi, r).abs() <= CENTER_TOL * inf_norm(r).max(1.0))
}

/// Solves the Poisson equation `Q psi = -phi` for a centered `phi`,
/// normalised by `pi . psi = 0`.
///
/// With `Pi = 1 pi^T`, the matrix `Pi - Q` is invertible for an irreducible
/// chain and `psi = (Pi - Q)^{-1} phi` is the normalised solution.
pub fn solve_poisson(spec: &JumpChainSpec, phi: &[f64]) -> Result<Vec<f64>> {
    let n = spec.len();
    if phi.len() != n {
        return Err(Error::InvalidChain(format!(
            "right-hand side has length {}, expected {n}",
            phi.len()
        )));
    }
    let pi = stationary_distribution(spec);
    let mean = dot(&pi, phi);
    if mean.abs() > CENTER_TOL * inf_norm(phi).max(1.0) {
        return Err(Error::UncenteredRhs { mean });
    }
    let q = spec.generator();
    let m = DMatrix::from_fn(n, n, |i, j| pi[j] - q[(i, j)]);
    let rhs = DVector::from_column_slice(phi);
    let psi = refined_solve(&m, &rhs).ok_or(Error::SingularSolve {
        residual: f64::INFINITY,
        tolerance: SOLVE_TOL,
    })?;
    let mut psi: Vec<f64> = psi.iter().copied().collect();
    let shift = dot(&pi, &psi);
    psi.iter_mut().for_each(|v| *v -= shift);

    let q_psi = spec.apply_generator(&psi);
    let residual = q_psi.iter().zip(phi).fold(0.0_f64, |m, (a, b)| m.max((a + b).abs()));
    let scale = (q.abs().row_sum().max() * inf_norm(&psi)).max(1.0);
    let tolerance = SOLVE_TOL * scale;
    if !(residual <= tolerance) {
        return Err(Error::SingularSolve { residual, tolerance });
    }
    Ok(psi)
}

/// Averaged covariance `A` of the limit diffusion and its symmetric square
/// root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCovariance {
    #[serde(rename = "A")]
    pub a: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
}

impl NoiseCovariance {
    pub fn zero() -> Self {
        Self {
            a: [[0.0; 2]; 2],
            sigma: [[0.0; 2]; 2],
        }
    }

    /// Builds the pair from a symmetric PSD matrix, taking the symmetric
    /// square root. Eigenvalues in `[-1e-10, 0)` are clipped to zero.
    pub fn from_matrix(a: [[f64; 2]; 2]) -> Result<Self> {
        let sym = 0.5 * (a[0][1] + a[1][0]);
        let a = [[a[0][0], sym], [sym, a[1][1]]];
        let m = Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
        let eig = SymmetricEigen::new(m);
        let mut roots = [0.0; 2];
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -EIG_CLIP {
                return Err(Error::IndefiniteCovariance { eigenvalue: lam });
            }
            roots[k] = lam.max(0.0).sqrt();
        }
        let v = eig.eigenvectors;
        let s = v * Matrix2::from_diagonal(&nalgebra::Vector2::new(roots[0], roots[1])) * v.transpose();
        let off = 0.5 * (s[(0, 1)] + s[(1, 0)]);
        Ok(Self {
            a,
            sigma: [[s[(0, 0)], off], [off, s[(1, 1)]]],
        })
    }
}

/// Averaged covariance of the centered noise maps:
/// `a_ij = pi.(r_i psi_j) + pi.(r_j psi_i)` with `Q psi_j = -r_j`.
pub fn diffusion_matrix(spec: &JumpChainSpec) -> Result<NoiseCovariance> {
    let pi = stationary_distribution(spec);
    let r = [spec.r1.as_slice(), spec.r2.as_slice()];
    let psi = [solve_poisson(spec, r[0])?, solve_poisson(spec, r[1])?];
    let weighted = |f: &[f64], g: &[f64]| -> f64 { pi.iter().zip(f).zip(g).map(|((p, a), b)| p * a * b).sum() };
    let mut a = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = weighted(r[i], &psi[j]) + weighted(r[j], &psi[i]);
        }
    }
    NoiseCovariance::from_matrix(a)
}

/// Exact simulation of the chain on `[0, t_end]`: the returned sequence
/// starts with `(0, xi(0))`, `xi(0) ~ pi`, followed by every jump.
pub fn sample_jump_path(spec: &JumpChainSpec, t_end: f64, seed: u64) -> Vec<(f64, usize)> {
    let mut rng = rng::stream_rng(seed, rng::stage::JUMP_PATH, 0);
    let pi = stationary_distribution(spec);
    let mut w = JumpChainSpec::draw_from(&pi, &mut rng);
    let mut t = 0.0;
    let mut path = vec![(0.0, w)];
    loop {
        t += spec.holding_time(w, 1.0, &mut rng);
        if t > t_end {
            break;
        }
        w = spec.next_state(w, &mut rng);
        path.push((t, w));
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn swap_chain(q: f64, r1: Vec<f64>, r2: Vec<f64>) -> JumpChainSpec {
        JumpChainSpec::new(labels(2), vec![q, q], vec![vec![0.0, 1.0], vec![1.0, 0.0]], r1, r2).unwrap()
    }

    fn cyclic3() -> JumpChainSpec {
        JumpChainSpec::new(
            labels(3),
            vec![1.0, 2.0, 4.0],
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
            vec![0.3, -0.1, 0.5],
            vec![-0.2, 0.4, 0.1],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_kernels() {
        let bad_sum = JumpChainSpec::new(
            labels(2),
            vec![1.0, 1.0],
            vec![vec![0.0, 0.9], vec![1.0, 0.0]],
            vec![0.0; 2],
            vec![0.0; 2],
        );
        assert!(matches!(bad_sum, Err(Error::InvalidChain(_))));
        let bad_diag = JumpChainSpec::new(
            labels(2),
            vec![1.0, 1.0],
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            vec![0.0; 2],
            vec![0.0; 2],
        );
        assert!(matches!(bad_diag, Err(Error::InvalidChain(_))));
        let bad_rate = JumpChainSpec::new(
            labels(2),
            vec![0.0, 1.0],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.0; 2],
            vec![0.0; 2],
        );
        assert!(matches!(bad_rate, Err(Error::InvalidChain(_))));
    }

    #[test]
    fn reducible_chain_names_closed_class() {
        // s2 <-> s3 is closed; s0, s1 drain into it.
        let err = JumpChainSpec::new(
            labels(4),
            vec![1.0; 4],
            vec![
                vec![0.0, 0.5, 0.5, 0.0],
                vec![0.5, 0.0, 0.0, 0.5],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![0.0; 4],
            vec![0.0; 4],
        )
        .unwrap_err();
        match err {
            Error::Reducible { class, outside } => {
                assert_eq!(class, vec!["s2".to_string(), "s3".to_string()]);
                assert_eq!(outside, vec!["s0".to_string(), "s1".to_string()]);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn symmetric_chains_have_uniform_law() {
        let pi = stationary_distribution(&swap_chain(3.0, vec![0.0; 2], vec![0.0; 2]));
        assert_relative_eq!(pi[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(pi[1], 0.5, epsilon = 1e-15);

        let n = 5;
        let kernel = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 0.25 }).collect())
            .collect();
        let spec = JumpChainSpec::new(labels(n), vec![2.0; n], kernel, vec![0.0; n], vec![0.0; n]).unwrap();
        for p in stationary_distribution(&spec) {
            assert_relative_eq!(p, 0.2, epsilon = 1e-14);
        }
    }

    #[test]
    fn cyclic_chain_law_is_proportional_to_holding_time() {
        // For a deterministic cycle, pi_w is proportional to 1/q(w).
        let pi = stationary_distribution(&cyclic3());
        let z = 1.0 + 0.5 + 0.25;
        assert_relative_eq!(pi[0], 1.0 / z, epsilon = 1e-14);
        assert_relative_eq!(pi[1], 0.5 / z, epsilon = 1e-14);
        assert_relative_eq!(pi[2], 0.25 / z, epsilon = 1e-14);
    }

    #[test]
    fn centering_is_idempotent_and_kills_constants() {
        let spec = cyclic3();
        let once = center_noise(&spec);
        let twice = center_noise(&once);
        for (a, b) in once
            .r1()
            .iter()
            .chain(once.r2())
            .zip(twice.r1().iter().chain(twice.r2()))
        {
            assert!((a - b).abs() < 1e-15);
        }
        let pi = stationary_distribution(&spec);
        assert!(dot(&pi, once.r1()).abs() < 1e-14);
        assert!(dot(&pi, once.r2()).abs() < 1e-14);

        let constant = spec.with_noise(vec![0.7; 3], vec![-2.0; 3]).unwrap();
        let c = center_noise(&constant);
        assert!(c.r1().iter().all(|v| v.abs() < 1e-15));
        assert!(c.r2().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn poisson_two_state_closed_form() {
        let q = 2.5;
        let c = 0.8;
        let spec = swap_chain(q, vec![c, -c], vec![0.0; 2]);
        let psi = solve_poisson(&spec, &[c, -c]).unwrap();
        assert_relative_eq!(psi[0], c / (2.0 * q), epsilon = 1e-15);
        assert_relative_eq!(psi[1], -c / (2.0 * q), epsilon = 1e-15);
        assert_eq!(solve_poisson(&spec, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn poisson_rejects_uncentered_rhs() {
        let spec = swap_chain(1.0, vec![0.0; 2], vec![0.0; 2]);
        assert!(matches!(
            solve_poisson(&spec, &[1.0, 0.0]),
            Err(Error::UncenteredRhs { .. })
        ));
    }

    #[test]
    fn poisson_residual_on_three_states() {
        let spec = center_noise(&cyclic3());
        let psi = solve_poisson(&spec, spec.r1()).unwrap();
        let q_psi = spec.apply_generator(&psi);
        for (a, b) in q_psi.iter().zip(spec.r1()) {
            assert!((a + b).abs() < 1e-12);
        }
        let pi = stationary_distribution(&spec);
        assert!(dot(&pi, &psi).abs() < 1e-15);
    }

    #[test]
    fn two_state_covariance_matches_autocovariance_integral() {
        let (q, rbar) = (3.0, 0.6);
        let spec = swap_chain(q, vec![rbar, -rbar], vec![0.0; 2]);
        let cov = diffusion_matrix(&spec).unwrap();
        assert_relative_eq!(cov.a[0][0], rbar * rbar / q, epsilon = 1e-14);
        assert_eq!(cov.a[0][1], 0.0);
        assert_eq!(cov.a[1][1], 0.0);
        assert_relative_eq!(cov.sigma[0][0], rbar / q.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn zero_noise_gives_zero_covariance() {
        let spec = swap_chain(1.0, vec![0.0; 2], vec![0.0; 2]);
        assert_eq!(diffusion_matrix(&spec).unwrap(), NoiseCovariance::zero());
    }

    #[test]
    fn square_root_reproduces_matrix() {
        let cov = NoiseCovariance::from_matrix([[0.3, 0.1], [0.1, 0.2]]).unwrap();
        let s = cov.sigma;
        for i in 0..2 {
            for j in 0..2 {
                let ss = s[i][0] * s[j][0] + s[i][1] * s[j][1];
                assert!((ss - cov.a[i][j]).abs() < 1e-12);
            }
        }
        assert!(matches!(
            NoiseCovariance::from_matrix([[1.0, 2.0], [2.0, 1.0]]),
            Err(Error::IndefiniteCovariance { .. })
        ));
        // roundoff-level negative eigenvalue is clipped
        let clipped = NoiseCovariance::from_matrix([[1.0, 1.0], [1.0, 1.0 - 1e-12]]).unwrap();
        assert!(clipped.sigma[0][0].is_finite());
    }

    #[test]
    fn jump_path_alternates_and_is_reproducible() {
        let spec = swap_chain(5.0, vec![0.0; 2], vec![0.0; 2]);
        let path = sample_jump_path(&spec, 20.0, 11);
        assert!(path.len() > 50);
        for pair in path.windows(2) {
            assert!(pair[1].0 > pair[0].0);
            assert_ne!(pair[1].1, pair[0].1);
        }
        assert_eq!(path, sample_jump_path(&spec, 20.0, 11));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let spec = cyclic3();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kernel\""));
        let back: JumpChainSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"states":["a","b"],"rates":[1,1],"kernel":[[0,1],[0.5,0]],"r1":[0,0],"r2":[0,0]}"#;
        assert!(serde_json::from_str::<JumpChainSpec>(bad).is_err());
    }
}
