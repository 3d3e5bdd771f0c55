//! Average-reward optimality equation of the approximating chain.
//!
//! The solver runs relative value iteration (Jacobi sweeps, anchored at a
//! reference node, `rho` read off as the span midpoint of the one-step
//! updates). By default the iteration is warm-started from policy iteration:
//! each policy is evaluated exactly by a banded direct solve, which brings
//! the value iteration to within roundoff of its fixed point before the
//! first sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mdp::Mdp;
use super::{Grid, PolicyTable};
use crate::error::{Error, Result};

const MAX_POLICY_STEPS: usize = 60;

/// Relative values and the optimal average reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub grid: Grid,
    /// Relative value per node; exactly 0 at `reference`.
    pub values: Vec<f64>,
    /// Average reward per unit time.
    pub rho: f64,
    pub reference: (usize, usize),
    pub tol: f64,
    /// Value-iteration sweeps performed.
    pub iterations: usize,
    /// Span of the last one-step update divided by `dt`.
    pub final_span: f64,
    /// Policy-iteration steps used for the warm start.
    pub policy_steps: usize,
    /// Span (divided by `dt`) after every sweep.
    #[serde(skip)]
    pub span_history: Vec<f64>,
}

impl ValueFunction {
    /// Writes the columns `x,y,value`, one row per node.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "value"])?;
        for (k, v) in self.values.iter().enumerate() {
            let (i, j) = self.grid.coords(k);
            w.write_record(&[self.grid.x(i).to_string(), self.grid.y(j).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Grid metadata, `rho`, tolerance and iteration counts.
    pub fn header(&self) -> serde_json::Value {
        serde_json::json!({
            "grid": self.grid,
            "rho": self.rho,
            "tol": self.tol,
            "iterations": self.iterations,
            "policy_steps": self.policy_steps,
            "final_span": self.final_span,
            "reference": [self.reference.0, self.reference.1],
        })
    }
}

/// Solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Anchor node; defaults to the grid center.
    #[serde(default)]
    pub reference: Option<(usize, usize)>,
    /// Warm-start value iteration from policy iteration.
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn yes() -> bool {
    true
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 200_000,
            reference: None,
            warm_start: true,
        }
    }
}

impl SolverOptions {
    fn reference_index(&self, grid: &Grid) -> Result<(usize, (usize, usize))> {
        let (i, j) = self.reference.unwrap_or((grid.nx() / 2, grid.ny() / 2));
        if i >= grid.nx() || j >= grid.ny() {
            return Err(Error::InvalidGrid(format!("reference node ({i}, {j}) is off the grid")));
        }
        Ok((grid.index(i, j), (i, j)))
    }
}

/// Band matrix with equal lower and upper bandwidth, factored in place
/// without pivoting. Used only for nonsingular M-matrices, for which
/// elimination without pivoting is stable.
struct BandLu {
    n: usize,
    bw: usize,
    a: Vec<f64>,
}

impl BandLu {
    fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            a: vec![0.0; n * (2 * bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    fn factor(&mut self) {
        let (n, bw, w) = (self.n, self.bw, 2 * self.bw + 1);
        for k in 0..n {
            let pivot = self.a[self.idx(k, k)];
            let end = (k + bw + 1).min(n);
            let urow = self.idx(k, k);
            for i in k + 1..end {
                let ik = self.idx(i, k);
                if self.a[ik] == 0.0 {
                    continue;
                }
                let l = self.a[ik] / pivot;
                self.a[ik] = l;
                let irow = ik + 1;
                let len = end - k - 1;
                let (head, tail) = self.a.split_at_mut(irow);
                let urow_slice = &head[urow + 1..urow + 1 + len];
                for (t, u) in tail[..len].iter_mut().zip(urow_slice) {
                    *t -= l * u;
                }
            }
            debug_assert!(w > 0);
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let mut s = b[i];
            for j in start..i {
                s -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + bw + 1).min(n);
            let mut s = b[i];
            for j in i + 1..end {
                s -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.a[self.idx(i, i)];
        }
    }
}

/// Exact average reward and relative values of a fixed policy, anchored at
/// node index `reference`.
///
/// Writes `V = W + rho U` where `W`, `U` solve the generator equations with
/// the reference row replaced by `V_ref = 0`; the reference row then fixes
/// `rho`.
pub fn evaluate_policy(mdp: &Mdp, efforts: &[f64], reference: usize) -> Result<(f64, Vec<f64>)> {
    let grid = mdp.grid();
    let n = grid.len();
    if efforts.len() != n {
        return Err(Error::InvalidGrid("policy does not match the grid".into()));
    }
    let mut band = BandLu::zeros(n, grid.nx() + 1);
    let mut w = vec![0.0; n];
    let mut u = vec![-1.0; n];
    for k in 0..n {
        w[k] = mdp.reward(k, efforts[k]);
        if k == reference {
            band.add(k, k, 1.0);
            continue;
        }
        let nbr = mdp.nodes()[k].nbr;
        for (q, &m) in mdp.rates(k, efforts[k]).iter().zip(&nbr) {
            if m != k && *q != 0.0 {
                band.add(k, k, *q);
                band.add(k, m, -q);
            }
        }
    }
    w[reference] = 0.0;
    u[reference] = 0.0;
    band.factor();
    band.solve(&mut w);
    band.solve(&mut u);
    let generator_at_ref = |v: &[f64]| -> f64 {
        let nbr = mdp.nodes()[reference].nbr;
        mdp.rates(reference, efforts[reference])
            .iter()
            .zip(&nbr)
            .map(|(q, &m)| q * (v[m] - v[reference]))
            .sum()
    };
    let rho = (generator_at_ref(&w) + mdp.reward(reference, efforts[reference])) / (1.0 - generator_at_ref(&u));
    let values: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a + rho * b).collect();
    if !(rho.is_finite() && values.iter().all(|v| v.is_finite())) {
        return Err(Error::SingularSolve {
            residual: f64::INFINITY,
            tolerance: 0.0,
        });
    }
    Ok((rho, values))
}

/// Average reward of the chain under the constant effort `u`.
pub fn constant_policy_reward(mdp: &Mdp, u: f64) -> Result<f64> {
    let grid = mdp.grid();
    let reference = grid.index(grid.nx() / 2, grid.ny() / 2);
    Ok(evaluate_policy(mdp, &vec![u; grid.len()], reference)?.0)
}

fn greedy(mdp: &Mdp, values: &[f64]) -> Vec<(f64, f64)> {
    (0..mdp.grid().len())
        .into_par_iter()
        .map(|k| mdp.best_control(values, k))
        .collect()
}

/// Policy iteration used as the warm start. Returns the last evaluated
/// values and the number of improvement steps.
fn policy_iteration(mdp: &Mdp, reference: usize) -> Result<(Vec<f64>, usize)> {
    let n = mdp.grid().len();
    let mut efforts: Vec<f64> = greedy(mdp, &vec![0.0; n]).into_iter().map(|(u, _)| u).collect();
    let mut values = vec![0.0; n];
    for step in 1..=MAX_POLICY_STEPS {
        values = evaluate_policy(mdp, &efforts, reference)?.1;
        let improved = greedy(mdp, &values);
        let mut changed = false;
        for (k, (u_new, h_new)) in improved.into_iter().enumerate() {
            // Switch only on a strict improvement so ties cannot cycle.
            let h_old = mdp.hamiltonian(&values, k, efforts[k]);
            if h_new > h_old + 1e-12 * (1.0 + h_old.abs()) && u_new != efforts[k] {
                efforts[k] = u_new;
                changed = true;
            }
        }
        if !changed {
            return Ok((values, step));
        }
    }
    Ok((values, MAX_POLICY_STEPS))
}

/// Solves `max_u [L_u V + c(., u)] = rho` on the chain. Returns the
/// anchored value function and the maximizing policy.
pub fn solve_average_reward(mdp: &Mdp, opts: &SolverOptions) -> Result<(ValueFunction, PolicyTable)> {
    let grid = *mdp.grid();
    let (reference, ref_ij) = opts.reference_index(&grid)?;
    let dt = mdp.dt();
    let (mut values, policy_steps) = if opts.warm_start {
        policy_iteration(mdp, reference)?
    } else {
        (vec![0.0; grid.len()], 0)
    };
    let mut spans = Vec::new();
    let mut rho = 0.0;
    let mut efforts = vec![0.0; grid.len()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let step = greedy(mdp, &values);
        let (lo, hi) = step
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, h)| {
                (lo.min(h), hi.max(h))
            });
        let span = hi - lo;
        rho = 0.5 * (hi + lo);
        spans.push(span);
        let shift = values[reference] + dt * step[reference].1;
        for (k, (u, h)) in step.into_iter().enumerate() {
            values[k] = values[k] + dt * h - shift;
            efforts[k] = u;
        }
        values[reference] = 0.0;
        if span < opts.tol {
            converged = true;
            break;
        }
    }
    let final_span = spans.last().copied().unwrap_or(f64::INFINITY);
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            span: final_span,
        });
    }
    log::info!(
        "average-reward solve: rho = {rho:.6}, {policy_steps} policy steps, {iterations} sweeps, span {final_span:e}"
    );
    let policy = PolicyTable::new(grid, mdp.max_effort(), efforts, 0)?;
    Ok((
        ValueFunction {
            grid,
            values,
            rho,
            reference: ref_ij,
            tol: opts.tol,
            iterations,
            final_span,
            policy_steps,
            span_history: spans,
        },
        policy,
    ))
}

/// Largest deviation `|max_u [L_u V + c] - rho|` over interior nodes.
pub fn hjb_residual(value: &ValueFunction, mdp: &Mdp) -> f64 {
    let grid = mdp.grid();
    (0..grid.len())
        .into_par_iter()
        .filter(|&k| {
            let (i, j) = grid.coords(k);
            grid.is_interior(i, j)
        })
        .map(|k| (mdp.best_control(&value.values, k).1 - value.rho).abs())
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::build_mdp;
    use crate::markov_noise::NoiseCovariance;
    use crate::model::{DiffusionCoeffs, Effectiveness, HarvestSpec, ModelParams, Yield};

    fn setup(m: f64, nodes: usize) -> Mdp {
        let params = ModelParams::new(2.0, 1.0, 1.0, -1.0, 1.0, 1.0, m).unwrap();
        let hs = HarvestSpec::new(Effectiveness::Michaelis { kappa: 0.5 }, Yield::Linear).unwrap();
        let cov = NoiseCovariance::from_matrix([[0.24, 0.04], [0.04, 0.21]]).unwrap();
        let grid = Grid::new(0.05, 8.0, 0.01, 5.0, nodes, nodes).unwrap();
        build_mdp(&params, &hs, &DiffusionCoeffs::new(&params, &cov), &grid).unwrap()
    }

    #[test]
    fn band_lu_solves_small_system() {
        // tridiagonal M-matrix
        let n = 6;
        let mut band = BandLu::zeros(n, 1);
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            band.add(i, i, 3.0);
            dense[(i, i)] = 3.0;
            if i > 0 {
                band.add(i, i - 1, -1.0);
                dense[(i, i - 1)] = -1.0;
            }
            if i + 1 < n {
                band.add(i, i + 1, -1.5);
                dense[(i, i + 1)] = -1.5;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let expected = dense.lu().solve(&nalgebra::DVector::from_vec(rhs.clone())).unwrap();
        let mut b = rhs;
        band.factor();
        band.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - expected[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_cap_gives_zero_reward() {
        let mdp = setup(0.0, 16);
        let (v, p) = solve_average_reward(&mdp, &SolverOptions::default()).unwrap();
        assert_eq!(v.rho, 0.0);
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert!(p.efforts().iter().all(|&u| u == 0.0));
        assert!(hjb_residual(&v, &mdp) < 1e-12);
    }

    #[test]
    fn optimum_dominates_constant_policies_and_residual_is_small() {
        let mdp = setup(2.0, 24);
        let opts = SolverOptions::default();
        let (v, _) = solve_average_reward(&mdp, &opts).unwrap();
        for u in [0.0, 0.5, 1.0, 1.5, 2.0] {
            assert!(v.rho >= constant_policy_reward(&mdp, u).unwrap() - opts.tol);
        }
        assert!(hjb_residual(&v, &mdp) < 10.0 * opts.tol);
        assert_eq!(v.values[mdp.grid().index(12, 12)], 0.0);
    }

    #[test]
    fn cold_and_warm_starts_agree() {
        let mdp = setup(2.0, 16);
        let warm = solve_average_reward(&mdp, &SolverOptions::default()).unwrap().0;
        let cold_opts = SolverOptions {
            warm_start: false,
            tol: 1e-6,
            ..SolverOptions::default()
        };
        let cold = solve_average_reward(&mdp, &cold_opts).unwrap().0;
        assert!((warm.rho - cold.rho).abs() < 1e-5);
        // contraction diagnostic
        for w in cold.span_history[10..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn exhausting_iterations_reports_span() {
        let mdp = setup(2.0, 16);
        let opts = SolverOptions {
            warm_start: false,
            max_iters: 5,
            ..SolverOptions::default()
        };
        match solve_average_reward(&mdp, &opts) {
            Err(Error::NotConverged { iterations, span }) => {
                assert_eq!(iterations, 5);
                assert!(span > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn anchor_choice_does_not_change_rho() {
        let mdp = setup(2.0, 20);
        let a = solve_average_reward(&mdp, &SolverOptions::default()).unwrap().0;
        let b = solve_average_reward(
            &mdp,
            &SolverOptions {
                reference: Some((3, 15)),
                ..SolverOptions::default()
            },
        )
        .unwrap()
        .0;
        assert!((a.rho - b.rho).abs() < 1e-7);
    }
}
