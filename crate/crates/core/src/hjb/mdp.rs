//! Markov chain approximation of the controlled limit diffusion on a log
//! grid.
//!
//! In `(log x, log y)` the diffusion matrix is the constant `A` and the drift
//! is `(a1 - b1 x - c1 y, s2 - h(y) u - b2 y + c2 x)`. Each node jumps to its
//! 8 neighbors with rates
//!
//! ```text
//! +-e1: a11 / (2 h1^2) - |a12| / (2 h1 h2) + b1^+- / h1
//! +-e2: a22 / (2 h2^2) - |a12| / (2 h1 h2) + b2^+- / h2
//! diagonal pair along sign(a12): |a12| / (2 h1 h2) each
//! ```
//!
//! (upwind drift, `b^+ = max(b, 0)`, `b^- = max(-b, 0)`), uniformized with a
//! single interval `dt = 1 / max total rate`. Moves that would leave the
//! grid are reflected onto the boundary node.

use serde::Serialize;

use super::Grid;
use crate::error::{Error, Result};
use crate::model::{reward_rate, DiffusionCoeffs, HarvestSpec, ModelParams};

const GOLDEN_TOL: f64 = 1e-8;

/// Neighbor slots in the per-node tables.
pub const EAST: usize = 0;
pub const WEST: usize = 1;
pub const NORTH: usize = 2;
pub const SOUTH: usize = 3;
/// Diagonal along the sign of `a12`: `(+1, +1)` for `a12 >= 0`, else `(+1, -1)`.
pub const DIAG_UP: usize = 4;
/// Opposite diagonal of [`DIAG_UP`].
pub const DIAG_DOWN: usize = 5;

/// Control-independent data of one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Node {
    pub y: f64,
    /// `h(y)`
    pub hy: f64,
    /// Log-drift of `y` at zero effort.
    pub b2_zero: f64,
    /// Jump rates east and west.
    pub rate_e: f64,
    pub rate_w: f64,
    /// Neighbor node indices in slot order.
    pub nbr: [usize; 6],
}

/// Controlled chain tables.
#[derive(Clone, Debug)]
pub struct Mdp {
    grid: Grid,
    hs: HarvestSpec,
    max_effort: f64,
    nodes: Vec<Node>,
    /// `a22 / (2 h2^2) - |a12| / (2 h1 h2)`
    diff_y: f64,
    /// `|a12| / (2 h1 h2)`
    diag: f64,
    h2: f64,
    dt: f64,
}

impl Mdp {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_effort(&self) -> f64 {
        self.max_effort
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn harvest(&self) -> &HarvestSpec {
        &self.hs
    }

    /// Log-drift of `y` at node `k` under effort `u`.
    #[inline]
    pub fn b2(&self, k: usize, u: f64) -> f64 {
        let n = &self.nodes[k];
        n.b2_zero - n.hy * u
    }

    /// Jump rates of node `k` under effort `u`, in slot order.
    #[inline]
    pub fn rates(&self, k: usize, u: f64) -> [f64; 6] {
        let n = &self.nodes[k];
        let b2 = n.b2_zero - n.hy * u;
        [
            n.rate_e,
            n.rate_w,
            self.diff_y + b2.max(0.0) / self.h2,
            self.diff_y + (-b2).max(0.0) / self.h2,
            self.diag,
            self.diag,
        ]
    }

    /// Transition probabilities of one chain step: `(self, slots...)`.
    pub fn probabilities(&self, k: usize, u: f64) -> (f64, [f64; 6]) {
        let r = self.rates(k, u);
        let p = r.map(|q| q * self.dt);
        (1.0 - p.iter().sum::<f64>(), p)
    }

    /// Running reward at node `k`.
    #[inline]
    pub fn reward(&self, k: usize, u: f64) -> f64 {
        reward_rate(&self.hs, self.nodes[k].y, u)
    }

    /// `c(k, u) + sum_n q_n(u) (V_n - V_k)`: the discrete `L_u V + c`.
    #[inline]
    pub fn hamiltonian(&self, values: &[f64], k: usize, u: f64) -> f64 {
        let r = self.rates(k, u);
        let v = values[k];
        let nb = &self.nodes[k].nbr;
        let mut s = self.reward(k, u);
        for (q, &n) in r.iter().zip(nb) {
            s += q * (values[n] - v);
        }
        s
    }

    /// Effort maximizing the discrete Hamiltonian at node `k`, with the
    /// maximal value. Ties go to the smaller effort.
    pub fn best_control(&self, values: &[f64], k: usize) -> (f64, f64) {
        let n = &self.nodes[k];
        let m = self.max_effort;
        if m == 0.0 || n.hy == 0.0 {
            return (0.0, self.hamiltonian(values, k, 0.0));
        }
        let v = values[k];
        // Upwinding switches at b2(u) = 0; each side is a separate piece with
        // its own one-sided difference quotient.
        let kink = n.b2_zero / n.hy;
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        let mut consider = |lo: f64, hi: f64, dvdy: f64| {
            let u = pointwise_max_on(&self.hs, n.y, dvdy, lo, hi);
            let val = self.hamiltonian(values, k, u);
            if val > best.1 || (val == best.1 && u < best.0) {
                best = (u, val);
            }
        };
        let y_step = self.h2 * n.y;
        if kink > 0.0 {
            let forward = (values[n.nbr[NORTH]] - v) / y_step;
            consider(0.0, kink.min(m), forward);
        }
        if kink < m {
            let backward = (v - values[n.nbr[SOUTH]]) / y_step;
            consider(kink.max(0.0), m, backward);
        }
        best
    }
}

/// Builds the chain tables. Fails if a cross-derivative split would give a
/// negative jump rate.
pub fn build_mdp(params: &ModelParams, hs: &HarvestSpec, coeffs: &DiffusionCoeffs, grid: &Grid) -> Result<Mdp> {
    let (h1, h2) = grid.spacing();
    let a = coeffs.a;
    let cross = a[0][1].abs() / (2.0 * h1 * h2);
    let diff_x = a[0][0] / (2.0 * h1 * h1) - cross;
    let diff_y = a[1][1] / (2.0 * h2 * h2) - cross;
    for value in [diff_x, diff_y] {
        if value < 0.0 {
            return Err(Error::NegativeProbability { i: 0, j: 0, value });
        }
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let up = if a[0][1] >= 0.0 { 1 } else { -1 };
    let mut nodes = Vec::with_capacity(grid.len());
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (grid.x(i), grid.y(j));
            let b1 = params.a1 - params.b1 * x - params.c1 * y;
            let b2_zero = params.s2 - params.b2 * y + params.c2 * x;
            let at = |di: isize, dj: isize| grid.index(clamp(i as isize + di, nx), clamp(j as isize + dj, ny));
            nodes.push(Node {
                y,
                hy: hs.h(y),
                b2_zero,
                rate_e: diff_x + b1.max(0.0) / h1,
                rate_w: diff_x + (-b1).max(0.0) / h1,
                nbr: [at(1, 0), at(-1, 0), at(0, 1), at(0, -1), at(1, up), at(-1, -up)],
            });
        }
    }
    let mut mdp = Mdp {
        grid: *grid,
        hs: *hs,
        max_effort: params.max_effort,
        nodes,
        diff_y,
        diag: cross,
        h2,
        dt: 1.0,
    };
    let mut max_rate: f64 = 0.0;
    for k in 0..mdp.nodes.len() {
        for u in [0.0, params.max_effort] {
            max_rate = max_rate.max(mdp.rates(k, u).iter().sum());
        }
    }
    if max_rate > 0.0 {
        mdp.dt = 1.0 / max_rate;
    }
    Ok(mdp)
}

/// Maximizes `Phi(y h(y) u) - dvdy y h(y) u` over `u` in `[0, M]`.
pub fn pointwise_max(hs: &HarvestSpec, max_effort: f64, y: f64, dvdy: f64) -> f64 {
    pointwise_max_on(hs, y, dvdy, 0.0, max_effort)
}

/// [`pointwise_max`] restricted to `[lo, hi]`. For linear `Phi` the
/// objective is linear and the answer is an endpoint (ties go to `lo`);
/// otherwise it is concave and located by golden-section search.
pub fn pointwise_max_on(hs: &HarvestSpec, y: f64, dvdy: f64, lo: f64, hi: f64) -> f64 {
    let gain = y * hs.h(y);
    if gain == 0.0 || hi <= lo {
        return lo;
    }
    if hs.phi_is_linear() {
        return if gain * (1.0 - dvdy) > 0.0 { hi } else { lo };
    }
    let f = |u: f64| hs.phi(gain * u) - dvdy * gain * u;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // The interior optimum competes with the endpoints, which golden
    // section never evaluates.
    [lo, mid, hi]
        .into_iter()
        .fold((lo, f(lo)), |best, u| {
            let v = f(u);
            if v > best.1 {
                (u, v)
            } else {
                best
            }
        })
        .0
}
