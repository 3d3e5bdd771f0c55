use serde::{Deserialize, Serialize};

use super::{LyapunovParams, VerificationReport};
use crate::error::{Error, Result};
use crate::markov_noise::{solve_poisson, JumpChainSpec};
use crate::model::{noise_f, ModelParams, State2D};

/// Outcome of the wideband perturbation check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `max_w |r3(w)| (1 + p1) + |r4(w)| (1 + p2)`.
    pub k_bound: f64,
    /// Largest `|V1| / V` seen at the sampled points.
    pub k_observed: f64,
    /// `1 / k_bound`: below this `V + eps V1` stays positive.
    pub eps_max: f64,
    /// The `eps` at which the two-sided bound was checked.
    pub eps_checked: f64,
    /// Largest relative violation of `(1 - eps K) V <= V + eps V1 <= (1 + eps K) V`.
    pub sandwich_violation: f64,
    /// Largest relative error of `Q V1 = -grad V . F`.
    pub identity_error: f64,
    pub pairs: usize,
    pub pass: bool,
}

impl SandwichReport {
    pub fn report(&self, params_hash: String) -> VerificationReport {
        VerificationReport {
            check: "perturbed_sandwich".into(),
            params_hash,
            pass: self.pass,
            worst_value: self.identity_error.max(self.sandwich_violation),
            threshold: IDENTITY_TOL,
            details_csv_path: None,
            details: serde_json::to_value(self).expect("plain data serializes"),
        }
    }
}

const IDENTITY_TOL: f64 = 1e-10;

/// Builds `V1(z, w) = x r3(w) V_x + y r4(w) V_y` with `Q r3 = -r1` and
/// `Q r4 = -r2`, so that `Q V1 = -grad V . F`, and checks that identity and
/// the bound `|V1| <= K V` at every sampled node and chain state. The
/// two-sided sandwich is evaluated at `eps = 0.5 / K`.
///
/// The noise of `spec` must be centered.
pub fn perturbed_sandwich_check(
    params: &ModelParams,
    spec: &JumpChainSpec,
    lp: &LyapunovParams,
    nodes: &[State2D],
) -> Result<SandwichReport> {
    if nodes.is_empty() {
        return Err(Error::InvalidParams("sandwich check needs at least one node".into()));
    }
    let r3 = solve_poisson(spec, spec.r1())?;
    let r4 = solve_poisson(spec, spec.r2())?;
    let qr3 = spec.apply_generator(&r3);
    let qr4 = spec.apply_generator(&r4);
    let k_bound = r3
        .iter()
        .zip(&r4)
        .map(|(a, b)| a.abs() * (1.0 + lp.p1) + b.abs() * (1.0 + lp.p2))
        .fold(0.0, f64::max);
    let eps_max = if k_bound > 0.0 { 1.0 / k_bound } else { f64::INFINITY };
    let eps = if k_bound > 0.0 { 0.5 / k_bound } else { 1.0 };
    let noise_scale = spec.r1().iter().chain(spec.r2()).fold(0.0_f64, |m, r| m.max(r.abs()));

    let (mut k_observed, mut violation, mut identity_error) = (0.0_f64, 0.0_f64, 0.0_f64);
    for z in nodes {
        let (v, grad, _) = lp.v_derivatives(params, z.x, z.y);
        let (xvx, yvy) = (z.x * grad[0], z.y * grad[1]);
        let scale = (xvx.abs() + yvy.abs()) * noise_scale;
        for w in 0..spec.len() {
            let v1 = xvx * r3[w] + yvy * r4[w];
            let f = noise_f(spec, *z, w);
            let target = -(grad[0] * f[0] + grad[1] * f[1]);
            let qv1 = xvx * qr3[w] + yvy * qr4[w];
            if scale > 0.0 {
                identity_error = identity_error.max((qv1 - target).abs() / scale);
            }
            k_observed = k_observed.max(v1.abs() / v);
            let ve = v + eps * v1;
            let lo = (1.0 - eps * k_bound) * v;
            let hi = (1.0 + eps * k_bound) * v;
            violation = violation.max((lo - ve).max(ve - hi).max(0.0) / v);
        }
    }
    let pass = identity_error <= IDENTITY_TOL && violation <= 1e-12 && k_observed <= k_bound * (1.0 + 1e-12);
    Ok(SandwichReport {
        k_bound,
        k_observed,
        eps_max,
        eps_checked: eps,
        sandwich_violation: violation,
        identity_error,
        pairs: nodes.len() * spec.len(),
        pass,
    })
}
