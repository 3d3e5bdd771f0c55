use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{v2, LyapunovParams, VerificationReport};
use crate::error::{Error, Result};
use crate::hjb::Grid;
use crate::model::{DiffusionCoeffs, HarvestSpec, ModelParams};

/// `L_u V / V` for the limit diffusion at `(x, y)` under effort `u`.
pub fn generator_ratio(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    lp: &LyapunovParams,
    x: f64,
    y: f64,
    u: f64,
) -> f64 {
    let (v, grad, hess) = lp.v_derivatives(params, x, y);
    let gx = x * (coeffs.abar1 - params.b1 * x - params.c1 * y);
    let gy = y * (coeffs.abar2 - hs.h(y) * u - params.b2 * y + params.c2 * x);
    let a = coeffs.a;
    let second = a[0][0] * x * x * hess[0][0] + 2.0 * a[0][1] * x * y * hess[0][1] + a[1][1] * y * y * hess[1][1];
    (gx * grad[0] + gy * grad[1] + 0.5 * second) / v
}

/// `L_u V2` for `V2 = 1 + c2 x + c1 y`.
fn v2_generator(params: &ModelParams, hs: &HarvestSpec, coeffs: &DiffusionCoeffs, x: f64, y: f64, u: f64) -> f64 {
    params.c2 * x * (coeffs.abar1 - params.b1 * x - params.c1 * y)
        + params.c1 * y * (coeffs.abar2 - hs.h(y) * u - params.b2 * y + params.c2 * x)
}

/// Outcome of the drift scan over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftScan {
    pub h: f64,
    pub controls: Vec<f64>,
    /// Largest `L_u V / V` over nodes with `|z| >= H`; must be `<= -1`.
    pub sup_outside: f64,
    /// Node and control attaining `sup_outside`.
    pub worst: [f64; 3],
    /// Largest `L_u V / V` over nodes with `|z| < H`.
    pub c_h: f64,
    pub nodes_outside: usize,
    pub nodes_inside: usize,
    pub pass: bool,
    /// `min(c2 b1, c1 b2) / 2`.
    pub beta: f64,
    /// Supremum of `L_u V2 + V2 + beta |z|^2` inside the box.
    pub k5: f64,
    /// Supremum of the same quantity outside the box; must not exceed `k5`.
    pub v2_sup_outside: f64,
    pub v2_pass: bool,
    /// `(x, y, u, L_u V / V)` for every node and control.
    #[serde(skip)]
    pub rows: Vec<[f64; 4]>,
}

impl DriftScan {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "u", "generator_ratio"])?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn report(&self, params_hash: String, details_csv_path: Option<String>) -> VerificationReport {
        VerificationReport {
            check: "drift_inequality".into(),
            params_hash,
            pass: self.pass && self.v2_pass,
            worst_value: self.sup_outside,
            threshold: -1.0,
            details_csv_path,
            details: serde_json::json!({
                "H": self.h,
                "controls": self.controls,
                "worst_node": self.worst,
                "C_H": self.c_h,
                "nodes_outside": self.nodes_outside,
                "nodes_inside": self.nodes_inside,
                "beta": self.beta,
                "K5": self.k5,
                "v2_sup_outside": self.v2_sup_outside,
                "v2_pass": self.v2_pass,
            }),
        }
    }
}

/// Evaluates `L_u V / V` at every node of `grid` for each control in
/// `controls` and checks `L_u V <= -V` for `|z| >= H`. Also checks that
/// `L_u V2 + V2 + beta |z|^2` is no larger outside the box than inside.
///
/// A grid without nodes outside the box cannot confirm the inequality and
/// fails.
pub fn drift_inequality_scan(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    lp: &LyapunovParams,
    grid: &Grid,
    controls: &[f64],
) -> Result<DriftScan> {
    if controls.is_empty() {
        return Err(Error::InvalidParams("drift scan needs at least one control".into()));
    }
    for &u in controls {
        if !(0.0..=params.max_effort).contains(&u) {
            return Err(Error::EffortOutOfRange {
                effort: u,
                max: params.max_effort,
            });
        }
    }
    let beta = 0.5 * (params.c2 * params.b1).min(params.c1 * params.b2);
    let mut scan = DriftScan {
        h: lp.h,
        controls: controls.to_vec(),
        sup_outside: f64::NEG_INFINITY,
        worst: [f64::NAN; 3],
        c_h: f64::NEG_INFINITY,
        nodes_outside: 0,
        nodes_inside: 0,
        pass: false,
        beta,
        k5: f64::NEG_INFINITY,
        v2_sup_outside: f64::NEG_INFINITY,
        v2_pass: false,
        rows: Vec::with_capacity(grid.len() * controls.len()),
    };
    for k in 0..grid.len() {
        let (i, j) = grid.coords(k);
        let (x, y) = (grid.x(i), grid.y(j));
        let r2 = x * x + y * y;
        let outside = r2 >= lp.h * lp.h;
        if outside {
            scan.nodes_outside += 1;
        } else {
            scan.nodes_inside += 1;
        }
        for &u in controls {
            let ratio = generator_ratio(params, hs, coeffs, lp, x, y, u);
            let resid = v2_generator(params, hs, coeffs, x, y, u) + v2(params, x, y) + beta * r2;
            scan.rows.push([x, y, u, ratio]);
            if outside {
                if ratio > scan.sup_outside || ratio.is_nan() {
                    scan.sup_outside = ratio;
                    scan.worst = [x, y, u];
                }
                scan.v2_sup_outside = scan.v2_sup_outside.max(resid);
            } else {
                scan.c_h = scan.c_h.max(ratio);
                scan.k5 = scan.k5.max(resid);
            }
        }
    }
    scan.pass = scan.nodes_outside > 0 && scan.sup_outside <= -1.0 && scan.c_h.is_finite();
    scan.v2_pass = scan.nodes_outside > 0 && scan.k5.is_finite() && scan.v2_sup_outside <= scan.k5;
    Ok(scan)
}
