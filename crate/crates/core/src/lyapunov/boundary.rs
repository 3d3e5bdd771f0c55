use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{g, LyapunovParams, VerificationReport};
use crate::diffusion_sim::{log_euler_increment, DiffusionConfig, DiffusionStepper};
use crate::error::{Error, Result};
use crate::model::{DiffusionCoeffs, HarvestSpec, ModelParams, State2D};
use crate::rng::{stage, stream_rng};
use crate::sim::{mean_stderr, ConstantEffort, FeedbackPolicy, Observer, PathRecord, Sample, Stepper};

/// Settings of the near-boundary averaging check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOptions {
    /// Distance of the start points from the axes is `delta / 2`.
    pub delta: f64,
    /// Shortest horizon `T1`.
    pub t1: f64,
    /// Horizons run over `[T1, (k0 + 1) T1]`.
    pub k0: f64,
    /// Number of equally spaced horizons in that window.
    pub horizons: usize,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// The 16 start points: eight along the prey axis at `y = delta / 2`
/// (`x = delta / 2` and `x = H k / 7`, `k = 1..7`) and eight along the
/// predator axis at `x = delta / 2` (`y = H k / 8`, `k = 1..8`).
pub fn boundary_start_points(h: f64, delta: f64) -> Vec<State2D> {
    let d = 0.5 * delta;
    let mut pts = vec![State2D { x: d, y: d }];
    pts.extend((1..=7).map(|k| State2D {
        x: h * k as f64 / 7.0,
        y: d,
    }));
    pts.extend((1..=8).map(|k| State2D {
        x: d,
        y: h * k as f64 / 8.0,
    }));
    pts
}

/// Running integrals of `f`, `g` and `h(Y)`.
struct AverageObserver<'a> {
    params: &'a ModelParams,
    hs: &'a HarvestSpec,
    coeffs: &'a DiffusionCoeffs,
    lp: &'a LyapunovParams,
    sums: [f64; 3],
}

impl AverageObserver<'_> {
    fn values(&self, s: &Sample) -> [f64; 3] {
        [
            self.lp.f(self.params, s.x, s.y),
            g(self.params, self.coeffs, s.x, s.y),
            self.hs.h(s.y),
        ]
    }
}

impl Observer for AverageObserver<'_> {
    fn interval(&mut self, left: &Sample, right: &Sample, (wl, wr): (f64, f64)) {
        let dt = right.t - left.t;
        let (a, b) = (self.values(left), self.values(right));
        for k in 0..3 {
            self.sums[k] += dt * (wl * a[k] + wr * b[k]);
        }
    }
}

/// Time averages from one start point, control and horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub x0: f64,
    pub y0: f64,
    pub u: f64,
    pub t: f64,
    pub f_avg: f64,
    pub f_se: f64,
    pub g_avg: f64,
    pub g_se: f64,
    pub h_avg: f64,
    pub h_se: f64,
}

/// Outcome of the near-boundary averaging check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub lambda: f64,
    /// Smallest `f_avg + 2 se`; must exceed `9 lambda`.
    pub f_worst: f64,
    /// Largest `g_avg - 2 se`; must not exceed `lambda`.
    pub g_worst: f64,
    /// Largest `h_avg - 2 se`; must not exceed `lambda / (p2 M)`.
    pub h_worst: f64,
    pub f_threshold: f64,
    pub g_threshold: f64,
    pub h_threshold: f64,
    pub pass: bool,
    pub rows: Vec<BoundaryRow>,
}

impl BoundaryReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn report(&self, params_hash: String, details_csv_path: Option<String>) -> VerificationReport {
        VerificationReport {
            check: "boundary_averages".into(),
            params_hash,
            pass: self.pass,
            worst_value: self.f_worst,
            threshold: self.f_threshold,
            details_csv_path,
            details: serde_json::json!({
                "lambda": self.lambda,
                "g_worst": self.g_worst,
                "g_threshold": self.g_threshold,
                "h_worst": self.h_worst,
                "h_threshold": self.h_threshold,
                "rows": self.rows.len(),
            }),
        }
    }
}

/// Simulates the limit diffusion from the 16 near-axis start points under
/// the endpoint controls `0` and `M` and checks, at every horizon in
/// `[T1, (k0 + 1) T1]`, that
/// `avg f > 9 lambda`, `avg g <= lambda` and `avg h(Y) <= lambda / (p2 M)`,
/// each with two standard errors of Monte Carlo slack.
///
/// Fails outright when `lambda <= 0`. The same seed gives the same
/// Brownian paths for both controls.
pub fn boundary_average_check(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    lp: &LyapunovParams,
    opts: &BoundaryOptions,
) -> Result<BoundaryReport> {
    if !(opts.delta > 0.0 && opts.t1 > 0.0 && opts.k0 >= 0.0 && opts.horizons >= 1 && opts.n_paths >= 2) {
        return Err(Error::InvalidSimConfig(format!(
            "invalid boundary check options {opts:?}"
        )));
    }
    DiffusionConfig {
        dt: opts.dt,
        t_end: (opts.k0 + 1.0) * opts.t1,
        burn_in: 0.0,
        seed: opts.seed,
        initial: State2D { x: 1.0, y: 1.0 },
        record_dt: 1.0,
    }
    .validate(params)?;
    let starts = boundary_start_points(lp.h, opts.delta);
    let controls = [0.0, params.max_effort];
    let horizons: Vec<f64> = (0..opts.horizons)
        .map(|k| {
            let frac = if opts.horizons == 1 {
                0.0
            } else {
                k as f64 / (opts.horizons - 1) as f64
            };
            opts.t1 * (1.0 + opts.k0 * frac)
        })
        .collect();
    let n = opts.n_paths;
    let tasks: Vec<(usize, usize, usize)> = (0..starts.len())
        .flat_map(|s| (0..controls.len()).flat_map(move |c| (0..n).map(move |p| (s, c, p))))
        .collect();
    let results: Vec<Vec<[f64; 3]>> = tasks
        .par_iter()
        .map(|&(s, c, p)| {
            let policy = ConstantEffort(controls[c]);
            let rng = stream_rng(opts.seed, stage::BOUNDARY, (s * n + p) as u64);
            let mut stepper = DiffusionStepper::new(params, hs, coeffs, &policy, opts.dt, starts[s], rng);
            let mut obs = AverageObserver {
                params,
                hs,
                coeffs,
                lp,
                sums: [0.0; 3],
            };
            let mut out = Vec::with_capacity(horizons.len());
            for &t in &horizons {
                stepper.advance_to(t, &mut obs)?;
                out.push(obs.sums.map(|v| v / t));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let f_threshold = 9.0 * lp.lambda;
    let g_threshold = lp.lambda;
    let h_threshold = if lp.p2 * params.max_effort > 0.0 {
        lp.lambda / (lp.p2 * params.max_effort)
    } else {
        f64::INFINITY
    };
    let mut rows = Vec::new();
    let (mut f_worst, mut g_worst, mut h_worst) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (s, start) in starts.iter().enumerate() {
        for (c, &u) in controls.iter().enumerate() {
            let block = &results[(s * controls.len() + c) * n..][..n];
            for (k, &t) in horizons.iter().enumerate() {
                let col = |q: usize| mean_stderr(&block.iter().map(|r| r[k][q]).collect::<Vec<_>>());
                let ((f_avg, f_se), (g_avg, g_se), (h_avg, h_se)) = (col(0), col(1), col(2));
                f_worst = f_worst.min(f_avg + 2.0 * f_se);
                g_worst = g_worst.max(g_avg - 2.0 * g_se);
                h_worst = h_worst.max(h_avg - 2.0 * h_se);
                rows.push(BoundaryRow {
                    x0: start.x,
                    y0: start.y,
                    u,
                    t,
                    f_avg,
                    f_se,
                    g_avg,
                    g_se,
                    h_avg,
                    h_se,
                });
            }
        }
    }
    let pass = lp.lambda > 0.0 && f_worst > f_threshold && g_worst <= g_threshold && h_worst <= h_threshold;
    Ok(BoundaryReport {
        lambda: lp.lambda,
        f_worst,
        g_worst,
        h_worst,
        f_threshold,
        g_threshold,
        h_threshold,
        pass,
        rows,
    })
}

/// Log-coordinate drift of the comparison system: the prey alone, and a
/// predator with growth `-|s2| / 2 - a22` (Ito) and no prey.
fn comparison_increment(
    params: &ModelParams,
    coeffs: &DiffusionCoeffs,
    x: f64,
    y: f64,
    dt: f64,
    n: [f64; 2],
) -> (f64, f64) {
    let s = &coeffs.sigma;
    let a22 = coeffs.a[1][1];
    let d1 = coeffs.abar1 - 0.5 * coeffs.a[0][0] - params.b1 * x;
    let d2 = -0.5 * params.s2.abs() - 1.5 * a22 - params.b2 * y;
    let sq = dt.sqrt();
    (
        d1 * dt + sq * (s[0][0] * n[0] + s[0][1] * n[1]),
        d2 * dt + sq * (s[1][0] * n[0] + s[1][1] * n[1]),
    )
}

/// Simulates the comparison system `(X~, Y~)` from `cfg.initial`, recording
/// every `cfg.record_dt`. Controls and rewards in the record are zero.
pub fn comparison_system_simulate(
    params: &ModelParams,
    coeffs: &DiffusionCoeffs,
    cfg: &DiffusionConfig,
) -> Result<PathRecord> {
    cfg.validate(params)?;
    let mut rng = stream_rng(cfg.seed, stage::COMPARISON, 0);
    let (mut lx, mut ly) = (cfg.initial.x.ln(), cfg.initial.y.ln());
    let mut rec = PathRecord::default();
    let push = |rec: &mut PathRecord, t: f64, lx: f64, ly: f64| {
        rec.times.push(t);
        rec.states.push(State2D {
            x: lx.exp(),
            y: ly.exp(),
        });
        rec.controls.push(0.0);
        rec.rewards.push(0.0);
        rec.running_average.push(0.0);
    };
    push(&mut rec, 0.0, lx, ly);
    let steps = (cfg.t_end / cfg.dt).round() as u64;
    let every = ((cfg.record_dt / cfg.dt).round() as u64).max(1);
    for k in 1..=steps {
        let n = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let (dx, dy) = comparison_increment(params, coeffs, lx.exp(), ly.exp(), cfg.dt, n);
        lx += dx;
        ly += dy;
        if !(lx.is_finite() && ly.is_finite()) {
            return Err(Error::NonFinite {
                time: k as f64 * cfg.dt,
            });
        }
        if k % every == 0 {
            push(&mut rec, k as f64 * cfg.dt, lx, ly);
        }
    }
    Ok(rec)
}

/// Settings of the comparison-system averaging check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOptions {
    pub delta: f64,
    /// The prey average is checked at `T0`, the predator average at `2 T0`.
    pub t0: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// Outcome of the comparison-system check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Smallest `avg f(X~, 0) + 2 se` at `T0`; must reach `10 lambda`.
    pub f_worst: f64,
    pub f_threshold: f64,
    /// Largest `avg Y~ - 2 se` at `2 T0`; must not exceed
    /// `lambda / (2 (1 + M) l)` with `l` the sampled Lipschitz bound of `h`.
    pub y_worst: f64,
    pub y_threshold: f64,
    pub lipschitz: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn report(&self, params_hash: String) -> VerificationReport {
        VerificationReport {
            check: "comparison_averages".into(),
            params_hash,
            pass: self.pass,
            worst_value: self.y_worst,
            threshold: self.y_threshold,
            details_csv_path: None,
            details: serde_json::to_value(self).expect("plain data serializes"),
        }
    }
}

fn sampled_lipschitz(hs: &HarvestSpec, y_max: f64) -> f64 {
    let n = 4096;
    let step = y_max / n as f64;
    (0..n)
        .map(|k| {
            let y = k as f64 * step;
            (hs.h(y + step) - hs.h(y)).abs() / step
        })
        .fold(0.0, f64::max)
}

/// Checks the two averages the comparison system must satisfy: the prey
/// average of `f(X~, 0)` from the prey-axis start points, and the predator
/// average of `Y~` from the predator-axis start points.
pub fn comparison_average_check(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    lp: &LyapunovParams,
    opts: &ComparisonOptions,
) -> Result<ComparisonReport> {
    DiffusionConfig {
        dt: opts.dt,
        t_end: 2.0 * opts.t0,
        burn_in: 0.0,
        seed: opts.seed,
        initial: State2D { x: 1.0, y: 1.0 },
        record_dt: 1.0,
    }
    .validate(params)?;
    if opts.n_paths < 2 {
        return Err(Error::InvalidSimConfig(
            "comparison check needs at least two paths".into(),
        ));
    }
    let starts = boundary_start_points(lp.h, opts.delta);
    let n = opts.n_paths;
    let steps = (2.0 * opts.t0 / opts.dt).round() as usize;
    let half = steps / 2;
    let results: Vec<(f64, f64)> = (0..starts.len() * n)
        .into_par_iter()
        .map(|task| {
            let z0 = starts[task / n];
            let mut rng = stream_rng(opts.seed, stage::COMPARISON, task as u64 + 1);
            let (mut lx, mut ly) = (z0.x.ln(), z0.y.ln());
            let (mut f_int, mut y_int) = (0.0, 0.0);
            let mut f_at_t0 = 0.0;
            for k in 0..steps {
                let (x, y) = (lx.exp(), ly.exp());
                f_int += opts.dt * lp.f(params, x, 0.0);
                y_int += opts.dt * y;
                let nrm = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let (dx, dy) = comparison_increment(params, coeffs, x, y, opts.dt, nrm);
                lx += dx;
                ly += dy;
                if k + 1 == half {
                    f_at_t0 = f_int / (half as f64 * opts.dt);
                }
            }
            (f_at_t0, y_int / (steps as f64 * opts.dt))
        })
        .collect();
    let lipschitz = sampled_lipschitz(hs, lp.h.max(1.0));
    let f_threshold = 10.0 * lp.lambda;
    let y_threshold = lp.lambda / (2.0 * (1.0 + params.max_effort) * lipschitz.max(f64::MIN_POSITIVE));
    let (mut f_worst, mut y_worst) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, block) in results.chunks(n).enumerate() {
        if s < 8 {
            let (m, se) = mean_stderr(&block.iter().map(|r| r.0).collect::<Vec<_>>());
            f_worst = f_worst.min(m + 2.0 * se);
        } else {
            let (m, se) = mean_stderr(&block.iter().map(|r| r.1).collect::<Vec<_>>());
            y_worst = y_worst.max(m - 2.0 * se);
        }
    }
    Ok(ComparisonReport {
        f_worst,
        f_threshold,
        y_worst,
        y_threshold,
        lipschitz,
        pass: lp.lambda > 0.0 && f_worst >= f_threshold && y_worst <= y_threshold,
    })
}

/// Path-wise comparison between the predator and its dominating process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// Prey level `(|s2| / 2 - 3 a22 / 2) / c2` below which `Y <= Y~` is
    /// preserved.
    pub x_threshold: f64,
    pub n_paths: usize,
    /// Steps taken while every path stayed below the prey threshold.
    pub steps_checked: usize,
    /// Steps at which `Y > Y~` while the premise held.
    pub violations: usize,
    /// Largest `log Y - log Y~` while the premise held.
    pub max_log_gap: f64,
    pub pass: bool,
}

/// Runs the controlled diffusion and the comparison predator with shared
/// Brownian increments from `Y~(0) = Y(0)` and checks `Y <= Y~` for as long
/// as the prey stays below the threshold.
pub fn coupled_comparison<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    policy: &P,
    cfg: &DiffusionConfig,
    n_paths: usize,
) -> Result<CouplingReport> {
    cfg.validate(params)?;
    let x_threshold = (0.5 * params.s2.abs() - 1.5 * coeffs.a[1][1]) / params.c2;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let per_path: Vec<(usize, usize, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(cfg.seed, stage::COMPARISON, 1 << 32 | p as u64);
            let (mut lx, mut ly) = (cfg.initial.x.ln(), cfg.initial.y.ln());
            let mut lyt = ly;
            let (mut checked, mut bad, mut gap) = (0, 0, f64::NEG_INFINITY);
            for _ in 0..steps {
                let (x, y) = (lx.exp(), ly.exp());
                if x > x_threshold {
                    break;
                }
                let u = policy.effort(lx, ly);
                let n = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let (dx, dy) = log_euler_increment(params, hs, coeffs, x, y, u, cfg.dt, n);
                let (_, dyt) = comparison_increment(params, coeffs, x, lyt.exp(), cfg.dt, n);
                lx += dx;
                ly += dy;
                lyt += dyt;
                checked += 1;
                gap = f64::max(gap, ly - lyt);
                if ly > lyt {
                    bad += 1;
                }
            }
            (checked, bad, gap)
        })
        .collect();
    let steps_checked = per_path.iter().map(|r| r.0).sum();
    let violations = per_path.iter().map(|r| r.1).sum();
    let max_log_gap = per_path.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    Ok(CouplingReport {
        x_threshold,
        n_paths,
        steps_checked,
        violations,
        max_log_gap,
        pass: steps_checked > 0 && violations == 0,
    })
}
