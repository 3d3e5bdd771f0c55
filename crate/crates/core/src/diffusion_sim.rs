//! Limit diffusion under a feedback policy.
//!
//! The scheme is Euler-Maruyama on `(log x, log y)`:
//!
//! ```text
//! d log x = (abar1 - b1 x - c1 y - (s11^2 + s12^2)/2) dt + s11 dW1 + s12 dW2
//! d log y = (abar2 - h(y) u - b2 y + c2 x - (s12^2 + s22^2)/2) dt + s12 dW1 + s22 dW2
//! ```
//!
//! so both populations stay strictly positive.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::Grid;
use crate::lyapunov::LyapunovParams;
use crate::model::{DiffusionCoeffs, HarvestSpec, ModelParams, State2D};
use crate::rng::{self, stage};
use crate::sim::{
    self, drive, mean_stderr, Batch, FeedbackPolicy, Observer, PathOptions, PathOutput, PathRecord, RewardEstimate,
    Sample, StatsObserver, Stepper,
};

fn default_record_dt() -> f64 {
    1.0
}

/// Settings of a diffusion run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub initial: State2D,
    /// Spacing of recorded samples in [`simulate_diffusion`].
    #[serde(default = "default_record_dt")]
    pub record_dt: f64,
}

impl DiffusionConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let dt_cap = 1e-2 / params.a1;
        if !(self.dt > 0.0 && self.dt <= dt_cap * (1.0 + 1e-12)) {
            return Err(Error::InvalidSimConfig(format!(
                "dt must lie in (0, {dt_cap}] (1% of the prey time scale), got {}",
                self.dt
            )));
        }
        if !(self.record_dt > 0.0) {
            return Err(Error::InvalidSimConfig("record_dt must be positive".into()));
        }
        sim::check_horizon(self.t_end, self.burn_in)?;
        sim::check_initial(self.initial)
    }
}

/// One-step log-coordinate increment for a given standard normal pair.
#[allow(clippy::too_many_arguments)]
pub fn log_euler_increment(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    x: f64,
    y: f64,
    u: f64,
    dt: f64,
    normals: [f64; 2],
) -> (f64, f64) {
    let s = &coeffs.sigma;
    let ito1 = 0.5 * (s[0][0] * s[0][0] + s[0][1] * s[0][1]);
    let ito2 = 0.5 * (s[1][0] * s[1][0] + s[1][1] * s[1][1]);
    let d1 = coeffs.abar1 - ito1 - params.b1 * x - params.c1 * y;
    let d2 = coeffs.abar2 - ito2 - hs.h(y) * u - params.b2 * y + params.c2 * x;
    let sq = dt.sqrt();
    (
        d1 * dt + sq * (s[0][0] * normals[0] + s[0][1] * normals[1]),
        d2 * dt + sq * (s[1][0] * normals[0] + s[1][1] * normals[1]),
    )
}

/// Path-wise integrator of the limit diffusion.
pub struct DiffusionStepper<'a, P: FeedbackPolicy + ?Sized> {
    params: &'a ModelParams,
    hs: &'a HarvestSpec,
    coeffs: &'a DiffusionCoeffs,
    policy: &'a P,
    dt: f64,
    rng: ChaCha8Rng,
    cur: Sample,
}

impl<'a, P: FeedbackPolicy + ?Sized> DiffusionStepper<'a, P> {
    pub fn new(
        params: &'a ModelParams,
        hs: &'a HarvestSpec,
        coeffs: &'a DiffusionCoeffs,
        policy: &'a P,
        dt: f64,
        initial: State2D,
        rng: ChaCha8Rng,
    ) -> Self {
        let (lx, ly) = (initial.x.ln(), initial.y.ln());
        Self {
            params,
            hs,
            coeffs,
            policy,
            dt,
            rng,
            cur: Sample {
                t: 0.0,
                log_x: lx,
                log_y: ly,
                x: initial.x,
                y: initial.y,
                u: policy.effort(lx, ly),
            },
        }
    }

    fn step(&mut self, h: f64, t_next: f64) -> Result<Sample> {
        let c = &self.cur;
        let normals = [self.rng.sample(StandardNormal), self.rng.sample(StandardNormal)];
        let (dlx, dly) = log_euler_increment(self.params, self.hs, self.coeffs, c.x, c.y, c.u, h, normals);
        let (lx, ly) = (c.log_x + dlx, c.log_y + dly);
        let (x, y) = (lx.exp(), ly.exp());
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite { time: t_next });
        }
        Ok(Sample {
            t: t_next,
            log_x: lx,
            log_y: ly,
            x,
            y,
            u: self.policy.effort(lx, ly),
        })
    }
}

impl<P: FeedbackPolicy + ?Sized> Stepper for DiffusionStepper<'_, P> {
    fn sample(&self) -> Sample {
        self.cur
    }

    fn advance_to<O: Observer>(&mut self, t_target: f64, obs: &mut O) -> Result<()> {
        while self.cur.t < t_target {
            let remaining = t_target - self.cur.t;
            let (h, t_next) = if remaining <= self.dt * (1.0 + 1e-9) {
                (remaining, t_target)
            } else {
                (self.dt, self.cur.t + self.dt)
            };
            let next = self.step(h, t_next)?;
            obs.interval(&self.cur, &next, (1.0, 0.0));
            self.cur = next;
        }
        Ok(())
    }
}

fn path_rng(cfg: &DiffusionConfig, path: u64) -> ChaCha8Rng {
    rng::stream_rng(cfg.seed, stage::DIFFUSION, path)
}

/// Simulates path `path` of a batch and collects its summary.
pub fn simulate_diffusion_path<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    policy: &P,
    cfg: &DiffusionConfig,
    path: u64,
    opts: &PathOptions,
) -> Result<PathOutput> {
    cfg.validate(params)?;
    let mut stepper = DiffusionStepper::new(params, hs, coeffs, policy, cfg.dt, cfg.initial, path_rng(cfg, path));
    let mut obs = StatsObserver::new(hs, cfg.burn_in, opts);
    drive(&mut stepper, cfg.t_end, cfg.burn_in, opts.record_dt, &mut obs)?;
    Ok(obs.finish(cfg.t_end))
}

/// Single trajectory recorded every `cfg.record_dt`.
pub fn simulate_diffusion<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    policy: &P,
    cfg: &DiffusionConfig,
) -> Result<PathRecord> {
    let opts = PathOptions {
        record_dt: Some(cfg.record_dt),
        tight_box: None,
    };
    let out = simulate_diffusion_path(params, hs, coeffs, policy, cfg, 0, &opts)?;
    Ok(out.record.expect("record requested"))
}

/// Runs `n_paths` independent paths in parallel.
pub fn run_diffusion_batch<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    policy: &P,
    cfg: &DiffusionConfig,
    n_paths: usize,
    opts: &PathOptions,
) -> Result<Batch> {
    cfg.validate(params)?;
    Batch::run(n_paths, None, cfg.t_end, cfg.burn_in, |path| {
        simulate_diffusion_path(params, hs, coeffs, policy, cfg, path, opts)
    })
}

/// Post-burn-in average reward over `n_paths` paths with standard error.
pub fn average_reward_diffusion<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    policy: &P,
    cfg: &DiffusionConfig,
    n_paths: usize,
) -> Result<RewardEstimate> {
    Ok(run_diffusion_batch(params, hs, coeffs, policy, cfg, n_paths, &PathOptions::default())?.reward())
}

/// Time-weighted occupation of the cells between grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Mass of cell `(i, j)` at `i + (nx - 1) * j`.
    pub mass: Vec<f64>,
    /// Mass outside the grid box. Cell masses and `outside` sum to 1.
    pub outside: f64,
}

impl OccupationHistogram {
    /// Writes the columns `x_lo,x_hi,y_lo,y_hi,mass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_lo", "x_hi", "y_lo", "y_hi", "mass"])?;
        let cx = self.x_edges.len() - 1;
        for (k, m) in self.mass.iter().enumerate() {
            let (i, j) = (k % cx, k / cx);
            w.write_record(&[
                self.x_edges[i].to_string(),
                self.x_edges[i + 1].to_string(),
                self.y_edges[j].to_string(),
                self.y_edges[j + 1].to_string(),
                m.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Adds another histogram on the same cells, weighting both equally
    /// per sample.
    pub fn merge(hists: &[OccupationHistogram]) -> Option<OccupationHistogram> {
        let first = hists.first()?;
        let n = hists.len() as f64;
        let mut out = first.clone();
        for (k, m) in out.mass.iter_mut().enumerate() {
            *m = hists.iter().map(|h| h.mass[k]).sum::<f64>() / n;
        }
        out.outside = hists.iter().map(|h| h.outside).sum::<f64>() / n;
        Some(out)
    }
}

/// Occupation measure of a sampled path (burn-in already removed) on the
/// cells `[x_i, x_{i+1}] x [y_j, y_{j+1}]` of `grid`. Every sample carries
/// equal weight.
pub fn occupation_histogram(path: &PathRecord, grid: &Grid) -> OccupationHistogram {
    let (cx, cy) = (grid.nx() - 1, grid.ny() - 1);
    let mut mass = vec![0.0; cx * cy];
    let mut outside = 0.0;
    let (x_min, x_max, y_min, y_max) = grid.bounds();
    let weight = 1.0 / path.len().max(1) as f64;
    for z in &path.states {
        if z.x < x_min || z.x > x_max || z.y < y_min || z.y > y_max {
            outside += weight;
            continue;
        }
        let (i, j, _, _) = grid.locate(z.x.ln(), z.y.ln());
        mass[i + cx * j] += weight;
    }
    OccupationHistogram {
        x_edges: (0..grid.nx()).map(|i| grid.x(i)).collect(),
        y_edges: (0..grid.ny()).map(|j| grid.y(j)).collect(),
        mass,
        outside,
    }
}

impl PathRecord {
    /// The part of the record at or after time `t0`.
    pub fn after(&self, t0: f64) -> PathRecord {
        let start = self.times.partition_point(|&t| t < t0);
        PathRecord {
            times: self.times[start..].to_vec(),
            states: self.states[start..].to_vec(),
            controls: self.controls[start..].to_vec(),
            rewards: self.rewards[start..].to_vec(),
            running_average: self.running_average[start..].to_vec(),
        }
    }
}

/// Sample means of `V(Z(t))^theta` at dyadic times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub theta: f64,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Largest ratio of consecutive means at or after burn-in.
    pub worst_ratio: f64,
    /// Allowed ratio (1 + noise tolerance).
    pub threshold: f64,
    pub pass: bool,
}

const MOMENT_TOLERANCE: f64 = 0.2;
const MOMENT_LEVELS: u32 = 10;

struct NoObserver;

impl Observer for NoObserver {
    fn interval(&mut self, _: &Sample, _: &Sample, _: (f64, f64)) {}
}

/// Estimates `E[V(Z(t))^theta]` at `t = t_end / 2^k`, `k = 10, ..., 0`,
/// over `n_paths` paths. Passes when the series never grows by more than
/// 20% between consecutive times at or after burn-in.
#[allow(clippy::too_many_arguments)]
pub fn moment_boundedness_check<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    coeffs: &DiffusionCoeffs,
    policy: &P,
    cfg: &DiffusionConfig,
    lp: &LyapunovParams,
    theta: f64,
    n_paths: usize,
) -> Result<MomentSeries> {
    cfg.validate(params)?;
    if !(theta > 0.0 && theta <= 0.5) {
        return Err(Error::InvalidSimConfig(format!(
            "theta must lie in (0, 0.5], got {theta}"
        )));
    }
    let times: Vec<f64> = (0..=MOMENT_LEVELS)
        .rev()
        .map(|k| cfg.t_end / 2f64.powi(k as i32))
        .collect();
    let batch = Batch::run(n_paths, None, cfg.t_end, cfg.burn_in, |path| {
        let rng = rng::stream_rng(cfg.seed, stage::MOMENT, path);
        let mut stepper = DiffusionStepper::new(params, hs, coeffs, policy, cfg.dt, cfg.initial, rng);
        let mut values = PathRecord::default();
        for &t in &times {
            stepper.advance_to(t, &mut NoObserver)?;
            let s = stepper.sample();
            values.times.push(t);
            values.rewards.push(lp.v(params, s.x, s.y).powf(theta));
        }
        // The record's reward column carries V^theta; only `stats` is
        // required by the batch type.
        Ok(PathOutput {
            stats: sim::PathStats {
                avg_reward: 0.0,
                mean_norm_sq: 0.0,
                sup_norm_sq: 0.0,
                outside_fraction: 0.0,
                terminal: stepper.sample().state(),
            },
            record: Some(values),
        })
    })?;
    let mut means = Vec::with_capacity(times.len());
    let mut stderrs = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let col: Vec<f64> = batch.records().map(|r| r.rewards[k]).collect();
        let (m, s) = mean_stderr(&col);
        means.push(m);
        stderrs.push(s);
    }
    let first = times.iter().position(|&t| t >= cfg.burn_in).unwrap_or(times.len() - 1);
    let worst_ratio = means[first..]
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY })
        .fold(if means[first..].len() < 2 { 1.0 } else { 0.0 }, f64::max);
    let threshold = 1.0 + MOMENT_TOLERANCE;
    let pass = worst_ratio.is_finite() && worst_ratio <= threshold;
    Ok(MomentSeries {
        theta,
        times,
        means,
        stderrs,
        worst_ratio,
        threshold,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Effectiveness, Yield};
    use crate::sim::ConstantEffort;

    fn params() -> ModelParams {
        ModelParams::new(2.0, 1.0, 1.0, -1.0, 1.0, 1.0, 2.0).unwrap()
    }

    fn hs() -> HarvestSpec {
        HarvestSpec::new(Effectiveness::Michaelis { kappa: 0.5 }, Yield::Linear).unwrap()
    }

    fn cfg(initial: State2D) -> DiffusionConfig {
        DiffusionConfig {
            dt: 0.005,
            t_end: 100.0,
            burn_in: 20.0,
            seed: 3,
            initial,
            record_dt: 1.0,
        }
    }

    #[test]
    fn validation() {
        let p = params();
        let mut c = cfg(State2D { x: 1.0, y: 1.0 });
        c.dt = 0.02;
        assert!(c.validate(&p).is_err());
        let mut c = cfg(State2D { x: 1.0, y: 0.0 });
        assert!(c.validate(&p).is_err());
        c.initial.y = 1.0;
        c.burn_in = 200.0;
        assert!(c.validate(&p).is_err());
    }

    #[test]
    fn noise_free_equilibrium_is_held() {
        let p = params();
        let z = p.equilibrium().unwrap();
        let coeffs = DiffusionCoeffs::deterministic(&p);
        let rec = simulate_diffusion(&p, &hs(), &coeffs, &ConstantEffort(0.0), &cfg(z)).unwrap();
        assert_eq!(rec.len(), 101);
        for s in &rec.states {
            assert!((s.x - z.x).abs() < 1e-6 && (s.y - z.y).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_effort_gives_zero_reward() {
        let p = params();
        let coeffs = DiffusionCoeffs::new(
            &p,
            &crate::markov_noise::NoiseCovariance::from_matrix([[0.2, 0.04], [0.04, 0.2]]).unwrap(),
        );
        let est = average_reward_diffusion(
            &p,
            &hs(),
            &coeffs,
            &ConstantEffort(0.0),
            &cfg(State2D { x: 1.0, y: 1.0 }),
            4,
        )
        .unwrap();
        assert_eq!(est.estimate, 0.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.epsilon, None);
    }

    #[test]
    fn log_step_matches_direct_euler_to_second_order() {
        let p = params();
        let h = hs();
        let coeffs = DiffusionCoeffs::new(
            &p,
            &crate::markov_noise::NoiseCovariance::from_matrix([[0.3, 0.05], [0.05, 0.2]]).unwrap(),
        );
        let (x, y, u) = (1.2, 0.7, 1.0);
        let normals = [0.8, -1.3];
        let gap = |coeffs: &DiffusionCoeffs, dt: f64| {
            let (dlx, dly) = log_euler_increment(&p, &h, coeffs, x, y, u, dt, normals);
            let s = coeffs.sigma;
            let sq = dt.sqrt();
            let direct_x = x
                + x * (coeffs.abar1 - p.b1 * x - p.c1 * y) * dt
                + x * sq * (s[0][0] * normals[0] + s[0][1] * normals[1]);
            let direct_y = y
                + y * (coeffs.abar2 - h.h(y) * u - p.b2 * y + p.c2 * x) * dt
                + y * sq * (s[1][0] * normals[0] + s[1][1] * normals[1]);
            (x * dlx.exp() - direct_x).abs().max((y * dly.exp() - direct_y).abs())
        };
        let still = DiffusionCoeffs::deterministic(&p);
        for dt in [1e-2, 1e-3, 1e-4] {
            // Without noise the two schemes differ by the Taylor remainder
            // of exp, which is O(dt^2).
            assert!(gap(&still, dt) < 10.0 * dt * dt);
            // A frozen normal draw leaves an O(dt) mismatch (x (sigma N)^2 dt / 2
            // against the Ito correction); both schemes agree in law to weak
            // order one.
            assert!(gap(&coeffs, dt) < 10.0 * dt);
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let p = params();
        let coeffs = DiffusionCoeffs::new(
            &p,
            &crate::markov_noise::NoiseCovariance::from_matrix([[0.2, 0.0], [0.0, 0.2]]).unwrap(),
        );
        let c = cfg(State2D { x: 1.0, y: 1.0 });
        let a = simulate_diffusion(&p, &hs(), &coeffs, &ConstantEffort(1.0), &c).unwrap();
        let b = simulate_diffusion(&p, &hs(), &coeffs, &ConstantEffort(1.0), &c).unwrap();
        assert_eq!(a, b);
        assert!(a.states.iter().all(|s| s.x > 0.0 && s.y > 0.0));
    }

    #[test]
    fn constant_path_occupies_one_cell() {
        let g = Grid::new(0.1, 10.0, 0.1, 10.0, 16, 16).unwrap();
        let rec = PathRecord {
            times: vec![0.0, 1.0, 2.0],
            states: vec![State2D { x: 1.0, y: 2.0 }; 3],
            controls: vec![0.0; 3],
            rewards: vec![0.0; 3],
            running_average: vec![0.0; 3],
        };
        let hist = occupation_histogram(&rec, &g);
        assert_eq!(hist.outside, 0.0);
        let nonzero: Vec<_> = hist.mass.iter().filter(|&&m| m > 0.0).collect();
        assert_eq!(nonzero, vec![&1.0]);
        let k = hist.mass.iter().position(|&m| m > 0.0).unwrap();
        let (i, j) = (k % 15, k / 15);
        assert!(hist.x_edges[i] <= 1.0 && 1.0 <= hist.x_edges[i + 1]);
        assert!(hist.y_edges[j] <= 2.0 && 2.0 <= hist.y_edges[j + 1]);
        let mut buf = Vec::new();
        hist.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 15 * 15);
    }
}
