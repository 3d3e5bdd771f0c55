//! Pieces shared by both simulators: feedback policies, path observers,
//! path records, per-path summaries and order-independent aggregation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{reward_rate, HarvestSpec, State2D};

/// A Markov feedback policy evaluated in log coordinates.
pub trait FeedbackPolicy: Sync {
    fn effort(&self, log_x: f64, log_y: f64) -> f64;

    /// Largest effort the policy can return.
    fn max_effort(&self) -> f64;
}

/// The policy `u = const`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantEffort(pub f64);

impl FeedbackPolicy for ConstantEffort {
    #[inline]
    fn effort(&self, _: f64, _: f64) -> f64 {
        self.0
    }

    fn max_effort(&self) -> f64 {
        self.0
    }
}

/// State of a path at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub log_x: f64,
    pub log_y: f64,
    pub x: f64,
    pub y: f64,
    pub u: f64,
}

impl Sample {
    pub fn state(&self) -> State2D {
        State2D { x: self.x, y: self.y }
    }
}

/// Receives the substeps of a simulated path.
///
/// `interval` is called once per substep with the samples at both ends and
/// the quadrature weights the simulator uses for time integrals: the
/// integral of `f` over the substep is `dt * (wl f(left) + wr f(right))`.
pub trait Observer {
    fn interval(&mut self, left: &Sample, right: &Sample, weights: (f64, f64));

    /// Called at `t = 0` and at every requested checkpoint.
    fn checkpoint(&mut self, _sample: &Sample) {}
}

/// A path simulator that can be advanced to arbitrary times.
pub trait Stepper {
    fn sample(&self) -> Sample;

    /// Advances exactly to `t_target`, reporting every substep to `obs`.
    fn advance_to<O: Observer>(&mut self, t_target: f64, obs: &mut O) -> Result<()>;
}

/// Drives `stepper` to `t_end`, stopping at `burn_in` and at multiples of
/// `record_dt` so observers see those instants as checkpoints.
pub fn drive<S: Stepper, O: Observer>(
    stepper: &mut S,
    t_end: f64,
    burn_in: f64,
    record_dt: Option<f64>,
    obs: &mut O,
) -> Result<()> {
    obs.checkpoint(&stepper.sample());
    let mut k = 1u64;
    loop {
        let t = stepper.sample().t;
        if t >= t_end {
            return Ok(());
        }
        let next_record = record_dt.map_or(f64::INFINITY, |d| k as f64 * d);
        let mut target = t_end.min(next_record);
        if t < burn_in {
            target = target.min(burn_in);
        }
        stepper.advance_to(target, obs)?;
        if target == next_record {
            obs.checkpoint(&stepper.sample());
            k += 1;
        }
    }
}

/// Time-stamped trajectory sampled at fixed spacing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<State2D>,
    pub controls: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Reward integral from 0 divided by elapsed time (0 at t = 0).
    pub running_average: Vec<f64>,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes the columns `t,x,y,u,reward_rate,running_avg`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "u", "reward_rate", "running_avg"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.times[i].to_string(),
                self.states[i].x.to_string(),
                self.states[i].y.to_string(),
                self.controls[i].to_string(),
                self.rewards[i].to_string(),
                self.running_average[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Per-path summary over the post-burn-in window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    /// Time-average reward after burn-in.
    pub avg_reward: f64,
    /// Time-average of `|Z|^2` after burn-in.
    pub mean_norm_sq: f64,
    /// Supremum of `|Z|^2` over the whole path.
    pub sup_norm_sq: f64,
    /// Fraction of post-burn-in time spent outside the tightness box.
    pub outside_fraction: f64,
    pub terminal: State2D,
}

/// Observer collecting [`PathStats`] and an optional [`PathRecord`].
pub struct StatsObserver<'a> {
    hs: &'a HarvestSpec,
    burn_in: f64,
    tight_box: Option<(f64, f64)>,
    record: Option<PathRecord>,
    reward_total: f64,
    reward_post: f64,
    norm_post: f64,
    outside_post: f64,
    sup_norm_sq: f64,
    last: Option<Sample>,
}

impl<'a> StatsObserver<'a> {
    pub fn new(hs: &'a HarvestSpec, burn_in: f64, opts: &PathOptions) -> Self {
        Self {
            hs,
            burn_in,
            tight_box: opts.tight_box,
            record: opts.record_dt.map(|_| PathRecord::default()),
            reward_total: 0.0,
            reward_post: 0.0,
            norm_post: 0.0,
            outside_post: 0.0,
            sup_norm_sq: 0.0,
            last: None,
        }
    }

    fn outside(&self, s: &Sample) -> f64 {
        match self.tight_box {
            Some((lo, hi)) if !(lo..=hi).contains(&s.x) || !(lo..=hi).contains(&s.y) => 1.0,
            _ => 0.0,
        }
    }

    pub fn finish(self, t_end: f64) -> PathOutput {
        let window = t_end - self.burn_in;
        let last = self.last.expect("path has at least one sample");
        PathOutput {
            stats: PathStats {
                avg_reward: self.reward_post / window,
                mean_norm_sq: self.norm_post / window,
                sup_norm_sq: self.sup_norm_sq,
                outside_fraction: self.outside_post / window,
                terminal: last.state(),
            },
            record: self.record,
        }
    }
}

impl Observer for StatsObserver<'_> {
    fn interval(&mut self, left: &Sample, right: &Sample, (wl, wr): (f64, f64)) {
        let dt = right.t - left.t;
        let rl = reward_rate(self.hs, left.y, left.u);
        let rr = reward_rate(self.hs, right.y, right.u);
        let reward = dt * (wl * rl + wr * rr);
        self.reward_total += reward;
        if left.t >= self.burn_in {
            self.reward_post += reward;
            self.norm_post += dt * (wl * left.state().norm_sq() + wr * right.state().norm_sq());
            self.outside_post += dt * (wl * self.outside(left) + wr * self.outside(right));
        }
        self.sup_norm_sq = self.sup_norm_sq.max(right.state().norm_sq());
        self.last = Some(*right);
    }

    fn checkpoint(&mut self, s: &Sample) {
        self.sup_norm_sq = self.sup_norm_sq.max(s.state().norm_sq());
        self.last = Some(*s);
        if let Some(rec) = self.record.as_mut() {
            rec.times.push(s.t);
            rec.states.push(s.state());
            rec.controls.push(s.u);
            rec.rewards.push(reward_rate(self.hs, s.y, s.u));
            rec.running_average
                .push(if s.t > 0.0 { self.reward_total / s.t } else { 0.0 });
        }
    }
}

/// What to collect along a path besides the summary statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathOptions {
    /// Record spacing; `None` keeps no trajectory.
    pub record_dt: Option<f64>,
    /// Box `[lo, hi]^2` for the outside-time fraction.
    pub tight_box: Option<(f64, f64)>,
}

/// Result of one simulated path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutput {
    pub stats: PathStats,
    pub record: Option<PathRecord>,
}

/// Mean and across-path standard error of a reward functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEstimate {
    /// Wideband scale; `None` for the limit diffusion.
    pub epsilon: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub t_end: f64,
    pub burn_in: f64,
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Outputs of `n` independent paths, in path-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub paths: Vec<PathOutput>,
    pub epsilon: Option<f64>,
    pub t_end: f64,
    pub burn_in: f64,
}

impl Batch {
    /// Runs `path_fn(i)` for `i in 0..n` on the rayon pool; results are
    /// collected in index order so the batch does not depend on scheduling.
    pub fn run<F>(n_paths: usize, epsilon: Option<f64>, t_end: f64, burn_in: f64, path_fn: F) -> Result<Self>
    where
        F: Fn(u64) -> Result<PathOutput> + Sync,
    {
        if n_paths == 0 {
            return Err(Error::InvalidSimConfig("n_paths must be at least 1".into()));
        }
        let paths = (0..n_paths as u64)
            .into_par_iter()
            .map(&path_fn)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            paths,
            epsilon,
            t_end,
            burn_in,
        })
    }

    fn column(&self, f: impl Fn(&PathStats) -> f64) -> Vec<f64> {
        self.paths.iter().map(|p| f(&p.stats)).collect()
    }

    pub fn reward(&self) -> RewardEstimate {
        let (estimate, stderr) = mean_stderr(&self.column(|s| s.avg_reward));
        RewardEstimate {
            epsilon: self.epsilon,
            estimate,
            stderr,
            n_paths: self.paths.len(),
            t_end: self.t_end,
            burn_in: self.burn_in,
        }
    }

    /// Mean over paths of the outside-box time fraction.
    pub fn outside_fraction(&self) -> f64 {
        mean_stderr(&self.column(|s| s.outside_fraction)).0
    }

    /// Mean over paths of the post-burn-in time average of `|Z|^2`.
    pub fn mean_norm_sq(&self) -> f64 {
        mean_stderr(&self.column(|s| s.mean_norm_sq)).0
    }

    pub fn mean_sup_norm_sq(&self) -> f64 {
        mean_stderr(&self.column(|s| s.sup_norm_sq)).0
    }

    pub fn terminal_y(&self) -> Vec<f64> {
        self.column(|s| s.terminal.y)
    }

    pub fn records(&self) -> impl Iterator<Item = &PathRecord> {
        self.paths.iter().filter_map(|p| p.record.as_ref())
    }
}

/// Empirical quantile with linear interpolation.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub(crate) fn check_horizon(t_end: f64, burn_in: f64) -> Result<()> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidSimConfig(format!("t_end must be positive, got {t_end}")));
    }
    if !(burn_in >= 0.0 && burn_in < t_end) {
        return Err(Error::InvalidSimConfig(format!(
            "burn_in must lie in [0, t_end), got {burn_in}"
        )));
    }
    Ok(())
}

pub(crate) fn check_initial(z: State2D) -> Result<()> {
    if !z.is_interior() {
        return Err(Error::InvalidState(format!(
            "initial state ({}, {}) must lie in the open quadrant",
            z.x, z.y
        )));
    }
    Ok(())
}
