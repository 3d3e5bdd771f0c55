//! Wideband-noise system as a piecewise-deterministic process.
//!
//! The fast chain `xi(t / eps^2)` holds each state for an exponential time
//! with rate `q(w) / eps^2`. Between jumps the populations follow the ODE
//! `z' = G(z, v(z)) + F(z, w) / eps`, integrated with classical RK4 in
//! `(log x, log y)`:
//!
//! ```text
//! (log x)' = a1 - b1 x - c1 y + r1(w) / eps
//! (log y)' = s2 - h(y) v(z) - b2 y + c2 x + r2(w) / eps
//! ```

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov_noise::{is_centered, stationary_distribution, JumpChainSpec};
use crate::model::{HarvestSpec, ModelParams, State2D};
use crate::rng::{self, stage};
use crate::sim::{
    self, drive, Batch, FeedbackPolicy, Observer, PathOptions, PathOutput, PathRecord, RewardEstimate, Sample,
    StatsObserver, Stepper,
};

fn default_record_dt() -> f64 {
    1.0
}

fn default_budget() -> f64 {
    5e8
}

/// Settings of a wideband run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidebandConfig {
    pub epsilon: f64,
    pub t_end: f64,
    pub burn_in: f64,
    /// Upper bound on the ODE substep.
    pub max_substep: f64,
    pub seed: u64,
    pub initial: State2D,
    #[serde(default = "default_record_dt")]
    pub record_dt: f64,
    /// Largest projected number of substeps plus jumps per path.
    #[serde(default = "default_budget")]
    pub max_substep_budget: f64,
}

impl WidebandConfig {
    pub fn validate(&self, spec: &JumpChainSpec) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidSimConfig(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.max_substep > 0.0) {
            return Err(Error::InvalidSimConfig("max_substep must be positive".into()));
        }
        if !(self.record_dt > 0.0) {
            return Err(Error::InvalidSimConfig("record_dt must be positive".into()));
        }
        sim::check_horizon(self.t_end, self.burn_in)?;
        sim::check_initial(self.initial)?;
        if !is_centered(spec) {
            return Err(Error::InvalidChain(
                "noise maps must be centered for the wideband system".into(),
            ));
        }
        let projected = self.projected_work(spec);
        if projected > self.max_substep_budget {
            return Err(Error::SubstepBudget {
                projected,
                budget: self.max_substep_budget,
            });
        }
        Ok(())
    }

    /// ODE substep cap `min(max_substep, eps^2 / (10 max q))`.
    pub fn substep(&self, spec: &JumpChainSpec) -> f64 {
        self.max_substep
            .min(self.epsilon * self.epsilon / (10.0 * spec.max_rate()))
    }

    /// Expected substeps plus jumps on one path.
    pub fn projected_work(&self, spec: &JumpChainSpec) -> f64 {
        self.t_end / self.substep(spec) + self.t_end * spec.max_rate() / (self.epsilon * self.epsilon)
    }
}

/// Path-wise integrator of the wideband system.
pub struct WidebandStepper<'a, P: FeedbackPolicy + ?Sized> {
    params: &'a ModelParams,
    hs: &'a HarvestSpec,
    spec: &'a JumpChainSpec,
    policy: &'a P,
    inv_eps: f64,
    rate_scale: f64,
    cap: f64,
    rng: ChaCha8Rng,
    w: usize,
    next_jump: f64,
    cur: Sample,
}

impl<'a, P: FeedbackPolicy + ?Sized> WidebandStepper<'a, P> {
    /// Starts at `initial` with the chain state drawn from `pi`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &'a ModelParams,
        hs: &'a HarvestSpec,
        spec: &'a JumpChainSpec,
        pi: &[f64],
        policy: &'a P,
        epsilon: f64,
        substep: f64,
        initial: State2D,
        mut rng: ChaCha8Rng,
    ) -> Self {
        let rate_scale = 1.0 / (epsilon * epsilon);
        let w = JumpChainSpec::draw_from(pi, &mut rng);
        let next_jump = spec.holding_time(w, rate_scale, &mut rng);
        let (lx, ly) = (initial.x.ln(), initial.y.ln());
        Self {
            params,
            hs,
            spec,
            policy,
            inv_eps: 1.0 / epsilon,
            rate_scale,
            cap: substep,
            rng,
            w,
            next_jump,
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

    /// Current chain state.
    pub fn chain_state(&self) -> usize {
        self.w
    }

    #[inline]
    fn field(&self, x: f64, y: f64, u: f64, n1: f64, n2: f64) -> (f64, f64) {
        let p = self.params;
        (
            p.a1 - p.b1 * x - p.c1 * y + n1,
            p.s2 - self.hs.h(y) * u - p.b2 * y + p.c2 * x + n2,
        )
    }

    #[inline]
    fn field_at(&self, lx: f64, ly: f64, n1: f64, n2: f64) -> (f64, f64) {
        let u = self.policy.effort(lx, ly);
        self.field(lx.exp(), ly.exp(), u, n1, n2)
    }

    fn rk4(&self, h: f64, t_next: f64) -> Result<Sample> {
        let c = &self.cur;
        let n1 = self.spec.r1()[self.w] * self.inv_eps;
        let n2 = self.spec.r2()[self.w] * self.inv_eps;
        let k1 = self.field(c.x, c.y, c.u, n1, n2);
        let k2 = self.field_at(c.log_x + 0.5 * h * k1.0, c.log_y + 0.5 * h * k1.1, n1, n2);
        let k3 = self.field_at(c.log_x + 0.5 * h * k2.0, c.log_y + 0.5 * h * k2.1, n1, n2);
        let k4 = self.field_at(c.log_x + h * k3.0, c.log_y + h * k3.1, n1, n2);
        let lx = c.log_x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let ly = c.log_y + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
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

impl<P: FeedbackPolicy + ?Sized> Stepper for WidebandStepper<'_, P> {
    fn sample(&self) -> Sample {
        self.cur
    }

    fn advance_to<O: Observer>(&mut self, t_target: f64, obs: &mut O) -> Result<()> {
        while self.cur.t < t_target {
            let seg_end = self.next_jump.min(t_target);
            let t0 = self.cur.t;
            let len = seg_end - t0;
            let n = (len / self.cap).ceil().max(1.0);
            let h = len / n;
            let n = n as u64;
            for k in 1..=n {
                let t_next = if k == n { seg_end } else { t0 + k as f64 * h };
                let next = self.rk4(h, t_next)?;
                obs.interval(&self.cur, &next, (0.5, 0.5));
                self.cur = next;
            }
            if seg_end == self.next_jump {
                self.w = self.spec.next_state(self.w, &mut self.rng);
                self.next_jump += self.spec.holding_time(self.w, self.rate_scale, &mut self.rng);
            }
        }
        Ok(())
    }
}

/// Simulates path `path` of a batch and collects its summary.
pub fn simulate_wideband_path<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    spec: &JumpChainSpec,
    policy: &P,
    cfg: &WidebandConfig,
    path: u64,
    opts: &PathOptions,
) -> Result<PathOutput> {
    cfg.validate(spec)?;
    let pi = stationary_distribution(spec);
    run_path(params, hs, spec, &pi, policy, cfg, path, opts)
}

#[allow(clippy::too_many_arguments)]
fn run_path<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    spec: &JumpChainSpec,
    pi: &[f64],
    policy: &P,
    cfg: &WidebandConfig,
    path: u64,
    opts: &PathOptions,
) -> Result<PathOutput> {
    let rng = rng::stream_rng(cfg.seed, stage::WIDEBAND, path);
    let mut stepper = WidebandStepper::new(
        params,
        hs,
        spec,
        pi,
        policy,
        cfg.epsilon,
        cfg.substep(spec),
        cfg.initial,
        rng,
    );
    let mut obs = StatsObserver::new(hs, cfg.burn_in, opts);
    drive(&mut stepper, cfg.t_end, cfg.burn_in, opts.record_dt, &mut obs)?;
    Ok(obs.finish(cfg.t_end))
}

/// Single trajectory recorded every `cfg.record_dt`.
pub fn simulate_wideband<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    spec: &JumpChainSpec,
    policy: &P,
    cfg: &WidebandConfig,
) -> Result<PathRecord> {
    let opts = PathOptions {
        record_dt: Some(cfg.record_dt),
        tight_box: None,
    };
    let out = simulate_wideband_path(params, hs, spec, policy, cfg, 0, &opts)?;
    Ok(out.record.expect("record requested"))
}

/// Runs `n_paths` independent paths in parallel.
pub fn run_wideband_batch<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    spec: &JumpChainSpec,
    policy: &P,
    cfg: &WidebandConfig,
    n_paths: usize,
    opts: &PathOptions,
) -> Result<Batch> {
    cfg.validate(spec)?;
    let pi = stationary_distribution(spec);
    Batch::run(n_paths, Some(cfg.epsilon), cfg.t_end, cfg.burn_in, |path| {
        run_path(params, hs, spec, &pi, policy, cfg, path, opts)
    })
}

/// Post-burn-in average reward over `n_paths` paths with standard error.
pub fn average_reward_wideband<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    hs: &HarvestSpec,
    spec: &JumpChainSpec,
    policy: &P,
    cfg: &WidebandConfig,
    n_paths: usize,
) -> Result<RewardEstimate> {
    Ok(run_wideband_batch(params, hs, spec, policy, cfg, n_paths, &PathOptions::default())?.reward())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov_noise::center_noise;
    use crate::model::{Effectiveness, Yield};
    use crate::sim::ConstantEffort;

    fn params() -> ModelParams {
        ModelParams::new(2.0, 1.0, 1.0, -1.0, 1.0, 1.0, 2.0).unwrap()
    }

    fn hs() -> HarvestSpec {
        HarvestSpec::new(Effectiveness::Michaelis { kappa: 0.5 }, Yield::Linear).unwrap()
    }

    fn chain(r1: Vec<f64>, r2: Vec<f64>) -> JumpChainSpec {
        center_noise(
            &JumpChainSpec::new(
                vec!["a".into(), "b".into(), "c".into()],
                vec![1.0, 1.0, 1.0],
                vec![vec![0.0, 0.7, 0.3], vec![0.3, 0.0, 0.7], vec![0.7, 0.3, 0.0]],
                r1,
                r2,
            )
            .unwrap(),
        )
    }

    fn cfg(eps: f64, t_end: f64) -> WidebandConfig {
        WidebandConfig {
            epsilon: eps,
            t_end,
            burn_in: t_end / 5.0,
            max_substep: 0.01,
            seed: 5,
            initial: State2D { x: 1.0, y: 1.0 },
            record_dt: 1.0,
            max_substep_budget: 5e8,
        }
    }

    #[test]
    fn validation() {
        let spec = chain(vec![0.6, -0.2, -0.4], vec![0.0, 0.5, -0.5]);
        assert!(cfg(1.5, 10.0).validate(&spec).is_err());
        let mut c = cfg(0.5, 10.0);
        c.burn_in = 10.0;
        assert!(c.validate(&spec).is_err());
        let uncentered = spec.with_noise(vec![1.0; 3], vec![0.0; 3]).unwrap();
        assert!(cfg(0.5, 10.0).validate(&uncentered).is_err());
        let mut tight = cfg(1e-3, 1e3);
        tight.max_substep_budget = 1e9;
        assert!(matches!(tight.validate(&spec), Err(Error::SubstepBudget { .. })));
    }

    #[test]
    fn substep_rule() {
        let spec = chain(vec![0.6, -0.2, -0.4], vec![0.0, 0.5, -0.5]);
        assert_eq!(cfg(1.0, 10.0).substep(&spec), 0.01);
        assert!((cfg(0.1, 10.0).substep(&spec) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn noise_free_equilibrium_is_held() {
        let p = params();
        let spec = chain(vec![0.0; 3], vec![0.0; 3]);
        let mut c = cfg(0.3, 100.0);
        c.initial = p.equilibrium().unwrap();
        let rec = simulate_wideband(&p, &hs(), &spec, &ConstantEffort(0.0), &c).unwrap();
        for s in &rec.states {
            assert!((s.x - 1.5).abs() < 1e-6 && (s.y - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn runs_are_reproducible_and_positive() {
        let p = params();
        let spec = chain(vec![0.6, -0.2, -0.4], vec![0.0, 0.5, -0.5]);
        let c = cfg(0.5, 50.0);
        let a = simulate_wideband(&p, &hs(), &spec, &ConstantEffort(1.0), &c).unwrap();
        let b = simulate_wideband(&p, &hs(), &spec, &ConstantEffort(1.0), &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
        assert!(a.states.iter().all(|s| s.x > 0.0 && s.y > 0.0));
        assert!(a.running_average.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn zero_effort_gives_zero_reward() {
        let p = params();
        let spec = chain(vec![0.6, -0.2, -0.4], vec![0.0, 0.5, -0.5]);
        let est = average_reward_wideband(&p, &hs(), &spec, &ConstantEffort(0.0), &cfg(0.5, 20.0), 3).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert_eq!(est.epsilon, Some(0.5));
    }
}
