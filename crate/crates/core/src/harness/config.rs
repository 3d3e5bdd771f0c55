use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion_sim::DiffusionConfig;
use crate::error::{Error, Result};
use crate::hjb::{Grid, SolverOptions};
use crate::lyapunov::{BoundaryOptions, ComparisonOptions};
use crate::markov_noise::{center_noise, JumpChainSpec};
use crate::model::{HarvestSpec, ModelParams, State2D};
use crate::wideband_sim::WidebandConfig;

/// Version of the configuration layout understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Ecology and harvest shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub params: ModelParams,
    pub harvest: HarvestSpec,
}

/// HJB solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
    /// Radius of the smoothing kernel applied to the solver's policy.
    pub regularization_radius: usize,
    /// Also solve on the doubled grid and compare the optimal rewards.
    #[serde(default)]
    pub refinement_check: bool,
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            reference: None,
            warm_start: true,
        }
    }
}

/// Diffusion run template; the seed comes from the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSection {
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub initial: State2D,
    #[serde(default = "one")]
    pub record_dt: f64,
}

/// Wideband run template; `epsilon` comes from the ladder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidebandSection {
    pub t_end: f64,
    pub burn_in: f64,
    pub max_substep: f64,
    pub initial: State2D,
    /// Paths per wideband estimate.
    pub n_paths: usize,
    #[serde(default = "one")]
    pub record_dt: f64,
    #[serde(default = "default_budget")]
    pub max_substep_budget: f64,
}

fn one() -> f64 {
    1.0
}

fn default_budget() -> f64 {
    5e8
}

/// Simulation templates for both systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    pub diffusion: DiffusionSection,
    pub wideband: WidebandSection,
}

/// Box `[delta, R]^2` used by the tightness proxy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessSection {
    pub delta: f64,
    pub r: f64,
    /// Largest allowed fraction of post-burn-in time outside the box.
    pub max_outside: f64,
}

/// Lyapunov verification settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySection {
    /// Radius `H` outside which `L_u V <= -V` is checked.
    pub box_size: f64,
    /// Nodes per axis of the drift-scan grid.
    pub scan_points: usize,
    /// The scan grid spans `[scan_min, scan_max_factor * H]` on both axes.
    pub scan_min: f64,
    pub scan_max_factor: f64,
    /// Random nodes for the wideband perturbation check.
    pub sandwich_nodes: usize,
    pub boundary_delta: f64,
    pub t1: f64,
    pub k0: f64,
    pub horizons: usize,
    pub boundary_paths: usize,
    pub dt: f64,
    pub comparison_t0: f64,
    pub comparison_paths: usize,
}

/// A complete experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelSection,
    pub chain: JumpChainSpec,
    pub grid: Grid,
    pub solver: SolverSection,
    pub sim: SimSection,
    pub epsilon_ladder: Vec<f64>,
    /// Paths per diffusion estimate.
    pub n_paths: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tightness: TightnessSection,
    pub verify: VerifySection,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("plain data serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn params(&self) -> &ModelParams {
        &self.model.params
    }

    pub fn harvest(&self) -> &HarvestSpec {
        &self.model.harvest
    }

    /// Diffusion settings with the experiment seed.
    pub fn diffusion(&self) -> DiffusionConfig {
        let d = &self.sim.diffusion;
        DiffusionConfig {
            dt: d.dt,
            t_end: d.t_end,
            burn_in: d.burn_in,
            seed: self.seed,
            initial: d.initial,
            record_dt: d.record_dt,
        }
    }

    /// Wideband settings for one rung of the ladder.
    pub fn wideband(&self, epsilon: f64) -> WidebandConfig {
        let w = &self.sim.wideband;
        WidebandConfig {
            epsilon,
            t_end: w.t_end,
            burn_in: w.burn_in,
            max_substep: w.max_substep,
            seed: self.seed,
            initial: w.initial,
            record_dt: w.record_dt,
            max_substep_budget: w.max_substep_budget,
        }
    }

    pub fn boundary_options(&self) -> BoundaryOptions {
        let v = &self.verify;
        BoundaryOptions {
            delta: v.boundary_delta,
            t1: v.t1,
            k0: v.k0,
            horizons: v.horizons,
            n_paths: v.boundary_paths,
            dt: v.dt,
            seed: self.seed,
        }
    }

    pub fn comparison_options(&self) -> ComparisonOptions {
        let v = &self.verify;
        ComparisonOptions {
            delta: v.boundary_delta,
            t0: v.comparison_t0,
            n_paths: v.comparison_paths,
            dt: v.dt,
            seed: self.seed,
        }
    }

    /// Smallest rung of the ladder.
    pub fn smallest_epsilon(&self) -> f64 {
        *self.epsilon_ladder.last().expect("validated ladder is non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.epsilon_ladder.is_empty() {
            return bad("epsilon_ladder is empty".into());
        }
        if let Some(e) = self.epsilon_ladder.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return bad(format!("epsilon {e} outside (0, 1]"));
        }
        if self.epsilon_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon_ladder must be strictly decreasing".into());
        }
        if self.n_paths < 2 || self.sim.wideband.n_paths < 2 {
            return bad("at least two paths are needed for a standard error".into());
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iters == 0 {
            return bad("solver tol and max_iters must be positive".into());
        }
        let t = &self.tightness;
        if !(t.delta > 0.0 && t.r > t.delta && (0.0..=1.0).contains(&t.max_outside)) {
            return bad("tightness box needs 0 < delta < R and max_outside in [0, 1]".into());
        }
        let v = &self.verify;
        if !(v.box_size > 0.0 && v.scan_min > 0.0 && v.scan_max_factor > 1.0 && v.scan_points >= 16) {
            return bad("verify: box_size, scan_min positive, scan_max_factor > 1, scan_points >= 16".into());
        }
        if v.scan_min >= v.box_size {
            return bad("verify: scan_min must lie below box_size".into());
        }
        self.diffusion().validate(self.params())?;
        let centered = center_noise(&self.chain);
        for &eps in &self.epsilon_ladder {
            self.wideband(eps).validate(&centered)?;
        }
        Ok(())
    }
}
