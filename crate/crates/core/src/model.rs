//! Predator-prey harvesting model.
//!
//! Prey `x` grows logistically and is eaten by the predator `y`; the predator
//! has a signed intrinsic rate `s2` (negative means it dies out without
//! prey) and is harvested with effort `u` and effectiveness `h(y)`. The
//! harvest is valued through the yield function `Phi(y h(y) u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov_noise::{JumpChainSpec, NoiseCovariance};

const DEGENERATE_MARGIN: f64 = 1e-12;

/// Ecological constants and the effort cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    /// Signed predator intrinsic rate.
    pub s2: f64,
    pub b2: f64,
    pub c2: f64,
    /// Maximum harvest effort.
    pub max_effort: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RawParams {
    a1: f64,
    b1: f64,
    c1: f64,
    s2: f64,
    b2: f64,
    c2: f64,
    #[serde(rename = "M")]
    max_effort: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.a1, r.b1, r.c1, r.s2, r.b2, r.c2, r.max_effort)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            a1: p.a1,
            b1: p.b1,
            c1: p.c1,
            s2: p.s2,
            b2: p.b2,
            c2: p.c2,
            max_effort: p.max_effort,
        }
    }
}

impl ModelParams {
    /// Validates positivity of the ecological constants. The effort cap may
    /// be zero, which turns harvesting off.
    pub fn new(a1: f64, b1: f64, c1: f64, s2: f64, b2: f64, c2: f64, max_effort: f64) -> Result<Self> {
        for (name, v) in [("a1", a1), ("b1", b1), ("c1", c1), ("b2", b2), ("c2", c2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !s2.is_finite() {
            return Err(Error::InvalidParams(format!("s2 must be finite, got {s2}")));
        }
        if !(max_effort.is_finite() && max_effort >= 0.0) {
            return Err(Error::InvalidParams(format!("M must be nonnegative, got {max_effort}")));
        }
        Ok(Self {
            a1,
            b1,
            c1,
            s2,
            b2,
            c2,
            max_effort,
        })
    }

    /// `s2 + c2 a1 / b1`: positive means the predator persists.
    pub fn persistence_margin(&self) -> f64 {
        self.s2 + self.c2 * self.a1 / self.b1
    }

    pub fn with_max_effort(&self, max_effort: f64) -> Result<Self> {
        Self::new(self.a1, self.b1, self.c1, self.s2, self.b2, self.c2, max_effort)
    }

    /// Interior rest point of the unharvested, noise-free system, if the
    /// predator persists.
    pub fn equilibrium(&self) -> Option<State2D> {
        let det = self.b1 * self.b2 + self.c1 * self.c2;
        let x = (self.a1 * self.b2 - self.c1 * self.s2) / det;
        let y = (self.b1 * self.s2 + self.c2 * self.a1) / det;
        (x > 0.0 && y > 0.0).then_some(State2D { x, y })
    }

    fn check_effort(&self, u: f64) -> Result<()> {
        if u.is_nan() || u < 0.0 || u > self.max_effort {
            return Err(Error::EffortOutOfRange {
                effort: u,
                max: self.max_effort,
            });
        }
        Ok(())
    }
}

/// Harvest effectiveness `h: [0, inf) -> [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Effectiveness {
    /// `min(1, y / kappa)`
    Ramp { kappa: f64 },
    /// `y / (kappa + y)`
    Michaelis { kappa: f64 },
}

/// Yield function applied to the harvested biomass rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Yield {
    /// `Phi(r) = r`
    Linear,
    /// `Phi(r) = r / (c + r)`
    Saturating { c: f64 },
}

/// Effectiveness and yield pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHarvest", into = "RawHarvest")]
pub struct HarvestSpec {
    pub effectiveness: Effectiveness,
    pub yield_fn: Yield,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RawHarvest {
    effectiveness: Effectiveness,
    #[serde(rename = "yield")]
    yield_fn: Yield,
}

impl TryFrom<RawHarvest> for HarvestSpec {
    type Error = Error;

    fn try_from(r: RawHarvest) -> Result<Self> {
        HarvestSpec::new(r.effectiveness, r.yield_fn)
    }
}

impl From<HarvestSpec> for RawHarvest {
    fn from(h: HarvestSpec) -> Self {
        RawHarvest {
            effectiveness: h.effectiveness,
            yield_fn: h.yield_fn,
        }
    }
}

impl HarvestSpec {
    pub fn new(effectiveness: Effectiveness, yield_fn: Yield) -> Result<Self> {
        let kappa = match effectiveness {
            Effectiveness::Ramp { kappa } | Effectiveness::Michaelis { kappa } => kappa,
        };
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidParams(format!("kappa must be positive, got {kappa}")));
        }
        if let Yield::Saturating { c } = yield_fn {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "saturation constant must be positive, got {c}"
                )));
            }
        }
        Ok(Self {
            effectiveness,
            yield_fn,
        })
    }

    /// Built-in pair selected by name, e.g. `("michaelis", 0.5, "linear", 0.0)`.
    pub fn from_names(effectiveness: &str, kappa: f64, yield_fn: &str, c: f64) -> Result<Self> {
        let h = match effectiveness {
            "ramp" => Effectiveness::Ramp { kappa },
            "michaelis" => Effectiveness::Michaelis { kappa },
            other => return Err(Error::InvalidParams(format!("unknown effectiveness '{other}'"))),
        };
        let phi = match yield_fn {
            "linear" => Yield::Linear,
            "saturating" => Yield::Saturating { c },
            other => return Err(Error::InvalidParams(format!("unknown yield '{other}'"))),
        };
        Self::new(h, phi)
    }

    /// Effectiveness `h(y)`.
    pub fn h(&self, y: f64) -> f64 {
        match self.effectiveness {
            Effectiveness::Ramp { kappa } => (y / kappa).min(1.0),
            Effectiveness::Michaelis { kappa } => y / (kappa + y),
        }
    }

    /// Global Lipschitz constant of `h`.
    pub fn h_lipschitz(&self) -> f64 {
        match self.effectiveness {
            Effectiveness::Ramp { kappa } | Effectiveness::Michaelis { kappa } => 1.0 / kappa,
        }
    }

    /// Yield `Phi(r)`.
    pub fn phi(&self, r: f64) -> f64 {
        match self.yield_fn {
            Yield::Linear => r,
            Yield::Saturating { c } => r / (c + r),
        }
    }

    pub fn phi_is_linear(&self) -> bool {
        matches!(self.yield_fn, Yield::Linear)
    }

    /// Checks `h(0) = 0`, monotonicity and range on `[0, y_max]`, and
    /// `Phi(0) = 0` with a finite sampled Lipschitz constant on `[0, r_max]`.
    /// Returns the sampled Lipschitz constant of `Phi`.
    pub fn check_shape(&self, y_max: f64, r_max: f64) -> Result<f64> {
        const SAMPLES: usize = 4096;
        if self.h(0.0) != 0.0 || self.phi(0.0) != 0.0 {
            return Err(Error::InvalidParams("h(0) and Phi(0) must vanish".into()));
        }
        let mut prev = 0.0;
        for k in 1..=SAMPLES {
            let v = self.h(y_max * k as f64 / SAMPLES as f64);
            if !(v >= prev && v <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "effectiveness not nondecreasing in [0, 1] near y = {}",
                    y_max * k as f64 / SAMPLES as f64
                )));
            }
            prev = v;
        }
        let step = r_max / SAMPLES as f64;
        let lip = (0..SAMPLES)
            .map(|k| {
                let r = k as f64 * step;
                ((self.phi(r + step) - self.phi(r)) / step).abs()
            })
            .fold(0.0, f64::max);
        if !lip.is_finite() {
            return Err(Error::InvalidParams(
                "yield is not Lipschitz on the sampled range".into(),
            ));
        }
        Ok(lip)
    }
}

/// Population state `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State2D {
    pub x: f64,
    pub y: f64,
}

impl State2D {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0) {
            return Err(Error::InvalidState(format!(
                "({x}, {y}) is not a finite point of the closed quadrant"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn is_interior(&self) -> bool {
        self.x > 0.0 && self.y > 0.0 && self.x.is_finite() && self.y.is_finite()
    }
}

/// Per-capita growth rates `(G1/x, G2/y)`, i.e. the drift of `(log x, log y)`
/// without the noise correction.
#[inline]
pub fn per_capita_rates(params: &ModelParams, hs: &HarvestSpec, x: f64, y: f64, u: f64) -> (f64, f64) {
    (
        params.a1 - params.b1 * x - params.c1 * y,
        params.s2 - hs.h(y) * u - params.b2 * y + params.c2 * x,
    )
}

/// Controlled drift `G(z, u)`.
pub fn drift_g(params: &ModelParams, hs: &HarvestSpec, z: State2D, u: f64) -> Result<[f64; 2]> {
    params.check_effort(u)?;
    let (g1, g2) = per_capita_rates(params, hs, z.x, z.y, u);
    Ok([z.x * g1, z.y * g2])
}

/// Noise field `F(z, w) = (x r1(w), y r2(w))`.
pub fn noise_f(spec: &JumpChainSpec, z: State2D, w: usize) -> [f64; 2] {
    [z.x * spec.r1()[w], z.y * spec.r2()[w]]
}

/// Instantaneous reward `Phi(y h(y) u)`.
#[inline]
pub fn reward_rate(hs: &HarvestSpec, y: f64, u: f64) -> f64 {
    hs.phi(y * hs.h(y) * u)
}

/// Long-run fate of the predator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Persistent,
    Extinct,
}

/// Outcome of [`persistence_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Persistence {
    pub regime: Regime,
    pub margin: f64,
    /// Margin within `1e-12` of zero: the classification is not reliable.
    pub degenerate: bool,
}

/// Classifies the parameters by the sign of `s2 + c2 a1 / b1`.
pub fn persistence_check(params: &ModelParams) -> Persistence {
    let margin = params.persistence_margin();
    let degenerate = margin.abs() <= DEGENERATE_MARGIN;
    if degenerate {
        log::warn!("persistence margin {margin:e} is at the threshold; classification is degenerate");
    }
    Persistence {
        regime: if margin > 0.0 {
            Regime::Persistent
        } else {
            Regime::Extinct
        },
        margin,
        degenerate,
    }
}

/// Coefficients of the limit diffusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCoeffs {
    #[serde(rename = "A")]
    pub a: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
    /// `a1 + a11 / 2`
    pub abar1: f64,
    /// `s2 + a22 / 2`
    pub abar2: f64,
}

impl DiffusionCoeffs {
    pub fn new(params: &ModelParams, cov: &NoiseCovariance) -> Self {
        Self {
            a: cov.a,
            sigma: cov.sigma,
            abar1: params.a1 + cov.a[0][0] / 2.0,
            abar2: params.s2 + cov.a[1][1] / 2.0,
        }
    }

    /// Noise-free coefficients.
    pub fn deterministic(params: &ModelParams) -> Self {
        Self::new(params, &NoiseCovariance::zero())
    }

    pub fn covariance(&self) -> NoiseCovariance {
        NoiseCovariance {
            a: self.a,
            sigma: self.sigma,
        }
    }

    /// Drift of `(log x, log y)` under effort `u`, including the Ito
    /// correction `-a_ii / 2`.
    #[inline]
    pub fn log_drift(&self, params: &ModelParams, hs: &HarvestSpec, x: f64, y: f64, u: f64) -> (f64, f64) {
        (
            self.abar1 - self.a[0][0] / 2.0 - params.b1 * x - params.c1 * y,
            self.abar2 - self.a[1][1] / 2.0 - hs.h(y) * u - params.b2 * y + params.c2 * x,
        )
    }
}
