//! Long-run-average harvesting of a predator-prey system driven by fast
//! jump noise.
//!
//! The prey `x` and predator `y` follow a Lotka-Volterra system whose
//! growth rates are perturbed by `r(xi(t / eps^2)) / eps`, where `xi` is a
//! finite continuous-time Markov chain. As `eps -> 0` the system converges
//! to a diffusion; the crate solves the ergodic harvesting problem for that
//! diffusion, simulates the resulting policy on both the diffusion and the
//! wideband system, and checks the Lyapunov conditions that make the
//! limiting policy near-optimal.
//!
//! * [`markov_noise`]: the noise chain, its stationary law, Poisson
//!   equation and averaged covariance.
//! * [`model`]: parameters, drift, harvesting shapes and persistence.
//! * [`diffusion_sim`] and [`wideband_sim`]: path simulators sharing the
//!   observer machinery in [`sim`].
//! * [`hjb`]: the ergodic HJB solver and gridded policies.
//! * [`lyapunov`]: exponent selection, drift scans and boundary checks.
//! * [`harness`]: configuration, the end-to-end pipeline and artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion_sim;
pub mod error;
pub mod harness;
pub mod hjb;
pub mod lyapunov;
pub mod markov_noise;
pub mod model;
pub mod rng;
pub mod sim;
pub mod wideband_sim;

pub use error::{Error, Result};
