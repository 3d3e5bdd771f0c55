//! Ergodic HJB solver on a truncated log grid.
//!
//! The controlled limit diffusion is replaced by a locally consistent
//! Markov chain on a grid in `(log x, log y)`; the chain's average-reward
//! optimality equation is solved by relative value iteration, and the
//! maximizing feedback policy can be smoothed into a Lipschitz one.

mod grid;
pub mod mdp;
mod policy;
mod solver;

pub use grid::Grid;
pub use mdp::{build_mdp, pointwise_max, Mdp};
pub use policy::{lipschitz_regularize, PolicyTable};
pub use solver::{
    constant_policy_reward, evaluate_policy, hjb_residual, solve_average_reward, SolverOptions, ValueFunction,
};
