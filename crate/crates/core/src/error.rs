use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid jump chain: {0}")]
    InvalidChain(String),

    #[error("jump chain is reducible: states {class:?} form a closed class that does not reach {outside:?}")]
    Reducible { class: Vec<String>, outside: Vec<String> },

    #[error("Poisson equation right-hand side is not centered: pi . phi = {mean:e}")]
    UncenteredRhs { mean: f64 },

    #[error("linear solve failed: residual {residual:e} exceeds tolerance {tolerance:e}")]
    SingularSolve { residual: f64, tolerance: f64 },

    #[error("averaged covariance matrix is indefinite: smallest eigenvalue {eigenvalue:e}")]
    IndefiniteCovariance { eigenvalue: f64 },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("harvest effort {effort} outside [0, {max}]")]
    EffortOutOfRange { effort: f64, max: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },

    #[error(
        "projected substep count {projected:.3e} exceeds the budget {budget:.3e}; \
         raise max_substep_budget or use a larger epsilon"
    )]
    SubstepBudget { projected: f64, budget: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "negative transition probability {value:e} at node ({i}, {j}): the cross term a12 is too \
         large for this spacing; refine the grid or rotate coordinates"
    )]
    NegativeProbability { i: usize, j: usize, value: f64 },

    #[error("relative value iteration did not converge in {iterations} iterations (span {span:e})")]
    NotConverged { iterations: usize, span: f64 },

    #[error("parameters are not persistent (margin {margin}); {context}")]
    NotPersistent { margin: f64, context: String },

    #[error("parameters are persistent (margin {margin}); extinction study refused")]
    Persistent { margin: f64 },

    #[error("no feasible Lyapunov exponents: {0}")]
    NoFeasibleExponents(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("report is missing the '{0}' stage output")]
    MissingStage(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
