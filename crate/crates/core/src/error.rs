use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("cannot normalize model: {0}")]
    Normalize(String),

    #[error("matrix is not square and nonnegative: {0}")]
    NotNonnegative(String),

    #[error("spectral radius did not converge after {iterations} iterations (bracket width {gap:e})")]
    SpectralNonConvergence { iterations: usize, gap: f64 },

    #[error("fixed-point iteration lost monotonicity at step {step}, feature {index} (increase {increase:e})")]
    Monotonicity {
        step: usize,
        index: usize,
        increase: f64,
    },

    #[error("equilibrium not reached: {0}")]
    EquilibriumNotConverged(String),

    #[error("integration step rejected at t = {t}: state clamped by {clamp:e} (limit {limit:e}); reduce dt")]
    StepRejected { t: f64, clamp: f64, limit: f64 },

    #[error("invalid integration parameters: {0}")]
    InvalidIntegration(String),

    #[error("coupling marginal mismatch on the {side} side at index {index}: deviation {deviation:e}")]
    Marginal {
        side: &'static str,
        index: usize,
        deviation: f64,
    },

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("map does not push the left weights onto the right weights: index {index} deviates by {deviation:e}")]
    Pushforward { index: usize, deviation: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("partition is not a valid reduction: blocks {block_a} and {block_b} disagree on {quantity} by {deviation:e}")]
    NotReducible {
        block_a: usize,
        block_b: usize,
        quantity: &'static str,
        deviation: f64,
    },

    #[error("grid of {required} points exceeds the budget of {budget}; reduce the model first or lower the resolution")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("cannot compare frontiers: {0}")]
    FrontierMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
}

pub(crate) fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: what.to_string(),
            expected,
            found,
        })
    }
}
