use thiserror::Error;

use crate::model::Edge;

/// Errors raised by model construction, estimation and rate computations.
#[derive(Error, Debug)]
pub enum Error {
    #[error("not a spanning tree: {0}")]
    NotATree(String),

    #[error("invalid correlation {rho} on edge {edge}: must lie in (-1, 1) and be nonzero")]
    InvalidCorrelation { edge: Edge, rho: f64 },

    #[error("correlation {0} is outside (-1, 1)")]
    CorrelationOutOfRange(f64),

    #[error("node {node} is out of range for a model with {d} nodes")]
    NodeOutOfRange { node: usize, d: usize },

    #[error("marginal over the kept nodes is not a tree: node {node} has degree {degree}")]
    NotTreeMarginalizable { node: usize, degree: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("zero or negative variance at node {0}")]
    DegenerateVariance(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("denominator vanishes: both correlations are zero")]
    DegenerateDenominator,

    #[error("closed form needs |rho_e| >= |rho_e'| (got rho_e = {rho_e}, rho_e' = {rho_ep})")]
    NonDominantPair { rho_e: f64, rho_ep: f64 },

    #[error("invalid crossover problem: {0}")]
    InvalidProblem(String),

    #[error("no start of the crossover solver converged (best gradient norm {best_grad_norm:e})")]
    SolverDiverged { best_grad_norm: f64 },

    #[error("crossover solve for edge {edge}, non-edge {non_edge} failed: {source}")]
    Crossover {
        edge: Edge,
        non_edge: Edge,
        #[source]
        source: Box<Error>,
    },

    #[error("hybrid tree needs an even node count >= 6, got {0}")]
    OddDimension(usize),

    #[error("|rho_new| = {rho_new} is not below the smallest edge correlation {min_edge}")]
    CorrelationTooLarge { rho_new: f64, min_edge: f64 },

    #[error("gamma {0} is outside (0, 1/sqrt(3))")]
    GammaOutOfRange(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
