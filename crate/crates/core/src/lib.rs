//! Tree-structured Gaussian graphical models: Chow-Liu structure learning,
//! exact and approximate error exponents, extremal tree shapes and Monte
//! Carlo estimates of the structure-learning error probability.

pub mod approx_rate;
pub mod chow_liu;
pub mod empirical;
pub mod error;
pub mod exact_rate;
pub mod exponent;
pub mod extremal;
pub mod model;
pub mod simulate;
mod optimize;

pub use approx_rate::{approx_rate_closed_form, approx_rate_snr, rho_crit, ApproxRateInputs, RHO_CRIT};
pub use chow_liu::{learn_structure, max_weight_spanning_tree, structures_equal};
pub use empirical::{derive_seed, empirical_covariance, empirical_mi, sample, EmpiricalMoments, SampleBatch, Sampler};
pub use error::{Error, Result};
pub use exact_rate::{
    exact_error_exponent, gaussian_kl, solve_crossover_rate, CrossoverProblem, ExactExponent, RateResult,
    SolverOptions,
};
pub use exponent::{
    approx_exponent_full, approx_exponent_linear, approx_exponent_triangle, edge_pair_weight, Argmin,
    ExponentReport, LinearEvaluator, Method,
};
pub use model::{mutual_information, CorrelationAssignment, Edge, GaussianTreeModel, ModelFile, TreeStructure};
pub use extremal::{
    attach_edge, best_attachment, make_chain, make_hybrid, make_sorted_chain, make_star, subtree_exponent_check,
    verify_extremal, worst_attachment, ExtremalReport, Placements, TreeEnumeration,
};
pub use simulate::{
    error_curve, estimate_error_probability, fig5_experiment, fig8_models, wilson_interval, ErrorCurve, ErrorEstimate,
    Fig5Row,
};
