//! Monte Carlo estimates of the structure-learning error probability, the
//! four-node star crossover experiment and the ten-node shape comparison.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx_rate::approx_rate_snr;
use crate::chow_liu::{learn_structure, structures_equal};
use crate::empirical::{derive_seed, Sampler};
use crate::error::{Error, Result};
use crate::exact_rate::{exact_error_exponent, solve_crossover_rate, CrossoverProblem, SolverOptions};
use crate::exponent::approx_exponent_linear;
use crate::extremal::make_hybrid;
use crate::model::{mutual_information, GaussianTreeModel, ModelFile, TreeStructure};

const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `errors` successes out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub n: usize,
    pub trials: u64,
    pub errors: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Fraction of `trials` independent `n`-sample draws whose Chow-Liu tree
/// differs from the true one. Trial `t` uses seed `derive_seed(seed, t)`, so
/// counts do not depend on the thread count.
pub fn estimate_error_probability(model: &GaussianTreeModel, n: usize, trials: u64, seed: u64) -> Result<ErrorEstimate> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidInput("need n >= 1 and trials >= 1".into()));
    }
    let sampler = Sampler::new(model);
    let truth = model.tree();
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let moments = sampler.moments(n, derive_seed(seed, t));
            let learned = learn_structure(&moments)?;
            Ok(u64::from(!structures_equal(&learned, truth)?))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let (ci_lo, ci_hi) = wilson_interval(errors, trials);
    Ok(ErrorEstimate { n, trials, errors, p_hat: errors as f64 / trials as f64, ci_lo, ci_hi })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    #[serde(flatten)]
    pub estimate: ErrorEstimate,
    /// `-(1/n) ln p̂`, or `-(1/n) ln(1/trials)` when no error was seen.
    pub sim_exponent: f64,
    /// Set when `sim_exponent` is only a lower bound (zero observed errors).
    pub lower_bound: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorCurve {
    pub model: ModelFile,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
    /// Exact exponent, when requested.
    pub k_exact: Option<f64>,
    pub k_tilde: f64,
    /// Negated least-squares slope of `ln p̂` against `n` over cells with errors.
    pub regression_slope: Option<f64>,
}

/// Error probabilities over an ascending grid of sample sizes. The cell for
/// `n` uses base seed `derive_seed(seed, n)`.
pub fn error_curve(
    model: &GaussianTreeModel,
    grid: &[usize],
    trials: u64,
    seed: u64,
    exact: Option<&SolverOptions>,
) -> Result<ErrorCurve> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n grid must be non-empty, positive and strictly ascending".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &n in grid {
        let estimate = estimate_error_probability(model, n, trials, derive_seed(seed, n as u64))?;
        let lower_bound = estimate.errors == 0;
        let p = if lower_bound { 1.0 / trials as f64 } else { estimate.p_hat };
        points.push(CurvePoint { estimate, sim_exponent: -p.ln() / n as f64, lower_bound });
    }
    let observed: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| !p.lower_bound)
        .map(|p| (p.estimate.n as f64, p.estimate.p_hat.ln()))
        .collect();
    let regression_slope = (observed.len() >= 2).then(|| {
        let k = observed.len() as f64;
        let mx = observed.iter().map(|o| o.0).sum::<f64>() / k;
        let my = observed.iter().map(|o| o.1).sum::<f64>() / k;
        let sxy: f64 = observed.iter().map(|o| (o.0 - mx) * (o.1 - my)).sum();
        let sxx: f64 = observed.iter().map(|o| (o.0 - mx).powi(2)).sum();
        -sxy / sxx
    });
    let k_exact = match exact {
        Some(opts) => Some(exact_error_exponent(model, opts)?.value),
        None => None,
    };
    Ok(ErrorCurve {
        model: model.to_file(),
        seed,
        points,
        k_exact,
        k_tilde: approx_exponent_linear(model)?.value,
        regression_slope,
    })
}

/// Covariance of the four-node star whose precision matrix has unit diagonal
/// and `gamma` between the centre and each leaf.
pub fn symmetric_star_covariance(gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0 && gamma < 1.0 / 3f64.sqrt()) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    let mut k = DMatrix::<f64>::identity(4, 4);
    for j in 1..4 {
        k[(0, j)] = gamma;
        k[(j, 0)] = gamma;
    }
    let inv = k.cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fig5Row {
    pub gamma: f64,
    pub exact_rate: f64,
    pub approx_rate: f64,
    /// `I(p_e) - I(p_e')` for the edge `(1, 2)` and the non-edge `(3, 4)`.
    pub mi_gap: f64,
    /// `|J - J̃| / J`.
    pub rel_gap: f64,
}

/// Crossover problem for edge `(1, 2)` against non-edge `(3, 4)` of the star.
pub fn fig5_problem(gamma: f64) -> Result<CrossoverProblem> {
    CrossoverProblem::new(symmetric_star_covariance(gamma)?, (0, 1), (2, 3))
}

/// Exact and approximate crossover rates across a grid of `gamma`.
pub fn fig5_experiment(gammas: &[f64], opts: &SolverOptions) -> Result<Vec<Fig5Row>> {
    gammas
        .iter()
        .map(|&gamma| {
            let problem = fig5_problem(gamma)?;
            let exact = solve_crossover_rate(&problem, opts)?.rate;
            let approx = approx_rate_snr(&problem)?;
            let mi_gap = mutual_information(problem.rho_e())? - mutual_information(problem.rho_ep())?;
            Ok(Fig5Row { gamma, exact_rate: exact, approx_rate: approx, mi_gap, rel_gap: (exact - approx).abs() / exact })
        })
        .collect()
}

/// `0.1, 0.2, …, 0.9` in an order fixed by `seed`.
pub fn fig8_correlations(seed: u64) -> Vec<f64> {
    let mut rho: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    rho.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    rho
}

/// Chain, hybrid and star on ten nodes carrying the same shuffled correlations
/// (in lexicographic edge order).
pub fn fig8_models(seed: u64) -> Result<Vec<(&'static str, GaussianTreeModel)>> {
    let rho = fig8_correlations(seed);
    let shapes = [
        ("chain", TreeStructure::chain(10)?),
        ("hybrid", make_hybrid(10)?),
        ("star", TreeStructure::star(10)?),
    ];
    shapes
        .into_iter()
        .map(|(name, tree)| Ok((name, GaussianTreeModel::from_edge_values(tree, &rho)?)))
        .collect()
}
