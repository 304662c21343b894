//! Exact crossover rate: minimum KL divergence to the set of covariances
//! where the two squared correlations coincide, and the exact exponent built
//! from it.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_positive_definite, Edge, GaussianTreeModel};
use crate::optimize::{bfgs, newton_polish, Minimum};

/// Zero-mean Gaussian KL divergence `D(N(0,q) || N(0,p))`.
pub fn gaussian_kl(q: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let m = p.nrows();
    if !p.is_square() {
        return Err(Error::DimensionMismatch { expected: p.ncols(), found: m });
    }
    if q.nrows() != m || q.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, found: q.nrows() });
    }
    let lp = p.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let lq = q.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let lpm = lp.l();
    let lqm = lq.l();
    // tr(p⁻¹q) = ‖Lp⁻¹ Lq‖²_F
    let x = lpm.solve_lower_triangular(&lqm).ok_or(Error::NotPositiveDefinite)?;
    let tr = x.norm_squared();
    Ok(0.5 * (tr - m as f64 - logdet(&lqm) + logdet(&lpm)))
}

/// Crossover subproblem on the 3 or 4 nodes covered by an edge `e` and a
/// non-edge `e'`. Index pairs are 0-based positions in `sigma`.
#[derive(Clone, Debug)]
pub struct CrossoverProblem {
    sigma: DMatrix<f64>,
    edge: (usize, usize),
    non_edge: (usize, usize),
}

impl CrossoverProblem {
    pub fn new(sigma: DMatrix<f64>, edge: (usize, usize), non_edge: (usize, usize)) -> Result<Self> {
        let m = sigma.nrows();
        if !sigma.is_square() || !(m == 3 || m == 4) {
            return Err(Error::InvalidProblem(format!("sigma must be 3x3 or 4x4, got {}x{}", m, sigma.ncols())));
        }
        let scale = sigma.amax().max(1.0);
        if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidProblem("sigma is not symmetric".into()));
        }
        let norm = |(a, b): (usize, usize)| (a.min(b), a.max(b));
        let (edge, non_edge) = (norm(edge), norm(non_edge));
        for (a, b) in [edge, non_edge] {
            if a == b || b >= m {
                return Err(Error::InvalidProblem(format!("bad index pair ({a}, {b}) for m = {m}")));
            }
        }
        if edge == non_edge {
            return Err(Error::InvalidProblem("edge and non-edge coincide".into()));
        }
        let mut used = [edge.0, edge.1, non_edge.0, non_edge.1];
        used.sort_unstable();
        let mut distinct = used.to_vec();
        distinct.dedup();
        if distinct.len() != m {
            return Err(Error::InvalidProblem(format!(
                "the pairs cover {} nodes but sigma has {m}",
                distinct.len()
            )));
        }
        check_positive_definite(&sigma)?;
        Ok(CrossoverProblem { sigma, edge, non_edge })
    }

    /// Subproblem from a tree model: the nodes of `edge` come first, then the
    /// remaining nodes of `non_edge` in increasing order.
    pub fn from_model(model: &GaussianTreeModel, edge: Edge, non_edge: Edge) -> Result<Self> {
        let d = model.d();
        for v in edge.nodes().into_iter().chain(non_edge.nodes()) {
            if v >= d {
                return Err(Error::NodeOutOfRange { node: v + 1, d });
            }
        }
        let mut nodes = vec![edge.lo(), edge.hi()];
        for v in non_edge.nodes() {
            if !nodes.contains(&v) {
                nodes.push(v);
            }
        }
        let pos = |v: usize| nodes.iter().position(|&u| u == v).unwrap();
        let cov = model.covariance();
        let sigma = DMatrix::from_fn(nodes.len(), nodes.len(), |a, b| cov[(nodes[a], nodes[b])]);
        Self::new(sigma, (0, 1), (pos(non_edge.lo()), pos(non_edge.hi())))
    }

    pub fn m(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn edge(&self) -> (usize, usize) {
        self.edge
    }

    pub fn non_edge(&self) -> (usize, usize) {
        self.non_edge
    }

    pub fn is_adjacent(&self) -> bool {
        self.m() == 3
    }

    fn corr(&self, (a, b): (usize, usize)) -> f64 {
        self.sigma[(a, b)] / (self.sigma[(a, a)] * self.sigma[(b, b)]).sqrt()
    }

    pub fn rho_e(&self) -> f64 {
        self.corr(self.edge)
    }

    pub fn rho_ep(&self) -> f64 {
        self.corr(self.non_edge)
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub starts: usize,
    pub perturbation: f64,
    pub seed: u64,
    pub grad_tol: f64,
    pub constraint_tol: f64,
    pub max_iter: usize,
    pub penalty_schedule: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            starts: 8,
            perturbation: 0.1,
            seed: 0x5eed,
            grad_tol: 1e-8,
            constraint_tol: 1e-9,
            max_iter: 10_000,
            penalty_schedule: vec![1e2, 1e4, 1e6, 1e8, 1e10],
        }
    }
}

#[derive(Clone, Debug)]
pub struct RateResult {
    pub rate: f64,
    pub q_star: DMatrix<f64>,
    pub starts_used: usize,
    pub starts_converged: usize,
    pub constraint_violation: f64,
    pub spread: f64,
}

/// Squared-correlation gap `ρ_Q(e)² - ρ_Q(e')²`.
fn constraint(q: &DMatrix<f64>, (i, j): (usize, usize), (k, l): (usize, usize)) -> f64 {
    q[(i, j)].powi(2) / (q[(i, i)] * q[(j, j)]) - q[(k, l)].powi(2) / (q[(k, k)] * q[(l, l)])
}

/// Normalised problem data shared by every start.
struct Workspace {
    m: usize,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    logdet_r: f64,
    e: (usize, usize),
    ep: (usize, usize),
}

impl Workspace {
    /// KL(Q || R) and its gradient with respect to Q in the full-sum
    /// convention (`G = ½(R⁻¹ - Q⁻¹)`). `None` if Q is not PD.
    fn kl(&self, q: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        let chol = q.clone().cholesky()?;
        let logdet_q = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !logdet_q.is_finite() {
            return None;
        }
        let q_inv = chol.inverse();
        let tr = self.r_inv.component_mul(q).sum();
        let value = 0.5 * (tr - self.m as f64 - logdet_q + self.logdet_r);
        Some((value, (&self.r_inv - q_inv) * 0.5))
    }

    /// Unpacks lower-triangular coordinates (log diagonal) into Q = LLᵀ and L.
    fn unpack(&self, theta: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut l = DMatrix::zeros(self.m, self.m);
        let mut t = 0;
        for i in 0..self.m {
            for k in 0..=i {
                l[(i, k)] = if i == k { theta[t].exp() } else { theta[t] };
                t += 1;
            }
        }
        (&l * l.transpose(), l)
    }

    fn pack(&self, q: &DMatrix<f64>) -> Option<Vec<f64>> {
        let l = q.clone().cholesky()?.unpack();
        let mut theta = Vec::with_capacity(self.m * (self.m + 1) / 2);
        for i in 0..self.m {
            for k in 0..=i {
                theta.push(if i == k { l[(i, k)].ln() } else { l[(i, k)] });
            }
        }
        Some(theta)
    }

    /// Penalised objective KL + μh² over the Cholesky coordinates.
    fn penalised(&self, mu: f64, theta: &[f64], grad: &mut [f64]) -> Option<f64> {
        let (q, l) = self.unpack(theta);
        let (kl, mut g) = self.kl(&q)?;
        let h = constraint(&q, self.e, self.ep);
        let coeff = 2.0 * mu * h;
        for (sign, (i, j)) in [(1.0, self.e), (-1.0, self.ep)] {
            let (qij, qii, qjj) = (q[(i, j)], q[(i, i)], q[(j, j)]);
            let off = sign * coeff * qij / (qii * qjj);
            g[(i, j)] += off;
            g[(j, i)] += off;
            g[(i, i)] -= sign * coeff * qij * qij / (qii * qii * qjj);
            g[(j, j)] -= sign * coeff * qij * qij / (qii * qjj * qjj);
        }
        // ∂f/∂L = 2 G L for symmetric G
        let dl = (&g * &l) * 2.0;
        let mut t = 0;
        for i in 0..self.m {
            for k in 0..=i {
                grad[t] = if i == k { dl[(i, k)] * l[(i, k)] } else { dl[(i, k)] };
                t += 1;
            }
        }
        Some(kl + mu * h * h)
    }

    /// Upper-triangle positions of Q kept as free variables in the polish.
    fn free_positions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.m {
            for b in a..self.m {
                if (a, b) != self.ep {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Builds Q with the non-edge entry fixed by the constraint on branch `s`.
    fn eliminated(&self, pos: &[(usize, usize)], s: f64, x: &[f64]) -> Option<DMatrix<f64>> {
        let mut q = DMatrix::zeros(self.m, self.m);
        for (&(a, b), &v) in pos.iter().zip(x) {
            q[(a, b)] = v;
            q[(b, a)] = v;
        }
        if (0..self.m).any(|a| q[(a, a)] <= 0.0) {
            return None;
        }
        let ((i, j), (k, l)) = (self.e, self.ep);
        let t = s * q[(i, j)] * (q[(k, k)] * q[(l, l)] / (q[(i, i)] * q[(j, j)])).sqrt();
        q[(k, l)] = t;
        q[(l, k)] = t;
        Some(q)
    }

    fn polish_objective(&self, pos: &[(usize, usize)], s: f64, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        let q = self.eliminated(pos, s, x)?;
        let (value, g) = self.kl(&q)?;
        let ((i, j), (k, l)) = (self.e, self.ep);
        let t = q[(k, l)];
        let g_t = 2.0 * g[(k, l)];
        let ratio = (q[(k, k)] * q[(l, l)] / (q[(i, i)] * q[(j, j)])).sqrt();
        for (idx, &(a, b)) in pos.iter().enumerate() {
            let mut d = if a == b { g[(a, a)] } else { 2.0 * g[(a, b)] };
            if (a, b) == (i, j) {
                d += g_t * s * ratio;
            }
            if a == b {
                let mut dt = 0.0;
                if a == i || a == j {
                    dt -= t / (2.0 * q[(a, a)]);
                }
                if a == k || a == l {
                    dt += t / (2.0 * q[(a, a)]);
                }
                d += g_t * dt;
            }
            grad[idx] = d;
        }
        Some(value)
    }
}

struct StartOutcome {
    value: f64,
    q: DMatrix<f64>,
    grad_norm: f64,
    violation: f64,
}

fn run_start(ws: &Workspace, q0: &DMatrix<f64>, opts: &SolverOptions) -> Option<StartOutcome> {
    let stages = opts.penalty_schedule.len() + 2;
    let per_stage = (opts.max_iter / stages).max(1);
    let mut theta = ws.pack(q0)?;
    for &mu in &opts.penalty_schedule {
        let f = |x: &[f64], g: &mut [f64]| ws.penalised(mu, x, g);
        let m = bfgs(&f, theta.clone(), 1e-6, per_stage.min(400))?;
        theta = m.x;
        // The polish enforces the constraint exactly; the penalty only has to
        // pick a basin.
        if constraint(&ws.unpack(&theta).0, ws.e, ws.ep).abs() < 1e-6 {
            break;
        }
    }
    let (qp, _) = ws.unpack(&theta);
    let ((i, j), (k, l)) = (ws.e, ws.ep);
    let mut natural = (qp[(i, j)] * qp[(k, l)]).signum();
    if natural == 0.0 || natural.is_nan() {
        natural = if ws.r[(i, j)] * ws.r[(k, l)] < 0.0 { -1.0 } else { 1.0 };
    }
    let pos = ws.free_positions();
    // The constraint set has two sheets, ρ_Q(e') = ±ρ_Q(e); polish on both.
    // Negating a node of e' outside e moves the penalty point onto the other
    // sheet while keeping it positive definite.
    let flip = if k != i && k != j { k } else { l };
    let flipped = DMatrix::from_fn(ws.m, ws.m, |a, b| {
        let sign = if (a == flip) != (b == flip) { -1.0 } else { 1.0 };
        sign * qp[(a, b)]
    });
    [(natural, &qp), (-natural, &flipped)]
        .into_iter()
        .filter_map(|(s, from)| {
            let x0: Vec<f64> = pos.iter().map(|&(a, b)| from[(a, b)]).collect();
            let f = |x: &[f64], g: &mut [f64]| ws.polish_objective(&pos, s, x, g);
            // BFGS stalls near 1e-7 on badly scaled problems; Newton finishes.
            let mut best: Minimum = bfgs(&f, x0, opts.grad_tol * 1e-2, per_stage.min(300))?;
            if best.grad_norm >= opts.grad_tol * 1e-2 {
                best = newton_polish(&f, best, 20);
            }
            let q = ws.eliminated(&pos, s, &best.x)?;
            let violation = constraint(&q, ws.e, ws.ep).abs();
            Some(StartOutcome { value: best.value, q, grad_norm: best.grad_norm, violation })
        })
        .filter(|o| o.grad_norm < opts.grad_tol && o.violation < opts.constraint_tol)
        .min_by(|a, b| a.value.total_cmp(&b.value))
}

/// Minimises `KL(Q || Σ)` subject to `ρ_Q(e)² = ρ_Q(e')²` from several starts.
pub fn solve_crossover_rate(problem: &CrossoverProblem, opts: &SolverOptions) -> Result<RateResult> {
    let m = problem.m();
    let sigma = problem.sigma();
    let h0 = constraint(sigma, problem.edge, problem.non_edge);
    if h0.abs() <= 1e-14 {
        return Ok(RateResult {
            rate: 0.0,
            q_star: sigma.clone(),
            starts_used: 0,
            starts_converged: 0,
            constraint_violation: h0.abs(),
            spread: 0.0,
        });
    }
    // The rate does not depend on the variances; solve on the correlation matrix.
    let scale: Vec<f64> = (0..m).map(|a| sigma[(a, a)].sqrt()).collect();
    let r = DMatrix::from_fn(m, m, |a, b| sigma[(a, b)] / (scale[a] * scale[b]));
    let chol = r.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let logdet_r = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ws = Workspace { m, r_inv: chol.inverse(), r, logdet_r, e: problem.edge, ep: problem.non_edge };

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let starts = opts.starts.max(1);
    let mut initial = vec![ws.r.clone()];
    while initial.len() < starts {
        let e = DMatrix::<f64>::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
        let a = DMatrix::<f64>::identity(m, m) + e * opts.perturbation;
        initial.push(&a * &ws.r * a.transpose());
    }

    let outcomes: Vec<StartOutcome> = initial.iter().filter_map(|q0| run_start(&ws, q0, opts)).collect();
    let best_grad_norm = outcomes.iter().map(|o| o.grad_norm).fold(f64::INFINITY, f64::min);
    let converged: Vec<&StartOutcome> = outcomes
        .iter()
        .filter(|o| o.grad_norm < opts.grad_tol && o.violation < opts.constraint_tol)
        .collect();
    let Some(best) = converged.iter().min_by(|a, b| a.value.total_cmp(&b.value)) else {
        return Err(Error::SolverDiverged { best_grad_norm });
    };
    let worst = converged.iter().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
    let q_star = DMatrix::from_fn(m, m, |a, b| best.q[(a, b)] * scale[a] * scale[b]);
    Ok(RateResult {
        rate: best.value.max(0.0),
        q_star,
        starts_used: starts,
        starts_converged: converged.len(),
        constraint_violation: best.violation,
        spread: worst - best.value,
    })
}

/// Exact exponent with the pair that attains it. `value` is infinite when
/// the tree has no non-edges (d = 2).
#[derive(Clone, Debug, Serialize)]
pub struct ExactExponent {
    #[serde(serialize_with = "crate::exponent::serialize_exponent")]
    pub value: f64,
    pub argmin: Option<(Edge, Edge)>,
    pub pairs_solved: usize,
    pub max_spread: f64,
    pub max_violation: f64,
}

/// `K_p`: smallest crossover rate over non-edges `e'` and edges on their path.
pub fn exact_error_exponent(model: &GaussianTreeModel, opts: &SolverOptions) -> Result<ExactExponent> {
    let mut pairs = Vec::new();
    for ep in model.tree().non_edges() {
        for e in model.path(ep)? {
            pairs.push((e, ep));
        }
    }
    let results: Vec<Result<RateResult>> = pairs
        .par_iter()
        .map(|&(e, ep)| {
            CrossoverProblem::from_model(model, e, ep)
                .and_then(|p| solve_crossover_rate(&p, opts))
                .map_err(|source| Error::Crossover { edge: e, non_edge: ep, source: Box::new(source) })
        })
        .collect();
    let mut out = ExactExponent {
        value: f64::INFINITY,
        argmin: None,
        pairs_solved: pairs.len(),
        max_spread: 0.0,
        max_violation: 0.0,
    };
    for (&pair, res) in pairs.iter().zip(results) {
        let r = res?;
        out.max_spread = out.max_spread.max(r.spread);
        out.max_violation = out.max_violation.max(r.constraint_violation);
        if r.rate < out.value {
            out.value = r.rate;
            out.argmin = Some(pair);
        }
    }
    Ok(out)
}
