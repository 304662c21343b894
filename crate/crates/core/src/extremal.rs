//! Extremal tree shapes for the approximate exponent: star, chain and hybrid
//! constructions, Prüfer enumeration of labelled trees, and brute-force scans.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx_rate::RHO_CRIT;
use crate::error::{Error, Result};
use crate::exponent::{approx_exponent_linear, LinearEvaluator};
use crate::model::{CorrelationAssignment, Edge, GaussianTreeModel, TreeStructure};

/// Decodes a Prüfer sequence (0-based labels) into its labelled tree.
pub fn prufer_decode(d: usize, seq: &[usize]) -> Result<TreeStructure> {
    if d < 2 || seq.len() + 2 != d {
        return Err(Error::InvalidInput(format!("Prüfer sequence of length {} for d = {d}", seq.len())));
    }
    if let Some(&v) = seq.iter().find(|&&v| v >= d) {
        return Err(Error::NodeOutOfRange { node: v + 1, d });
    }
    let mut degree = vec![1usize; d];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(d - 1);
    for &v in seq {
        let leaf = (0..d).find(|&u| degree[u] == 1).expect("a leaf always exists");
        edges.push(Edge::new(leaf, v));
        degree[leaf] = 0;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..d).filter(|&u| degree[u] == 1).collect();
    edges.push(Edge::new(rest[0], rest[1]));
    TreeStructure::new(d, edges)
}

/// Prüfer sequence of a tree (inverse of [`prufer_decode`]).
pub fn prufer_encode(tree: &TreeStructure) -> Vec<usize> {
    let d = tree.d();
    let mut degree: Vec<usize> = (0..d).map(|v| tree.degree(v)).collect();
    let mut removed = vec![false; d];
    let mut seq = Vec::with_capacity(d.saturating_sub(2));
    for _ in 0..d.saturating_sub(2) {
        let leaf = (0..d).find(|&u| !removed[u] && degree[u] == 1).expect("a leaf always exists");
        let parent = *tree.neighbors(leaf).iter().find(|&&u| !removed[u]).expect("leaf has a neighbour");
        seq.push(parent);
        removed[leaf] = true;
        degree[parent] -= 1;
    }
    seq
}

/// All `d^(d-2)` labelled trees on `d` nodes, in lexicographic Prüfer order.
#[derive(Clone, Debug)]
pub struct TreeEnumeration {
    d: usize,
    next: Option<Vec<usize>>,
}

impl TreeEnumeration {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidInput("need at least two nodes".into()));
        }
        Ok(TreeEnumeration { d, next: Some(vec![0; d - 2]) })
    }

    pub fn count(d: usize) -> usize {
        if d < 2 {
            0
        } else {
            d.pow(d as u32 - 2)
        }
    }
}

impl Iterator for TreeEnumeration {
    type Item = TreeStructure;

    fn next(&mut self) -> Option<TreeStructure> {
        let seq = self.next.take()?;
        let tree = prufer_decode(self.d, &seq).expect("every Prüfer sequence is a tree");
        let mut succ = seq;
        for k in (0..succ.len()).rev() {
            succ[k] += 1;
            if succ[k] < self.d {
                self.next = Some(succ);
                break;
            }
            succ[k] = 0;
        }
        Some(tree)
    }
}

/// Star on node 1 with `rho[j]` on edge `(1, j + 2)`.
pub fn make_star(rho: &[f64]) -> Result<GaussianTreeModel> {
    let d = rho.len() + 1;
    if d < 3 {
        return Err(Error::InvalidInput("a star needs at least three nodes".into()));
    }
    GaussianTreeModel::from_edge_values(TreeStructure::star(d)?, rho)
}

/// Chain with `rho[i]` on edge `(i + 1, i + 2)`, in the given order.
pub fn make_chain(rho: &[f64]) -> Result<GaussianTreeModel> {
    let d = rho.len() + 1;
    if d < 2 {
        return Err(Error::InvalidInput("a chain needs at least two nodes".into()));
    }
    GaussianTreeModel::from_edge_values(TreeStructure::chain(d)?, rho)
}

/// Chain with magnitudes decreasing from node 1.
pub fn make_sorted_chain(rho: &[f64]) -> Result<GaussianTreeModel> {
    let mut sorted = rho.to_vec();
    sorted.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    make_chain(&sorted)
}

/// Chain on nodes `1..=d/2` with nodes `d/2+1..=d` hung as leaves on node `d/2`.
pub fn make_hybrid(d: usize) -> Result<TreeStructure> {
    if d < 6 || d % 2 == 1 {
        return Err(Error::OddDimension(d));
    }
    let h = d / 2;
    let edges = (0..h - 1).map(|i| Edge::new(i, i + 1)).chain((h..d).map(|v| Edge::new(h - 1, v)));
    TreeStructure::new(d, edges)
}

/// Which correlation placements `verify_extremal` visits on each tree.
#[derive(Clone, Copy, Debug)]
pub enum Placements {
    All,
    Sampled { count: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    /// 1-based edges of the offending tree.
    pub edges: Vec<Edge>,
    /// Correlation on each of those edges.
    pub rho: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtremalReport {
    pub d: usize,
    pub trees: usize,
    pub placements_per_tree: usize,
    pub star_value: f64,
    pub sorted_chain_value: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub chain_claim_checked: bool,
    pub star_counterexamples: Vec<Counterexample>,
    pub chain_counterexamples: Vec<Counterexample>,
}

impl ExtremalReport {
    pub fn holds(&self) -> bool {
        self.star_counterexamples.is_empty() && self.chain_counterexamples.is_empty()
    }
}

fn placements(rho: &[f64], which: Placements) -> Vec<Vec<f64>> {
    match which {
        Placements::All => {
            let mut idx: Vec<usize> = (0..rho.len()).collect();
            let mut out = vec![rho.to_vec()];
            while next_permutation(&mut idx) {
                out.push(idx.iter().map(|&k| rho[k]).collect());
            }
            out
        }
        Placements::Sampled { count, seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let mut p = rho.to_vec();
                    p.shuffle(&mut rng);
                    p
                })
                .collect()
        }
    }
}

fn next_permutation(idx: &mut [usize]) -> bool {
    let Some(i) = (1..idx.len()).rev().find(|&i| idx[i - 1] < idx[i]) else {
        return false;
    };
    let j = (i..idx.len()).rev().find(|&j| idx[j] > idx[i - 1]).expect("pivot has a successor");
    idx.swap(i - 1, j);
    idx[i..].reverse();
    true
}

/// Scans every labelled tree on `rho.len() + 1` nodes under the chosen
/// placements and records trees beating the star (below) or the sorted chain
/// (above). The chain side is checked only when every `|ρ|` is below `ρ_crit`,
/// unless `check_chain_always` is set.
pub fn verify_extremal(rho: &[f64], which: Placements, check_chain_always: bool) -> Result<ExtremalReport> {
    let d = rho.len() + 1;
    if d < 3 {
        return Err(Error::InvalidInput("need at least three nodes".into()));
    }
    let star_value = approx_exponent_linear(&make_star(rho)?)?.value;
    let sorted_chain_value = approx_exponent_linear(&make_sorted_chain(rho)?)?.value;
    let chain_claim_checked = check_chain_always || rho.iter().all(|r| r.abs() < RHO_CRIT);
    let placed = placements(rho, which);
    let trees: Vec<TreeStructure> = TreeEnumeration::new(d)?.collect();
    let tol = |v: f64| 1e-12 * v.abs();

    struct Partial {
        min: f64,
        max: f64,
        star: Vec<Counterexample>,
        chain: Vec<Counterexample>,
    }
    let partials: Vec<Result<Partial>> = trees
        .par_iter()
        .map(|tree| {
            let eval = LinearEvaluator::new(tree);
            let mut p = Partial { min: f64::INFINITY, max: f64::NEG_INFINITY, star: vec![], chain: vec![] };
            for values in &placed {
                let v = eval.evaluate(values)?.value;
                p.min = p.min.min(v);
                p.max = p.max.max(v);
                let witness = || Counterexample { edges: tree.edges().to_vec(), rho: values.clone(), value: v };
                if v < star_value - tol(star_value) {
                    p.star.push(witness());
                }
                if chain_claim_checked && v > sorted_chain_value + tol(sorted_chain_value) {
                    p.chain.push(witness());
                }
            }
            Ok(p)
        })
        .collect();
    let mut report = ExtremalReport {
        d,
        trees: trees.len(),
        placements_per_tree: placed.len(),
        star_value,
        sorted_chain_value,
        min_value: f64::INFINITY,
        max_value: f64::NEG_INFINITY,
        chain_claim_checked,
        star_counterexamples: vec![],
        chain_counterexamples: vec![],
    };
    for p in partials {
        let p = p?;
        report.min_value = report.min_value.min(p.min);
        report.max_value = report.max_value.max(p.max);
        report.star_counterexamples.extend(p.star);
        report.chain_counterexamples.extend(p.chain);
    }
    Ok(report)
}

/// Adds node `d + 1` as a leaf on `vertex` (0-based) with correlation `rho_new`.
pub fn attach_edge(model: &GaussianTreeModel, rho_new: f64, vertex: usize) -> Result<GaussianTreeModel> {
    let d = model.d();
    if vertex >= d {
        return Err(Error::NodeOutOfRange { node: vertex + 1, d });
    }
    let mut edges = model.tree().edges().to_vec();
    let new_edge = Edge::new(vertex, d);
    edges.push(new_edge);
    let tree = TreeStructure::new(d + 1, edges)?;
    let corr: CorrelationAssignment = model.correlations().iter().chain([(new_edge, rho_new)]).collect();
    GaussianTreeModel::new(tree, corr)
}

fn incident_max(model: &GaussianTreeModel, v: usize) -> f64 {
    model.tree().neighbors(v).iter().map(|&u| model.rho(Edge::new(u, v)).abs()).fold(0.0, f64::max)
}

fn check_new_correlation(model: &GaussianTreeModel, rho_new: f64) -> Result<()> {
    let min_edge = model.edge_values().iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min);
    if !(rho_new.abs() < min_edge) || rho_new == 0.0 {
        return Err(Error::CorrelationTooLarge { rho_new, min_edge });
    }
    Ok(())
}

/// Vertex whose strongest incident edge is weakest (0-based; ties to the
/// smallest index).
pub fn best_attachment(model: &GaussianTreeModel, rho_new: f64) -> Result<usize> {
    check_new_correlation(model, rho_new)?;
    let mut best = 0;
    for v in 1..model.d() {
        if incident_max(model, v) < incident_max(model, best) {
            best = v;
        }
    }
    Ok(best)
}

/// Vertex whose strongest incident edge is strongest (0-based; ties to the
/// smallest index).
pub fn worst_attachment(model: &GaussianTreeModel, rho_new: f64) -> Result<usize> {
    check_new_correlation(model, rho_new)?;
    let mut worst = 0;
    for v in 1..model.d() {
        if incident_max(model, v) > incident_max(model, worst) {
            worst = v;
        }
    }
    Ok(worst)
}

/// True iff marginalising onto `keep` does not lower the approximate exponent
/// (up to 1e-12).
pub fn subtree_exponent_check(model: &GaussianTreeModel, keep: &[usize]) -> Result<bool> {
    let sub = model.marginalize(keep)?;
    let before = approx_exponent_linear(model)?.value;
    let after = approx_exponent_linear(&sub)?.value;
    Ok(after >= before - 1e-12)
}
