//! Approximate error exponent: the smallest approximate crossover rate over
//! all error events, computed three ways.

use serde::{Serialize, Serializer};

use crate::approx_rate::jtilde;
use crate::error::Result;
use crate::model::{Edge, GaussianTreeModel, TreeStructure};

/// Writes infinite exponents (no non-edges) as the string `"NoErrorEvents"`.
pub fn serialize_exponent<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if value.is_infinite() {
        s.serialize_str("NoErrorEvents")
    } else {
        s.serialize_f64(*value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Full,
    Triangle,
    Linear,
}

/// Where the minimum is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Argmin {
    /// Edge `edge` on the path of `non_edge`.
    Crossover { edge: Edge, non_edge: Edge },
    /// Edge `edge` against the non-edge closing the triangle with `neighbor`.
    Adjacent { edge: Edge, neighbor: Edge },
    /// Edge `edge` with the largest adjacent correlation magnitude `rho_star`.
    Linear { edge: Edge, rho_star: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentReport {
    #[serde(serialize_with = "serialize_exponent")]
    pub value: f64,
    pub argmin: Option<Argmin>,
    pub method: Method,
}

impl ExponentReport {
    fn empty(method: Method) -> Self {
        ExponentReport { value: f64::INFINITY, argmin: None, method }
    }

    fn offer(&mut self, value: f64, argmin: Argmin) {
        if value < self.value {
            self.value = value;
            self.argmin = Some(argmin);
        }
    }

    pub fn has_error_events(&self) -> bool {
        self.value.is_finite()
    }
}

/// `W(a, b) = min{J̃(a, ab), J̃(b, ab)}` for adjacent edges with correlations `a`, `b`.
pub fn edge_pair_weight(a: f64, b: f64) -> Result<f64> {
    Ok(jtilde(a, a * b)?.min(jtilde(b, a * b)?))
}

/// Scan over every non-edge and every edge on its path.
pub fn approx_exponent_full(model: &GaussianTreeModel) -> Result<ExponentReport> {
    let mut report = ExponentReport::empty(Method::Full);
    for ep in model.tree().non_edges() {
        let rho_ep = model.correlation(ep);
        for e in model.path(ep)? {
            report.offer(jtilde(model.rho(e), rho_ep)?, Argmin::Crossover { edge: e, non_edge: ep });
        }
    }
    Ok(report)
}

/// Minimum of `W` over pairs of adjacent edges.
pub fn approx_exponent_triangle(model: &GaussianTreeModel) -> Result<ExponentReport> {
    let mut report = ExponentReport::empty(Method::Triangle);
    let edges = model.tree().edges();
    for (a, b) in model.tree().adjacent_edge_pairs() {
        let (ea, eb) = (edges[a], edges[b]);
        let (ra, rb) = (model.rho(ea), model.rho(eb));
        report.offer(jtilde(ra, ra * rb)?, Argmin::Adjacent { edge: ea, neighbor: eb });
        report.offer(jtilde(rb, ra * rb)?, Argmin::Adjacent { edge: eb, neighbor: ea });
    }
    Ok(report)
}

/// Per-edge lists of adjacent edge indices for one tree, so the linear
/// formula can be re-evaluated cheaply under many correlation placements.
#[derive(Clone, Debug)]
pub struct LinearEvaluator {
    edges: Vec<Edge>,
    adjacent: Vec<Vec<usize>>,
}

impl LinearEvaluator {
    pub fn new(tree: &TreeStructure) -> Self {
        let edges = tree.edges().to_vec();
        let mut adjacent = vec![Vec::new(); edges.len()];
        for (a, b) in tree.adjacent_edge_pairs() {
            adjacent[a].push(b);
            adjacent[b].push(a);
        }
        LinearEvaluator { edges, adjacent }
    }

    /// Linear-formula exponent for `values[k]` on the `k`-th edge in
    /// lexicographic order.
    pub fn evaluate(&self, values: &[f64]) -> Result<ExponentReport> {
        let mut report = ExponentReport::empty(Method::Linear);
        for (k, adj) in self.adjacent.iter().enumerate() {
            let Some(rho_star) = adj.iter().map(|&f| values[f].abs()).reduce(f64::max) else {
                continue;
            };
            let rho = values[k];
            report.offer(jtilde(rho, rho * rho_star)?, Argmin::Linear { edge: self.edges[k], rho_star });
        }
        Ok(report)
    }
}

/// One evaluation per edge, against its strongest adjacent edge.
pub fn approx_exponent_linear(model: &GaussianTreeModel) -> Result<ExponentReport> {
    LinearEvaluator::new(model.tree()).evaluate(&model.edge_values())
}
