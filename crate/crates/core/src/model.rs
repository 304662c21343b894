//! Tree structures, edge correlations and the unit-variance Gaussian they induce.
//!
//! Nodes are 0-based inside the library. The JSON model format and every
//! `Display` impl use 1-based labels.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest Cholesky pivot accepted when checking positive definiteness.
pub const MIN_PIVOT: f64 = 1e-12;

/// Unordered node pair stored with the smaller index first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge(usize, usize);

impl Edge {
    /// Canonical pair `{i, j}`. Panics when `i == j`.
    pub fn new(i: usize, j: usize) -> Self {
        assert!(i != j, "an edge needs two distinct nodes");
        if i < j {
            Edge(i, j)
        } else {
            Edge(j, i)
        }
    }

    pub fn try_new(i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidInput(format!(
                "node pair ({}, {}) repeats a node",
                i + 1,
                j + 1
            )));
        }
        Ok(Edge::new(i, j))
    }

    pub fn lo(self) -> usize {
        self.0
    }

    pub fn hi(self) -> usize {
        self.1
    }

    pub fn nodes(self) -> [usize; 2] {
        [self.0, self.1]
    }

    pub fn contains(self, v: usize) -> bool {
        self.0 == v || self.1 == v
    }

    /// True when the two pairs share exactly one node.
    pub fn is_adjacent(self, other: Edge) -> bool {
        self != other
            && (self.contains(other.0) || self.contains(other.1))
    }

    /// 1-based `(i, j)` labels.
    pub fn one_based(self) -> (usize, usize) {
        (self.0 + 1, self.1 + 1)
    }
}

impl Serialize for Edge {
    /// Serialised as a 1-based `[i, j]` pair.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0 + 1, self.1 + 1)
    }
}

/// Undirected spanning tree on `d` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeStructure {
    d: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl TreeStructure {
    /// Validates that `edges` form a spanning tree on `d >= 2` nodes.
    pub fn new(d: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        if d < 2 {
            return Err(Error::NotATree(format!("need at least 2 nodes, got {d}")));
        }
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::NotATree("duplicate edge".into()));
        }
        if edges.len() != d - 1 {
            return Err(Error::NotATree(format!(
                "{} edges on {d} nodes (a tree has {})",
                edges.len(),
                d - 1
            )));
        }
        let mut adjacency = vec![Vec::new(); d];
        for e in &edges {
            if e.hi() >= d {
                return Err(Error::NodeOutOfRange { node: e.hi() + 1, d });
            }
            adjacency[e.lo()].push(e.hi());
            adjacency[e.hi()].push(e.lo());
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        let tree = TreeStructure { d, edges, adjacency };
        // d - 1 edges plus connectivity implies acyclic.
        if tree.bfs_parents(0).iter().skip(1).any(Option::is_none) {
            return Err(Error::NotATree("graph is disconnected".into()));
        }
        Ok(tree)
    }

    /// Builds a tree from 1-based node pairs.
    pub fn from_one_based(d: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            for v in [i, j] {
                if v == 0 || v > d {
                    return Err(Error::NodeOutOfRange { node: v, d });
                }
            }
            edges.push(Edge::try_new(i - 1, j - 1)?);
        }
        TreeStructure::new(d, edges)
    }

    /// Path 1 - 2 - ... - d.
    pub fn chain(d: usize) -> Result<Self> {
        TreeStructure::new(d, (1..d).map(|i| Edge::new(i - 1, i)))
    }

    /// Star centred on node 1.
    pub fn star(d: usize) -> Result<Self> {
        TreeStructure::new(d, (1..d).map(|i| Edge::new(0, i)))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, e: Edge) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    pub fn edge_index(&self, e: Edge) -> Option<usize> {
        self.edges.binary_search(&e).ok()
    }

    /// Node pairs that are not edges, in lexicographic order.
    pub fn non_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.d)
            .flat_map(move |i| (i + 1..self.d).map(move |j| Edge::new(i, j)))
            .filter(move |e| !self.has_edge(*e))
    }

    /// Index pairs `(a, b)`, `a < b`, of edges that share a node.
    pub fn adjacent_edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for v in 0..self.d {
            let incident: Vec<usize> = self.adjacency[v]
                .iter()
                .map(|&u| self.edge_index(Edge::new(u, v)).expect("adjacency is consistent"))
                .collect();
            for (x, &a) in incident.iter().enumerate() {
                for &b in &incident[x + 1..] {
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.d {
            Err(Error::NodeOutOfRange { node: v + 1, d: self.d })
        } else {
            Ok(())
        }
    }

    fn bfs_parents(&self, root: usize) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.d];
        let mut seen = vec![false; self.d];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(u);
                    queue.push_back(w);
                }
            }
        }
        parent
    }

    /// Breadth-first order from `root` with each node's parent.
    fn bfs_order(&self, root: usize) -> Vec<(usize, Option<usize>)> {
        let mut order = Vec::with_capacity(self.d);
        let mut seen = vec![false; self.d];
        let mut queue = VecDeque::from([(root, None)]);
        seen[root] = true;
        while let Some((u, p)) = queue.pop_front() {
            order.push((u, p));
            for &w in &self.adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back((w, Some(u)));
                }
            }
        }
        order
    }

    /// The unique path between the endpoints of `pair`, walked from `pair.lo()`.
    pub fn path(&self, pair: Edge) -> Result<Vec<Edge>> {
        self.check_node(pair.hi())?;
        let parent = self.bfs_parents(pair.hi());
        let mut path = Vec::new();
        let mut v = pair.lo();
        while let Some(p) = parent[v] {
            path.push(Edge::new(v, p));
            v = p;
        }
        Ok(path)
    }

    /// Number of edges on the longest path.
    pub fn diameter(&self) -> usize {
        let far = |root: usize| -> (usize, usize) {
            let mut dist = vec![usize::MAX; self.d];
            dist[root] = 0;
            let mut best = (root, 0);
            for (u, p) in self.bfs_order(root) {
                if let Some(p) = p {
                    dist[u] = dist[p] + 1;
                }
                if dist[u] > best.1 {
                    best = (u, dist[u]);
                }
            }
            best
        };
        let (end, _) = far(0);
        far(end).1
    }

    pub fn line_graph(&self) -> LineGraph {
        LineGraph {
            vertices: self.edges.clone(),
            edges: self.adjacent_edge_pairs(),
        }
    }

    pub fn is_star(&self) -> bool {
        self.d <= 3 || (0..self.d).any(|v| self.degree(v) == self.d - 1)
    }

    pub fn is_chain(&self) -> bool {
        (0..self.d).all(|v| self.degree(v) <= 2)
    }
}

/// Line graph of a tree: one vertex per tree edge, adjacent when the edges share a node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineGraph {
    /// Tree edges, in the tree's lexicographic order.
    pub vertices: Vec<Edge>,
    /// Vertex index pairs `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
}

impl LineGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertices.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        if n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// A simple path through every vertex.
    pub fn is_chain(&self) -> bool {
        let n = self.vertices.len();
        n >= 1
            && self.edges.len() == n - 1
            && self.degrees().into_iter().all(|k| k <= 2)
            && self.is_connected()
    }

    pub fn is_complete(&self) -> bool {
        let n = self.vertices.len();
        self.edges.len() == n * n.saturating_sub(1) / 2
    }
}

/// Correlation coefficient on each tree edge.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CorrelationAssignment {
    rho: BTreeMap<Edge, f64>,
}

impl CorrelationAssignment {
    pub fn new(rho: BTreeMap<Edge, f64>) -> Self {
        CorrelationAssignment { rho }
    }

    pub fn get(&self, e: Edge) -> Option<f64> {
        self.rho.get(&e).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.rho.iter().map(|(e, r)| (*e, *r))
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

impl FromIterator<(Edge, f64)> for CorrelationAssignment {
    fn from_iter<I: IntoIterator<Item = (Edge, f64)>>(iter: I) -> Self {
        CorrelationAssignment { rho: iter.into_iter().collect() }
    }
}

/// On-disk model format: `{"d": 4, "edges": [[1, 2, 0.5], ...]}` with 1-based nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub d: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

/// Zero-mean, unit-variance Gaussian that is Markov on a spanning tree.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTreeModel {
    tree: TreeStructure,
    corr: CorrelationAssignment,
    covariance: DMatrix<f64>,
}

impl GaussianTreeModel {
    /// Builds the model; the covariance of every node pair is the product of
    /// edge correlations along the tree path joining them.
    pub fn new(tree: TreeStructure, corr: CorrelationAssignment) -> Result<Self> {
        if corr.len() != tree.edges().len() {
            return Err(Error::InvalidInput(format!(
                "{} correlations supplied for {} edges",
                corr.len(),
                tree.edges().len()
            )));
        }
        for &e in tree.edges() {
            let rho = corr
                .get(e)
                .ok_or_else(|| Error::InvalidInput(format!("no correlation for edge {e}")))?;
            if !(rho.abs() < 1.0) || rho == 0.0 {
                return Err(Error::InvalidCorrelation { edge: e, rho });
            }
        }
        let d = tree.d();
        let mut covariance = DMatrix::<f64>::identity(d, d);
        for root in 0..d {
            for (u, p) in tree.bfs_order(root) {
                if let Some(p) = p {
                    let rho = corr.get(Edge::new(u, p)).expect("validated above");
                    covariance[(root, u)] = covariance[(root, p)] * rho;
                }
            }
        }
        // Each root fills its own row; symmetrise from the upper triangle.
        for i in 0..d {
            for j in 0..i {
                covariance[(i, j)] = covariance[(j, i)];
            }
        }
        check_positive_definite(&covariance)?;
        Ok(GaussianTreeModel { tree, corr, covariance })
    }

    /// Places `values[k]` on the `k`-th edge in lexicographic order.
    pub fn from_edge_values(tree: TreeStructure, values: &[f64]) -> Result<Self> {
        if values.len() != tree.edges().len() {
            return Err(Error::DimensionMismatch {
                expected: tree.edges().len(),
                found: values.len(),
            });
        }
        let corr = tree.edges().iter().copied().zip(values.iter().copied()).collect();
        GaussianTreeModel::new(tree, corr)
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = file.edges.iter().map(|&(i, j, _)| (i, j)).collect();
        let tree = TreeStructure::from_one_based(file.d, &pairs)?;
        let corr = file
            .edges
            .iter()
            .map(|&(i, j, rho)| (Edge::new(i - 1, j - 1), rho))
            .collect();
        GaussianTreeModel::new(tree, corr)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            d: self.d(),
            edges: self
                .tree
                .edges()
                .iter()
                .map(|&e| {
                    let (i, j) = e.one_based();
                    (i, j, self.rho(e))
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        GaussianTreeModel::from_file(&file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("model file serialises")
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn tree(&self) -> &TreeStructure {
        &self.tree
    }

    pub fn correlations(&self) -> &CorrelationAssignment {
        &self.corr
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Correlation on tree edge `e`. Panics if `e` is not an edge.
    pub fn rho(&self, e: Edge) -> f64 {
        self.corr.get(e).unwrap_or_else(|| panic!("{e} is not an edge"))
    }

    /// Correlation between any two nodes.
    pub fn correlation(&self, pair: Edge) -> f64 {
        self.covariance[(pair.lo(), pair.hi())]
    }

    /// Edge correlations in lexicographic edge order.
    pub fn edge_values(&self) -> Vec<f64> {
        self.tree.edges().iter().map(|&e| self.rho(e)).collect()
    }

    pub fn path(&self, pair: Edge) -> Result<Vec<Edge>> {
        self.tree.path(pair)
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.covariance
            .clone()
            .cholesky()
            .expect("validated positive definite at construction")
            .unpack()
    }

    /// Marginal over `keep` (0-based). Removed nodes are eliminated while they
    /// have degree one (dropped) or two (their two edges merge into one whose
    /// correlation is the product). Kept nodes are relabelled in increasing order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<GaussianTreeModel> {
        let d = self.d();
        let mut kept = vec![false; d];
        for &v in keep {
            if v >= d {
                return Err(Error::NodeOutOfRange { node: v + 1, d });
            }
            if kept[v] {
                return Err(Error::InvalidInput(format!("node {} kept twice", v + 1)));
            }
            kept[v] = true;
        }
        if keep.len() < 2 {
            return Err(Error::InvalidInput("keep at least two nodes".into()));
        }

        let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); d];
        for (e, rho) in self.corr.iter() {
            adj[e.lo()].insert(e.hi(), rho);
            adj[e.hi()].insert(e.lo(), rho);
        }
        let mut pending: Vec<usize> = (0..d).filter(|&v| !kept[v]).collect();
        while !pending.is_empty() {
            let Some(pos) = pending.iter().position(|&v| adj[v].len() <= 2) else {
                let v = *pending.iter().min_by_key(|&&v| adj[v].len()).expect("non-empty");
                return Err(Error::NotTreeMarginalizable { node: v + 1, degree: adj[v].len() });
            };
            let v = pending.remove(pos);
            let nbrs: Vec<(usize, f64)> = std::mem::take(&mut adj[v]).into_iter().collect();
            for &(u, _) in &nbrs {
                adj[u].remove(&v);
            }
            if let [(a, ra), (b, rb)] = nbrs[..] {
                adj[a].insert(b, ra * rb);
                adj[b].insert(a, ra * rb);
            }
        }

        let mut label = vec![usize::MAX; d];
        let mut order: Vec<usize> = keep.to_vec();
        order.sort_unstable();
        for (new, &old) in order.iter().enumerate() {
            label[old] = new;
        }
        let mut corr = BTreeMap::new();
        for &u in &order {
            for (&w, &rho) in &adj[u] {
                if u < w {
                    corr.insert(Edge::new(label[u], label[w]), rho);
                }
            }
        }
        let tree = TreeStructure::new(order.len(), corr.keys().copied())?;
        GaussianTreeModel::new(tree, CorrelationAssignment::new(corr))
    }
}

/// Cholesky factorisation must succeed with every pivot above [`MIN_PIVOT`].
pub fn check_positive_definite(m: &DMatrix<f64>) -> Result<()> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    if (0..m.nrows()).all(|i| l[(i, i)] * l[(i, i)] > MIN_PIVOT) {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// Mutual information `-½ ln(1 - ρ²)` in nats of a bivariate Gaussian.
pub fn mutual_information(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    Ok(-0.5 * (-rho * rho).ln_1p())
}
