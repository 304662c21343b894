//! Chow-Liu structure estimate: maximum-weight spanning tree over pairwise
//! mutual information.
//!
//! Mutual information `-½ ln(1 - ρ̂²)` is strictly increasing in `ρ̂²`, so the
//! spanning tree is computed on `ρ̂²` directly.

use std::cmp::Ordering;

use crate::empirical::EmpiricalMoments;
use crate::error::{Error, Result};
use crate::model::{Edge, TreeStructure};

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Kruskal on the complete graph over `d` nodes. Heavier edges first; equal
/// weights go in lexicographic edge order.
pub fn max_weight_spanning_tree(d: usize, mut weighted: Vec<(Edge, f64)>) -> Result<TreeStructure> {
    if let Some((e, _)) = weighted.iter().find(|(_, w)| w.is_nan()) {
        return Err(Error::InvalidInput(format!("NaN weight on pair {e}")));
    }
    weighted.sort_by(|(ea, wa), (eb, wb)| match wb.partial_cmp(wa) {
        Some(Ordering::Equal) | None => ea.cmp(eb),
        Some(o) => o,
    });
    let mut uf = UnionFind::new(d);
    let mut edges = Vec::with_capacity(d.saturating_sub(1));
    for (e, _) in weighted {
        if uf.union(e.lo(), e.hi()) {
            edges.push(e);
            if edges.len() + 1 == d {
                break;
            }
        }
    }
    TreeStructure::new(d, edges)
}

/// Chow-Liu edge set for the given empirical moments.
pub fn learn_structure(moments: &EmpiricalMoments) -> Result<TreeStructure> {
    if moments.d() < 2 {
        return Err(Error::InvalidInput("need at least two variables".into()));
    }
    max_weight_spanning_tree(moments.d(), moments.squared_correlations()?)
}

/// Edge-set equality; a mismatch is the structure-learning error event.
pub fn structures_equal(a: &TreeStructure, b: &TreeStructure) -> Result<bool> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch { expected: a.d(), found: b.d() });
    }
    Ok(a.edges() == b.edges())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianTreeModel;
    use nalgebra::DMatrix;

    #[test]
    fn two_nodes_single_edge() {
        let mut s = DMatrix::identity(2, 2);
        s[(0, 1)] = 0.01;
        s[(1, 0)] = 0.01;
        let t = learn_structure(&EmpiricalMoments::new(s, 5).unwrap()).unwrap();
        assert_eq!(t.edges(), &[Edge::new(0, 1)]);
    }

    #[test]
    fn recovers_population_tree() {
        let tree = TreeStructure::from_one_based(5, &[(1, 3), (3, 2), (3, 5), (5, 4)]).unwrap();
        let m = GaussianTreeModel::from_edge_values(tree.clone(), &[0.4, -0.7, 0.2, 0.9]).unwrap();
        let mom = EmpiricalMoments::new(m.covariance().clone(), 1).unwrap();
        assert!(structures_equal(&learn_structure(&mom).unwrap(), &tree).unwrap());
    }

    #[test]
    fn ties_break_lexicographically() {
        // All pairs equally correlated: the lexicographically first spanning
        // tree is the star on node 1.
        let mut s = DMatrix::from_element(4, 4, 0.3);
        s.fill_diagonal(1.0);
        let t = learn_structure(&EmpiricalMoments::new(s, 1).unwrap()).unwrap();
        assert_eq!(t, TreeStructure::star(4).unwrap());
    }

    #[test]
    fn zero_variance_is_rejected() {
        let mut s = DMatrix::identity(3, 3);
        s[(2, 2)] = 0.0;
        assert!(matches!(
            learn_structure(&EmpiricalMoments::new(s, 1).unwrap()),
            Err(Error::DegenerateVariance(3))
        ));
    }

    #[test]
    fn equality_is_on_edge_sets() {
        let chain = TreeStructure::chain(4).unwrap();
        let star = TreeStructure::star(4).unwrap();
        assert!(structures_equal(&chain, &chain).unwrap());
        assert!(!structures_equal(&chain, &star).unwrap());
        // Same shape with interior nodes relabelled: 1-3-2-4.
        let relabelled = TreeStructure::from_one_based(4, &[(1, 3), (3, 2), (2, 4)]).unwrap();
        assert!(!structures_equal(&chain, &relabelled).unwrap());
        assert!(matches!(
            structures_equal(&chain, &TreeStructure::chain(5).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
