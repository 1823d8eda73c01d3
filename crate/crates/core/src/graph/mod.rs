//! Bipartite user–product graphs, datasets, synthetic data and fold plans.

mod dataset;
mod folds;
mod synthetic;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::SparseAdjacency;

pub use dataset::{normalize_features, Dataset, ProductFeatures};
pub use folds::{split_folds, FoldPlan};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticDataset};

/// Undirected bipartite graph between `users` and `products`.
///
/// Node ids in the derived adjacency place users first (`0..n`) and products
/// after them (`n..n+m`).
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    users: usize,
    products: usize,
    edges: Vec<(usize, usize)>,
    adjacency: SparseAdjacency,
}

impl BipartiteGraph {
    /// Builds the graph, collapsing duplicate `(user, product)` pairs.
    ///
    /// Returns the graph and the number of duplicate rows dropped.
    pub fn new(users: usize, products: usize, edges: &[(usize, usize)]) -> Result<(Self, usize)> {
        if let Some(&(u, p)) = edges.iter().find(|&&(u, p)| u >= users || p >= products) {
            return Err(Error::Dataset(format!(
                "edge ({u}, {p}) outside {users} users x {products} products"
            )));
        }
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let duplicates = edges.len() - sorted.len();
        let adjacency = SparseAdjacency::bipartite(users, products, &sorted)?;
        Ok((
            BipartiteGraph {
                users,
                products,
                edges: sorted,
                adjacency,
            },
            duplicates,
        ))
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn products(&self) -> usize {
        self.products
    }

    /// Distinct `(user, product)` edges in sorted order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &SparseAdjacency {
        &self.adjacency
    }
}

/// `[[0, R], [Rᵀ, 0]]` with unit weights.
pub fn build_adjacency(graph: &BipartiteGraph) -> SparseAdjacency {
    graph.adjacency.clone()
}

/// Number of distinct products adjacent to each user.
pub fn degrees(graph: &BipartiteGraph) -> Vec<f64> {
    let mut d = vec![0.0; graph.users];
    for &(u, _) in &graph.edges {
        d[u] += 1.0;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    #[test]
    fn zero_edges_give_empty_adjacency() {
        let (g, _) = BipartiteGraph::new(3, 2, &[]).unwrap();
        assert_eq!(build_adjacency(&g).nnz(), 0);
        assert_eq!(build_adjacency(&g).dimension(), 5);
    }

    #[test]
    fn small_graph_nonzeros_by_hand() {
        let (g, _) = BipartiteGraph::new(2, 1, &[(0, 0), (1, 0)]).unwrap();
        let nz: BTreeSet<(usize, usize)> = build_adjacency(&g).entries().map(|(i, j, v)| {
            assert_eq!(v, 1.0);
            (i, j)
        }).collect();
        let expected: BTreeSet<_> = [(0, 2), (2, 0), (1, 2), (2, 1)].into_iter().collect();
        assert_eq!(nz, expected);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let (g, dups) = BipartiteGraph::new(2, 2, &[(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(dups, 1);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(BipartiteGraph::new(1, 1, &[(0, 1)]).is_err());
    }

    #[test]
    fn degree_counts() {
        let (g, _) = BipartiteGraph::new(3, 4, &[(0, 0), (0, 1), (0, 3), (1, 2)]).unwrap();
        assert_eq!(degrees(&g), alloc::vec![3.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn adjacency_is_symmetric_bipartite_and_handshakes(
            n in 1usize..8, m in 1usize..8,
            raw in proptest::collection::vec((0usize..64, 0usize..64), 0..30)
        ) {
            let edges: Vec<(usize, usize)> = raw.into_iter().map(|(u, p)| (u % n, p % m)).collect();
            let (g, _) = BipartiteGraph::new(n, m, &edges).unwrap();
            let adj = build_adjacency(&g);
            let entries: BTreeSet<(usize, usize)> = adj.entries().map(|(i, j, _)| (i, j)).collect();
            for &(i, j) in &entries {
                prop_assert!(entries.contains(&(j, i)));
                prop_assert!((i < n) != (j < n), "entry ({}, {}) inside a diagonal block", i, j);
            }
            prop_assert_eq!(entries.len(), 2 * g.edges().len());
            let total: f64 = degrees(&g).iter().sum();
            prop_assert_eq!(total as usize, g.edges().len());
        }
    }
}
