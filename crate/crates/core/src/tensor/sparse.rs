use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

/// Edge weighting applied on top of the 0/1 structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Normalization {
    /// Raw sum over neighbors.
    #[default]
    None,
    /// Row-normalized: each node averages its neighbors (`D⁻¹A`). Empty rows stay zero.
    Mean,
    /// `D^{-1/2} A D^{-1/2}`.
    Symmetric,
}

/// Symmetric sparse adjacency without self-loops.
///
/// The structure is stored once in row-compressed form. Because the pattern is
/// symmetric, the column-compressed view of the same matrix shares the index
/// arrays; only the values differ once a non-symmetric normalization is applied.
/// `row_vals[k]` is `A[i, col_idx[k]]` and `col_vals[k]` is `A[col_idx[k], i]`
/// for `k` in row `i`, so both `A·x` and `Aᵀ·x` walk contiguous memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    row_vals: Vec<f64>,
    col_vals: Vec<f64>,
    norm: Normalization,
}

impl SparseAdjacency {
    pub fn empty(dim: usize) -> Self {
        SparseAdjacency {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            row_vals: Vec::new(),
            col_vals: Vec::new(),
            norm: Normalization::None,
        }
    }

    /// Builds the unit-weight adjacency of an undirected graph from its edge list.
    ///
    /// Each pair is inserted in both orientations; duplicates collapse.
    pub fn from_undirected_edges(dim: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); dim];
        for &(a, b) in edges {
            if a >= dim || b >= dim {
                return Err(Error::shape(
                    "adjacency",
                    format!("edge ({a}, {b}) outside dimension {dim}"),
                ));
            }
            if a == b {
                return Err(Error::Dataset(format!("self-loop at node {a}")));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for neighbors in &adjacency {
            col_idx.extend(neighbors.iter().copied());
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Ok(SparseAdjacency {
            dim,
            row_ptr,
            col_idx,
            row_vals: vec![1.0; nnz],
            col_vals: vec![1.0; nnz],
            norm: Normalization::None,
        })
    }

    /// Bipartite block adjacency `[[0, R], [Rᵀ, 0]]` for `users + products` nodes.
    pub fn bipartite(users: usize, products: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(edges.len());
        for &(u, p) in edges {
            if u >= users || p >= products {
                return Err(Error::shape(
                    "bipartite adjacency",
                    format!("edge ({u}, {p}) outside {users} users x {products} products"),
                ));
            }
            pairs.push((u, users + p));
        }
        Self::from_undirected_edges(users + products, &pairs)
    }

    /// Same structure with the requested degree normalization.
    pub fn normalized(&self, norm: Normalization) -> Self {
        let degree: Vec<f64> = (0..self.dim).map(|i| self.degree(i) as f64).collect();
        let weight = |i: usize, j: usize| match norm {
            Normalization::None => 1.0,
            Normalization::Mean => 1.0 / degree[i],
            Normalization::Symmetric => 1.0 / num_traits::Float::sqrt(degree[i] * degree[j]),
        };
        let mut row_vals = Vec::with_capacity(self.nnz());
        let mut col_vals = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            for &j in self.neighbors(i) {
                row_vals.push(weight(i, j));
                col_vals.push(weight(j, i));
            }
        }
        SparseAdjacency {
            row_vals,
            col_vals,
            norm,
            ..self.clone()
        }
    }

    #[inline]
    pub fn dimension(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.row_ptr[node + 1] - self.row_ptr[node]
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[node]..self.row_ptr[node + 1]]
    }

    /// All stored entries `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.row_vals[k]))
        })
    }

    /// `A · x`: row `i` of the output is `Σ_j A[i, j] · x[j]`.
    pub fn spmm<T: Real>(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.product(x, &self.row_vals, "spmm")
    }

    /// `Aᵀ · x`, used to back-propagate through [`SparseAdjacency::spmm`].
    pub fn spmm_transpose<T: Real>(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.product(x, &self.col_vals, "spmm_transpose")
    }

    fn product<T: Real>(&self, x: &Matrix<T>, vals: &[f64], op: &'static str) -> Result<Matrix<T>> {
        if x.rows() != self.dim {
            return Err(Error::shape(
                op,
                format!("adjacency of dimension {} times {} rows", self.dim, x.rows()),
            ));
        }
        let cols = x.cols();
        let mut out = Matrix::zeros(self.dim, cols);
        for i in 0..self.dim {
            let out_row = out.row_mut(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = T::from_f64_lossy(vals[k]);
                for (o, &v) in out_row.iter_mut().zip(x.row(self.col_idx[k])) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}
