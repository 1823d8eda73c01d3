use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::tensor::Matrix;

/// Product-side input to the projection layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ProductFeatures {
    /// Identity features: each product owns a learnable embedding row.
    OneHot,
    Dense(Matrix<f32>),
}

/// Graph plus per-user covariates, treatment, outcome and label mask.
///
/// Unlabeled users carry a placeholder outcome of 0 that no loss ever reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    graph: BipartiteGraph,
    user_features: Matrix<f32>,
    product_features: ProductFeatures,
    treatment: Vec<bool>,
    outcome: Vec<f32>,
    labeled: Vec<bool>,
}

impl Dataset {
    pub fn new(
        graph: BipartiteGraph,
        user_features: Matrix<f32>,
        product_features: ProductFeatures,
        treatment: Vec<bool>,
        outcome: Vec<f32>,
        labeled: Vec<bool>,
    ) -> Result<Self> {
        let n = graph.users();
        if user_features.rows() != n {
            return Err(Error::Dataset(format!(
                "{} user feature rows for {n} users",
                user_features.rows()
            )));
        }
        if !user_features.is_finite() {
            return Err(Error::Dataset("user features contain non-finite values".into()));
        }
        if let ProductFeatures::Dense(x) = &product_features {
            if x.rows() != graph.products() {
                return Err(Error::Dataset(format!(
                    "{} product feature rows for {} products",
                    x.rows(),
                    graph.products()
                )));
            }
            if !x.is_finite() {
                return Err(Error::Dataset("product features contain non-finite values".into()));
            }
        }
        if treatment.len() != n || outcome.len() != n || labeled.len() != n {
            return Err(Error::Dataset(format!(
                "treatment {}, outcome {}, label mask {} entries for {n} users",
                treatment.len(),
                outcome.len(),
                labeled.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| labeled[i] && !outcome[i].is_finite()) {
            return Err(Error::Dataset(format!("labeled user {i} has a non-finite outcome")));
        }
        Ok(Dataset {
            graph,
            user_features,
            product_features,
            treatment,
            outcome,
            labeled,
        })
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }

    pub fn users(&self) -> usize {
        self.graph.users()
    }

    pub fn products(&self) -> usize {
        self.graph.products()
    }

    pub fn user_features(&self) -> &Matrix<f32> {
        &self.user_features
    }

    pub fn product_features(&self) -> &ProductFeatures {
        &self.product_features
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f32] {
        &self.outcome
    }

    pub fn label_mask(&self) -> &[bool] {
        &self.labeled
    }

    pub fn labeled_users(&self) -> Vec<usize> {
        (0..self.users()).filter(|&i| self.labeled[i]).collect()
    }

    /// Copy with a different outcome vector (used for invariance checks and resimulation).
    pub fn with_outcome(&self, outcome: Vec<f32>) -> Result<Self> {
        Dataset::new(
            self.graph.clone(),
            self.user_features.clone(),
            self.product_features.clone(),
            self.treatment.clone(),
            outcome,
            self.labeled.clone(),
        )
    }
}

/// Per-column standardization to zero mean and unit (population) standard deviation.
///
/// Constant columns map to zero.
pub fn normalize_features(x: &Matrix<f32>) -> Matrix<f32> {
    let (rows, cols) = x.shape();
    let mut out = Matrix::zeros(rows, cols);
    if rows == 0 {
        return out;
    }
    for c in 0..cols {
        let mean = (0..rows).map(|r| x.get(r, c) as f64).sum::<f64>() / rows as f64;
        let var = (0..rows)
            .map(|r| {
                let d = x.get(r, c) as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / rows as f64;
        let std = num_traits::Float::sqrt(var);
        if std <= 1e-9 * mean.abs().max(1.0) {
            continue;
        }
        for r in 0..rows {
            out.set(r, c, ((x.get(r, c) as f64 - mean) / std) as f32);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(values: &[f32]) -> Matrix<f32> {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn standardizes_simple_column() {
        let z = normalize_features(&column(&[1.0, 2.0, 3.0]));
        let mean: f32 = z.as_slice().iter().sum::<f32>() / 3.0;
        let var: f32 = z.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 3.0;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        assert_eq!(normalize_features(&column(&[5.0, 5.0, 5.0])), Matrix::zeros(3, 1));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(values in proptest::collection::vec(-100.0f32..100.0, 2..40)) {
            let x = column(&values);
            let once = normalize_features(&x);
            let twice = normalize_features(&once);
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{} vs {}", a, b);
            }
        }
    }
}
