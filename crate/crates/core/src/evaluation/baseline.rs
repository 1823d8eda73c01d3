use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// One regressor with the treatment appended as a feature.
    S,
    /// Separate regressors for treated and control users.
    T,
}

pub const DEFAULT_RIDGE: f64 = 1e-2;

/// Linear least squares with an L2 penalty on the slopes (the intercept is free).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl Ridge {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<Self> {
        if rows.is_empty() || rows.len() != targets.len() {
            return Err(Error::NoTrainingData(format!(
                "{} rows and {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean_x = DVector::<f64>::zeros(d);
        for r in rows {
            mean_x += DVector::from_column_slice(r);
        }
        mean_x /= n;
        let mean_y = targets.iter().sum::<f64>() / n;
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] - mean_x[j]);
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - mean_y));
        let mut gram = x.transpose() * &x;
        for j in 0..d {
            gram[(j, j)] += lambda;
        }
        let rhs = x.transpose() * y;
        let w = match gram.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            // singular without a penalty: minimum-norm least squares
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::Numerical(format!("ridge solve failed: {e}")))?,
        };
        let intercept = mean_y - w.dot(&mean_x);
        Ok(Ridge {
            weights: w.iter().copied().collect(),
            intercept,
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    /// `[f]` for S, `[f_t, f_c]` for T.
    pub regressors: Vec<Ridge>,
    pub lambda: f64,
}

fn feature_row(dataset: &Dataset, u: usize) -> Vec<f64> {
    dataset.user_features().row(u).iter().map(|&v| v as f64).collect()
}

pub fn fit_baseline(dataset: &Dataset, labeled: &[usize], kind: BaselineKind, lambda: f64) -> Result<BaselineModel> {
    if labeled.is_empty() {
        return Err(Error::NoTrainingData("labeled set is empty".into()));
    }
    if let Some(&u) = labeled.iter().find(|&&u| u >= dataset.users()) {
        return Err(Error::param(format!("labeled user {u} out of range")));
    }
    let t = dataset.treatment();
    let y = dataset.outcome();
    let regressors = match kind {
        BaselineKind::S => {
            let rows: Vec<Vec<f64>> = labeled
                .iter()
                .map(|&u| {
                    let mut r = feature_row(dataset, u);
                    r.push(if t[u] { 1.0 } else { 0.0 });
                    r
                })
                .collect();
            let targets: Vec<f64> = labeled.iter().map(|&u| y[u] as f64).collect();
            alloc::vec![Ridge::fit(&rows, &targets, lambda)?]
        }
        BaselineKind::T => {
            let arm = |treated: bool| -> Result<Ridge> {
                let users: Vec<usize> = labeled.iter().copied().filter(|&u| t[u] == treated).collect();
                if users.is_empty() {
                    let (nt, nc) = if treated { (0, labeled.len()) } else { (labeled.len(), 0) };
                    return Err(Error::UndefinedAte { treated: nt, control: nc });
                }
                let rows: Vec<Vec<f64>> = users.iter().map(|&u| feature_row(dataset, u)).collect();
                let targets: Vec<f64> = users.iter().map(|&u| y[u] as f64).collect();
                Ridge::fit(&rows, &targets, lambda)
            };
            alloc::vec![arm(true)?, arm(false)?]
        }
    };
    Ok(BaselineModel { kind, regressors, lambda })
}

/// Predicted uplift for every user of `dataset`.
pub fn predict_baseline(model: &BaselineModel, dataset: &Dataset) -> Vec<f64> {
    (0..dataset.users())
        .map(|u| {
            let mut x = feature_row(dataset, u);
            match model.kind {
                BaselineKind::T => model.regressors[0].predict(&x) - model.regressors[1].predict(&x),
                BaselineKind::S => {
                    x.push(1.0);
                    let treated = model.regressors[0].predict(&x);
                    *x.last_mut().unwrap() = 0.0;
                    treated - model.regressors[0].predict(&x)
                }
            }
        })
        .collect()
}
