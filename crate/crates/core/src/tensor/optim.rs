use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 0.01,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive moment estimation with decoupled weight decay.
///
/// Per step: `w ← w − lr·wd·w`, then the bias-corrected Adam update.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    config: AdamWConfig,
    step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (first, second) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        AdamW {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[&Matrix<T>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                "optimizer_step",
                format!(
                    "{} parameters and {} gradients for {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != self.first[i].shape() {
                return Err(Error::shape(
                    "optimizer_step",
                    format!(
                        "slot {i}: parameter {:?}, gradient {:?}, moments {:?}",
                        p.shape(),
                        g.shape(),
                        self.first[i].shape()
                    ),
                ));
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let lr = T::from_f64_lossy(c.learning_rate);
        let decay = T::from_f64_lossy(c.learning_rate * c.weight_decay);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let correction1 = T::from_f64_lossy(1.0 - num_traits::Float::powi(c.beta1, t));
        let correction2 = T::from_f64_lossy(1.0 - num_traits::Float::powi(c.beta2, t));
        let eps = T::from_f64_lossy(c.eps);
        let one = T::one();

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            for (((w, &gv), mv), vv) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *w -= decay * *w;
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / correction1;
                let v_hat = *vv / correction2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(w0: f64, grad: f64, weight_decay: f64) -> f64 {
        let cfg = AdamWConfig {
            weight_decay,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::<f64>::new(cfg, [(1, 1)]);
        let mut w = Matrix::filled(1, 1, w0);
        let g = Matrix::filled(1, 1, grad);
        opt.step(&mut [&mut w], &[&g]).unwrap();
        assert_eq!(opt.steps_taken(), 1);
        w.get(0, 0)
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        assert_eq!(one_step(0.7, 0.0, 0.0), 0.7);
    }

    #[test]
    fn first_step_on_square_moves_by_learning_rate() {
        // f(w) = w², w = 1 → g = 2; first bias-corrected Adam step is lr·g/(|g| + eps)
        let w = one_step(1.0, 2.0, 0.0);
        assert!(w.abs() < 1.0);
        assert!((w - (1.0 - 0.01 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn decay_shrinks_without_gradient() {
        let w = one_step(-2.0, 0.0, 1e-4);
        assert!(w.abs() < 2.0);
        assert_eq!(w, -2.0 - 0.01 * 1e-4 * -2.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut opt = AdamW::<f64>::new(AdamWConfig::default(), [(2, 1)]);
        let mut w = Matrix::zeros(1, 2);
        let g = Matrix::zeros(1, 2);
        assert!(matches!(opt.step(&mut [&mut w], &[&g]), Err(Error::Shape { .. })));
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut opt = AdamW::<f64>::new(AdamWConfig { learning_rate: 0.05, ..Default::default() }, [(1, 1)]);
        let mut w = Matrix::filled(1, 1, 3.0);
        for _ in 0..500 {
            let g = w.map(|v| 2.0 * v);
            opt.step(&mut [&mut w], &[&g]).unwrap();
        }
        assert!(w.get(0, 0).abs() < 0.05);
    }
}
