use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, Dataset, ProductFeatures};
use crate::rng::{indexed_stream, Stream};
use crate::tensor::Matrix;

/// Planted-effect simulation `y = ReLU(w_s·x + w_t·t + e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub products: usize,
    /// User feature dimension.
    pub features: usize,
    /// Probability of each user–product edge.
    pub density: f64,
    /// Treatment coefficient; drawn from U(10, 20) when absent.
    #[serde(default)]
    pub treatment_effect: Option<f64>,
    #[serde(default = "default_noise_mean")]
    pub noise_mean: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Index of this realization; each simulation draws from its own sub-stream.
    #[serde(default)]
    pub simulation: u32,
}

fn default_noise_mean() -> f64 {
    10.0
}

fn default_noise_std() -> f64 {
    5.0
}

impl SyntheticConfig {
    pub fn new(users: usize, products: usize, features: usize, density: f64, seed: u64) -> Self {
        SyntheticConfig {
            users,
            products,
            features,
            density,
            treatment_effect: None,
            noise_mean: default_noise_mean(),
            noise_std: default_noise_std(),
            seed,
            simulation: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.products == 0 || self.features == 0 {
            return Err(Error::Config(format!(
                "synthetic sizes must be positive (users {}, products {}, features {})",
                self.users, self.products, self.features
            )));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density {} outside (0, 1]", self.density)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite() && self.noise_mean.is_finite()) {
            return Err(Error::Config("noise parameters must be finite, std >= 0".into()));
        }
        if self.treatment_effect.is_some_and(|w| !w.is_finite()) {
            return Err(Error::Config("treatment effect must be finite".into()));
        }
        Ok(())
    }
}

/// A simulated dataset with the quantities needed to audit it.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// Per-user `ReLU(a + w_t) − ReLU(a)` where `a = w_s·x + e`.
    pub effects: Vec<f64>,
    pub treatment_effect: f64,
    pub feature_weights: Vec<f64>,
}

impl SyntheticDataset {
    pub fn true_ate(&self) -> f64 {
        self.effects.iter().sum::<f64>() / self.effects.len() as f64
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let (n, m, d) = (cfg.users, cfg.products, cfg.features);
    let mut rng = indexed_stream(cfg.seed, Stream::Data, cfg.simulation);
    let coef = Uniform::new(10.0, 20.0).map_err(|e| Error::Config(format!("{e}")))?;

    let feature_weights: Vec<f64> = (0..d).map(|_| coef.sample(&mut rng)).collect();
    let treatment_effect = match cfg.treatment_effect {
        Some(w) => w,
        None => coef.sample(&mut rng),
    };

    let features: Vec<f32> = (0..n * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z as f32
        })
        .collect();
    let noise_dist =
        Normal::new(cfg.noise_mean, cfg.noise_std).map_err(|e| Error::Config(format!("{e}")))?;
    let noise: Vec<f64> = (0..n).map(|_| noise_dist.sample(&mut rng)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut treatment = alloc::vec![false; n];
    for &u in &order[..n / 2] {
        treatment[u] = true;
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for p in 0..m {
            if rng.random::<f64>() < cfg.density {
                edges.push((u, p));
            }
        }
    }

    let mut outcome = Vec::with_capacity(n);
    let mut effects = Vec::with_capacity(n);
    for u in 0..n {
        // base index from the stored (f32) features so the audit matches what models see
        let base: f64 = features[u * d..(u + 1) * d]
            .iter()
            .zip(&feature_weights)
            .map(|(&x, &w)| x as f64 * w)
            .sum::<f64>()
            + noise[u];
        let treated = relu(base + treatment_effect);
        let control = relu(base);
        effects.push(treated - control);
        outcome.push(if treatment[u] { treated } else { control } as f32);
    }

    let (graph, _) = BipartiteGraph::new(n, m, &edges)?;
    let dataset = Dataset::new(
        graph,
        Matrix::from_vec(n, d, features)?,
        ProductFeatures::OneHot,
        treatment,
        outcome,
        alloc::vec![true; n],
    )?;
    Ok(SyntheticDataset {
        dataset,
        effects,
        treatment_effect,
        feature_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_treatment_effect_means_zero_effects() {
        let cfg = SyntheticConfig {
            treatment_effect: Some(0.0),
            ..SyntheticConfig::new(200, 20, 4, 0.1, 3)
        };
        let s = generate_synthetic(&cfg).unwrap();
        assert!(s.effects.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn linear_region_ate_recovers_treatment_effect() {
        // shifting the noise mean far above zero keeps every pre-activation positive
        let cfg = SyntheticConfig {
            noise_mean: 1_000.0,
            ..SyntheticConfig::new(2_000, 10, 3, 0.05, 17)
        };
        let s = generate_synthetic(&cfg).unwrap();
        let ds = &s.dataset;
        let (mut t, mut c) = (Vec::new(), Vec::new());
        for u in 0..ds.users() {
            let y = ds.outcome()[u] as f64;
            assert!(y > 0.0);
            if ds.treatment()[u] { t.push(y) } else { c.push(y) }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let ate = mean(&t) - mean(&c);
        let se = (var(&t) / t.len() as f64 + var(&c) / c.len() as f64).sqrt();
        assert!((ate - s.treatment_effect).abs() < 3.0 * se, "ate {ate}, w_t {}, se {se}", s.treatment_effect);
        for &e in &s.effects {
            assert!((e - s.treatment_effect).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SyntheticConfig::new(50, 10, 3, 0.2, 9);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.effects, b.effects);
        let other = generate_synthetic(&SyntheticConfig { simulation: 1, ..cfg }).unwrap();
        assert_ne!(a.dataset, other.dataset);
    }

    #[test]
    fn balanced_treatment_and_planted_coefficients() {
        let s = generate_synthetic(&SyntheticConfig::new(101, 7, 2, 0.3, 0)).unwrap();
        assert_eq!(s.dataset.treatment().iter().filter(|&&t| t).count(), 50);
        assert!((10.0..20.0).contains(&s.treatment_effect));
        assert!(s.feature_weights.iter().all(|w| (10.0..20.0).contains(w)));
    }

    #[test]
    fn invalid_density_rejected() {
        assert!(generate_synthetic(&SyntheticConfig::new(10, 5, 2, 0.0, 0)).is_err());
        assert!(generate_synthetic(&SyntheticConfig::new(10, 5, 2, 1.5, 0)).is_err());
    }

    #[test]
    fn effects_nonnegative_for_nonnegative_treatment_effect() {
        for seed in 0..5 {
            let s = generate_synthetic(&SyntheticConfig::new(80, 5, 3, 0.2, seed)).unwrap();
            assert!(s.effects.iter().all(|&e| e >= 0.0));
        }
    }
}
