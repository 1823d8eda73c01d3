use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{stream, Stream};
use crate::tensor::Matrix;

/// k-means partition of the users with each user's distance to its centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub centroids: Matrix<f64>,
    /// Euclidean distance from each point to its assigned centroid.
    pub distance: Vec<f64>,
    /// Total squared distance after each assignment step.
    pub distortion_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn distortion(&self) -> f64 {
        self.distortion_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (lower index on ties) and the squared distances.
fn assign(points: &Matrix<f64>, centroids: &Matrix<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..points.rows())
        .map(|i| {
            let p = points.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..centroids.rows() {
                let d = sq_dist(p, centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iterations` updates have run.
pub fn kmeans<T: Real>(points: &Matrix<T>, k: usize, seed: u64, max_iterations: usize) -> Result<ClusterModel> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::param(format!("k = {k} clusters for {n} points")));
    }
    if !points.is_finite() {
        return Err(Error::Numerical("clustering input is not finite".into()));
    }
    let x: Matrix<f64> = points.cast();
    let d = x.cols();
    let mut rng = stream(seed, Stream::Kmeans);

    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            if nearest[pick] == 0.0 {
                // rounding ran past the last positive weight
                pick = (0..n).rev().find(|&i| nearest[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    let mut centroids = Matrix::zeros(k, d);
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(x.row(i));
    }

    let (mut assignment, mut sq) = assign(&x, &centroids);
    let mut history = vec![sq.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut sums = Matrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // move the worst-served point of a shared cluster into the empty one
                let far = (0..n)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = sq_dist(x.row(a), centroids.row(assignment[a]));
                        let db = sq_dist(x.row(b), centroids.row(assignment[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    counts[assignment[i]] -= 1;
                    counts[c] = 1;
                    assignment[i] = c;
                    centroids.row_mut(c).copy_from_slice(x.row(i));
                }
            }
        }
        let (next, next_sq) = assign(&x, &centroids);
        history.push(next_sq.iter().sum());
        sq = next_sq;
        let converged = next == assignment;
        assignment = next;
        if converged {
            break;
        }
    }
    Ok(ClusterModel {
        k,
        distance: sq.iter().map(|&s| num_traits::Float::sqrt(s)).collect(),
        assignment,
        centroids,
        distortion_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn k_equals_n_puts_every_point_alone() {
        let x = Matrix::from_rows(&[&[0.0, 1.0], &[4.0, 2.0], &[-3.0, 7.0], &[1.0, 1.0]]).unwrap();
        let model = kmeans(&x, 4, 3, 50).unwrap();
        let mut seen = model.assignment.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        assert!(model.distance.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn identical_points_single_cluster() {
        let x = Matrix::filled(6, 3, 2.5f64);
        let model = kmeans(&x, 1, 0, 10).unwrap();
        assert_eq!(model.centroids.row(0), &[2.5, 2.5, 2.5]);
        assert_eq!(model.distortion(), 0.0);
    }

    #[test]
    fn separated_blobs_are_not_mixed() {
        let mut rng = stream(9, Stream::Data);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut data = Vec::new();
        for i in 0..60 {
            let centre = if i % 2 == 0 { 0.0 } else { 100.0 };
            data.push(centre + noise.sample(&mut rng));
            data.push(noise.sample(&mut rng));
        }
        let x = Matrix::from_vec(60, 2, data).unwrap();
        for seed in 0..10 {
            let model = kmeans(&x, 2, seed, 100).unwrap();
            for i in 0..60 {
                assert_eq!(model.assignment[i], model.assignment[i % 2], "seed {seed}");
            }
            assert_ne!(model.assignment[0], model.assignment[1]);
        }
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let x = Matrix::filled(3, 1, 1.0f32);
        assert!(matches!(kmeans(&x, 4, 0, 10), Err(Error::Parameter(_))));
        assert!(matches!(kmeans(&x, 0, 0, 10), Err(Error::Parameter(_))));
    }

    #[test]
    fn duplicates_with_many_clusters_stay_valid() {
        let x = Matrix::from_rows(&[&[1.0], &[1.0], &[1.0], &[5.0]]).unwrap();
        let model = kmeans(&x, 3, 2, 20).unwrap();
        assert!(model.assignment.iter().all(|&c| c < 3));
        assert!(model.distance.iter().all(|&m| m == 0.0));
    }

    proptest! {
        #[test]
        fn distortion_never_increases(
            seed in 0u64..1000,
            n in 2usize..60,
            k in 1usize..8,
        ) {
            let k = k.min(n);
            let mut rng = stream(seed, Stream::Data);
            let data: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let x = Matrix::from_vec(n, 3, data).unwrap();
            let model = kmeans(&x, k, seed, 100).unwrap();
            for w in model.distortion_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", model.distortion_history);
            }
            prop_assert!(model.assignment.iter().all(|&c| c < k));
            prop_assert!(model.distance.iter().all(|&m| m >= 0.0));
            let direct: f64 = model.distance.iter().map(|m| m * m).sum();
            prop_assert!((direct - model.distortion()).abs() <= 1e-9 * (1.0 + direct));
        }
    }
}
