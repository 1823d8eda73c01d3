use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub uncertainty: f64,
    pub degree: f64,
    pub distance: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            uncertainty: 0.2,
            degree: 0.1,
            distance: 0.7,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("uncertainty", self.uncertainty),
            ("degree", self.degree),
            ("distance", self.distance),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} weight {w} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Min-max normalized Q, D, M over the candidates and their weighted sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScores {
    pub uncertainty: Vec<f64>,
    pub degree: Vec<f64>,
    pub distance: Vec<f64>,
    pub combined: Vec<f64>,
    pub weights: ScoreWeights,
}

/// Maps to `[0, 1]`; a constant vector maps to zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

pub fn compute_scores(
    uncertainty: &[f64],
    degree: &[f64],
    distance: &[f64],
    weights: ScoreWeights,
) -> Result<AcquisitionScores> {
    let n = uncertainty.len();
    if degree.len() != n || distance.len() != n {
        return Err(Error::shape(
            "compute_scores",
            format!("Q {n}, D {}, M {}", degree.len(), distance.len()),
        ));
    }
    weights.validate()?;
    if let Some(v) = uncertainty.iter().chain(degree).chain(distance).find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("acquisition input {v} is not finite")));
    }
    let q = min_max_normalize(uncertainty);
    let d = min_max_normalize(degree);
    let m = min_max_normalize(distance);
    let combined = (0..n)
        .map(|u| weights.uncertainty * q[u] + weights.degree * d[u] + weights.distance * m[u])
        .collect();
    Ok(AcquisitionScores {
        uncertainty: q,
        degree: d,
        distance: m,
        combined,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let s = compute_scores(&[0.0, 1.0], &[1.0, 0.0], &[0.0, 0.0], ScoreWeights::default()).unwrap();
        assert!((s.combined[0] - 0.1).abs() < 1e-15);
        assert!((s.combined[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_inputs_contribute_nothing() {
        let s = compute_scores(&[3.0; 4], &[1.0, 2.0, 3.0, 4.0], &[0.0; 4], ScoreWeights::default()).unwrap();
        assert_eq!(s.uncertainty, vec![0.0; 4]);
        assert!((s.combined[3] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn distance_only_weights_rank_by_distance() {
        let w = ScoreWeights {
            uncertainty: 0.0,
            degree: 0.0,
            distance: 1.0,
        };
        let m = [0.3, 2.0, 1.1];
        let s = compute_scores(&[5.0, 1.0, 0.0], &[0.0, 9.0, 3.0], &m, w).unwrap();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| s.combined[b].total_cmp(&s.combined[a]));
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            compute_scores(&[0.0], &[0.0, 1.0], &[0.0], ScoreWeights::default()),
            Err(Error::Shape { .. })
        ));
        let neg = ScoreWeights {
            uncertainty: -1.0,
            ..ScoreWeights::default()
        };
        assert!(compute_scores(&[0.0], &[0.0], &[0.0], neg).is_err());
    }

    proptest! {
        #[test]
        fn normalized_scores_in_unit_interval(v in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let s = compute_scores(&v, &v, &v, ScoreWeights::default()).unwrap();
            for x in s.uncertainty.iter().chain(&s.degree).chain(&s.distance) {
                prop_assert!((0.0..=1.0).contains(x));
            }
        }

        #[test]
        fn raising_uncertainty_never_lowers_rank(
            q in prop::collection::vec(0.0f64..1.0, 2..30),
            d in prop::collection::vec(0.0f64..10.0, 30),
            m in prop::collection::vec(0.0f64..5.0, 30),
            who in 0usize..30,
            bump in 0.0f64..2.0,
        ) {
            let n = q.len();
            let (d, m, who) = (&d[..n], &m[..n], who % n);
            let before = compute_scores(&q, d, m, ScoreWeights::default()).unwrap().combined;
            let mut q2 = q.clone();
            q2[who] += bump;
            let after = compute_scores(&q2, d, m, ScoreWeights::default()).unwrap().combined;
            let beats = |s: &[f64]| (0..n).filter(|&v| v != who && s[v] > s[who]).count();
            prop_assert!(beats(&after) <= beats(&before));
        }
    }
}
