use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Difference of mean outcomes between treated and control users of `subset`.
///
/// Summation runs in index order, so the result depends only on the set.
pub fn ate(outcome: &[f64], treatment: &[bool], subset: &[usize]) -> Result<f64> {
    let mut users = subset.to_vec();
    users.sort_unstable();
    let (mut sum_t, mut n_t, mut sum_c, mut n_c) = (0.0, 0usize, 0.0, 0usize);
    for &u in &users {
        let (y, t) = match (outcome.get(u), treatment.get(u)) {
            (Some(&y), Some(&t)) => (y, t),
            _ => return Err(Error::param(alloc::format!("user {u} out of range"))),
        };
        if t {
            sum_t += y;
            n_t += 1;
        } else {
            sum_c += y;
            n_c += 1;
        }
    }
    if n_t == 0 || n_c == 0 {
        return Err(Error::UndefinedAte {
            treated: n_t,
            control: n_c,
        });
    }
    Ok(sum_t / n_t as f64 - sum_c / n_c as f64)
}

/// The `⌈frac·|set|⌉` users of `set` with the largest predicted uplift
/// (ties go to the lower index).
pub fn top_set(uplift: &[f64], set: &[usize], frac: f64) -> Result<Vec<usize>> {
    if set.is_empty() {
        return Err(Error::param("evaluation set is empty"));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::param(alloc::format!("fraction {frac} outside (0, 1]")));
    }
    if let Some(&u) = set.iter().find(|&&u| u >= uplift.len()) {
        return Err(Error::param(alloc::format!("user {u} out of range")));
    }
    if let Some(&u) = set.iter().find(|&&u| uplift[u].is_nan()) {
        return Err(Error::Numerical(alloc::format!("predicted uplift of user {u} is NaN")));
    }
    let size = num_traits::Float::ceil(frac * set.len() as f64 - 1e-9).max(1.0) as usize;
    let mut ranked = set.to_vec();
    ranked.sort_by(|&a, &b| uplift[b].total_cmp(&uplift[a]).then(a.cmp(&b)));
    ranked.truncate(size.min(set.len()));
    Ok(ranked)
}

/// Observed ATE on the top `frac` of `set` ranked by predicted uplift.
pub fn uplift_at_k(uplift: &[f64], outcome: &[f64], treatment: &[bool], set: &[usize], frac: f64) -> Result<f64> {
    ate(outcome, treatment, &top_set(uplift, set, frac)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn ate_hand_example() {
        let y = [5.0, 3.0, 2.0, 2.0];
        let t = [true, true, false, false];
        assert_eq!(ate(&y, &t, &[0, 1, 2, 3]).unwrap(), 2.0);
        assert_eq!(ate(&[4.0; 4], &t, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert!(matches!(
            ate(&y, &t, &[0, 1]),
            Err(Error::UndefinedAte { treated: 2, control: 0 })
        ));
    }

    #[test]
    fn uplift_hand_example() {
        let tau = [9.0, 8.0, 1.0, 0.0, -1.0];
        let t = [true, false, true, false, true];
        let y = [10.0, 4.0, 3.0, 3.0, 0.0];
        let all = [0, 1, 2, 3, 4];
        assert_eq!(top_set(&tau, &all, 0.4).unwrap(), vec![0, 1]);
        assert_eq!(uplift_at_k(&tau, &y, &t, &all, 0.4).unwrap(), 6.0);
        // top 20% of 5 is one treated user
        assert!(matches!(uplift_at_k(&tau, &y, &t, &all, 0.2), Err(Error::UndefinedAte { .. })));
    }

    #[test]
    fn top_set_rounds_up_and_breaks_ties_by_index() {
        let tau = [1.0, 2.0, 2.0, 0.0];
        assert_eq!(top_set(&tau, &[3, 2, 1, 0], 0.5).unwrap(), vec![1, 2]);
        assert_eq!(top_set(&tau, &[0, 1, 2], 0.2).unwrap(), vec![1]);
        assert_eq!(top_set(&tau, &[0, 1, 2, 3], 0.26).unwrap().len(), 2);
        assert!(top_set(&tau, &[], 0.5).is_err());
        assert!(top_set(&tau, &[0], 0.0).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-50.0f64..50.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn whole_set_equals_ate((tau, y, t) in instance()) {
            let all: Vec<usize> = (0..tau.len()).collect();
            let a = ate(&y, &t, &all);
            let b = uplift_at_k(&tau, &y, &t, &all, 1.0);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn invariant_under_monotone_transform((tau, _, _) in instance(), frac in 0.05f64..1.0) {
            let all: Vec<usize> = (0..tau.len()).collect();
            let warped: Vec<f64> = tau.iter().map(|v| (v / 10.0).exp() * 3.0 - 1.0).collect();
            prop_assert_eq!(top_set(&tau, &all, frac).unwrap(), top_set(&warped, &all, frac).unwrap());
        }
    }
}
