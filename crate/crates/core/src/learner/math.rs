use crate::error::{Error, Result};

/// Tolerance used when checking that a weight row is a probability vector.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Divides each entry by the total. An all-zero vector maps to itself.
pub fn sum_normalize(v: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in v.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    Ok(v.iter().map(|x| x / total).collect())
}

/// Sum-normalises a slice in place. Assumes non-negative entries.
pub(crate) fn sum_normalize_in_place(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
}

pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Relative entropy of a weight row from the uniform distribution over its
/// `n` entries, in nats. Zero entries contribute nothing.
pub fn group_entropy(row: &[f64]) -> Result<f64> {
    for (index, &value) in row.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::RowNotNormalized { sum });
    }
    Ok(kl_from_uniform(row))
}

pub(crate) fn kl_from_uniform(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let kl: f64 = row
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p * n).ln())
        .sum();
    // Rounding can push a near-uniform row a hair below zero.
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sum_normalize_examples() {
        assert_eq!(
            sum_normalize(&[1.0, 1.0, 2.0]).unwrap(),
            vec![0.25, 0.25, 0.5]
        );
        assert_eq!(sum_normalize(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(sum_normalize(&[3.0, 1.0]).unwrap(), vec![0.75, 0.25]);
    }

    #[test]
    fn sum_normalize_rejects_negative() {
        assert!(matches!(
            sum_normalize(&[1.0, -0.5]),
            Err(Error::NegativeEntry { index: 1, .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let e = std::f64::consts::E;
        let s = softmax(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s[0], e / (e + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 1.0 / (e + 1.0), epsilon = 1e-12);
        for c in [-700.0, 0.0, 3.5, 1e6] {
            for p in softmax(&[c, c, c]).unwrap() {
                assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(group_entropy(&[0.5, 0.5]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            group_entropy(&[1.0, 0.0]).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            group_entropy(&[0.75, 0.25]).unwrap(),
            0.130812035941137,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_rejects_unnormalized_row() {
        assert!(matches!(
            group_entropy(&[0.5, 0.6]),
            Err(Error::RowNotNormalized { .. })
        ));
    }

    fn prob_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..10.0, n).prop_filter_map("zero row", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn softmax_is_probability_vector(v in prop::collection::vec(-50.0f64..50.0, 1..30)) {
            let s = softmax(&v).unwrap();
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|p| *p > 0.0));
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] > v[j] {
                        prop_assert!(s[i] > s[j]);
                    }
                }
            }
        }

        #[test]
        fn sum_normalize_sums_to_one(v in prop::collection::vec(0.0f64..100.0, 1..30)) {
            let s = sum_normalize(&v).unwrap();
            if v.iter().sum::<f64>() > 0.0 {
                prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn entropy_bounded_by_log_n(row in (1usize..25).prop_flat_map(prob_row)) {
            let h = group_entropy(&row).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (row.len() as f64).ln() + 1e-12);
        }
    }
}
