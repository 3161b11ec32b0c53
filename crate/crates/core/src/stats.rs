use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
pub fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    stddev(xs) / (xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    /// One-sided p-value for `mean(a - b) > 0`.
    pub p_value: f64,
}

/// Paired one-sided t-test of `a > b`.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> PairedTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mean_diff = mean(&d);
    let se = std_error(&d);
    if n < 2 {
        return PairedTest {
            n,
            mean_diff,
            t: f64::NAN,
            p_value: 1.0,
        };
    }
    if se == 0.0 {
        let p_value = if mean_diff > 0.0 { 0.0 } else { 1.0 };
        let t = if mean_diff > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        return PairedTest {
            n,
            mean_diff,
            t,
            p_value,
        };
    }
    let t = mean_diff / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    PairedTest {
        n,
        mean_diff,
        t,
        p_value: 1.0 - dist.cdf(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&xs), 5.0);
        assert!((stddev(&xs) - 2.138089935299395).abs() < 1e-12);
    }

    #[test]
    fn paired_test_known_value() {
        // differences 1, 2, 3, 4: mean 2.5, sd 1.29099, t = 3.87298, df 3.
        let a = [2.0, 4.0, 6.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let r = paired_t_greater(&a, &b);
        assert!((r.t - 3.872983346207417).abs() < 1e-9);
        // Upper tail of t(3) at 3.873 is about 0.0152.
        assert!((r.p_value - 0.01522).abs() < 2e-4, "p = {}", r.p_value);
        assert!(paired_t_greater(&b, &a).p_value > 0.95);
    }

    #[test]
    fn constant_difference() {
        let r = paired_t_greater(&[2.0, 3.0], &[1.0, 2.0]);
        assert_eq!(r.p_value, 0.0);
    }
}
