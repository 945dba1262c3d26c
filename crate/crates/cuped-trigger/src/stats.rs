//! Shared scalar statistics helpers (n-1 conventions throughout).

pub fn mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the n-1 denominator; 0 for n < 2.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Sample covariance with the n-1 denominator; 0 for n < 2.
pub fn sample_covariance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Two-sided tail probability of the standard normal distribution,
/// `P(|Z| > |z|)`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn variance_uses_n_minus_one() {
        assert_relative_eq!(sample_variance(&[1.0, 3.0]), 2.0);
        assert_eq!(sample_variance(&[5.0]), 0.0);
    }

    #[test]
    fn covariance_matches_hand_value() {
        // pairs (1,2),(3,4): means (2,3); cov = ((-1)(-1)+(1)(1))/1 = 2
        assert_relative_eq!(sample_covariance(&[1.0, 3.0], &[2.0, 4.0]), 2.0);
    }

    #[test]
    fn normal_tail_matches_known_quantiles() {
        assert_relative_eq!(normal_two_sided_p(0.0), 1.0);
        assert_relative_eq!(normal_two_sided_p(1.959964), 0.05, epsilon = 1e-6);
        assert_relative_eq!(normal_two_sided_p(-1.959964), 0.05, epsilon = 1e-6);
    }
}
