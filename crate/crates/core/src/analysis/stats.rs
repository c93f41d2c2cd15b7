//! Small statistical helpers shared by the verifiers.

use alloc::vec::Vec;

use crate::error::{usage, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two points.
///
/// Values are shifted by the first point before the two-pass formula, so a
/// constant series gives exactly 0.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let k = xs[0];
    let m = xs.iter().map(|x| x - k).sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - k - m) * (x - k - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    libm::sqrt(sample_variance(xs))
}

/// Kolmogorov–Smirnov statistic of `samples` against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(usage("KS statistic of an empty sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let hi = (i + 1) as f64 / n - f;
            let lo = f - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max))
}

/// Asymptotic one-sample KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / libm::sqrt(n as f64)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Silverman's rule-of-thumb bandwidth `1.06 σ n^{-1/5}`.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    1.06 * sample_std(xs) * libm::pow(xs.len() as f64, -0.2)
}

/// Nadaraya–Watson estimate of `E[y | x = at]` with a Gaussian kernel.
pub fn kernel_regression(xs: &[f64], ys: &[f64], at: &[f64], bandwidth: f64) -> Vec<f64> {
    let inv = 1.0 / bandwidth;
    at.iter()
        .map(|&q| {
            let (mut num, mut den) = (0.0, 0.0);
            for (&x, &y) in xs.iter().zip(ys) {
                let d = (x - q) * inv;
                if d.abs() > 8.0 {
                    continue;
                }
                let w = libm::exp(-0.5 * d * d);
                num += w * y;
                den += w;
            }
            num / den
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(sample_variance(&[3.0]), 0.0);
    }

    #[test]
    fn ks_accepts_matching_law() {
        let mut rng = RngStream::new(1);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.normal()).collect();
        let d = ks_statistic(&xs, normal_cdf).unwrap();
        assert!(d < ks_critical_1pct(xs.len()));
        let shifted = ks_statistic(&xs, |x| normal_cdf(x - 0.2)).unwrap();
        assert!(shifted > ks_critical_1pct(xs.len()));
    }

    #[test]
    fn normal_cdf_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.96) - 0.975).abs() < 1e-4);
    }

    #[test]
    fn kernel_regression_recovers_linear_mean() {
        let mut rng = RngStream::new(2);
        let xs: Vec<f64> = (0..50_000).map(|_| rng.normal()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0 + 0.1 * rng.normal()).collect();
        let h = silverman_bandwidth(&xs);
        let est = kernel_regression(&xs, &ys, &[0.0, 0.5], h);
        assert!((est[0] - 1.0).abs() < 0.02);
        assert!((est[1] - 2.0).abs() < 0.03);
    }
}
