//! One-dimensional return laws with exactly integrable CDFs.

use alloc::vec::Vec;

use crate::error::{config, usage, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ReturnLaw {
    /// Finitely many atoms, strictly increasing, with positive probabilities.
    Atoms { values: Vec<f64>, probs: Vec<f64> },
    /// Continuous CDF, linear between knots; 0 below the first knot and 1
    /// from the last knot on.
    ContinuousCdf { knots: Vec<f64>, cdf: Vec<f64> },
    /// Sorted samples, each carrying mass `1/n`.
    Empirical { samples: Vec<f64> },
}

impl ReturnLaw {
    pub fn atoms(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(config("atoms need matching non-empty values and probs"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) || values.iter().any(|v| !v.is_finite()) {
            return Err(config("atom values must be finite and strictly increasing"));
        }
        if probs.iter().any(|&p| !(p > 0.0)) {
            return Err(config("atom probabilities must be positive"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(config("atom probabilities must sum to one"));
        }
        Ok(Self::Atoms { values, probs })
    }

    pub fn point_mass(x: f64) -> Self {
        Self::Atoms {
            values: alloc::vec![x],
            probs: alloc::vec![1.0],
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(config("uniform law needs finite lo < hi"));
        }
        Ok(Self::ContinuousCdf {
            knots: alloc::vec![lo, hi],
            cdf: alloc::vec![0.0, 1.0],
        })
    }

    /// Sorts `samples`; rejects empty or non-finite input.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(usage("empirical law needs at least one sample"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(usage("empirical samples must be finite"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self::Empirical { samples })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Atoms { values, probs } => {
                let k = values.partition_point(|&v| v <= x);
                if k == values.len() {
                    1.0
                } else {
                    probs[..k].iter().sum()
                }
            }
            Self::ContinuousCdf { knots, cdf } => piecewise_linear(knots, cdf, x),
            Self::Empirical { samples } => {
                samples.partition_point(|&v| v <= x) as f64 / samples.len() as f64
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        let xs = self.breakpoints();
        (xs[0], xs[xs.len() - 1])
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Atoms { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
            Self::ContinuousCdf { knots, cdf } => knots
                .windows(2)
                .zip(cdf.windows(2))
                .map(|(x, f)| 0.5 * (x[0] + x[1]) * (f[1] - f[0]))
                .sum(),
            Self::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    pub(crate) fn breakpoints(&self) -> &[f64] {
        match self {
            Self::Atoms { values, .. } => values,
            Self::ContinuousCdf { knots, .. } => knots,
            Self::Empirical { samples } => samples,
        }
    }

    pub(crate) fn is_continuous(&self) -> bool {
        matches!(self, Self::ContinuousCdf { .. })
    }
}

fn piecewise_linear(knots: &[f64], cdf: &[f64], x: f64) -> f64 {
    if x < knots[0] {
        return 0.0;
    }
    let last = knots.len() - 1;
    if x >= knots[last] {
        return 1.0;
    }
    let k = knots.partition_point(|&v| v <= x) - 1;
    let w = (x - knots[k]) / (knots[k + 1] - knots[k]);
    cdf[k] + w * (cdf[k + 1] - cdf[k])
}
