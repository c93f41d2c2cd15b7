//! Exact Wasserstein-1 distance between one-dimensional laws.
//!
//! `W1(a, b) = ∫ |F_a(x) - F_b(x)| dx`. Every [`ReturnLaw`] has a CDF that is
//! either a step function or piecewise linear between its breakpoints, so on
//! each interval of the merged breakpoint set the difference `F_a - F_b` is
//! linear and its absolute value integrates in closed form.

use alloc::vec::Vec;

use crate::law::ReturnLaw;

struct Cdf<'a> {
    law: &'a ReturnLaw,
    cum: Vec<f64>,
}

impl<'a> Cdf<'a> {
    fn new(law: &'a ReturnLaw) -> Self {
        let cum = match law {
            ReturnLaw::Atoms { probs, .. } => probs
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect(),
            _ => Vec::new(),
        };
        Self { law, cum }
    }

    /// Right-continuous CDF value at `x`.
    fn at(&self, x: f64) -> f64 {
        match self.law {
            ReturnLaw::Atoms { values, .. } => {
                let k = values.partition_point(|&v| v <= x);
                match k {
                    0 => 0.0,
                    k if k == values.len() => 1.0,
                    k => self.cum[k - 1],
                }
            }
            other => other.cdf(x),
        }
    }

    /// Value approached from the left at `end`, for `x` in `(start, end)`.
    fn left_limit(&self, start: f64, end: f64) -> f64 {
        if self.law.is_continuous() {
            self.at(end)
        } else {
            self.at(start)
        }
    }
}

/// `∫_0^w |d0 + (d1 - d0) s / w| ds`.
fn abs_linear_integral(d0: f64, d1: f64, w: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * w * (d0 + d1).abs()
    } else {
        0.5 * w * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
    }
}

pub fn wasserstein1(a: &ReturnLaw, b: &ReturnLaw) -> f64 {
    let mut xs: Vec<f64> = a
        .breakpoints()
        .iter()
        .chain(b.breakpoints())
        .copied()
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (fa, fb) = (Cdf::new(a), Cdf::new(b));
    xs.windows(2)
        .map(|w| {
            let (x0, x1) = (w[0], w[1]);
            let d0 = fa.at(x0) - fb.at(x0);
            let d1 = fa.left_limit(x0, x1) - fb.left_limit(x0, x1);
            abs_linear_integral(d0, d1, x1 - x0)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_laws() {
        let a = ReturnLaw::empirical(vec![0.3, 1.0, 2.5]).unwrap();
        assert_eq!(wasserstein1(&a, &a), 0.0);
        let u = ReturnLaw::uniform(0.0, 2.0).unwrap();
        assert_eq!(wasserstein1(&u, &u), 0.0);
    }

    #[test]
    fn point_masses() {
        let d0 = ReturnLaw::point_mass(0.0);
        let d1 = ReturnLaw::point_mass(1.0);
        assert_eq!(wasserstein1(&d0, &d1), 1.0);
    }

    #[test]
    fn uniform_vs_point_mass() {
        let u = ReturnLaw::uniform(0.0, 2.0).unwrap();
        let d = ReturnLaw::point_mass(1.0);
        assert!((wasserstein1(&u, &d) - 0.5).abs() < 1e-15);
        assert!((wasserstein1(&d, &u) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_shift() {
        let a = ReturnLaw::uniform(0.0, 2.0).unwrap();
        let b = ReturnLaw::uniform(0.5, 2.5).unwrap();
        assert!((wasserstein1(&a, &b) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn empirical_matches_sorted_pairing() {
        let a = ReturnLaw::empirical(vec![0.0, 3.0, 1.0, 7.0]).unwrap();
        let b = ReturnLaw::empirical(vec![2.0, 2.0, 5.0, -1.0]).unwrap();
        // Equal sample counts: W1 is the mean gap of sorted pairs.
        let want = ((0.0f64 - -1.0).abs() + (1.0f64 - 2.0).abs() + (3.0f64 - 2.0).abs() + (7.0f64 - 5.0).abs()) / 4.0;
        assert!((wasserstein1(&a, &b) - want).abs() < 1e-14);
    }
}
