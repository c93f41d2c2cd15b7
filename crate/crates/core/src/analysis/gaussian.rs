//! Closed forms for the one-step linear–Gaussian MRP and simulation oracles
//! that check them.
//!
//! The model has a deterministic reward `r`, successor return
//! `Z1' = μ + σW` and base noises `X0' = V'`, `X0 = ρV' + √(1-ρ²)V` with
//! `W, V, V'` independent standard normals.

use alloc::vec::Vec;

use crate::analysis::stats::{kernel_regression, silverman_bandwidth};
use crate::error::{config, usage, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCase {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub rho: f64,
    pub r: f64,
}

impl GaussianCase {
    pub fn new(mu: f64, sigma: f64, gamma: f64, rho: f64, r: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(config("sigma must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(config("gamma must lie in (0, 1)"));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(config("rho must lie in [-1, 1]"));
        }
        Ok(Self { mu, sigma, gamma, rho, r })
    }

    /// Mean of the current return, `r + γμ`.
    pub fn current_mean(&self) -> f64 {
        self.r + self.gamma * self.mu
    }
}

/// `(x - t(r + γ x1')) / (1 - t)`: the base noise that the current-path
/// interpolant maps to `x`.
pub fn implied_noise(x: f64, x1_prime: f64, r: f64, gamma: f64, t: f64) -> Result<f64> {
    if t == 1.0 {
        return Err(Error::Singular("implied noise at t = 1"));
    }
    if !(0.0..1.0).contains(&t) {
        return Err(usage("implied noise needs t in [0, 1)"));
    }
    Ok((x - t * (r + gamma * x1_prime)) / (1.0 - t))
}

/// Regression slope of `Z1 - X0` on `Z_t` for `Z1 ~ N(·, σ²)`, `X0 ~ N(0, 1)`.
pub fn gaussian_beta(t: f64, sigma: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    let den = t * t * s2 + (1.0 - t) * (1.0 - t);
    if den == 0.0 {
        return Err(Error::Singular("gaussian beta"));
    }
    Ok((t * s2 - (1.0 - t)) / den)
}

/// Population successor velocity `μ + β(t, σ)(z' - tμ)`.
pub fn gaussian_vstar_successor(z_prime: f64, t: f64, mu: f64, sigma: f64) -> Result<f64> {
    Ok(mu + gaussian_beta(t, sigma)? * (z_prime - t * mu))
}

/// Slope of `E[C | Z_t = x]` in the centred current-path position.
pub fn kappa(t: f64, gamma: f64, sigma: f64, rho: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    let omt = 1.0 - t;
    let gt = gamma * t;
    let den = (t * t * s2 + omt * omt) * (gt * gt * s2 + omt * omt);
    if den == 0.0 {
        return Err(Error::Singular("kappa"));
    }
    Ok(t * omt * s2 * (rho - gamma) / den)
}

/// Variance-minimising control-variate coefficient `γ(1-t) + ρt`.
pub fn lambda_star(t: f64, gamma: f64, rho: f64) -> f64 {
    gamma * (1.0 - t) + rho * t
}

/// `Var(u^λ | t) = 1 + γ²σ² + (σ²/D_t)(λ² - 2λλ*)`, `D_t = t²σ² + (1-t)²`.
pub fn target_variance(lambda: f64, t: f64, gamma: f64, sigma: f64, rho: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    let d = t * t * s2 + (1.0 - t) * (1.0 - t);
    if d == 0.0 {
        return Err(Error::Singular("target variance"));
    }
    let ls = lambda_star(t, gamma, rho);
    Ok(1.0 + gamma * gamma * s2 + s2 / d * (lambda * lambda - 2.0 * lambda * ls))
}

/// One joint draw of the model at time `t`.
struct Draw {
    /// Centred current-path position `Z_t - t(r + γμ)`.
    x: f64,
    /// BCFM target `r + γZ1' - X0`.
    y: f64,
    /// Control variate `v̄*(Z_t', t) - (Z1' - X0')`.
    c: f64,
}

fn draw(case: &GaussianCase, t: f64, beta: f64, rng: &mut RngStream) -> Draw {
    let (w, v, vp) = (rng.normal(), rng.normal(), rng.normal());
    let z1p = case.mu + case.sigma * w;
    let x0p = vp;
    let x0 = case.rho * vp + libm::sqrt(1.0 - case.rho * case.rho) * v;
    let ztp = t * z1p + (1.0 - t) * x0p;
    let vstar = case.mu + beta * (ztp - t * case.mu);
    let target = case.r + case.gamma * z1p;
    let zt = t * target + (1.0 - t) * x0;
    Draw {
        x: zt - t * case.current_mean(),
        y: target - x0,
        c: vstar - (z1p - x0p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaEstimate {
    pub slope: f64,
    pub std_error: f64,
    pub kappa_exact: f64,
    /// Relative error of `slope`; the absolute error when `kappa_exact = 0`.
    pub rel_error: f64,
}

/// Regresses the control variate on the centred current-path position
/// through the origin and compares the slope with [`kappa`].
pub fn verify_kappa_mc(
    case: &GaussianCase,
    t: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<KappaEstimate> {
    if n_samples < 100_000 {
        return Err(usage("kappa check needs at least 1e5 samples"));
    }
    let beta = gaussian_beta(t, case.sigma)?;
    let kappa_exact = kappa(t, case.gamma, case.sigma, case.rho)?;
    let draws: Vec<(f64, f64)> = (0..n_samples)
        .map(|_| {
            let d = draw(case, t, beta, rng);
            (d.x, d.c)
        })
        .collect();
    let sxx: f64 = draws.iter().map(|(x, _)| x * x).sum();
    if !(sxx > 0.0) {
        return Err(Error::Numeric {
            context: "kappa regressor variance",
            index: 0,
        });
    }
    let slope = draws.iter().map(|(x, c)| x * c).sum::<f64>() / sxx;
    let sse: f64 = draws.iter().map(|(x, c)| (c - slope * x) * (c - slope * x)).sum();
    let std_error = libm::sqrt(sse / (n_samples - 1) as f64 / sxx);
    let err = (slope - kappa_exact).abs();
    let rel_error = if kappa_exact == 0.0 { err } else { err / kappa_exact.abs() };
    Ok(KappaEstimate {
        slope,
        std_error,
        kappa_exact,
        rel_error,
    })
}

/// Sample second moments of the BCFM target `Y` and control variate `C`, from
/// which `Var(Y + λC)` follows for every `λ` on common random numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetMoments {
    pub var_y: f64,
    pub cov_yc: f64,
    pub var_c: f64,
}

impl TargetMoments {
    pub fn variance(&self, lambda: f64) -> f64 {
        self.var_y + 2.0 * lambda * self.cov_yc + lambda * lambda * self.var_c
    }

    /// Grid point minimising [`Self::variance`] over `[0, hi]` with spacing `step`.
    pub fn argmin_on_grid(&self, step: f64, hi: f64) -> f64 {
        let n = libm::round(hi / step) as usize;
        (0..=n)
            .map(|k| k as f64 * step)
            .min_by(|a, b| self.variance(*a).total_cmp(&self.variance(*b)))
            .unwrap_or(0.0)
    }
}

pub fn simulate_target_moments(
    case: &GaussianCase,
    t: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<TargetMoments> {
    if n_samples < 2 {
        return Err(usage("need at least two samples"));
    }
    let beta = gaussian_beta(t, case.sigma)?;
    let (mut sy, mut sc, mut syy, mut scc, mut syc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_samples {
        let d = draw(case, t, beta, rng);
        sy += d.y;
        sc += d.c;
        syy += d.y * d.y;
        scc += d.c * d.c;
        syc += d.y * d.c;
    }
    let n = n_samples as f64;
    let k = 1.0 / (n - 1.0);
    Ok(TargetMoments {
        var_y: (syy - sy * sy / n) * k,
        cov_yc: (syc - sy * sc / n) * k,
        var_c: (scc - sc * sc / n) * k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityPoint {
    pub x: f64,
    pub estimate: f64,
    pub exact: f64,
}

/// Kernel-regression estimate of `E[(r + γZ1') - X0 | Z_t = x]` for
/// independent `X0 ~ N(0, 1)`, against the closed form
/// `m + β(t, γσ)(x - tm)` with `m = r + γμ`.
pub fn posterior_velocity_check(
    case: &GaussianCase,
    t: f64,
    x_grid: &[f64],
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<(Vec<VelocityPoint>, f64)> {
    if n_samples < 2 {
        return Err(usage("need at least two samples"));
    }
    let m = case.current_mean();
    let beta = gaussian_beta(t, case.gamma * case.sigma)?;
    let mut xs = Vec::with_capacity(n_samples);
    let mut ys = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x0 = rng.normal();
        let x1 = case.r + case.gamma * (case.mu + case.sigma * rng.normal());
        xs.push((1.0 - t) * x0 + t * x1);
        ys.push(x1 - x0);
    }
    let h = silverman_bandwidth(&xs);
    let est = kernel_regression(&xs, &ys, x_grid, h);
    let points = x_grid
        .iter()
        .zip(est)
        .map(|(&x, estimate)| VelocityPoint {
            x,
            estimate,
            exact: m + beta * (x - t * m),
        })
        .collect();
    Ok((points, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implied_noise_examples() {
        assert_eq!(implied_noise(1.7, 3.0, 1.0, 0.9, 0.0).unwrap(), 1.7);
        assert_eq!(implied_noise(1.0, 5.0, 0.0, 0.0, 0.5).unwrap(), 2.0);
        let (u, x1, r, g, t) = (0.37, -1.2, 1.0, 0.9, 0.6);
        let x = (1.0 - t) * u + t * (r + g * x1);
        assert!((implied_noise(x, x1, r, g, t).unwrap() - u).abs() < 1e-12);
        assert!(matches!(implied_noise(1.0, 1.0, 0.0, 0.9, 1.0), Err(Error::Singular(_))));
    }

    #[test]
    fn beta_examples() {
        assert_eq!(gaussian_beta(1.0, 2.0).unwrap(), 1.0);
        assert_eq!(gaussian_beta(0.0, 2.0).unwrap(), -1.0);
        assert_eq!(gaussian_beta(0.5, 1.0).unwrap(), 0.0);
        assert!(gaussian_beta(1.0, 0.0).is_err());
    }

    #[test]
    fn vstar_examples() {
        assert_eq!(gaussian_vstar_successor(0.3 * 2.0, 0.3, 2.0, 1.5).unwrap(), 2.0);
        assert!((gaussian_vstar_successor(4.2, 1.0, 2.0, 0.7).unwrap() - 4.2).abs() < 1e-15);
    }

    #[test]
    fn vstar_matches_conditional_mean() {
        let case = GaussianCase::new(1.0, 1.0, 0.5, 0.0, 0.0).unwrap();
        // γ = 1, r = 0 turns the current-path check into the successor flow.
        let succ = GaussianCase { gamma: 1.0, ..case };
        let mut rng = RngStream::new(11);
        let grid = [0.0, 0.5, 1.0];
        let (pts, _) = posterior_velocity_check(&succ, 0.5, &grid, 1_000_000, &mut rng).unwrap();
        for p in pts {
            let want = gaussian_vstar_successor(p.x, 0.5, 1.0, 1.0).unwrap();
            assert!((p.exact - want).abs() < 1e-12);
            assert!((p.estimate - want).abs() <= 0.02 * want.abs());
        }
    }

    #[test]
    fn kappa_examples() {
        for &t in &[0.1, 0.5, 0.9] {
            for &s in &[0.5, 1.0, 3.0] {
                assert_eq!(kappa(t, 0.9, s, 0.9).unwrap(), 0.0);
            }
        }
        assert_eq!(kappa(0.0, 0.9, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(kappa(1.0, 0.9, 1.0, 1.0).unwrap(), 0.0);
        let scaled: Vec<f64> = [0.9, 0.99, 0.999]
            .iter()
            .map(|&g| kappa(0.5, g, 1.0, 1.0).unwrap() / (1.0 - g))
            .collect();
        for s in &scaled {
            assert!(s.is_finite() && s.abs() < 2.0);
        }
    }

    #[test]
    fn lambda_star_examples() {
        assert_eq!(lambda_star(0.0, 0.9, 0.2), 0.9);
        assert_eq!(lambda_star(1.0, 0.9, 0.2), 0.2);
        for &t in &[0.1, 0.4, 0.8] {
            assert!((lambda_star(t, 0.7, 0.7) - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn target_variance_examples() {
        assert_eq!(target_variance(0.0, 0.4, 0.9, 2.0, 1.0).unwrap(), 1.0 + 0.81 * 4.0);
        let (t, g, s, r) = (0.4, 0.9, 1.3, 0.5);
        let ls = lambda_star(t, g, r);
        let h = 1e-4;
        let d = (target_variance(ls + h, t, g, s, r).unwrap() - target_variance(ls - h, t, g, s, r).unwrap()) / (2.0 * h);
        assert!(d.abs() <= 1e-8);
    }

    #[test]
    fn target_variance_matches_simulation() {
        let case = GaussianCase::new(0.0, 1.0, 0.9, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(5);
        let m = simulate_target_moments(&case, 0.4, 1_000_000, &mut rng).unwrap();
        let want = target_variance(0.3, 0.4, 0.9, 1.0, 1.0).unwrap();
        assert!((m.variance(0.3) - want).abs() <= 0.02 * want);
    }

    #[test]
    fn kappa_regression() {
        let mut rng = RngStream::new(3);
        let shared = GaussianCase::new(1.0, 1.0, 0.9, 1.0, 0.5).unwrap();
        let est = verify_kappa_mc(&shared, 0.5, 1_000_000, &mut rng).unwrap();
        assert!(est.rel_error <= 0.10, "{est:?}");
        let indep = GaussianCase { rho: 0.0, ..shared };
        let est = verify_kappa_mc(&indep, 0.5, 1_000_000, &mut rng).unwrap();
        assert!(est.slope < 0.0 && est.rel_error <= 0.10, "{est:?}");
        let zero = GaussianCase { rho: 0.9, ..shared };
        let est = verify_kappa_mc(&zero, 0.5, 1_000_000, &mut rng).unwrap();
        assert!(est.slope.abs() <= 3.0 * est.std_error, "{est:?}");
        assert!(verify_kappa_mc(&zero, 0.5, 10, &mut rng).is_err());
    }
}
