use pcbf_core::analysis::gaussian::kappa;
use pcbf_core::flow::{euler_integrate, VelocityField};
use pcbf_core::RngStream;

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Velocity of the independent linear path from N(0, 1) to N(mu, sigma^2).
struct GaussianField {
    mu: f64,
    sigma: f64,
}

impl VelocityField for GaussianField {
    fn velocity(&mut self, t: f64, z: f64, _context: &[f64]) -> f64 {
        let s2 = (1.0 - t) * (1.0 - t) + t * t * self.sigma * self.sigma;
        self.mu + (t * self.sigma * self.sigma - (1.0 - t)) / s2 * (z - t * self.mu)
    }
}

#[test]
fn source_draws_are_standard_normal() {
    let mut rng = RngStream::new(21);
    let n = 20_000;
    let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let d = ks_statistic(xs, normal_cdf);
    assert!(d < ks_critical_1pct(n), "KS statistic {d}");
}

#[test]
fn zero_time_flow_keeps_the_source_law() {
    let mut rng = RngStream::new(22);
    let n = 20_000;
    let mut field = GaussianField { mu: 3.0, sigma: 0.5 };
    let xs: Vec<f64> = (0..n)
        .map(|_| pcbf_core::flow::euler_integrate_steps(&mut field, rng.normal(), &[], 10, 0).unwrap())
        .collect();
    assert!(ks_statistic(xs, normal_cdf) < ks_critical_1pct(n));
}

#[test]
fn euler_transports_to_the_target_gaussian() {
    let mut rng = RngStream::new(23);
    let n = 20_000;
    let (mu, sigma) = (3.0, 0.5);
    let mut field = GaussianField { mu, sigma };
    let xs: Vec<f64> = (0..n)
        .map(|_| euler_integrate(&mut field, rng.normal(), &[], 400).unwrap())
        .collect();
    let d = ks_statistic(xs, |x| normal_cdf((x - mu) / sigma));
    assert!(d < ks_critical_1pct(n), "KS statistic {d}");
}

#[test]
fn kappa_sign_follows_rho_minus_gamma() {
    for gamma in [0.3, 0.5, 0.9, 0.99] {
        for sigma in [0.25, 1.0, 4.0] {
            for rho in [-1.0, -0.3, 0.0, 0.2, 0.6, 0.95, 1.0] {
                for k in 1..20 {
                    let t = k as f64 / 20.0;
                    let kap = kappa(t, gamma, sigma, rho).unwrap();
                    let d = rho - gamma;
                    assert!(kap * d > 0.0 || (d == 0.0 && kap == 0.0), "t={t} g={gamma} s={sigma} r={rho}: {kap}");
                }
            }
        }
        assert_eq!(kappa(0.5, gamma, 1.0, gamma).unwrap(), 0.0);
    }
}
