//! The `verify-theory` suite: closed forms of the linear–Gaussian model,
//! shared-noise contraction and the Euler-sensitivity bound, each reported
//! with its inputs, estimate, exact value, tolerance and verdict.

use pcbf_core::analysis::contraction::{contraction_check, interpolant_contraction_check, AffineGenerator};
use pcbf_core::analysis::gaussian::{
    kappa, lambda_star, posterior_velocity_check, simulate_target_moments, target_variance, verify_kappa_mc,
    GaussianCase,
};
use pcbf_core::analysis::sensitivity::{euler_sensitivity_check, SensitivityCase};
use pcbf_core::{Mrp, MrpSpec, RngStream};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::TheorySection;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub inputs: Value,
    pub estimate: Value,
    pub exact: Value,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub checks: Vec<CheckReport>,
    pub all_pass: bool,
}

impl TheoryReport {
    pub fn failed(&self) -> impl Iterator<Item = &CheckReport> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Checks whose name starts with `prefix`.
    pub fn group<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a CheckReport> + 'a {
        self.checks.iter().filter(move |c| c.name.starts_with(prefix))
    }
}

fn check(name: &str, inputs: Value, estimate: Value, exact: Value, tolerance: f64, pass: bool) -> CheckReport {
    CheckReport {
        name: name.into(),
        inputs,
        estimate,
        exact,
        tolerance,
        pass,
    }
}

const GAMMA: f64 = 0.9;
const TIMES: [f64; 3] = [0.3, 0.5, 0.7];

pub fn kappa_checks(cfg: &TheorySection, rng: &mut RngStream) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let n = cfg.gaussian_samples;
    for rho in [0.0, 1.0] {
        for t in TIMES {
            let case = GaussianCase::new(1.0, 1.0, GAMMA, rho, 0.5)?;
            let est = verify_kappa_mc(&case, t, n, rng)?;
            let exact = if cfg.negate_kappa { -est.kappa_exact } else { est.kappa_exact };
            let rel_error = (est.slope - exact).abs() / exact.abs();
            out.push(check(
                "kappa_regression",
                json!({"t": t, "gamma": GAMMA, "sigma": 1.0, "rho": rho, "n_samples": n}),
                json!({"slope": est.slope, "std_error": est.std_error, "rel_error": rel_error}),
                json!(exact),
                0.10,
                rel_error <= 0.10,
            ));
        }
    }
    for t in TIMES {
        let case = GaussianCase::new(1.0, 1.0, GAMMA, GAMMA, 0.5)?;
        let est = verify_kappa_mc(&case, t, n, rng)?;
        out.push(check(
            "kappa_zero_at_rho_gamma",
            json!({"t": t, "gamma": GAMMA, "sigma": 1.0, "rho": GAMMA, "n_samples": n}),
            json!({"slope": est.slope, "std_error": est.std_error}),
            json!(0.0),
            3.0,
            est.slope.abs() <= 3.0 * est.std_error,
        ));
    }
    let mut violations = 0;
    let mut cases = 0;
    for gamma in [0.5, 0.9, 0.99] {
        for sigma in [0.5, 1.0, 2.0] {
            for rho in [-1.0, -0.5, 0.0, 0.5, 0.9, 1.0] {
                for k in 1..10 {
                    let t = k as f64 / 10.0;
                    let kap = kappa(t, gamma, sigma, rho)?;
                    let want = rho - gamma;
                    let ok = if want == 0.0 { kap == 0.0 } else { kap.signum() == want.signum() };
                    cases += 1;
                    violations += usize::from(!ok);
                }
            }
        }
    }
    out.push(check(
        "kappa_sign_law",
        json!({"cases": cases}),
        json!({"violations": violations}),
        json!(0),
        0.0,
        violations == 0,
    ));
    let scaled: Vec<f64> = [0.9, 0.99, 0.999]
        .iter()
        .map(|&g| kappa(0.5, g, 1.0, 1.0).map(|k| k / (1.0 - g)))
        .collect::<pcbf_core::Result<_>>()?;
    let bounded = scaled.iter().all(|s| s.is_finite() && s.abs() <= 2.0);
    out.push(check(
        "kappa_shared_noise_vanishes",
        json!({"t": 0.5, "sigma": 1.0, "rho": 1.0, "gammas": [0.9, 0.99, 0.999]}),
        json!({"kappa_over_one_minus_gamma": scaled}),
        Value::Null,
        2.0,
        bounded,
    ));
    Ok(out)
}

pub fn variance_checks(cfg: &TheorySection, rng: &mut RngStream) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let n = cfg.gaussian_samples;
    let step = 0.05;
    for rho in [0.0, 1.0] {
        for t in [0.2, 0.5, 0.8] {
            let case = GaussianCase::new(0.0, 1.0, GAMMA, rho, 0.0)?;
            let m = simulate_target_moments(&case, t, n, rng)?;
            let argmin = m.argmin_on_grid(step, 1.0);
            let ls = lambda_star(t, GAMMA, rho);
            out.push(check(
                "lambda_star_argmin",
                json!({"t": t, "gamma": GAMMA, "sigma": 1.0, "rho": rho, "grid_step": step, "n_samples": n}),
                json!(argmin),
                json!(ls),
                step,
                (argmin - ls).abs() <= step + 1e-9,
            ));
            let mut worst: f64 = 0.0;
            for k in 0..=20 {
                let lambda = k as f64 * step;
                let exact = target_variance(lambda, t, GAMMA, 1.0, rho)?;
                worst = worst.max((m.variance(lambda) - exact).abs() / exact);
            }
            out.push(check(
                "target_variance_closed_form",
                json!({"t": t, "gamma": GAMMA, "sigma": 1.0, "rho": rho, "lambdas": "0:0.05:1", "n_samples": n}),
                json!({"max_rel_error": worst}),
                Value::Null,
                0.02,
                worst <= 0.02,
            ));
        }
    }
    let case = GaussianCase::new(0.0, 1.0, GAMMA, 1.0, 0.0)?;
    let m = simulate_target_moments(&case, 0.4, n, rng)?;
    let exact = target_variance(0.3, 0.4, GAMMA, 1.0, 1.0)?;
    let rel = (m.variance(0.3) - exact).abs() / exact;
    out.push(check(
        "target_variance_mc",
        json!({"lambda": 0.3, "t": 0.4, "gamma": GAMMA, "sigma": 1.0, "rho": 1.0, "n_samples": n}),
        json!(m.variance(0.3)),
        json!(exact),
        0.02,
        rel <= 0.02,
    ));
    Ok(out)
}

pub fn velocity_checks(cfg: &TheorySection, rng: &mut RngStream) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let n = cfg.gaussian_samples;
    // Successor flow: γ = 1 and r = 0 reduce the current-path estimator to it.
    let (t, mu, sigma) = (0.5, 1.0, 1.0);
    let succ = GaussianCase {
        mu,
        sigma,
        gamma: 1.0,
        rho: 0.0,
        r: 0.0,
    };
    let sd = ((1.0 - t) * (1.0 - t) + t * t * sigma * sigma).sqrt();
    let grid: Vec<f64> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|k| t * mu + k * sd).collect();
    let (pts, h) = posterior_velocity_check(&succ, t, &grid, n, rng)?;
    let worst = pts
        .iter()
        .map(|p| (p.estimate - p.exact).abs() / p.exact.abs())
        .fold(0.0, f64::max);
    out.push(check(
        "vstar_successor_mc",
        json!({"t": t, "mu": mu, "sigma": sigma, "z_grid": grid, "bandwidth": h, "n_samples": n}),
        json!(pts.iter().map(|p| p.estimate).collect::<Vec<_>>()),
        json!(pts.iter().map(|p| p.exact).collect::<Vec<_>>()),
        0.02,
        worst <= 0.02,
    ));

    let case = GaussianCase::new(1.0, 1.0, GAMMA, 0.0, 1.0)?;
    let m = case.current_mean();
    let sd = ((1.0 - t) * (1.0 - t) + (t * GAMMA * sigma) * (t * GAMMA * sigma)).sqrt();
    let grid: Vec<f64> = (0..9).map(|k| t * m + sd * (-1.0 + 0.25 * k as f64)).collect();
    let (pts, h) = posterior_velocity_check(&case, t, &grid, n, rng)?;
    let worst = pts
        .iter()
        .map(|p| (p.estimate - p.exact).abs() / p.exact.abs())
        .fold(0.0, f64::max);
    out.push(check(
        "posterior_velocity",
        json!({"t": t, "mu": 1.0, "sigma": 1.0, "gamma": GAMMA, "r": 1.0, "x_grid": grid, "bandwidth": h, "n_samples": n}),
        json!(pts.iter().map(|p| p.estimate).collect::<Vec<_>>()),
        json!(pts.iter().map(|p| p.exact).collect::<Vec<_>>()),
        0.03,
        worst <= 0.03,
    ));
    Ok(out)
}

/// Monte Carlo slack on contraction ratios.
pub const CONTRACTION_SLACK: f64 = 0.02;

pub fn contraction_checks(cfg: &TheorySection, rng: &mut RngStream) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let envs = [MrpSpec::bernoulli(), MrpSpec::discrete_mc(21)];
    let ts = [0.25, 0.5, 0.75];
    for spec in envs {
        let mrp = Mrp::new(spec.clone())?;
        let gamma = spec.gamma_default;
        let n_states = mrp.n_states();
        for p in [1.0, 2.0] {
            let mut worst_ratio: f64 = 0.0;
            let mut worst_interp: f64 = 0.0;
            for _ in 0..cfg.generator_pairs {
                let g = AffineGenerator::random(n_states, rng);
                let h = AffineGenerator::random(n_states, rng);
                let rep = contraction_check(&g, &h, &mrp, gamma, p, cfg.contraction_seeds, rng)?;
                worst_ratio = worst_ratio.max(rep.ratio);
                for r in interpolant_contraction_check(&g, &h, &mrp, gamma, p, &ts, cfg.contraction_seeds, rng)? {
                    worst_interp = worst_interp.max(r.measured / (r.t * r.d_before));
                }
            }
            let inputs = json!({
                "env": spec.id(), "gamma": gamma, "p": p,
                "pairs": cfg.generator_pairs, "seeds_per_state": cfg.contraction_seeds,
            });
            out.push(check(
                "contraction_ratio",
                inputs.clone(),
                json!(worst_ratio),
                json!(gamma),
                CONTRACTION_SLACK,
                worst_ratio <= gamma + CONTRACTION_SLACK,
            ));
            out.push(check(
                "contraction_interpolant",
                json!({"ts": ts, "base": inputs}),
                json!({"max_gap_over_t_d": worst_interp}),
                json!(gamma),
                CONTRACTION_SLACK,
                worst_interp <= gamma + CONTRACTION_SLACK,
            ));

            let g = AffineGenerator::random(n_states, rng);
            let c = 1.5;
            let h = g.shifted(c);
            let rep = contraction_check(&g, &h, &mrp, gamma, p, 1000, rng)?;
            let gap = interpolant_contraction_check(&g, &h, &mrp, gamma, p, &[0.5], 1000, rng)?[0].measured;
            let exact_gap = 0.5 * gamma * c;
            out.push(check(
                "contraction_constant_offset",
                json!({"env": spec.id(), "gamma": gamma, "p": p, "offset": c, "t": 0.5}),
                json!({"ratio": rep.ratio, "d_before": rep.d_before, "interpolant_gap": gap}),
                json!({"ratio": gamma, "d_before": c, "interpolant_gap": exact_gap}),
                1e-12,
                (rep.ratio - gamma).abs() <= 1e-12
                    && (rep.d_before - c).abs() <= 1e-12
                    && (gap - exact_gap).abs() <= 1e-12,
            ));
        }
    }
    Ok(out)
}

/// A field `a sin(ωz + φ) + b z + c t` with Lipschitz constant `|a|ω + |b|`
/// in `z`.
#[derive(Debug, Clone, Copy)]
struct SineField {
    a: f64,
    omega: f64,
    phi: f64,
    b: f64,
    c: f64,
}

impl SineField {
    fn random(rng: &mut RngStream) -> Self {
        Self {
            a: 4.0 * rng.uniform() - 2.0,
            omega: 3.0 * rng.uniform(),
            phi: 6.0 * rng.uniform(),
            b: 2.0 * rng.uniform() - 1.0,
            c: rng.normal(),
        }
    }

    fn lipschitz(&self) -> f64 {
        self.a.abs() * self.omega + self.b.abs()
    }

    fn eval(&self, t: f64, z: f64) -> f64 {
        self.a * (self.omega * z + self.phi).sin() + self.b * z + self.c * t
    }
}

pub fn sensitivity_checks(cfg: &TheorySection, rng: &mut RngStream) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let mut held = 0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..cfg.sensitivity_cases {
        let f = SineField::random(rng);
        let case = SensitivityCase {
            x0: rng.normal(),
            x_prime: 3.0 * rng.normal(),
            r: rng.uniform(),
            gamma: 0.5 + 0.49 * rng.uniform(),
            lambda: rng.uniform(),
            t: rng.uniform(),
            delta: rng.normal(),
            lipschitz: f.lipschitz(),
        };
        let mut field = |t: f64, z: f64, _c: &[f64]| f.eval(t, z);
        let rep = euler_sensitivity_check(&mut field, &case)?;
        held += usize::from(rep.holds);
        if rep.bound > 0.0 {
            worst_ratio = worst_ratio.max(rep.measured / rep.bound);
        }
    }
    out.push(check(
        "euler_sensitivity_bound",
        json!({"cases": cfg.sensitivity_cases, "field": "a sin(wz + phi) + bz + ct"}),
        json!({"held": held, "max_measured_over_bound": worst_ratio}),
        json!({"held": cfg.sensitivity_cases}),
        pcbf_core::analysis::sensitivity::ROUNDING_SLACK,
        held == cfg.sensitivity_cases,
    ));

    let f = SineField::random(rng);
    let case = SensitivityCase {
        x0: 0.4,
        x_prime: 2.0,
        r: 1.0,
        gamma: GAMMA,
        lambda: 0.0,
        t: 0.6,
        delta: 0.3,
        lipschitz: f.lipschitz(),
    };
    let mut field = |t: f64, z: f64, _c: &[f64]| f.eval(t, z);
    let rep = euler_sensitivity_check(&mut field, &case)?;
    let tight = GAMMA * 0.3;
    out.push(check(
        "euler_sensitivity_lambda_zero",
        json!({"gamma": GAMMA, "lambda": 0.0, "delta": 0.3}),
        json!({"measured": rep.measured, "bound": rep.bound}),
        json!(tight),
        1e-12,
        (rep.measured - tight).abs() <= 1e-12 && (rep.bound - tight).abs() <= 1e-12,
    ));
    Ok(out)
}

/// Runs every check on sub-streams of `seed`.
pub fn run_all(cfg: &TheorySection, seed: u64) -> Result<TheoryReport> {
    let master = RngStream::new(seed);
    let mut checks = Vec::new();
    checks.extend(kappa_checks(cfg, &mut master.split(1))?);
    checks.extend(variance_checks(cfg, &mut master.split(2))?);
    checks.extend(velocity_checks(cfg, &mut master.split(3))?);
    checks.extend(contraction_checks(cfg, &mut master.split(4))?);
    checks.extend(sensitivity_checks(cfg, &mut master.split(5))?);
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(TheoryReport { seed, checks, all_pass })
}
