//! Propagation of a successor endpoint error into the λ-target.

use crate::bellman::{bcfm_target, control_variate, successor_path};
use crate::error::{config, Result};
use crate::flow::VelocityField;

/// Relative slack allowed for floating-point rounding when the inequality is
/// tight.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityCase {
    pub x0: f64,
    pub x_prime: f64,
    pub r: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub t: f64,
    pub delta: f64,
    /// Lipschitz constant of the field in `z` at time `t`.
    pub lipschitz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

fn lambda_target_at<F: VelocityField + ?Sized>(field: &mut F, c: &SensitivityCase, x_prime: f64) -> f64 {
    let z = successor_path(c.x0, x_prime, c.t);
    let y = bcfm_target(c.r, c.gamma, x_prime, c.x0);
    let cv = control_variate(field.velocity(c.t, z, &[]), x_prime, c.x0);
    y + c.lambda * cv
}

/// Compares `|û - u|`, where `û` uses the perturbed endpoint `x' + δ`, with
/// `(|γ - λ| + λ L_t t)|δ|`.
pub fn euler_sensitivity_check<F: VelocityField + ?Sized>(
    field: &mut F,
    case: &SensitivityCase,
) -> Result<SensitivityReport> {
    if case.lambda < 0.0 || case.lipschitz < 0.0 {
        return Err(config("lambda and the Lipschitz constant must be non-negative"));
    }
    let u = lambda_target_at(field, case, case.x_prime);
    let u_hat = lambda_target_at(field, case, case.x_prime + case.delta);
    let measured = (u_hat - u).abs();
    let bound = ((case.gamma - case.lambda).abs() + case.lambda * case.lipschitz * case.t) * case.delta.abs();
    let holds = measured <= bound + ROUNDING_SLACK * (1.0 + bound.max(u.abs()));
    Ok(SensitivityReport {
        measured,
        bound,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SensitivityCase {
        SensitivityCase {
            x0: 0.3,
            x_prime: 1.2,
            r: 1.0,
            gamma: 0.9,
            lambda: 0.4,
            t: 0.6,
            delta: 0.1,
            lipschitz: 0.5,
        }
    }

    #[test]
    fn lambda_zero_is_tight() {
        let mut f = |_t: f64, z: f64, _c: &[f64]| libm::sin(z);
        let c = SensitivityCase { lambda: 0.0, lipschitz: 1.0, ..base() };
        let rep = euler_sensitivity_check(&mut f, &c).unwrap();
        assert!((rep.measured - 0.09).abs() < 1e-12 && rep.bound == 0.9 * 0.1 && rep.holds);
    }

    #[test]
    fn constant_field_at_lambda_gamma() {
        let mut f = |_t: f64, _z: f64, _c: &[f64]| 2.5;
        let c = SensitivityCase { lambda: 0.9, lipschitz: 0.0, ..base() };
        let rep = euler_sensitivity_check(&mut f, &c).unwrap();
        assert!(rep.measured < 1e-15);
        assert_eq!(rep.bound, 0.0);
        assert!(rep.holds);
    }

    #[test]
    fn linear_field() {
        let mut f = |_t: f64, z: f64, _c: &[f64]| 0.5 * z;
        let rep = euler_sensitivity_check(&mut f, &base()).unwrap();
        assert!((rep.bound - 0.062).abs() < 1e-15);
        assert!(rep.measured <= 0.062 + 1e-12 && rep.holds);
    }
}
