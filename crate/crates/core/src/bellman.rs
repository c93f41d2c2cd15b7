//! Shared-noise Bellman paths and the λ-parameterized control-variate target.
//!
//! For a transition `(s, r, s')` and one base-noise draw `x0`, the successor
//! return is `x' = ψ⁻(x0 | s')` under the lagged target flow, and two paths
//! are laid out on the same clock:
//!
//! ```text
//! successor  Z'_t = (1 - t) x0 + t x'
//! current    Z_t  = (1 - t) x0 + t (r + γ x')
//!                 = t r + γ Z'_t + (1 - t)(1 - γ) x0
//! ```
//!
//! Both start at `x0`; the current path ends on the Bellman sample
//! `r + γ x'`. The regression target for the online field at `(t, Z_t | s)`
//! is `u = Y + λ C` with the pathwise velocity `Y = r + γ x' - x0` and the
//! control variate `C = v⁻(t, Z'_t | s') - (x' - x0)`.

use alloc::format;
use alloc::vec::Vec;

use crate::context::OneHot;
use crate::envs::Transition;
use crate::error::{config, Error, Result};
use crate::flow::{euler_integrate, NetField, VelocityField};
use crate::nn::MlpParams;
use crate::rng::RngStream;

pub fn successor_path(x0: f64, x_prime: f64, t: f64) -> f64 {
    (1.0 - t) * x0 + t * x_prime
}

pub fn current_path(x0: f64, x_prime: f64, r: f64, gamma_eff: f64, t: f64) -> f64 {
    (1.0 - t) * x0 + t * (r + gamma_eff * x_prime)
}

/// The current path written around the successor path; the last term keeps
/// both paths anchored at `x0` when `t = 0`.
pub fn current_path_from_successor(z_succ: f64, x0: f64, r: f64, gamma_eff: f64, t: f64) -> f64 {
    t * r + gamma_eff * z_succ + (1.0 - t) * (1.0 - gamma_eff) * x0
}

/// Pathwise velocity of the current path, `r + γ x' - x0`.
pub fn bcfm_target(r: f64, gamma_eff: f64, x_prime: f64, x0: f64) -> f64 {
    r + gamma_eff * x_prime - x0
}

pub fn control_variate(c_t: f64, x_prime: f64, x0: f64) -> f64 {
    c_t - (x_prime - x0)
}

pub fn lambda_target(y: f64, c: f64, lambda_eff: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda_eff) {
        return Err(config(format!("lambda {lambda_eff} outside [0, 1]")));
    }
    Ok(y + lambda_eff * c)
}

/// Terminal transitions get neither discount nor successor correction.
pub fn terminal_mask(gamma: f64, lambda: f64, done: bool) -> (f64, f64) {
    if done {
        (0.0, 0.0)
    } else {
        (gamma, lambda)
    }
}

/// Everything computed for one transition of a coupled minibatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledBatchItem {
    pub state: usize,
    pub next_state: Option<usize>,
    pub x0: f64,
    pub t: f64,
    pub r: f64,
    pub gamma_eff: f64,
    pub lambda_eff: f64,
    pub x_prime: f64,
    pub z_succ: f64,
    pub z_curr: f64,
    pub c_t: f64,
    pub control: f64,
    pub y: f64,
    pub u: f64,
}

/// Discount, control-variate weight and Euler budget for target construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    pub gamma: f64,
    pub lambda: f64,
    pub nfe: usize,
}

/// Builds the coupled paths and λ-targets for a minibatch.
///
/// Each item draws `x0 ~ N(0, 1)` then `t ~ U[0, 1)` from `rng`, in batch
/// order. The successor of a terminal transition has return identically 0,
/// so no flow is integrated for it. Targets depend only on the lagged
/// network; nothing here touches the online parameters.
pub fn build_coupled_batch(
    transitions: &[Transition],
    target: &MlpParams,
    encoder: &OneHot,
    params: CouplingParams,
    rng: &mut RngStream,
) -> Result<Vec<CoupledBatchItem>> {
    if transitions.is_empty() {
        return Err(crate::error::usage("empty minibatch"));
    }
    if !(params.gamma > 0.0 && params.gamma < 1.0) {
        return Err(config("gamma must lie in (0, 1)"));
    }
    let mut field = NetField::new(target);
    let mut ctx = alloc::vec![0.0; encoder.dim()];
    transitions
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            let x0 = rng.normal();
            let t = rng.uniform();
            let (gamma_eff, lambda_eff) = terminal_mask(params.gamma, params.lambda, tr.done);
            let (x_prime, c_t) = match (tr.done, tr.next_state) {
                (false, Some(next)) => {
                    encoder.write(next, &mut ctx);
                    let x_prime = euler_integrate(&mut field, x0, &ctx, params.nfe).map_err(|_| {
                        Error::Numeric {
                            context: "successor flow",
                            index: i,
                        }
                    })?;
                    let z_succ = successor_path(x0, x_prime, t);
                    (x_prime, field.velocity(t, z_succ, &ctx))
                }
                _ => (0.0, 0.0),
            };
            let z_succ = successor_path(x0, x_prime, t);
            let z_curr = current_path(x0, x_prime, tr.reward, gamma_eff, t);
            let control = control_variate(c_t, x_prime, x0);
            let y = bcfm_target(tr.reward, gamma_eff, x_prime, x0);
            let u = lambda_target(y, control, lambda_eff)?;
            if !(u.is_finite() && z_curr.is_finite()) {
                return Err(Error::Numeric {
                    context: "coupled target",
                    index: i,
                });
            }
            Ok(CoupledBatchItem {
                state: tr.state,
                next_state: tr.next_state,
                x0,
                t,
                r: tr.reward,
                gamma_eff,
                lambda_eff,
                x_prime,
                z_succ,
                z_curr,
                c_t,
                control,
                y,
                u,
            })
        })
        .collect()
}
