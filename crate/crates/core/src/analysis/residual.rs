//! Corrected pathwise residual of a trained critic.
//!
//! For a non-terminal transition `(s, r, s')` both flows are integrated from
//! `t = 0` with an `N`-step Euler scheme and stopped at `τ = ⌊tN⌋ / N`:
//!
//! `r_corr = E| Ẑ^s_τ - (τ r + γ Ẑ^{s'}_τ + (1 - τ)(1 - γ) X0) |`.
//!
//! The current path uses the online field and the successor path the target
//! field. Under shared coupling both start from `X0`; under independent
//! coupling the successor starts from a fresh draw.

use alloc::vec::Vec;

use crate::context::OneHot;
use crate::envs::Transition;
use crate::error::{config, usage, Result};
use crate::flow::{euler_integrate_steps, NetField};
use crate::nn::MlpParams;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Shared,
    Independent,
}

impl Coupling {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Shared => "shared",
            Self::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualCell {
    pub t: f64,
    pub nfe: usize,
    /// The grid time `⌊tN⌋ / N` the integration actually stopped at.
    pub stop_time: f64,
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrid {
    pub coupling: Coupling,
    pub t_grid: Vec<f64>,
    pub nfe_grid: Vec<usize>,
    /// Row-major over `(t, nfe)`.
    pub cells: Vec<ResidualCell>,
}

impl ResidualGrid {
    pub fn cell(&self, ti: usize, ni: usize) -> &ResidualCell {
        &self.cells[ti * self.nfe_grid.len() + ni]
    }
}

/// Number of Euler steps an `nfe`-step scheme takes before passing `t`.
pub fn stop_steps(t: f64, nfe: usize) -> usize {
    let k = libm::floor(t * nfe as f64 + 1e-9) as usize;
    k.min(nfe)
}

pub struct ResidualInputs<'a> {
    pub online: &'a MlpParams,
    pub target: &'a MlpParams,
    pub encoder: &'a OneHot,
    pub transitions: &'a [Transition],
    pub gamma: f64,
}

pub fn corrected_residual_sweep(
    inputs: &ResidualInputs<'_>,
    t_grid: &[f64],
    nfe_grid: &[usize],
    coupling: Coupling,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<ResidualGrid> {
    let live: Vec<&Transition> = inputs
        .transitions
        .iter()
        .filter(|tr| !tr.done && tr.next_state.is_some())
        .collect();
    if live.is_empty() {
        return Err(usage("residual sweep needs non-terminal transitions"));
    }
    if n_samples < 2 {
        return Err(usage("residual sweep needs at least two samples per cell"));
    }
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(config("residual times must lie in [0, 1]"));
    }
    if nfe_grid.iter().any(|&n| n == 0) {
        return Err(config("nfe values must be positive"));
    }
    let gamma = inputs.gamma;
    let mut online = NetField::new(inputs.online);
    let mut target = NetField::new(inputs.target);
    let dim = inputs.encoder.dim();
    let (mut cs, mut cn) = (alloc::vec![0.0; dim], alloc::vec![0.0; dim]);
    let mut cells = Vec::with_capacity(t_grid.len() * nfe_grid.len());
    let mut vals = Vec::with_capacity(n_samples);
    for (ti, &t) in t_grid.iter().enumerate() {
        for (ni, &nfe) in nfe_grid.iter().enumerate() {
            let mut crng = rng.split(((ti as u64) << 32) | ni as u64);
            let steps = stop_steps(t, nfe);
            let tau = steps as f64 / nfe as f64;
            vals.clear();
            for _ in 0..n_samples {
                let tr = live[crng.index(live.len())];
                let next = tr.next_state.unwrap_or(tr.state);
                let x0 = crng.normal();
                let x0_succ = match coupling {
                    Coupling::Shared => x0,
                    Coupling::Independent => crng.normal(),
                };
                inputs.encoder.write(tr.state, &mut cs);
                inputs.encoder.write(next, &mut cn);
                let zs = euler_integrate_steps(&mut online, x0, &cs, nfe, steps)?;
                let zn = euler_integrate_steps(&mut target, x0_succ, &cn, nfe, steps)?;
                // Ẑ^s - (τr + γẐ^{s'} + (1-τ)(1-γ)x0), regrouped around x0.
                let gap = (zs - x0) - gamma * (zn - x0) - tau * (tr.reward - (1.0 - gamma) * x0);
                vals.push(gap.abs());
            }
            let mean = super::stats::mean(&vals);
            let sd = super::stats::sample_std(&vals);
            cells.push(ResidualCell {
                t,
                nfe,
                stop_time: tau,
                mean,
                ci95: 1.96 * sd / libm::sqrt(n_samples as f64),
            });
        }
    }
    Ok(ResidualGrid {
        coupling,
        t_grid: t_grid.to_vec(),
        nfe_grid: nfe_grid.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_steps_snap_left() {
        assert_eq!(stop_steps(0.25, 4), 1);
        assert_eq!(stop_steps(0.3, 4), 1);
        assert_eq!(stop_steps(0.75, 32), 24);
        assert_eq!(stop_steps(1.0, 8), 8);
        assert_eq!(stop_steps(0.0, 8), 0);
    }

    #[test]
    fn zero_fields_closed_form() {
        let enc = OneHot::new(1);
        let zero = MlpParams::zeros(&[3, 4, 1]).unwrap();
        let trs = [Transition::step(0, 1.0, 0), Transition::terminal(0, 0.0)];
        let inputs = ResidualInputs {
            online: &zero,
            target: &zero,
            encoder: &enc,
            transitions: &trs,
            gamma: 0.9,
        };
        let mut rng = RngStream::new(1);
        let grid =
            corrected_residual_sweep(&inputs, &[0.0, 0.5], &[4], Coupling::Shared, 500, &mut rng).unwrap();
        assert_eq!(grid.cell(0, 0).mean, 0.0);
        // Paths stay at x0, so the residual is |x0 - (τ r + γ x0 + (1-τ)(1-γ) x0)| = τ|x0(1-γ) - r|.
        let c = grid.cell(1, 0);
        assert_eq!(c.stop_time, 0.5);
        let mut crng = RngStream::new(1).split((1u64 << 32) | 0);
        let want: f64 = (0..500)
            .map(|_| {
                let _ = crng.index(1);
                let x0 = crng.normal();
                0.5 * (x0 * 0.1 - 1.0).abs()
            })
            .sum::<f64>()
            / 500.0;
        assert!((c.mean - want).abs() < 1e-12);
    }

    #[test]
    fn empty_transitions_rejected() {
        let enc = OneHot::new(1);
        let zero = MlpParams::zeros(&[3, 4, 1]).unwrap();
        let trs = [Transition::terminal(0, 0.0)];
        let inputs = ResidualInputs {
            online: &zero,
            target: &zero,
            encoder: &enc,
            transitions: &trs,
            gamma: 0.9,
        };
        let mut rng = RngStream::new(1);
        assert!(corrected_residual_sweep(&inputs, &[0.5], &[4], Coupling::Shared, 10, &mut rng).is_err());
    }
}
