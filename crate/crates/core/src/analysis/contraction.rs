//! Shared-noise contraction of the Bellman generator update.
//!
//! A return generator maps `(state, ξ)` with `ξ ~ N(0, 1)` to a return
//! sample. The coupled update is `(TG)(s, ξ) = R + γ̃ G(S', ξ)`, where both
//! `G` and `H` see the same transition `(R, S')` and the same seed `ξ`.

use alloc::vec::Vec;

use crate::envs::Mrp;
use crate::error::{config, usage, Result};
use crate::rng::RngStream;

/// `G(s, ξ) = offset[s] + scale[s] ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGenerator {
    pub offsets: Vec<f64>,
    pub scales: Vec<f64>,
}

impl AffineGenerator {
    pub fn new(offsets: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if offsets.len() != scales.len() || offsets.is_empty() {
            return Err(usage("generator needs one offset and one scale per state"));
        }
        Ok(Self { offsets, scales })
    }

    /// Offsets in `[-5, 5]` and scales in `[0, 3]`.
    pub fn random(n_states: usize, rng: &mut RngStream) -> Self {
        let offsets = (0..n_states).map(|_| 10.0 * rng.uniform() - 5.0).collect();
        let scales = (0..n_states).map(|_| 3.0 * rng.uniform()).collect();
        Self { offsets, scales }
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            offsets: self.offsets.iter().map(|o| o + c).collect(),
            scales: self.scales.clone(),
        }
    }

    pub fn sample(&self, state: usize, xi: f64) -> f64 {
        self.offsets[state] + self.scales[state] * xi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub d_before: f64,
    pub d_after: f64,
    /// `d_after / d_before`, or 0 when both generators agree.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolantReport {
    pub t: f64,
    pub d_before: f64,
    pub measured: f64,
    /// `t γ d_before`.
    pub bound: f64,
}

fn check_inputs(g: &AffineGenerator, h: &AffineGenerator, mrp: &Mrp, gamma: f64, p: f64, n: usize) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(config("p must be at least 1"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(config("gamma must lie in (0, 1)"));
    }
    if n == 0 {
        return Err(usage("need at least one seed"));
    }
    let states = mrp.n_states();
    if g.offsets.len() != states || h.offsets.len() != states {
        return Err(usage("generators must cover every state"));
    }
    Ok(())
}

fn lp(sum: f64, n: usize, p: f64) -> f64 {
    libm::pow(sum / n as f64, 1.0 / p)
}

/// Per-state `L_p` gaps between `G` and `H`, before and after the coupled
/// update, plus the update-then-interpolate gaps at each time in `ts`.
fn gaps(
    g: &AffineGenerator,
    h: &AffineGenerator,
    mrp: &Mrp,
    gamma: f64,
    p: f64,
    n_seeds: usize,
    ts: &[f64],
    rng: &RngStream,
) -> Result<(f64, f64, Vec<f64>)> {
    let (mut before, mut after) = (0.0f64, 0.0f64);
    let mut interp = alloc::vec![0.0f64; ts.len()];
    for s in mrp.interior_states() {
        let mut srng = rng.split(s as u64);
        let (mut b, mut a) = (0.0, 0.0);
        let mut acc = alloc::vec![0.0; ts.len()];
        for _ in 0..n_seeds {
            let xi = srng.normal();
            b += libm::pow((g.sample(s, xi) - h.sample(s, xi)).abs(), p);
            let tr = mrp.sample_transition(s, &mut srng)?;
            let xi_next = srng.normal();
            let x0 = srng.normal();
            let (tg, th) = match tr.next_state {
                Some(sp) if !tr.done => (
                    tr.reward + gamma * g.sample(sp, xi_next),
                    tr.reward + gamma * h.sample(sp, xi_next),
                ),
                _ => (tr.reward, tr.reward),
            };
            a += libm::pow((tg - th).abs(), p);
            for (k, &t) in ts.iter().enumerate() {
                let xg = (1.0 - t) * x0 + t * tg;
                let xh = (1.0 - t) * x0 + t * th;
                acc[k] += libm::pow((xg - xh).abs(), p);
            }
        }
        before = before.max(lp(b, n_seeds, p));
        after = after.max(lp(a, n_seeds, p));
        for (m, v) in interp.iter_mut().zip(acc) {
            *m = m.max(lp(v, n_seeds, p));
        }
    }
    Ok((before, after, interp))
}

/// Monte Carlo estimate of `D_p(G, H)` and `D_p(TG, TH)` as suprema over the
/// non-terminal states of `mrp`.
pub fn contraction_check(
    g: &AffineGenerator,
    h: &AffineGenerator,
    mrp: &Mrp,
    gamma: f64,
    p: f64,
    n_seeds: usize,
    rng: &mut RngStream,
) -> Result<ContractionReport> {
    check_inputs(g, h, mrp, gamma, p, n_seeds)?;
    let label = rng.next_u64();
    let stream = rng.split(label);
    let (d_before, d_after, _) = gaps(g, h, mrp, gamma, p, n_seeds, &[], &stream)?;
    let ratio = if d_before == 0.0 { 0.0 } else { d_after / d_before };
    Ok(ContractionReport {
        d_before,
        d_after,
        ratio,
    })
}

/// Gap between the coupled interpolants `(1-t) x0 + t (TG)` and
/// `(1-t) x0 + t (TH)` at each `t`, against the bound `t γ D_p(G, H)`.
pub fn interpolant_contraction_check(
    g: &AffineGenerator,
    h: &AffineGenerator,
    mrp: &Mrp,
    gamma: f64,
    p: f64,
    ts: &[f64],
    n_seeds: usize,
    rng: &mut RngStream,
) -> Result<Vec<InterpolantReport>> {
    check_inputs(g, h, mrp, gamma, p, n_seeds)?;
    if ts.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(usage("interpolation times must lie in [0, 1]"));
    }
    let label = rng.next_u64();
    let stream = rng.split(label);
    let (d_before, _, interp) = gaps(g, h, mrp, gamma, p, n_seeds, ts, &stream)?;
    Ok(ts
        .iter()
        .zip(interp)
        .map(|(&t, measured)| InterpolantReport {
            t,
            d_before,
            measured,
            bound: t * gamma * d_before,
        })
        .collect())
}
