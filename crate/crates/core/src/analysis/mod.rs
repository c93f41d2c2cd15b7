//! Distribution metrics and numerical checks of the coupling theory.

pub mod contraction;
pub mod gaussian;
pub mod residual;
pub mod sensitivity;
pub mod stats;
pub mod wasserstein;

use crate::error::{usage, Result};
use crate::flow::sample_returns;
use crate::nn::MlpParams;
use crate::rng::RngStream;

pub use wasserstein::wasserstein1;

/// Mean of `m` returns sampled from the learned flow for `context`.
pub fn qhat_mean(params: &MlpParams, context: &[f64], m: usize, rng: &mut RngStream, nfe: usize) -> Result<f64> {
    if m == 0 {
        return Err(usage("need at least one sample"));
    }
    let xs = sample_returns(params, context, m, rng, nfe)?;
    Ok(stats::mean(&xs))
}
