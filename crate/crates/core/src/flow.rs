//! Linear-interpolant flow matching and the explicit Euler flow map.

use alloc::vec::Vec;

use crate::error::{config, usage, Error, Result};
use crate::nn::{MlpParams, Workspace};
use crate::rng::RngStream;

pub const DEFAULT_NFE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub nfe: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { nfe: DEFAULT_NFE }
    }
}

impl FlowConfig {
    pub fn new(nfe: usize) -> Result<Self> {
        if nfe == 0 {
            return Err(config("nfe must be at least 1"));
        }
        Ok(Self { nfe })
    }
}

/// A time-dependent scalar velocity field conditioned on a context vector.
pub trait VelocityField {
    fn velocity(&mut self, t: f64, z: f64, context: &[f64]) -> f64;
}

impl<F: FnMut(f64, f64, &[f64]) -> f64> VelocityField for F {
    fn velocity(&mut self, t: f64, z: f64, context: &[f64]) -> f64 {
        self(t, z, context)
    }
}

/// Evaluates an [`MlpParams`] network as a velocity field on inputs
/// `[z, t, context...]`, reusing one set of buffers.
pub struct NetField<'a> {
    params: &'a MlpParams,
    ws: Workspace,
    input: Vec<f64>,
}

impl<'a> NetField<'a> {
    pub fn new(params: &'a MlpParams) -> Self {
        Self {
            params,
            ws: params.workspace(),
            input: alloc::vec![0.0; params.input_dim()],
        }
    }
}

impl VelocityField for NetField<'_> {
    fn velocity(&mut self, t: f64, z: f64, context: &[f64]) -> f64 {
        self.input[0] = z;
        self.input[1] = t;
        self.input[2..].copy_from_slice(context);
        self.params.forward_ws(&self.input, &mut self.ws)
    }
}

/// Builds the network input `[z, t, context...]`.
pub fn net_input(z: f64, t: f64, context: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.push(z);
    out.push(t);
    out.extend_from_slice(context);
}

/// `(1 - t) x0 + t x1`.
pub fn linear_interpolant(x0: f64, x1: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(usage("interpolation time must lie in [0, 1]"));
    }
    Ok((1.0 - t) * x0 + t * x1)
}

/// Conditional flow-matching regression target `x1 - x0`.
pub fn cfm_target(x0: f64, x1: f64) -> f64 {
    x1 - x0
}

/// Left-endpoint Euler integration of `field` from `t = 0` to `t = 1`.
pub fn euler_integrate<F: VelocityField + ?Sized>(
    field: &mut F,
    x0: f64,
    context: &[f64],
    nfe: usize,
) -> Result<f64> {
    euler_integrate_steps(field, x0, context, nfe, nfe)
}

/// Runs the first `steps` of an `nfe`-step Euler scheme, ending at time
/// `steps / nfe`.
pub fn euler_integrate_steps<F: VelocityField + ?Sized>(
    field: &mut F,
    x0: f64,
    context: &[f64],
    nfe: usize,
    steps: usize,
) -> Result<f64> {
    if nfe == 0 {
        return Err(config("nfe must be at least 1"));
    }
    let dt = 1.0 / nfe as f64;
    let mut z = x0;
    for k in 0..steps.min(nfe) {
        let v = field.velocity(k as f64 * dt, z, context);
        if !v.is_finite() {
            return Err(Error::Numeric {
                context: "euler step",
                index: k,
            });
        }
        z += dt * v;
    }
    Ok(z)
}

/// Pushes `n` standard-normal draws through the learned flow map.
pub fn sample_returns(
    params: &MlpParams,
    context: &[f64],
    n: usize,
    rng: &mut RngStream,
    nfe: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(usage("sample count must be positive"));
    }
    if context.len() + 2 != params.input_dim() {
        return Err(Error::Shape {
            expected: params.input_dim() - 2,
            got: context.len(),
        });
    }
    let mut field = NetField::new(params);
    (0..n)
        .map(|_| {
            let x0 = rng.normal();
            euler_integrate(&mut field, x0, context, nfe)
        })
        .collect()
}
