//! Feed-forward velocity network with hand-written reverse mode.
//!
//! Hidden layers use `tanh`; the output layer is linear and one-dimensional.
//! Weights are stored row-major with shape `(fan_in, fan_out)`, so the weight
//! connecting input `i` to unit `j` lives at `i * fan_out + j`.

pub mod activation;
mod adam;

pub use adam::{adam_step, AdamState};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, usage, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.fan_out + j]
    }
}

/// Network parameters. Also used as the container for gradients and Adam
/// moments, which share the parameter shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
    seed: u64,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(config("layer_sizes needs at least an input and an output entry"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(config("layer sizes must be positive"));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(config("the velocity network has a scalar output"));
    }
    Ok(())
}

impl MlpParams {
    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = RngStream::new(seed).split(crate::rng::streams::INIT);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut layer = Layer::zeros(w[0], w[1]);
                let bound = 1.0 / libm::sqrt(w[0] as f64);
                for x in layer.weights.iter_mut() {
                    *x = bound * (2.0 * rng.uniform() - 1.0);
                }
                layer
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            seed,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            seed: 0,
        })
    }

    /// A network whose output is `c` everywhere.
    pub fn constant(sizes: &[usize], c: f64) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        p.layers.last_mut().unwrap().biases[0] = c;
        Ok(p)
    }

    /// Rebuilds parameters from flattened per-layer weights and biases.
    pub fn from_parts(
        sizes: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        check_sizes(sizes)?;
        let n = sizes.len() - 1;
        if weights.len() != n || biases.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: weights.len().min(biases.len()),
            });
        }
        let mut layers = Vec::with_capacity(n);
        for (k, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            if w.len() != fan_in * fan_out {
                return Err(Error::Shape {
                    expected: fan_in * fan_out,
                    got: w.len(),
                });
            }
            if b.len() != fan_out {
                return Err(Error::Shape {
                    expected: fan_out,
                    got: b.len(),
                });
            }
            layers.push(Layer {
                fan_in,
                fan_out,
                weights: w,
                biases: b,
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            seed,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in, l.fan_out))
                .collect(),
            seed: self.seed,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes == other.sizes
    }

    /// Visits every scalar parameter, weights before biases, layer by layer.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.values_mut().for_each(|x| *x = value);
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            acts: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; self.sizes.iter().copied().max().unwrap_or(1)],
            delta_prev: vec![0.0; self.sizes.iter().copied().max().unwrap_or(1)],
        }
    }

    /// Evaluates the network on one input.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut ws = self.workspace();
        Ok(self.forward_ws(input, &mut ws))
    }

    /// Forward pass that records activations in `ws` for a later
    /// [`MlpParams::backward_ws`]. Panics on a dimension mismatch.
    pub fn forward_ws(&self, input: &[f64], ws: &mut Workspace) -> f64 {
        assert_eq!(input.len(), self.input_dim(), "input dimension mismatch");
        ws.acts[0].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let (prev, next) = ws.acts.split_at_mut(k + 1);
            let x = &prev[k];
            let h = &mut next[0];
            h.copy_from_slice(&layer.biases);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                for (hj, &w) in h.iter_mut().zip(row) {
                    *hj += xi * w;
                }
            }
            if k != last {
                activation::tanh_in_place(h);
            }
        }
        ws.acts[self.layers.len()][0]
    }

    /// Accumulates `dout * d(output)/d(params)` into `grads`, using the
    /// activations recorded by the preceding `forward_ws` call on `ws`.
    pub fn backward_ws(&self, ws: &mut Workspace, dout: f64, grads: &mut MlpParams) {
        let n = self.layers.len();
        ws.delta[0] = dout;
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let glayer = &mut grads.layers[k];
            let x = &ws.acts[k];
            let delta = &ws.delta[..layer.fan_out];
            for (gb, &d) in glayer.biases.iter_mut().zip(delta) {
                *gb += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut glayer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                for (g, &d) in row.iter_mut().zip(delta) {
                    *g += xi * d;
                }
            }
            if k > 0 {
                // Propagate through W and the tanh of the previous layer.
                for (i, &xi) in x.iter().enumerate() {
                    let row = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                    let s: f64 = row.iter().zip(delta).map(|(w, d)| w * d).sum();
                    ws.delta_prev[i] = s * (1.0 - xi * xi);
                }
                core::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }

    /// Mean squared error against constant targets and its exact gradient.
    pub fn loss_and_grads<I: AsRef<[f64]>>(
        &self,
        inputs: &[I],
        targets: &[f64],
    ) -> Result<(f64, MlpParams)> {
        if inputs.is_empty() {
            return Err(usage("loss over an empty batch"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Shape {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        for x in inputs {
            if x.as_ref().len() != self.input_dim() {
                return Err(Error::Shape {
                    expected: self.input_dim(),
                    got: x.as_ref().len(),
                });
            }
        }
        let inv_b = 1.0 / inputs.len() as f64;
        let mut ws = self.workspace();
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(targets) {
            let v = self.forward_ws(x.as_ref(), &mut ws);
            let r = v - y;
            loss += r * r;
            self.backward_ws(&mut ws, 2.0 * r * inv_b, &mut grads);
        }
        Ok((loss * inv_b, grads))
    }
}

/// Reusable activation buffers for forward/backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn polyak_update(target: &mut MlpParams, online: &MlpParams, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(config("polyak rate must lie in (0, 1]"));
    }
    if !target.same_shape(online) {
        return Err(Error::Shape {
            expected: target.num_params(),
            got: online.num_params(),
        });
    }
    if tau == 1.0 {
        for (t, &o) in target.values_mut().zip(online.values()) {
            *t = o;
        }
        return Ok(());
    }
    for (t, &o) in target.values_mut().zip(online.values()) {
        *t += tau * (o - *t);
    }
    Ok(())
}
