//! Comparison objectives: BCFM alone, same-time DCFM self-consistency (with
//! and without the γ velocity factor), the combined BCFM + DCFM loss, and a
//! non-bootstrapped CFM fit to Monte Carlo return samples.
//!
//! The DCFM target evaluates the lagged field at the Bellman-inverse point
//! `(z - r)/γ` of the successor. It is only defined on non-terminal
//! transitions; terminal items fall back to the BCFM target.

use alloc::vec::Vec;

use crate::bellman::CoupledBatchItem;
use crate::context::OneHot;
use crate::error::{config, usage, Error, Result};
use crate::flow::VelocityField;
use crate::nn::adam_step;
use crate::rng::RngStream;
use crate::trainer::{run_loop, train_step, Critic, EvalTarget, MetricsLog, Method, Progress, TrainConfig};
use crate::envs::Transition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    BcfmOnly,
    DcfmUnscaled,
    DcfmScaled,
    /// BCFM plus `dcfm_coef` times the unscaled DCFM loss.
    VfCombined { dcfm_coef: f64 },
    OracleCfm,
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::VfCombined { dcfm_coef } if !(dcfm_coef >= 0.0 && dcfm_coef.is_finite()) => {
                Err(config("dcfm_coef must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::BcfmOnly => "bcfm",
            Self::DcfmUnscaled => "dcfm_unscaled",
            Self::DcfmScaled => "dcfm_scaled",
            Self::VfCombined { .. } => "vf",
            Self::OracleCfm => "oracle_cfm",
        }
    }
}

/// `(z - r)/γ`, the preimage of `z` under `x ↦ r + γ x`.
pub fn bellman_inverse(z: f64, r: f64, gamma: f64) -> Result<f64> {
    if gamma == 0.0 {
        return Err(Error::Singular("Bellman inverse at gamma = 0"));
    }
    Ok((z - r) / gamma)
}

/// `v⁻(t, (z_t - r)/γ | s')`.
pub fn dcfm_target_unscaled<F: VelocityField + ?Sized>(
    target_field: &mut F,
    t: f64,
    z_t: f64,
    r: f64,
    gamma: f64,
    succ_context: &[f64],
) -> Result<f64> {
    let z = bellman_inverse(z_t, r, gamma)?;
    Ok(target_field.velocity(t, z, succ_context))
}

/// `γ v⁻(t, (z_t - r)/γ | s')`, the path-derivative scaling.
pub fn dcfm_target_scaled<F: VelocityField + ?Sized>(
    target_field: &mut F,
    t: f64,
    z_t: f64,
    r: f64,
    gamma: f64,
    succ_context: &[f64],
) -> Result<f64> {
    Ok(gamma * dcfm_target_unscaled(target_field, t, z_t, r, gamma, succ_context)?)
}

/// Up to two weighted regression targets for one batch item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terms {
    pairs: [(f64, f64); 2],
    len: usize,
}

impl Terms {
    pub fn single(target: f64) -> Self {
        Self {
            pairs: [(1.0, target), (0.0, 0.0)],
            len: 1,
        }
    }

    fn push(&mut self, weight: f64, target: f64) {
        self.pairs[self.len] = (weight, target);
        self.len += 1;
    }

    pub fn as_slice(&self) -> &[(f64, f64)] {
        &self.pairs[..self.len]
    }
}

/// Regression targets for `item` under a baseline objective.
pub fn regression_terms<F: VelocityField + ?Sized>(
    kind: BaselineKind,
    item: &CoupledBatchItem,
    gamma: f64,
    target_field: &mut F,
    encoder: &OneHot,
    succ_ctx: &mut [f64],
) -> Result<Terms> {
    let succ = match (item.gamma_eff > 0.0, item.next_state) {
        (true, Some(s)) => Some(s),
        _ => None,
    };
    let mut dcfm = |scaled: bool, ctx: &mut [f64]| -> Result<Option<f64>> {
        let Some(s) = succ else { return Ok(None) };
        encoder.write(s, ctx);
        let d = if scaled {
            dcfm_target_scaled(target_field, item.t, item.z_curr, item.r, gamma, ctx)?
        } else {
            dcfm_target_unscaled(target_field, item.t, item.z_curr, item.r, gamma, ctx)?
        };
        Ok(Some(d))
    };
    let terms = match kind {
        BaselineKind::BcfmOnly => Terms::single(item.y),
        BaselineKind::DcfmUnscaled | BaselineKind::DcfmScaled => {
            let scaled = kind == BaselineKind::DcfmScaled;
            Terms::single(dcfm(scaled, succ_ctx)?.unwrap_or(item.y))
        }
        BaselineKind::VfCombined { dcfm_coef } => {
            let mut t = Terms::single(item.y);
            if dcfm_coef > 0.0 {
                if let Some(d) = dcfm(false, succ_ctx)? {
                    t.push(dcfm_coef, d);
                }
            }
            t
        }
        BaselineKind::OracleCfm => return Err(usage("oracle CFM has no Bellman targets")),
    };
    Ok(terms)
}

/// One step of the combined BCFM + `dcfm_coef` × unscaled-DCFM objective.
pub fn vf_train_step(
    critic: &mut Critic,
    batch: &[Transition],
    dcfm_coef: f64,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    let kind = BaselineKind::VfCombined { dcfm_coef };
    kind.validate()?;
    train_step(critic, batch, cfg, Method::Baseline(kind), rng)
}

/// Monte Carlo return samples for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSamples {
    pub state: usize,
    pub samples: Vec<f64>,
}

/// Plain CFM regression onto Monte Carlo returns: `z = (1-t) x0 + t x1`,
/// target `x1 - x0`, with `x1` drawn from the state's samples and the state
/// drawn uniformly from `data`.
pub fn oracle_cfm_train(
    data: &[StateSamples],
    encoder: OneHot,
    targets: &[EvalTarget],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Progress),
) -> Result<(Critic, MetricsLog)> {
    cfg.validate()?;
    if data.is_empty() || data.iter().any(|d| d.samples.is_empty()) {
        return Err(usage("oracle CFM needs non-empty samples for every state"));
    }
    let mut critic = Critic::new(encoder, cfg)?;
    let mut input = alloc::vec![0.0; critic.online.input_dim()];
    let log = run_loop(&mut critic, cfg, targets, observer, |critic, rng| {
        let online = &critic.online;
        let mut grads = online.zeros_like();
        let mut ws = online.workspace();
        let inv_b = 1.0 / cfg.batch_size as f64;
        let mut loss = 0.0;
        for i in 0..cfg.batch_size {
            let set = &data[rng.index(data.len())];
            let x1 = set.samples[rng.index(set.samples.len())];
            let x0 = rng.normal();
            let t = rng.uniform();
            input[0] = (1.0 - t) * x0 + t * x1;
            input[1] = t;
            critic.encoder.write(set.state, &mut input[2..]);
            let v = online.forward_ws(&input, &mut ws);
            let r = v - crate::flow::cfm_target(x0, x1);
            loss += r * r;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    context: "oracle CFM loss",
                    index: i,
                });
            }
            online.backward_ws(&mut ws, 2.0 * r * inv_b, &mut grads);
        }
        adam_step(&mut critic.online, &grads, &mut critic.adam, cfg.lr)?;
        critic.target.clone_from(&critic.online);
        Ok(loss * inv_b)
    })?;
    Ok((critic, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(_t: f64, z: f64, _c: &[f64]) -> f64 {
        z
    }

    #[test]
    fn unscaled_targets() {
        let mut f = linear;
        assert_eq!(dcfm_target_unscaled(&mut f, 0.5, 3.0, 0.0, 1.0, &[]).unwrap(), 3.0);
        assert_eq!(dcfm_target_unscaled(&mut f, 0.5, 3.0, 1.0, 0.5, &[]).unwrap(), 4.0);
        let mut c = |_t: f64, _z: f64, _c: &[f64]| 1.7;
        assert_eq!(dcfm_target_unscaled(&mut c, 0.1, -2.0, 0.3, 0.9, &[]).unwrap(), 1.7);
        assert!(matches!(
            dcfm_target_unscaled(&mut f, 0.5, 3.0, 1.0, 0.0, &[]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn scaled_targets() {
        let mut f = linear;
        assert_eq!(dcfm_target_scaled(&mut f, 0.5, 3.0, 1.0, 0.5, &[]).unwrap(), 2.0);
        let mut c = |_t: f64, _z: f64, _c: &[f64]| 1.5;
        assert_eq!(dcfm_target_scaled(&mut c, 0.5, 0.0, 0.0, 0.5, &[]).unwrap(), 0.75);
    }

    #[test]
    fn bellman_inverse_roundtrip() {
        for (z, r, g) in [(0.3, 1.0, 0.9), (-4.0, 0.0, 0.5), (12.5, 1.0, 0.95)] {
            let back = bellman_inverse(r + g * z, r, g).unwrap();
            assert!((back - z).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_coefficient_rejected() {
        assert!(BaselineKind::VfCombined { dcfm_coef: -0.1 }.validate().is_err());
        assert!(BaselineKind::VfCombined { dcfm_coef: f64::INFINITY }.validate().is_err());
        assert!(BaselineKind::VfCombined { dcfm_coef: 0.5 }.validate().is_ok());
    }

    #[test]
    fn terminal_items_keep_bcfm() {
        let item = CoupledBatchItem {
            state: 0,
            next_state: None,
            x0: 0.2,
            t: 0.4,
            r: 1.0,
            gamma_eff: 0.0,
            lambda_eff: 0.0,
            x_prime: 0.0,
            z_succ: 0.12,
            z_curr: 0.52,
            c_t: 0.0,
            control: 0.2,
            y: 0.8,
            u: 0.8,
        };
        let mut f = linear;
        let enc = OneHot::new(1);
        let mut ctx = [0.0];
        for kind in [
            BaselineKind::BcfmOnly,
            BaselineKind::DcfmUnscaled,
            BaselineKind::DcfmScaled,
            BaselineKind::VfCombined { dcfm_coef: 1.0 },
        ] {
            let t = regression_terms(kind, &item, 0.9, &mut f, &enc, &mut ctx).unwrap();
            assert_eq!(t.as_slice(), &[(1.0, 0.8)]);
        }
    }
}
