//! The offline training loop and its metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::wasserstein::wasserstein1;
use crate::baselines::{self, BaselineKind};
use crate::bellman::{build_coupled_batch, CoupledBatchItem, CouplingParams};
use crate::context::OneHot;
use crate::envs::Transition;
use crate::error::{config, usage, Error, Result};
use crate::flow::{sample_returns, NetField};
use crate::law::ReturnLaw;
use crate::nn::{adam_step, polyak_update, AdamState, MlpParams};
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub nfe: usize,
    pub eval_every: usize,
    pub loss_window: usize,
    /// Flow samples drawn per evaluated state at each snapshot.
    pub eval_samples: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            lambda: 0.0,
            tau: 5e-3,
            lr: 3e-4,
            batch_size: 256,
            total_steps: 50_000,
            nfe: 10,
            eval_every: 5_000,
            loss_window: 100,
            eval_samples: 10_000,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(config("gamma must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(config("lambda must lie in [0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(config("tau must lie in (0, 1]"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(config("batch_size must be at least 1"));
        }
        if self.total_steps == 0 {
            return Err(config("total_steps must be at least 1"));
        }
        if self.nfe == 0 {
            return Err(config("nfe must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(config("eval_every must be at least 1"));
        }
        if self.loss_window < 2 {
            return Err(config("loss_window must be at least 2"));
        }
        if self.eval_samples == 0 {
            return Err(config("eval_samples must be at least 1"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(config("hidden widths must be positive"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, context_dim: usize) -> Vec<usize> {
        let mut sizes = vec![2 + context_dim];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        sizes
    }
}

/// Which regression target the online field is trained on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Coupled paths with the λ-target, λ taken from [`TrainConfig::lambda`].
    Pcbf,
    Baseline(BaselineKind),
}

/// Online field, its lagged copy and the optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub online: MlpParams,
    pub target: MlpParams,
    pub adam: AdamState,
    pub encoder: OneHot,
}

impl Critic {
    pub fn new(encoder: OneHot, cfg: &TrainConfig) -> Result<Self> {
        let online = MlpParams::init(&cfg.layer_sizes(encoder.dim()), cfg.seed)?;
        Ok(Self::from_params(online, encoder))
    }

    pub fn from_params(online: MlpParams, encoder: OneHot) -> Self {
        Self {
            target: online.clone(),
            adam: AdamState::new(&online),
            online,
            encoder,
        }
    }
}

/// One optimisation step; returns the minibatch loss.
///
/// Targets come from [`build_coupled_batch`] and enter the loss as plain
/// numbers, so the gradient only flows through the online evaluation
/// `v(t, Z_t | s)`.
pub fn train_step(
    critic: &mut Critic,
    batch: &[Transition],
    cfg: &TrainConfig,
    method: Method,
    rng: &mut RngStream,
) -> Result<f64> {
    let lambda = match method {
        Method::Pcbf => cfg.lambda,
        Method::Baseline(BaselineKind::OracleCfm) => {
            return Err(usage("oracle CFM trains on return samples, not transitions"))
        }
        Method::Baseline(_) => 0.0,
    };
    let params = CouplingParams {
        gamma: cfg.gamma,
        lambda,
        nfe: cfg.nfe,
    };
    let items = build_coupled_batch(batch, &critic.target, &critic.encoder, params, rng)?;

    let online = &critic.online;
    let mut grads = online.zeros_like();
    let mut ws = online.workspace();
    let mut input = vec![0.0; online.input_dim()];
    let mut succ_ctx = vec![0.0; critic.encoder.dim()];
    let mut target_field = NetField::new(&critic.target);
    let inv_b = 1.0 / items.len() as f64;
    let mut loss = 0.0;
    for (i, item) in items.iter().enumerate() {
        input[0] = item.z_curr;
        input[1] = item.t;
        critic.encoder.write(item.state, &mut input[2..]);
        let v = online.forward_ws(&input, &mut ws);
        let terms = match method {
            Method::Pcbf => baselines::Terms::single(item.u),
            Method::Baseline(kind) => baselines::regression_terms(
                kind,
                item,
                cfg.gamma,
                &mut target_field,
                &critic.encoder,
                &mut succ_ctx,
            )?,
        };
        let mut dv = 0.0;
        for &(w, y) in terms.as_slice() {
            let r = v - y;
            loss += w * r * r;
            dv += 2.0 * w * r;
        }
        if !(loss.is_finite() && dv.is_finite()) {
            return Err(diverged(i, item, v));
        }
        online.backward_ws(&mut ws, dv * inv_b, &mut grads);
    }
    adam_step(&mut critic.online, &grads, &mut critic.adam, cfg.lr)?;
    polyak_update(&mut critic.target, &critic.online, cfg.tau)?;
    Ok(loss * inv_b)
}

fn diverged(index: usize, item: &CoupledBatchItem, v: f64) -> Error {
    Error::Diverged(format!(
        "non-finite loss at batch item {index}: prediction {v}, item {item:?}"
    ))
}

/// Ground truth for one evaluated state.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTarget {
    pub state: usize,
    pub law: ReturnLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub w1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub eval_states: Vec<usize>,
    pub loss_window: usize,
    /// Loss of step `k` (1-based) at index `k - 1`.
    pub losses: Vec<f64>,
    /// Sample std of the trailing `loss_window` losses, once available.
    pub windowed_std: Vec<Option<f64>>,
    pub evals: Vec<EvalRecord>,
    /// Filled by hosts that can read a clock.
    pub wall_clock_per_1k: Vec<f64>,
}

impl MetricsLog {
    pub fn new(eval_states: Vec<usize>, loss_window: usize) -> Self {
        Self {
            eval_states,
            loss_window,
            ..Self::default()
        }
    }

    pub fn record_loss(&mut self, loss: f64) {
        self.losses.push(loss);
        let n = self.losses.len();
        let std = (n >= self.loss_window)
            .then(|| crate::analysis::stats::sample_std(&self.losses[n - self.loss_window..]));
        self.windowed_std.push(std);
    }

    pub fn last_eval(&self) -> Option<&EvalRecord> {
        self.evals.last()
    }

    /// Mean over evaluated states of the final snapshot's W1.
    pub fn final_mean_w1(&self) -> Option<f64> {
        self.last_eval()
            .map(|e| e.w1.iter().sum::<f64>() / e.w1.len() as f64)
    }

    pub fn loss_std(&self, window: usize) -> Result<Vec<f64>> {
        loss_std(&self.losses, window)
    }
}

/// Rolling sample standard deviation over every full window of `series`.
pub fn loss_std(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(usage("loss window must be at least 2"));
    }
    if window > series.len() {
        return Err(usage(format!(
            "window {window} longer than series of {}",
            series.len()
        )));
    }
    Ok(series
        .windows(window)
        .map(crate::analysis::stats::sample_std)
        .collect())
}

/// W1 between the learned law and each target, from `n_samples` flow draws.
pub fn evaluate_w1(
    params: &MlpParams,
    encoder: &OneHot,
    targets: &[EvalTarget],
    n_samples: usize,
    nfe: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    targets
        .iter()
        .map(|tgt| {
            let samples = sample_returns(params, &encoder.encode(tgt.state), n_samples, rng, nfe)?;
            Ok(wasserstein1(&ReturnLaw::empirical(samples)?, &tgt.law))
        })
        .collect()
}

/// What an observer sees after each step.
#[derive(Debug, Clone, Copy)]
pub struct Progress<'a> {
    pub step: usize,
    pub loss: f64,
    pub windowed_std: Option<f64>,
    /// Set on steps that took a W1 snapshot.
    pub eval: Option<&'a EvalRecord>,
    pub critic: &'a Critic,
}

/// Runs `cfg.total_steps` calls of `step`, recording losses and W1 snapshots
/// every `eval_every` steps and after the last one.
pub(crate) fn run_loop(
    critic: &mut Critic,
    cfg: &TrainConfig,
    targets: &[EvalTarget],
    observer: &mut dyn FnMut(&Progress),
    mut step: impl FnMut(&mut Critic, &mut RngStream) -> Result<f64>,
) -> Result<MetricsLog> {
    let master = RngStream::new(cfg.seed);
    let mut batch_rng = master.split(streams::BATCH);
    let eval_rng = master.split(streams::EVAL);
    let mut log = MetricsLog::new(targets.iter().map(|t| t.state).collect(), cfg.loss_window);
    for k in 1..=cfg.total_steps {
        let loss = step(critic, &mut batch_rng)?;
        log.record_loss(loss);
        let snapshot = !targets.is_empty() && (k % cfg.eval_every == 0 || k == cfg.total_steps);
        if snapshot {
            let mut rng = eval_rng.split(k as u64);
            let w1 = evaluate_w1(&critic.online, &critic.encoder, targets, cfg.eval_samples, cfg.nfe, &mut rng)?;
            log.evals.push(EvalRecord { step: k, w1 });
        }
        observer(&Progress {
            step: k,
            loss,
            windowed_std: log.windowed_std[k - 1],
            eval: if snapshot { log.evals.last() } else { None },
            critic,
        });
    }
    Ok(log)
}

/// Trains a fresh critic on uniformly resampled minibatches of `dataset`.
pub fn train(
    dataset: &[Transition],
    encoder: OneHot,
    targets: &[EvalTarget],
    cfg: &TrainConfig,
    method: Method,
    observer: &mut dyn FnMut(&Progress),
) -> Result<(Critic, MetricsLog)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(usage("empty dataset"));
    }
    if let Some(bad) = dataset.iter().find(|t| t.state >= encoder.dim()) {
        return Err(usage(format!("state {} outside the context width", bad.state)));
    }
    let mut critic = Critic::new(encoder, cfg)?;
    let mut batch: Vec<Transition> = Vec::with_capacity(cfg.batch_size);
    let log = run_loop(&mut critic, cfg, targets, observer, |critic, rng| {
        batch.clear();
        batch.extend((0..cfg.batch_size).map(|_| dataset[rng.index(dataset.len())]));
        train_step(critic, &batch, cfg, method, rng)
    })?;
    Ok((critic, log))
}

/// Human-readable tag for a method, used in reports.
pub fn method_label(method: Method) -> String {
    match method {
        Method::Pcbf => "pcbf".into(),
        Method::Baseline(kind) => kind.label().into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            gamma: 0.9,
            batch_size: 8,
            total_steps: 5,
            eval_every: 5,
            loss_window: 2,
            eval_samples: 50,
            hidden: vec![8],
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { total_steps: 0, ..ok.clone() },
            TrainConfig { gamma: 1.0, ..ok.clone() },
            TrainConfig { lambda: 1.1, ..ok.clone() },
            TrainConfig { tau: 0.0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { loss_window: 1, ..ok.clone() },
            TrainConfig { nfe: 0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn loss_std_examples() {
        assert_eq!(loss_std(&[0.7; 10], 3).unwrap(), vec![0.0; 8]);
        let s = loss_std(&[0.0, 2.0], 2).unwrap();
        assert!((s[0] - libm::sqrt(2.0)).abs() < 1e-15);
        let alt = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        for s in loss_std(&alt, 4).unwrap() {
            assert!((s - libm::sqrt(4.0 / 3.0)).abs() < 1e-12);
        }
        assert!(loss_std(&[1.0, 2.0], 3).is_err());
        assert!(loss_std(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn terminal_zero_reward_targets() {
        let cfg = tiny_cfg();
        let mut critic = Critic::new(OneHot::new(1), &cfg).unwrap();
        let batch = [Transition::terminal(0, 0.0); 4];
        let before = critic.clone();
        let loss = train_step(&mut critic, &batch, &cfg, Method::Pcbf, &mut RngStream::new(1)).unwrap();
        let mut rng = RngStream::new(1);
        let mut want = 0.0;
        for _ in 0..4 {
            let x0 = rng.normal();
            let t = rng.uniform();
            let v = before.online.forward(&[(1.0 - t) * x0, t, 1.0]).unwrap();
            want += (v + x0) * (v + x0);
        }
        assert!((loss - want / 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let cfg = TrainConfig { lr: 0.0, ..tiny_cfg() };
        let mut critic = Critic::new(OneHot::new(1), &cfg).unwrap();
        let before = critic.online.clone();
        let batch = [Transition::step(0, 1.0, 0); 4];
        // θ⁻ = θ at initialisation, so Polyak is a no-op as well.
        train_step(&mut critic, &batch, &cfg, Method::Pcbf, &mut RngStream::new(1)).unwrap();
        assert_eq!(critic.online, before);
        assert_eq!(critic.target, before);
    }

    #[test]
    fn step_is_deterministic() {
        let cfg = tiny_cfg();
        let batch = [Transition::step(0, 1.0, 0), Transition::terminal(0, 0.0)];
        let run = || {
            let mut c = Critic::new(OneHot::new(1), &cfg).unwrap();
            let l = train_step(&mut c, &batch, &cfg, Method::Pcbf, &mut RngStream::new(9)).unwrap();
            (l, c)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn target_tracks_online_by_polyak() {
        let cfg = TrainConfig { lambda: 0.5, ..tiny_cfg() };
        let mut critic = Critic::new(OneHot::new(1), &cfg).unwrap();
        critic.target = MlpParams::init(&cfg.layer_sizes(1), 99).unwrap();
        let old_target = critic.target.clone();
        let batch = [Transition::step(0, 1.0, 0); 4];
        train_step(&mut critic, &batch, &cfg, Method::Pcbf, &mut RngStream::new(2)).unwrap();
        for ((&new_t, &old_t), &theta) in critic
            .target
            .values()
            .zip(old_target.values())
            .zip(critic.online.values())
        {
            let want = cfg.tau * theta + (1.0 - cfg.tau) * old_t;
            assert!((new_t - want).abs() <= 1e-15 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let cfg = TrainConfig { total_steps: 0, ..tiny_cfg() };
        let data = [Transition::step(0, 1.0, 0)];
        let err = train(&data, OneHot::new(1), &[], &cfg, Method::Pcbf, &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = train(&[], OneHot::new(1), &[], &tiny_cfg(), Method::Pcbf, &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn train_records_metrics() {
        let cfg = tiny_cfg();
        let data = [Transition::step(0, 1.0, 0), Transition::step(0, 0.0, 0)];
        let targets = [EvalTarget {
            state: 0,
            law: crate::envs::bernoulli_return_law(),
        }];
        let mut seen = 0;
        let (_, log) = train(&data, OneHot::new(1), &targets, &cfg, Method::Pcbf, &mut |p| {
            seen = p.step
        })
        .unwrap();
        assert_eq!(seen, 5);
        assert_eq!(log.losses.len(), 5);
        assert_eq!(log.windowed_std[0], None);
        assert!(log.windowed_std[1].is_some());
        assert_eq!(log.evals.len(), 1);
        assert_eq!(log.evals[0].step, 5);
        assert!(log.evals[0].w1[0].is_finite());
    }
}
