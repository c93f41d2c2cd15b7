//! Experiment configuration files.
//!
//! A config is one JSON object. Every field has a default, so `{}` is a
//! valid config; the resolved form is echoed next to each command's outputs.

use std::collections::HashSet;
use std::path::Path;

use pcbf_core::{BaselineKind, Method, Mrp, MrpSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Bernoulli,
    Solitaire,
    DiscreteMc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Chain length for `discrete_mc`; ignored otherwise.
    pub n_states: usize,
    /// Overrides the environment's default discount.
    pub gamma: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::Bernoulli,
            n_states: 21,
            gamma: None,
        }
    }
}

impl EnvConfig {
    pub fn spec(&self) -> MrpSpec {
        match self.kind {
            EnvKind::Bernoulli => MrpSpec::bernoulli(),
            EnvKind::Solitaire => MrpSpec::solitaire(),
            EnvKind::DiscreteMc => MrpSpec::discrete_mc(self.n_states),
        }
    }

    pub fn mrp(&self) -> Result<Mrp> {
        Ok(Mrp::new(self.spec())?)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.spec().gamma_default)
    }
}

/// Training hyperparameters; `gamma` and `seed` come from the env and seed
/// list instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub nfe: usize,
    pub eval_every: usize,
    pub loss_window: usize,
    pub eval_samples: usize,
    pub hidden: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            lambda: d.lambda,
            tau: d.tau,
            lr: d.lr,
            batch_size: d.batch_size,
            total_steps: d.total_steps,
            nfe: d.nfe,
            eval_every: d.eval_every,
            loss_window: d.loss_window,
            eval_samples: d.eval_samples,
            hidden: d.hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Pcbf,
    Bcfm,
    DcfmUnscaled,
    DcfmScaled,
    Vf { dcfm_coef: f64 },
    OracleCfm,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self::Pcbf
    }
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match *self {
            Self::Pcbf => Method::Pcbf,
            Self::Bcfm => Method::Baseline(BaselineKind::BcfmOnly),
            Self::DcfmUnscaled => Method::Baseline(BaselineKind::DcfmUnscaled),
            Self::DcfmScaled => Method::Baseline(BaselineKind::DcfmScaled),
            Self::Vf { dcfm_coef } => Method::Baseline(BaselineKind::VfCombined { dcfm_coef }),
            Self::OracleCfm => Method::Baseline(BaselineKind::OracleCfm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// States scored against ground truth; all non-terminal states if unset.
    pub states: Option<Vec<usize>>,
    /// Monte Carlo rollouts per oracle state.
    pub oracle_rollouts: usize,
    /// Seed of the oracle rollouts, shared by every run of a sweep.
    pub oracle_seed: u64,
    /// Flow samples per state for `eval`.
    pub n_samples: usize,
    /// Points in each emitted CDF table.
    pub cdf_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            states: None,
            oracle_rollouts: 100_000,
            oracle_seed: 0,
            n_samples: 10_000,
            cdf_points: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// λ values trained with PCBF.
    pub lambdas: Vec<f64>,
    /// `dcfm_coef` values trained with the combined baseline.
    pub dcfm_coefs: Vec<f64>,
    /// Worker threads; defaults to the available parallelism.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualSection {
    pub t_grid: Vec<f64>,
    pub nfe_grid: Vec<usize>,
    pub n_samples: usize,
}

impl Default for ResidualSection {
    fn default() -> Self {
        Self {
            t_grid: vec![0.0, 0.25, 0.5, 0.75],
            nfe_grid: vec![4, 8, 16, 32],
            n_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    /// Draws for the Gaussian regression and variance checks.
    pub gaussian_samples: usize,
    /// Seeds per state for the contraction checks.
    pub contraction_seeds: usize,
    /// Random generator pairs per environment.
    pub generator_pairs: usize,
    /// Constructed fields for the Euler-sensitivity check.
    pub sensitivity_cases: usize,
    /// Replace the closed-form κ by its negation.
    pub negate_kappa: bool,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            gaussian_samples: 1_000_000,
            contraction_seeds: 100_000,
            generator_pairs: 20,
            sensitivity_cases: 50,
            negate_kappa: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub dataset_size: usize,
    pub train: TrainSection,
    pub method: MethodConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub residual: ResidualSection,
    pub theory: TheorySection,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            dataset_size: 100_000,
            train: TrainSection::default(),
            method: MethodConfig::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            residual: ResidualSection::default(),
            theory: TheorySection::default(),
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Usage("seed list is empty".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(CliError::Usage("seeds must be distinct".into()));
        }
        if self.dataset_size == 0 {
            return Err(CliError::Usage("dataset_size must be positive".into()));
        }
        if self.env.kind == EnvKind::DiscreteMc && self.env.n_states < 3 {
            return Err(CliError::Usage("discrete_mc needs at least 3 states".into()));
        }
        self.train_config(self.seeds[0]).validate()?;
        if let Method::Baseline(kind) = self.method.method() {
            kind.validate()?;
        }
        let mrp = self.env.mrp()?;
        let interior = mrp.interior_states();
        if let Some(states) = &self.eval.states {
            if let Some(bad) = states.iter().find(|s| !interior.contains(s)) {
                return Err(CliError::Usage(format!("eval state {bad} is not a non-terminal state")));
            }
        }
        Ok(())
    }

    /// Replaces the seed list with `[seed]`.
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds = vec![seed];
    }

    pub fn seed(&self) -> u64 {
        self.seeds[0]
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            gamma: self.env.gamma(),
            lambda: t.lambda,
            tau: t.tau,
            lr: t.lr,
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            nfe: t.nfe,
            eval_every: t.eval_every,
            loss_window: t.loss_window,
            eval_samples: t.eval_samples,
            hidden: t.hidden.clone(),
            seed,
        }
    }

    pub fn eval_states(&self, mrp: &Mrp) -> Vec<usize> {
        self.eval.states.clone().unwrap_or_else(|| mrp.interior_states())
    }
}
