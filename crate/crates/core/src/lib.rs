//! Path-coupled Bellman flows: a flow-matching critic for return
//! distributions whose current and successor flows share base noise, trained
//! on a control-variate Bellman target.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod baselines;
pub mod bellman;
pub mod context;
pub mod envs;
pub mod error;
pub mod flow;
pub mod law;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use baselines::BaselineKind;
pub use context::OneHot;
pub use envs::{Mrp, MrpKind, MrpSpec, Transition};
pub use error::{Error, Result};
pub use law::ReturnLaw;
pub use nn::{AdamState, MlpParams};
pub use rng::RngStream;
pub use trainer::{train, Critic, EvalTarget, MetricsLog, Method, TrainConfig};
