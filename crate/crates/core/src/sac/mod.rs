//! Soft actor-critic with a pluggable, possibly state-dependent discount in
//! the critic target.

mod agent;
mod policy;
mod replay;
mod train;

pub use agent::{
    alpha_loss_and_grad, compose_targets, critic_input, critic_loss_and_grad, SacAgent, SacConfig, SacStats,
};
pub use policy::{log_one_minus_tanh_sq, PolicyTape, SquashedGaussian, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{evaluate, sac_train, stack, EvalResult, RunStreams, SacRun};
