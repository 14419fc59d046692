//! Proximal policy optimization with per-step discounts in the advantage
//! and value-target estimators.

mod agent;
mod gae;
mod train;

pub use agent::{
    gaussian_entropy, gaussian_log_prob, Estimates, PpoAgent, PpoConfig, PpoStats, SurrogateLoss, ValueTarget,
};
pub use gae::{
    gae_adaptive, gae_expansion, gae_expansion_terms, normalize_advantages, nstep_value_target, td_residuals, Rollout,
};
pub use train::{ppo_train, PpoRun};
