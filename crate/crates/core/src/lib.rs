//! State-dependent discounting for actor-critic reinforcement learning.
//!
//! A learned, bounded discount function `gamma(s)` replaces the scalar
//! discount in bootstrapped targets. The crate provides:
//!
//! * [`gamma`]: the discount network, its return-consistency objective,
//!   regularizers, the adaptive reference discount and baseline variants;
//! * [`sac`] and [`ppo`]: off-policy and on-policy adapters;
//! * [`theory`]: exact tabular checks of the soft Bellman operator under a
//!   state-dependent discount;
//! * [`envs`]: small environments, [`harness`]: configs, logs and sweeps;
//! * [`numerics`]: the dense-math substrate everything is built on.

pub mod envs;
pub mod error;
pub mod gamma;
pub mod harness;
pub mod numerics;
pub mod ppo;
pub mod sac;
pub mod theory;

pub use error::{Error, Result};
