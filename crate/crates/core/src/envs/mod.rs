//! Small environments behind a uniform step interface.

mod corridor;
mod pendulum;
mod tabular;

pub use corridor::{CorridorEnv, CorridorParams, Zone};
pub use pendulum::PendulumEnv;
pub use tabular::{random_mdp, TabularMdp};

use crate::numerics::Rng;

/// Outcome of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// True termination: nothing is bootstrapped past this step.
    pub terminal: bool,
    /// Horizon cap reached; the episode ends but bootstrapping continues.
    pub truncated: bool,
}

/// Continuous-action episodic environment.
pub trait Env: Send {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Actions are clipped to `[-bound, bound]` in every dimension.
    fn action_bound(&self) -> f64;
    fn horizon(&self) -> usize;
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn step(&mut self, action: &[f64], rng: &mut Rng) -> EnvStep;
}

impl<E: Env + ?Sized> Env for Box<E> {
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn action_bound(&self) -> f64 {
        (**self).action_bound()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        (**self).reset(rng)
    }
    fn step(&mut self, action: &[f64], rng: &mut Rng) -> EnvStep {
        (**self).step(action, rng)
    }
}
