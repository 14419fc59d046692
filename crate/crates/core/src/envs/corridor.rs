use serde::{Deserialize, Serialize};

use super::{Env, EnvStep};
use crate::numerics::Rng;

/// Geometry and reward constants of [`CorridorEnv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorridorParams {
    pub length: f64,
    /// Positions below this are in the noisy zone.
    pub noisy_end: f64,
    pub noise_std: f64,
    /// Goal region starts here.
    pub goal: f64,
    pub goal_reward: f64,
    /// Reward per unit of forward progress inside the noisy zone.
    pub shaping_scale: f64,
    pub horizon: usize,
}

impl Default for CorridorParams {
    fn default() -> Self {
        Self {
            length: 10.0,
            noisy_end: 5.0,
            noise_std: 0.5,
            goal: 9.5,
            goal_reward: 10.0,
            shaping_scale: 0.5,
            horizon: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Noisy,
    Deterministic,
}

/// One-dimensional corridor with two regimes.
///
/// Positions in `[0, noisy_end)` receive Gaussian transition noise and a
/// dense progress reward; `[noisy_end, length]` is deterministic and pays
/// `goal_reward` on every step taken from a position `>= goal`. The episode
/// never terminates; it is truncated after `horizon` steps. Observation is
/// the raw position `[x]`, action a velocity in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct CorridorEnv {
    pub params: CorridorParams,
    position: f64,
    steps: usize,
}

impl Default for CorridorEnv {
    fn default() -> Self {
        Self::new(CorridorParams::default())
    }
}

impl CorridorEnv {
    pub fn new(params: CorridorParams) -> Self {
        Self {
            params,
            position: 0.0,
            steps: 0,
        }
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn set_position(&mut self, x: f64) {
        self.position = x.clamp(0.0, self.params.length);
    }

    pub fn zone_of(&self, x: f64) -> Zone {
        if x < self.params.noisy_end {
            Zone::Noisy
        } else {
            Zone::Deterministic
        }
    }
}

impl Env for CorridorEnv {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        1.0
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.position = 0.0;
        self.steps = 0;
        vec![0.0]
    }

    fn step(&mut self, action: &[f64], rng: &mut Rng) -> EnvStep {
        let p = &self.params;
        let x = self.position;
        let v = action[0].clamp(-1.0, 1.0);
        let zone = self.zone_of(x);
        let noise = match zone {
            Zone::Noisy => p.noise_std * rng.normal(),
            Zone::Deterministic => 0.0,
        };
        let next = (x + v + noise).clamp(0.0, p.length);

        let mut reward = 0.0;
        if zone == Zone::Noisy {
            reward += p.shaping_scale * (next - x);
        }
        if x >= p.goal {
            reward += p.goal_reward;
        }

        self.position = next;
        self.steps += 1;
        EnvStep {
            next_state: vec![next],
            reward,
            terminal: false,
            truncated: self.steps >= p.horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_starts_at_origin() {
        let mut env = CorridorEnv::default();
        assert_eq!(env.reset(&mut Rng::new(0)), vec![0.0]);
    }

    #[test]
    fn goal_bonus_for_any_action() {
        let mut rng = Rng::new(0);
        for a in [-1.0, 0.0, 1.0] {
            let mut env = CorridorEnv::default();
            env.set_position(9.6);
            let s = env.step(&[a], &mut rng);
            assert!(s.reward >= 10.0);
        }
    }

    #[test]
    fn position_is_clamped() {
        let mut env = CorridorEnv::default();
        let mut rng = Rng::new(0);
        env.set_position(9.9);
        env.step(&[1.0], &mut rng);
        assert_eq!(env.position(), 10.0);
        env.set_position(0.0);
        for _ in 0..20 {
            env.step(&[-1.0], &mut rng);
            assert!(env.position() >= 0.0);
        }
    }

    #[test]
    fn deterministic_zone_is_deterministic() {
        let mut env = CorridorEnv::default();
        let mut rng = Rng::new(4);
        env.set_position(6.0);
        let s = env.step(&[0.5], &mut rng);
        assert_eq!(s.next_state, vec![6.5]);
        assert_eq!(s.reward, 0.0);
    }

    #[test]
    fn noisy_zone_has_much_larger_transition_variance() {
        // random policy from uniformly drawn start positions
        let mut rng = Rng::new(17);
        let mut env = CorridorEnv::default();
        let (mut noisy, mut det) = (Vec::new(), Vec::new());
        for _ in 0..10_000 {
            let x = rng.uniform_range(0.0, 10.0);
            let a = rng.uniform_range(-1.0, 1.0);
            env.set_position(x);
            let s = env.step(&[a], &mut rng);
            // deviation from the noiseless successor
            let dev = s.next_state[0] - (x + a).clamp(0.0, 10.0);
            match env.zone_of(x) {
                Zone::Noisy => noisy.push(dev),
                Zone::Deterministic => det.push(dev),
            }
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|d| (d - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!(var(&noisy) >= 10.0 * var(&det));
        assert!(var(&noisy) > 0.1);
    }

    #[test]
    fn truncates_never_terminates() {
        let mut env = CorridorEnv::default();
        let mut rng = Rng::new(0);
        env.reset(&mut rng);
        for i in 0..100 {
            let s = env.step(&[1.0], &mut rng);
            assert!(!s.terminal);
            assert_eq!(s.truncated, i == 99);
        }
    }
}
