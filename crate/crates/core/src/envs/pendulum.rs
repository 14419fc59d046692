use std::f64::consts::PI;

use super::{Env, EnvStep};
use crate::numerics::Rng;

/// Torque-limited inverted pendulum, swing-up task.
///
/// Observation `[cos θ, sin θ, θ̇]`; reward `-(wrap(θ)² + 0.1 θ̇² + 0.001 u²)`
/// on the pre-step state. Never terminal; truncated after `horizon` steps.
#[derive(Debug, Clone)]
pub struct PendulumEnv {
    pub max_speed: f64,
    pub max_torque: f64,
    pub dt: f64,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub horizon: usize,
    theta: f64,
    theta_dot: f64,
    steps: usize,
}

impl Default for PendulumEnv {
    fn default() -> Self {
        Self {
            max_speed: 8.0,
            max_torque: 2.0,
            dt: 0.05,
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            horizon: 200,
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
        }
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl PendulumEnv {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Env for PendulumEnv {
    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        self.max_torque
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.theta = rng.uniform_range(-PI, PI);
        self.theta_dot = rng.uniform_range(-1.0, 1.0);
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64], _rng: &mut Rng) -> EnvStep {
        let u = action[0].clamp(-self.max_torque, self.max_torque);
        let (th, thdot) = (self.theta, self.theta_dot);
        let cost = wrap_angle(th).powi(2) + 0.1 * thdot * thdot + 0.001 * u * u;

        // semi-implicit Euler: velocity first, then position with the new velocity
        let (g, m, l, dt) = (self.gravity, self.mass, self.length, self.dt);
        let accel = 3.0 * g / (2.0 * l) * th.sin() + 3.0 / (m * l * l) * u;
        let new_thdot = (thdot + accel * dt).clamp(-self.max_speed, self.max_speed);
        self.theta = th + new_thdot * dt;
        self.theta_dot = new_thdot;
        self.steps += 1;

        EnvStep {
            next_state: self.observe(),
            reward: -cost,
            terminal: false,
            truncated: self.steps >= self.horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_is_equilibrium() {
        let mut env = PendulumEnv::default();
        let mut rng = Rng::new(0);
        env.set_state(0.0, 0.0);
        let step = env.step(&[0.0], &mut rng);
        assert_eq!(step.reward, 0.0);
        assert_eq!(step.next_state, vec![1.0, 0.0, 0.0]);
        assert!(!step.terminal && !step.truncated);
    }

    #[test]
    fn single_step_matches_hand_derivation() {
        let mut env = PendulumEnv::default();
        let mut rng = Rng::new(0);
        let (th, thd, u) = (0.4_f64, -0.3_f64, 0.0_f64);
        env.set_state(th, thd);
        let step = env.step(&[u], &mut rng);
        // θ̈ = 3g/(2l) sin θ = 15 sin θ
        let new_thd = thd + 15.0 * th.sin() * 0.05;
        let new_th = th + new_thd * 0.05;
        assert!((env.state().1 - new_thd).abs() < 1e-15);
        assert!((env.state().0 - new_th).abs() < 1e-15);
        assert!((step.reward + (th * th + 0.1 * thd * thd)).abs() < 1e-15);
    }

    #[test]
    fn torque_and_speed_are_clipped() {
        let mut env = PendulumEnv::default();
        let mut rng = Rng::new(0);
        env.set_state(0.0, 7.9);
        let s = env.step(&[50.0], &mut rng);
        assert!(s.next_state[2] <= 8.0);
        // cost uses the clipped torque
        assert!((s.reward + (0.1 * 7.9 * 7.9 + 0.001 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn truncates_at_horizon() {
        let mut env = PendulumEnv::new(5);
        let mut rng = Rng::new(1);
        env.reset(&mut rng);
        for i in 0..5 {
            let s = env.step(&[0.0], &mut rng);
            assert_eq!(s.truncated, i == 4);
            assert!(!s.terminal);
        }
    }

    #[test]
    fn reset_is_seed_reproducible() {
        let mut a = PendulumEnv::default();
        let mut b = PendulumEnv::default();
        assert_eq!(a.reset(&mut Rng::new(3)), b.reset(&mut Rng::new(3)));
    }

    #[test]
    fn resets_differ_across_seeds() {
        let mut env = PendulumEnv::default();
        let thetas: Vec<f64> = (0..100)
            .map(|s| {
                env.reset(&mut Rng::new(s));
                env.state().0
            })
            .collect();
        let mut sorted = thetas.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-10.0, -PI, 0.0, PI, 7.0] {
            let w = wrap_angle(x);
            assert!((-PI..PI).contains(&w));
            assert!(
                ((x - w) / (2.0 * PI)).fract().abs() < 1e-12 || (1.0 - ((x - w) / (2.0 * PI)).fract().abs()) < 1e-12
            );
        }
    }
}
