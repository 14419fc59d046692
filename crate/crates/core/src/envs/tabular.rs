use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

const ROW_SUM_TOL: f64 = 1e-12;

/// Finite MDP with a per-state discount vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    // P[s][a][s'] flattened
    transitions: Vec<f64>,
    // r[s][a] flattened
    rewards: Vec<f64>,
    gammas: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gammas: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gammas,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let (s, a) = (self.n_states, self.n_actions);
        if s == 0 || a == 0 {
            return Err(Error::InvalidRange {
                name: "mdp size",
                reason: "need at least one state and one action".into(),
            });
        }
        for (len, want) in [
            (self.transitions.len(), s * a * s),
            (self.rewards.len(), s * a),
            (self.gammas.len(), s),
        ] {
            if len != want {
                return Err(Error::Shape {
                    expected: want,
                    got: len,
                });
            }
        }
        for row in self.transitions.chunks(s) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidRange {
                    name: "transition row",
                    reason: format!("not a probability distribution (sum {sum})"),
                });
            }
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidRange {
                name: "rewards",
                reason: "non-finite entry".into(),
            });
        }
        if self.gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
            return Err(Error::InvalidRange {
                name: "gammas",
                reason: "every discount must lie in [0, 1)".into(),
            });
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Transition distribution over next states for `(s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn gamma(&self, s: usize) -> f64 {
        self.gammas[s]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// `max_s gamma(s)`.
    pub fn beta(&self) -> f64 {
        self.gammas.iter().fold(0.0, |m, g| m.max(*g))
    }

    /// `max |r(s, a)|`.
    pub fn max_abs_reward(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Same dynamics and rewards under a different discount vector.
    pub fn with_gammas(&self, gammas: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            self.rewards.clone(),
            gammas,
        )
    }
}

/// Draw a random MDP.
///
/// Each transition row is Dirichlet(1) (normalized exponentials) with
/// `floor(sparsity * S)` entries (at most `S - 1`) zeroed and the rest
/// renormalized. Rewards are uniform in `reward_range`, discounts uniform in
/// `gamma_range`, which must lie inside `[0, 1)`.
pub fn random_mdp(
    n_states: usize,
    n_actions: usize,
    sparsity: f64,
    reward_range: (f64, f64),
    gamma_range: (f64, f64),
    rng: &mut Rng,
) -> Result<TabularMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidRange {
            name: "mdp size",
            reason: "need at least one state and one action".into(),
        });
    }
    let (g_lo, g_hi) = gamma_range;
    if !(0.0 <= g_lo && g_lo <= g_hi && g_hi < 1.0) {
        return Err(Error::InvalidRange {
            name: "gamma_range",
            reason: format!("[{g_lo}, {g_hi}] must satisfy 0 <= lo <= hi < 1"),
        });
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidRange {
            name: "sparsity",
            reason: format!("{sparsity} not in [0, 1)"),
        });
    }
    let (r_lo, r_hi) = reward_range;
    if !(r_lo <= r_hi) {
        return Err(Error::InvalidRange {
            name: "reward_range",
            reason: format!("[{r_lo}, {r_hi}] is empty"),
        });
    }

    let n_zero = ((sparsity * n_states as f64).floor() as usize).min(n_states - 1);
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    let mut order: Vec<usize> = (0..n_states).collect();
    for _ in 0..n_states * n_actions {
        let mut row: Vec<f64> = (0..n_states).map(|_| rng.exponential()).collect();
        if n_zero > 0 {
            rng.shuffle(&mut order);
            for &j in &order[..n_zero] {
                row[j] = 0.0;
            }
        }
        let mut total: f64 = row.iter().sum();
        if total <= 0.0 {
            // all surviving draws underflowed; fall back to a uniform row
            row.iter_mut().for_each(|p| *p = if *p == 0.0 { 0.0 } else { 1.0 });
            if row.iter().all(|p| *p == 0.0) {
                row[order[n_states - 1]] = 1.0;
            }
            total = row.iter().sum();
        }
        row.iter_mut().for_each(|p| *p /= total);
        transitions.extend(row);
    }
    let rewards = (0..n_states * n_actions)
        .map(|_| rng.uniform_range(r_lo, r_hi))
        .collect();
    let gammas = (0..n_states).map(|_| rng.uniform_range(g_lo, g_hi)).collect();
    TabularMdp::new(n_states, n_actions, transitions, rewards, gammas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_single_action_is_self_loop() {
        let mdp = random_mdp(1, 1, 0.0, (-1.0, 1.0), (0.0, 0.9), &mut Rng::new(0)).unwrap();
        assert_eq!(mdp.next_dist(0, 0), &[1.0]);
    }

    #[test]
    fn rows_are_distributions() {
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let s = 1 + rng.below(20);
            let a = 1 + rng.below(5);
            let mdp = random_mdp(s, a, 0.5, (-1.0, 1.0), (0.1, 0.95), &mut rng).unwrap();
            for si in 0..s {
                for ai in 0..a {
                    let row = mdp.next_dist(si, ai);
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    assert!(row.iter().all(|p| *p >= 0.0));
                }
            }
            assert!(mdp.beta() < 1.0);
        }
    }

    #[test]
    fn sparsity_zeroes_entries() {
        let mdp = random_mdp(10, 2, 0.5, (0.0, 1.0), (0.0, 0.5), &mut Rng::new(2)).unwrap();
        for s in 0..10 {
            for a in 0..2 {
                assert_eq!(mdp.next_dist(s, a).iter().filter(|p| **p == 0.0).count(), 5);
            }
        }
    }

    #[test]
    fn gamma_range_touching_one_rejected() {
        let err = random_mdp(3, 2, 0.0, (0.0, 1.0), (0.5, 1.0), &mut Rng::new(0));
        assert!(matches!(err, Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = random_mdp(6, 3, 0.3, (-2.0, 2.0), (0.2, 0.9), &mut Rng::new(8)).unwrap();
        let b = random_mdp(6, 3, 0.3, (-2.0, 2.0), (0.2, 0.9), &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
    }
}
