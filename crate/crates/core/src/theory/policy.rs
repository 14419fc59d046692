use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

const ROW_SUM_TOL: f64 = 1e-12;

/// Strictly positive tabular policy with temperature `α`.
///
/// Log-probabilities are the stored representation so Boltzmann policies
/// with very peaked rows keep exact logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPolicy {
    n_states: usize,
    n_actions: usize,
    log_probs: Vec<f64>,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidRange {
            name: "alpha",
            reason: format!("temperature must be positive, got {alpha}"),
        });
    }
    Ok(())
}

impl SoftPolicy {
    pub fn from_probs(n_states: usize, n_actions: usize, probs: &[f64], alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if probs.len() != n_states * n_actions {
            return Err(Error::Shape {
                expected: n_states * n_actions,
                got: probs.len(),
            });
        }
        for row in probs.chunks(n_actions) {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|p| !(*p > 0.0)) {
                return Err(Error::InvalidRange {
                    name: "policy row",
                    reason: format!("entries must be positive and sum to 1 (sum {sum})"),
                });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            log_probs: probs.iter().map(|p| p.ln()).collect(),
            alpha,
        })
    }

    /// Row-wise softmax of `logits` computed in log space.
    pub fn from_logits(n_states: usize, n_actions: usize, logits: &[f64], alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if logits.len() != n_states * n_actions {
            return Err(Error::Shape {
                expected: n_states * n_actions,
                got: logits.len(),
            });
        }
        let mut log_probs = Vec::with_capacity(logits.len());
        for row in logits.chunks(n_actions) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            log_probs.extend(row.iter().map(|x| x - lse));
        }
        Ok(Self {
            n_states,
            n_actions,
            log_probs,
            alpha,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize, alpha: f64) -> Result<Self> {
        Self::from_logits(n_states, n_actions, &vec![0.0; n_states * n_actions], alpha)
    }

    /// Dirichlet(1) rows mixed with the uniform policy so that every
    /// probability is at least `floor`.
    pub fn random(n_states: usize, n_actions: usize, floor: f64, alpha: f64, rng: &mut Rng) -> Result<Self> {
        if !(floor > 0.0 && floor * n_actions as f64 <= 1.0) {
            return Err(Error::InvalidRange {
                name: "policy floor",
                reason: format!("need 0 < floor <= 1/A, got {floor}"),
            });
        }
        let mut probs = Vec::with_capacity(n_states * n_actions);
        let free = 1.0 - floor * n_actions as f64;
        for _ in 0..n_states {
            let draws: Vec<f64> = (0..n_actions).map(|_| rng.exponential()).collect();
            let total: f64 = draws.iter().sum();
            probs.extend(draws.iter().map(|d| floor + free * d / total));
        }
        // renormalize away rounding so rows pass the 1e-12 check
        for row in probs.chunks_mut(n_actions) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
        }
        Self::from_probs(n_states, n_actions, &probs, alpha)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.log_probs[s * self.n_actions + a]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.log_prob(s, a).exp()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// `ε = min_{s,a} π(a|s)`.
    pub fn min_prob(&self) -> f64 {
        self.log_probs.iter().fold(f64::INFINITY, |m, l| m.min(l.exp()))
    }

    /// `-Σ_a π(a|s) log π(a|s)`.
    pub fn entropy(&self, s: usize) -> f64 {
        (0..self.n_actions)
            .map(|a| {
                let l = self.log_prob(s, a);
                -l.exp() * l
            })
            .sum()
    }
}

/// Action values with their soft state values under a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Shape {
                expected: n_states * n_actions,
                got: values.len(),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `V(s) = Σ_a π(a|s) (Q(s,a) - α log π(a|s))`.
    pub fn soft_values(&self, pi: &SoftPolicy) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        let l = pi.log_prob(s, a);
                        l.exp() * (self.get(s, a) - pi.alpha * l)
                    })
                    .sum()
            })
            .collect()
    }

    pub fn sup_dist(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `min_{s,a} (self - other)`, negative when `self` fails to dominate.
    pub fn min_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(f64::INFINITY, |m, (a, b)| m.min(a - b))
    }
}
