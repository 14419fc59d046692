use serde::{Deserialize, Serialize};

use super::operator::exact_soft_eval;
use super::policy::{QTable, SoftPolicy};
use crate::envs::TabularMdp;
use crate::error::{Error, Result};

/// Tolerance for the elementwise monotonicity check across iterations.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Boltzmann policy `π(a|s) ∝ exp(Q(s,a)/α)`, normalized in log space.
pub fn soft_policy_improve(q: &QTable, alpha: f64) -> Result<SoftPolicy> {
    let logits: Vec<f64> = q.values().iter().map(|v| v / alpha).collect();
    SoftPolicy::from_logits(q.n_states(), q.n_actions(), &logits, alpha)
}

#[derive(Debug, Clone)]
pub struct PolicyIteration {
    pub policy: SoftPolicy,
    pub q: QTable,
    pub iterations: usize,
    /// `||Q_{i} - Q_{i-1}||_∞` per iteration.
    pub gap_history: Vec<f64>,
    /// Most negative `min(Q_i - Q_{i-1})` seen; `>= -MONOTONE_TOL` when monotone.
    pub worst_decrease: f64,
}

impl PolicyIteration {
    pub fn is_monotone(&self) -> bool {
        self.worst_decrease >= -MONOTONE_TOL
    }
}

/// Alternate exact evaluation and Boltzmann improvement until the sup-norm
/// change in `Q` falls below `tol`.
pub fn soft_policy_iteration(
    mdp: &TabularMdp,
    init: &SoftPolicy,
    max_iters: usize,
    tol: f64,
) -> Result<PolicyIteration> {
    let alpha = init.alpha;
    let mut policy = init.clone();
    let mut q = exact_soft_eval(mdp, &policy)?;
    let mut gap_history = Vec::new();
    let mut worst_decrease = f64::INFINITY;
    for i in 1..=max_iters {
        policy = soft_policy_improve(&q, alpha)?;
        let next = exact_soft_eval(mdp, &policy)?;
        let gap = next.sup_dist(&q);
        worst_decrease = worst_decrease.min(next.min_diff(&q));
        gap_history.push(gap);
        q = next;
        if gap < tol {
            return Ok(PolicyIteration {
                policy,
                q,
                iterations: i,
                gap_history,
                worst_decrease,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_gap: gap_history.last().copied().unwrap_or(f64::NAN),
        gap_history,
    })
}

/// Both sides of the discount-mismatch bound for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    /// `||Q_{γ(·)} - Q_γ||_∞`, measured exactly.
    pub lhs: f64,
    /// `max_s |γ(s) - γ| (R + α ln(1/ε)) / ((1 - β)(1 - γ))`.
    pub rhs: f64,
    pub max_deviation: f64,
}

impl GapCertificate {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9
    }

    /// `lhs / rhs`, or `None` when the bound is zero.
    pub fn tightness(&self) -> Option<f64> {
        (self.rhs > 0.0).then(|| self.lhs / self.rhs)
    }
}

/// The bound's right-hand side from its ingredients.
pub fn error_gap_bound(max_deviation: f64, max_reward: f64, alpha: f64, min_prob: f64, beta: f64, gamma: f64) -> f64 {
    max_deviation * (max_reward + alpha * (1.0 / min_prob).ln()) / ((1.0 - beta) * (1.0 - gamma))
}

/// Compare exact soft values under the MDP's own `γ(·)` against a constant
/// discount `gamma`.
pub fn error_gap_certificate(mdp: &TabularMdp, gamma: f64, pi: &SoftPolicy) -> Result<GapCertificate> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidRange {
            name: "gamma",
            reason: format!("constant discount must lie in [0, 1), got {gamma}"),
        });
    }
    let q_state = exact_soft_eval(mdp, pi)?;
    let q_const = exact_soft_eval(&mdp.with_gammas(vec![gamma; mdp.n_states()])?, pi)?;
    let max_deviation = mdp.gammas().iter().fold(0.0_f64, |m, g| m.max((g - gamma).abs()));
    let rhs = error_gap_bound(
        max_deviation,
        mdp.max_abs_reward(),
        pi.alpha,
        pi.min_prob(),
        mdp.beta(),
        gamma,
    );
    Ok(GapCertificate {
        lhs: q_state.sup_dist(&q_const),
        rhs,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::random_mdp;
    use crate::numerics::Rng;

    #[test]
    fn constant_rows_give_uniform() {
        let q = QTable::new(2, 3, vec![1.0, 1.0, 1.0, -4.0, -4.0, -4.0]).unwrap();
        let pi = soft_policy_improve(&q, 0.3).unwrap();
        for s in 0..2 {
            for a in 0..3 {
                assert!((pi.prob(s, a) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn low_temperature_preserves_ranking() {
        let q = QTable::new(1, 4, vec![0.2, 1.0, -0.3, 0.9]).unwrap();
        let pi = soft_policy_improve(&q, 1e-3).unwrap();
        // compare in log space; the losers underflow as probabilities
        let l: Vec<f64> = (0..4).map(|a| pi.log_prob(0, a)).collect();
        assert!(l[1] > l[3] && l[3] > l[0] && l[0] > l[2]);
        assert!(pi.prob(0, 1) > 1.0 - 1e-12);
    }

    #[test]
    fn improvement_dominates() {
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let mdp = random_mdp(6, 3, 0.2, (-1.0, 1.0), (0.0, 0.95), &mut rng).unwrap();
            let pi = SoftPolicy::random(6, 3, 1e-4, 0.5, &mut rng).unwrap();
            let q_old = exact_soft_eval(&mdp, &pi).unwrap();
            let q_new = exact_soft_eval(&mdp, &soft_policy_improve(&q_old, 0.5).unwrap()).unwrap();
            assert!(q_new.min_diff(&q_old) >= -1e-9);
        }
    }

    #[test]
    fn single_state_converges_fast() {
        let mdp = TabularMdp::new(1, 3, vec![1.0; 3], vec![0.5, -0.2, 1.0], vec![0.0]).unwrap();
        let pi = SoftPolicy::uniform(1, 3, 0.7).unwrap();
        let out = soft_policy_iteration(&mdp, &pi, 10, 1e-12).unwrap();
        assert!(out.iterations <= 2);
    }

    #[test]
    fn spi_fixed_point_is_self_consistent() {
        let mut rng = Rng::new(21);
        let mdp = random_mdp(8, 4, 0.3, (-1.0, 1.0), (0.0, 0.95), &mut rng).unwrap();
        let pi = SoftPolicy::random(8, 4, 1e-4, 0.4, &mut rng).unwrap();
        let out = soft_policy_iteration(&mdp, &pi, 200, 1e-11).unwrap();
        assert!(out.is_monotone());
        let again = soft_policy_improve(&out.q, 0.4).unwrap();
        for (a, b) in again.log_probs().iter().zip(out.policy.log_probs()) {
            assert!((a.exp() - b.exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn non_convergence_reports_history() {
        let mut rng = Rng::new(2);
        let mdp = random_mdp(5, 3, 0.0, (-1.0, 1.0), (0.5, 0.95), &mut rng).unwrap();
        let pi = SoftPolicy::random(5, 3, 1e-4, 0.05, &mut rng).unwrap();
        match soft_policy_iteration(&mdp, &pi, 1, 0.0) {
            Err(Error::NoConvergence { gap_history, .. }) => assert_eq!(gap_history.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_deviation_gives_zero_gap() {
        let mut rng = Rng::new(4);
        let mdp = random_mdp(5, 2, 0.0, (-1.0, 1.0), (0.8, 0.8), &mut rng).unwrap();
        let pi = SoftPolicy::random(5, 2, 1e-4, 0.5, &mut rng).unwrap();
        let c = error_gap_certificate(&mdp, 0.8, &pi).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
    }

    #[test]
    fn bound_is_linear_in_deviation() {
        let a = error_gap_bound(0.01, 1.0, 0.5, 1e-3, 0.9, 0.8);
        let b = error_gap_bound(0.02, 1.0, 0.5, 1e-3, 0.9, 0.8);
        assert!((b - 2.0 * a).abs() <= 1e-15 * b);
    }

    #[test]
    fn bound_holds_on_random_instances() {
        let mut rng = Rng::new(6);
        for _ in 0..100 {
            let mdp = random_mdp(7, 3, 0.2, (-1.0, 1.0), (0.0, 0.95), &mut rng).unwrap();
            let pi = SoftPolicy::random(7, 3, 1e-4, rng.uniform_range(0.05, 1.0), &mut rng).unwrap();
            let g = rng.uniform_range(0.0, 0.95);
            let c = error_gap_certificate(&mdp, g, &pi).unwrap();
            assert!(c.holds(), "{c:?}");
        }
    }
}
