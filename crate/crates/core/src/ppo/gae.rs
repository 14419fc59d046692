//! Advantage and value-target estimators under per-step discounts.

use crate::error::{Error, Result};
use crate::numerics::{mean, std_pop, Matrix};

/// One on-policy rollout. `gammas` are computed once after collection and
/// stay fixed for every epoch trained on this rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Observation after the step. At a truncation this is the final
    /// observation of the episode, not the reset state.
    pub next_states: Vec<Vec<f64>>,
    /// True terminations: no bootstrap past these steps.
    pub terminal: Vec<bool>,
    /// Terminal or truncated: the advantage recursion restarts here.
    pub episode_end: Vec<bool>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(
        &mut self,
        state: Vec<f64>,
        action: Vec<f64>,
        log_prob: f64,
        reward: f64,
        next_state: Vec<f64>,
        terminal: bool,
        truncated: bool,
    ) {
        self.states.push(state);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.next_states.push(next_state);
        self.terminal.push(terminal);
        self.episode_end.push(terminal || truncated);
    }

    pub fn state_matrix(&self) -> Result<Matrix> {
        let dim = self.states.first().map_or(0, Vec::len);
        Matrix::from_vec(self.len(), dim, self.states.concat())
    }

    pub fn next_state_matrix(&self) -> Result<Matrix> {
        let dim = self.next_states.first().map_or(0, Vec::len);
        Matrix::from_vec(self.len(), dim, self.next_states.concat())
    }

    /// Checks that every per-step array has the rollout's length.
    pub fn check(&self) -> Result<()> {
        let t = self.len();
        for got in [
            self.states.len(),
            self.actions.len(),
            self.log_probs.len(),
            self.next_states.len(),
            self.terminal.len(),
            self.episode_end.len(),
            self.values.len(),
            self.next_values.len(),
            self.gammas.len(),
        ] {
            if got != t {
                return Err(Error::Shape { expected: t, got });
            }
        }
        Ok(())
    }
}

/// `δ_t = r_t + γ_t V(s_{t+1}) - V(s_t)`, with `V(s_{t+1}) = 0` after a
/// termination.
pub fn td_residuals(rollout: &Rollout) -> Result<Vec<f64>> {
    rollout.check()?;
    Ok((0..rollout.len())
        .map(|t| {
            let next = if rollout.terminal[t] {
                0.0
            } else {
                rollout.next_values[t]
            };
            rollout.rewards[t] + rollout.gammas[t] * next - rollout.values[t]
        })
        .collect())
}

/// Backward recursion `Â_t = δ_t + γ_t λ Â_{t+1}`, restarted after every
/// episode end.
pub fn gae_adaptive(deltas: &[f64], gammas: &[f64], episode_end: &[bool], lambda: f64) -> Result<Vec<f64>> {
    for got in [gammas.len(), episode_end.len()] {
        if got != deltas.len() {
            return Err(Error::Shape {
                expected: deltas.len(),
                got,
            });
        }
    }
    let mut adv = vec![0.0; deltas.len()];
    let mut next = 0.0;
    for t in (0..deltas.len()).rev() {
        if episode_end[t] {
            next = 0.0;
        }
        next = deltas[t] + gammas[t] * lambda * next;
        adv[t] = next;
    }
    Ok(adv)
}

/// Summands `(Π_{k<l} γ_{t+k}) λ^l δ_{t+l}` for `l = 0..T-t` of one episode
/// segment.
pub fn gae_expansion_terms(deltas: &[f64], gammas: &[f64], lambda: f64, t: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(deltas.len().saturating_sub(t));
    let mut weight = 1.0;
    for l in 0..deltas.len().saturating_sub(t) {
        out.push(weight * deltas[t + l]);
        weight *= gammas[t + l] * lambda;
    }
    out
}

/// Direct product-of-discounts form of the advantage at `t`.
pub fn gae_expansion(deltas: &[f64], gammas: &[f64], lambda: f64, t: usize) -> f64 {
    gae_expansion_terms(deltas, gammas, lambda, t).iter().sum()
}

/// `Σ_k (Π_{j<k} γ_{t+j}) r_{t+k} + (Π_{j<n} γ_{t+j}) V(s_{t+n})`. The window
/// is cut at episode ends and at the rollout boundary; a termination drops
/// the bootstrap.
pub fn nstep_value_target(rollout: &Rollout, t: usize, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidHorizon(n));
    }
    rollout.check()?;
    if t >= rollout.len() {
        return Err(Error::Shape {
            expected: rollout.len(),
            got: t,
        });
    }
    let mut target = 0.0;
    let mut disc = 1.0;
    for k in 0..n {
        let i = t + k;
        target += disc * rollout.rewards[i];
        disc *= rollout.gammas[i];
        if rollout.terminal[i] {
            return Ok(target);
        }
        if k + 1 == n || rollout.episode_end[i] || i + 1 == rollout.len() {
            return Ok(target + disc * rollout.next_values[i]);
        }
    }
    unreachable!("loop returns at k = n - 1")
}

/// Batch standardization with population std. When the spread is below
/// `1e-8` the result is all zeros.
pub fn normalize_advantages(adv: &[f64]) -> Result<Vec<f64>> {
    if adv.len() < 2 {
        return Err(Error::InvalidRange {
            name: "advantages",
            reason: format!("need at least 2 entries, got {}", adv.len()),
        });
    }
    let m = mean(adv);
    let s = std_pop(adv);
    if !(s > 1e-8) {
        log::debug!("advantage spread {s:e} below floor; returning zeros");
        return Ok(vec![0.0; adv.len()]);
    }
    Ok(adv.iter().map(|a| (a - m) / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn random_rollout(t: usize, rng: &mut Rng) -> Rollout {
        let mut r = Rollout::default();
        for i in 0..t {
            let terminal = rng.uniform() < 0.05;
            let truncated = !terminal && rng.uniform() < 0.05;
            r.push(
                vec![i as f64],
                vec![0.0],
                0.0,
                rng.normal(),
                vec![i as f64 + 1.0],
                terminal,
                truncated,
            );
            r.values.push(rng.normal());
            r.next_values.push(rng.normal());
            r.gammas.push(rng.uniform_range(0.0, 0.999));
        }
        r
    }

    #[test]
    fn zero_values_give_rewards() {
        let mut rng = Rng::new(1);
        let mut r = random_rollout(50, &mut rng);
        r.values.iter_mut().for_each(|v| *v = 0.0);
        r.next_values.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(td_residuals(&r).unwrap(), r.rewards);
    }

    #[test]
    fn residuals_match_recomputation() {
        let mut rng = Rng::new(2);
        let r = random_rollout(300, &mut rng);
        let d = td_residuals(&r).unwrap();
        for t in 0..r.len() {
            let expect = if r.terminal[t] {
                r.rewards[t] - r.values[t]
            } else {
                r.rewards[t] + r.gammas[t] * r.next_values[t] - r.values[t]
            };
            assert_eq!(d[t], expect);
        }
    }

    #[test]
    fn lambda_zero_gives_residuals() {
        let mut rng = Rng::new(3);
        let r = random_rollout(100, &mut rng);
        let d = td_residuals(&r).unwrap();
        assert_eq!(gae_adaptive(&d, &r.gammas, &r.episode_end, 0.0).unwrap(), d);
    }

    #[test]
    fn constant_gamma_is_standard_gae() {
        let mut rng = Rng::new(4);
        let d: Vec<f64> = (0..60).map(|_| rng.normal()).collect();
        let (g, lam) = (0.97, 0.9);
        let adv = gae_adaptive(&d, &vec![g; 60], &vec![false; 60], lam).unwrap();
        for t in 0..60 {
            let direct: f64 = (t..60).map(|k| (g * lam).powi((k - t) as i32) * d[k]).sum();
            assert!((adv[t] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn recursion_matches_expansion_on_random_segments() {
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let len = 1 + rng.below(40);
            let d: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
            let g: Vec<f64> = (0..len).map(|_| rng.uniform()).collect();
            let lam = rng.uniform();
            let adv = gae_adaptive(&d, &g, &vec![false; len], lam).unwrap();
            for t in 0..len {
                let e = gae_expansion(&d, &g, lam, t);
                let scale = d[t..].iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
                assert!((adv[t] - e).abs() <= 1e-12 * scale, "t={t}: {} vs {e}", adv[t]);
            }
        }
    }

    #[test]
    fn recursion_restarts_at_episode_ends() {
        let mut rng = Rng::new(6);
        let r = random_rollout(400, &mut rng);
        let d = td_residuals(&r).unwrap();
        let adv = gae_adaptive(&d, &r.gammas, &r.episode_end, 0.95).unwrap();
        let mut start = 0;
        for t in 0..r.len() {
            if r.episode_end[t] || t + 1 == r.len() {
                let seg = gae_adaptive(&d[start..=t], &r.gammas[start..=t], &vec![false; t + 1 - start], 0.95).unwrap();
                for (i, a) in seg.iter().enumerate() {
                    assert_eq!(adv[start + i], *a);
                }
                start = t + 1;
            }
        }
    }

    #[test]
    fn last_index_is_its_residual() {
        let d = [0.3, -1.2, 2.5];
        assert_eq!(gae_expansion(&d, &[0.9, 0.9, 0.9], 0.95, 2), 2.5);
    }

    #[test]
    fn one_low_gamma_scales_later_terms() {
        let mut rng = Rng::new(7);
        let d: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let lam = 0.95;
        let high = vec![0.999; 20];
        let mut cut = high.clone();
        cut[5] = 0.9;
        let a = gae_expansion_terms(&d, &high, lam, 0);
        let b = gae_expansion_terms(&d, &cut, lam, 0);
        for l in 0..20 {
            if l <= 5 {
                assert_eq!(a[l], b[l]);
            } else {
                assert!((b[l] - a[l] * 0.9 / 0.999).abs() <= 1e-12 * a[l].abs().max(1e-300));
            }
        }
    }

    proptest! {
        #[test]
        fn lowering_one_gamma_shrinks_later_contributions(
            d in prop::collection::vec(-5.0f64..5.0, 2..30),
            seed in any::<u64>(),
            lam in 0.0f64..1.0,
            frac in 0.0f64..1.0,
        ) {
            let mut rng = Rng::new(seed);
            let g: Vec<f64> = (0..d.len()).map(|_| rng.uniform()).collect();
            let j = rng.below(d.len());
            let mut lower = g.clone();
            lower[j] *= frac;
            let before = gae_expansion_terms(&d, &g, lam, 0);
            let after = gae_expansion_terms(&d, &lower, lam, 0);
            for l in 0..d.len() {
                if l > j {
                    prop_assert!(after[l].abs() <= before[l].abs());
                } else {
                    prop_assert_eq!(after[l], before[l]);
                }
            }
        }

        #[test]
        fn normalized_is_standard_or_zero(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let z = normalize_advantages(&xs).unwrap();
            if z.iter().all(|v| *v == 0.0) {
                prop_assert!(std_pop(&xs) <= 1e-8 || xs.len() < 2);
            } else {
                prop_assert!(mean(&z).abs() < 1e-12);
                prop_assert!((std_pop(&z) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_advantages(&[1.0, -1.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(normalize_advantages(&[3.5; 7]).unwrap(), vec![0.0; 7]);
        assert!(normalize_advantages(&[1.0]).is_err());
        let mut rng = Rng::new(8);
        let xs: Vec<f64> = (0..1000).map(|_| 3.0 + 10.0 * rng.normal()).collect();
        let z = normalize_advantages(&xs).unwrap();
        assert!(mean(&z).abs() < 1e-12);
        assert!((std_pop(&z) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_step_target() {
        let mut rng = Rng::new(9);
        let mut r = random_rollout(50, &mut rng);
        r.terminal.iter_mut().for_each(|x| *x = false);
        r.episode_end.iter_mut().for_each(|x| *x = false);
        for t in 0..50 {
            let y = nstep_value_target(&r, t, 1).unwrap();
            assert_eq!(y, r.rewards[t] + r.gammas[t] * r.next_values[t]);
        }
        assert!(matches!(nstep_value_target(&r, 0, 0), Err(Error::InvalidHorizon(0))));
    }

    #[test]
    fn equal_gammas_give_standard_nstep() {
        let mut rng = Rng::new(10);
        let mut r = random_rollout(50, &mut rng);
        r.terminal.iter_mut().for_each(|x| *x = false);
        r.episode_end.iter_mut().for_each(|x| *x = false);
        r.gammas.iter_mut().for_each(|g| *g = 0.97);
        let n = 6;
        for t in 0..40 {
            let direct: f64 = (0..n).map(|k| 0.97f64.powi(k as i32) * r.rewards[t + k]).sum::<f64>()
                + 0.97f64.powi(n as i32) * r.next_values[t + n - 1];
            assert!((nstep_value_target(&r, t, n).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn nstep_target_matches_straight_line_oracle() {
        let mut rng = Rng::new(11);
        let r = random_rollout(500, &mut rng);
        for t in 0..r.len() {
            for n in [1, 3, 10] {
                // oracle: gather the window first, then apply the formula
                let mut end = t;
                while end + 1 - t < n && !r.episode_end[end] && end + 1 < r.len() {
                    end += 1;
                }
                let mut y = 0.0;
                for k in 0..=end - t {
                    let p: f64 = r.gammas[t..t + k].iter().product();
                    y += p * r.rewards[t + k];
                }
                if !r.terminal[end] {
                    let p: f64 = r.gammas[t..=end].iter().product();
                    y += p * r.next_values[end];
                }
                let got = nstep_value_target(&r, t, n).unwrap();
                assert!((got - y).abs() < 1e-12, "t={t} n={n}");
            }
        }
    }
}
