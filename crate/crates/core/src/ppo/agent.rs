use serde::{Deserialize, Serialize};

use super::gae::{gae_adaptive, normalize_advantages, nstep_value_target, td_residuals, Rollout};
use crate::error::{Error, Result};
use crate::gamma::{
    cross_validated_loss, cv_split, full_gamma_loss, naive_td_gamma_loss, Discount, GammaLoss, GammaLossTerms,
    GammaSettings, GammaVariant, NStepWindow, ReferenceDiscount, TdSample,
};
use crate::numerics::{clip_grad_norm, AdamState, Matrix, Mlp, Rng};
use crate::sac::critic_loss_and_grad;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Where the value network's regression targets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueTarget {
    /// `Â_t + V(s_t)` with the unnormalized advantage.
    Gae,
    /// Product-of-discounts n-step return.
    NStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub hidden: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub clip_eps: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub rollout_len: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub action_std_init: f64,
    pub action_std_floor: f64,
    pub action_std_decay: f64,
    /// Environment steps between two std decrements.
    pub action_std_period: u64,
    pub value_target: ValueTarget,
    /// Horizon of [`ValueTarget::NStep`] targets.
    pub value_nstep: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            clip_eps: 0.2,
            gae_lambda: 0.95,
            epochs: 10,
            rollout_len: 4096,
            minibatch: 128,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            action_std_init: 0.5,
            action_std_floor: 0.1,
            action_std_decay: 0.05,
            action_std_period: 200_000,
            value_target: ValueTarget::Gae,
            value_nstep: 10,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("minibatch", self.minibatch),
            ("value_nstep", self.value_nstep),
        ] {
            if v == 0 {
                return Err(Error::config(format!("ppo.{key}"), "must be >= 1"));
            }
        }
        if self.rollout_len < 2 {
            return Err(Error::config("ppo.rollout_len", "must be >= 2"));
        }
        if self.action_std_period == 0 {
            return Err(Error::config("ppo.action_std_period", "must be >= 1"));
        }
        for (key, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("clip_eps", self.clip_eps),
            ("max_grad_norm", self.max_grad_norm),
            ("action_std_floor", self.action_std_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("ppo.{key}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.action_std_init >= self.action_std_floor) {
            return Err(Error::config("ppo.action_std_init", "must be >= action_std_floor"));
        }
        if !(self.action_std_decay >= 0.0) {
            return Err(Error::config("ppo.action_std_decay", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config(
                "ppo.gae_lambda",
                format!("must lie in [0, 1], got {}", self.gae_lambda),
            ));
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::config("ppo.entropy_coef", "must be >= 0"));
        }
        Ok(())
    }

    /// Scheduled action std after `steps` environment steps.
    pub fn action_std_at(&self, steps: u64) -> f64 {
        let drops = (steps / self.action_std_period) as f64;
        (self.action_std_init - self.action_std_decay * drops).max(self.action_std_floor)
    }
}

/// Per-rollout estimates consumed by the PPO epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub deltas: Vec<f64>,
    /// Unnormalized advantages.
    pub raw_advantages: Vec<f64>,
    /// Advantages fed to the surrogate.
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

/// Diagnostics of one PPO update, averaged over the applied minibatches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub skipped: usize,
}

/// Surrogate objective pieces for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoAgent {
    pub cfg: PpoConfig,
    pub gamma_settings: GammaSettings,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Mean network of the Gaussian policy.
    pub policy: Mlp,
    pub value: Mlp,
    /// Second value network; only the disagreement rule reads it.
    pub aux_value: Option<Mlp>,
    pub action_std: f64,
    pub discount: Discount,
    pub reference: ReferenceDiscount,
    policy_opt: AdamState,
    value_opt: AdamState,
    aux_opt: Option<AdamState>,
}

fn stack_rows(rows: &[Vec<f64>], idx: &[usize], dim: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        data.extend_from_slice(&rows[i]);
    }
    Matrix::from_vec(idx.len(), dim, data)
}

/// Log density of `a` under `N(μ, σ² I)`.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], std: f64) -> f64 {
    let ln_s = std.ln();
    action
        .iter()
        .zip(mean)
        .map(|(a, m)| {
            let z = (a - m) / std;
            -0.5 * z * z - ln_s - HALF_LN_2PI
        })
        .sum()
}

/// Differential entropy of `N(μ, σ² I)` in `dim` dimensions.
pub fn gaussian_entropy(dim: usize, std: f64) -> f64 {
    dim as f64 * (0.5 + HALF_LN_2PI + std.ln())
}

impl PpoAgent {
    /// Policy and value weights come from `rng`; the discount network and
    /// the auxiliary value network from `gamma_rng`.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        cfg: PpoConfig,
        gamma_settings: GammaSettings,
        rng: &mut Rng,
        gamma_rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        gamma_settings.validate()?;
        let mut policy = Mlp::new(&[obs_dim, cfg.hidden, cfg.hidden, act_dim], rng);
        // start from a near-zero mean so early actions are exploratory
        let last = policy.num_layers() - 1;
        policy.weights_mut(last).iter_mut().for_each(|w| *w *= 0.01);
        let value = Mlp::new(&[obs_dim, cfg.hidden, cfg.hidden, 1], rng);
        let discount = Discount::build(&gamma_settings, obs_dim, gamma_rng)?;
        let aux_value = match gamma_settings.variant {
            GammaVariant::Uncertainty => Some(Mlp::new(&[obs_dim, cfg.hidden, cfg.hidden, 1], gamma_rng)),
            _ => None,
        };
        let reference = ReferenceDiscount::new(
            gamma_settings.ref_init,
            gamma_settings.ref_tau,
            gamma_settings.ref_period,
            gamma_settings.ref_adaptive,
            gamma_settings.gamma_min,
            gamma_settings.gamma_max,
        )?;
        Ok(Self {
            policy_opt: AdamState::new(policy.param_count(), cfg.actor_lr),
            value_opt: AdamState::new(value.param_count(), cfg.critic_lr),
            aux_opt: aux_value
                .as_ref()
                .map(|m| AdamState::new(m.param_count(), cfg.critic_lr)),
            action_std: cfg.action_std_init,
            policy,
            value,
            aux_value,
            discount,
            reference,
            obs_dim,
            act_dim,
            cfg,
            gamma_settings,
        })
    }

    /// Sampled action (before clipping to the action box) and its log density.
    pub fn act(&self, state: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let mean = self.policy.forward(state)?;
        let a: Vec<f64> = mean.iter().map(|m| m + self.action_std * rng.normal()).collect();
        let lp = gaussian_log_prob(&a, &mean, self.action_std);
        Ok((a, lp))
    }

    /// Policy mean clipped to the unit box.
    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.policy.forward(state)?.iter().map(|m| m.clamp(-1.0, 1.0)).collect())
    }

    pub fn values(&self, states: &Matrix) -> Result<Vec<f64>> {
        Ok(self.value.forward_batch(states)?.into_vec())
    }

    fn disagreement(&self, states: &Matrix) -> Result<Vec<f64>> {
        let aux = self
            .aux_value
            .as_ref()
            .expect("disagreement rule has an auxiliary value net");
        let v1 = self.values(states)?;
        let v2 = aux.forward_batch(states)?.into_vec();
        Ok(v1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).collect())
    }

    /// Discounts at arbitrary states under the current parameters.
    pub fn state_gammas(&self, states: &Matrix) -> Result<Vec<f64>> {
        if let Some(g) = self.discount.state_gammas(states)? {
            return Ok(g);
        }
        let Discount::Uncertainty(u) = &self.discount else {
            unreachable!("only the disagreement rule lacks state discounts")
        };
        Ok(self.disagreement(states)?.into_iter().map(|d| u.gamma(d)).collect())
    }

    /// Fill values, bootstrap values and the frozen discounts of a freshly
    /// collected rollout.
    pub fn annotate(&self, rollout: &mut Rollout) -> Result<()> {
        let states = rollout.state_matrix()?;
        rollout.values = self.values(&states)?;
        rollout.next_values = self.values(&rollout.next_state_matrix()?)?;
        rollout.gammas = self.state_gammas(&states)?;
        rollout.check()
    }

    /// Residuals, advantages and value targets for an annotated rollout.
    pub fn estimate(&self, rollout: &Rollout) -> Result<Estimates> {
        let deltas = td_residuals(rollout)?;
        let raw = gae_adaptive(&deltas, &rollout.gammas, &rollout.episode_end, self.cfg.gae_lambda)?;
        let value_targets = match self.cfg.value_target {
            ValueTarget::Gae => raw.iter().zip(&rollout.values).map(|(a, v)| a + v).collect(),
            ValueTarget::NStep => (0..rollout.len())
                .map(|t| nstep_value_target(rollout, t, self.cfg.value_nstep))
                .collect::<Result<_>>()?,
        };
        let advantages = if self.cfg.normalize_advantages {
            normalize_advantages(&raw)?
        } else {
            raw.clone()
        };
        Ok(Estimates {
            deltas,
            raw_advantages: raw,
            advantages,
            value_targets,
        })
    }

    /// Clipped surrogate `-mean(min(ρÂ, clip(ρ, 1±ε)Â)) - c_H H` and its
    /// gradient with respect to the policy mean network.
    pub fn surrogate_loss_and_grad(
        &self,
        states: &Matrix,
        actions: &Matrix,
        old_log_probs: &[f64],
        advantages: &[f64],
    ) -> Result<SurrogateLoss> {
        let n = states.rows();
        let b = n as f64;
        let std = self.action_std;
        let eps = self.cfg.clip_eps;
        let (mean, cache) = self.policy.forward_batch_cached(states)?;
        let entropy = gaussian_entropy(self.act_dim, std);
        let mut loss = -self.cfg.entropy_coef * entropy;
        let mut clipped = 0usize;
        let mut up = Matrix::zeros(n, self.act_dim);
        for r in 0..n {
            let lp = gaussian_log_prob(actions.row(r), mean.row(r), std);
            let ratio = (lp - old_log_probs[r]).exp();
            let adv = advantages[r];
            let plain = ratio * adv;
            let clip = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
            if plain <= clip {
                loss -= plain / b;
                let d_lp = -plain / b;
                for j in 0..self.act_dim {
                    up[(r, j)] = d_lp * (actions[(r, j)] - mean[(r, j)]) / (std * std);
                }
            } else {
                loss -= clip / b;
            }
            if (ratio - 1.0).abs() > eps {
                clipped += 1;
            }
        }
        let grad = self.policy.backward(&cache, &up)?.params;
        Ok(SurrogateLoss {
            loss,
            grad,
            entropy,
            clip_fraction: clipped as f64 / b,
        })
    }

    /// `epochs` passes of shuffled minibatch updates on one rollout. The
    /// rollout is borrowed immutably, so its discounts cannot change.
    pub fn ppo_update(&mut self, rollout: &Rollout, est: &Estimates, rng: &mut Rng) -> Result<PpoStats> {
        rollout.check()?;
        let t = rollout.len();
        let mut idx: Vec<usize> = (0..t).collect();
        let mut stats = PpoStats::default();
        let mut applied = 0usize;
        for _ in 0..self.cfg.epochs {
            rng.shuffle(&mut idx);
            for chunk in idx.chunks(self.cfg.minibatch) {
                let states = stack_rows(&rollout.states, chunk, self.obs_dim)?;
                let actions = stack_rows(&rollout.actions, chunk, self.act_dim)?;
                let old: Vec<f64> = chunk.iter().map(|&i| rollout.log_probs[i]).collect();
                let adv: Vec<f64> = chunk.iter().map(|&i| est.advantages[i]).collect();
                let targets: Vec<f64> = chunk.iter().map(|&i| est.value_targets[i]).collect();

                let sur = self.surrogate_loss_and_grad(&states, &actions, &old, &adv)?;
                let (vloss, mut vgrad, _) = critic_loss_and_grad(&self.value, &states, &targets)?;
                if !sur.loss.is_finite() || !vloss.is_finite() {
                    log::warn!("non-finite PPO loss; minibatch skipped");
                    stats.skipped += 1;
                    continue;
                }
                let mut pgrad = sur.grad;
                clip_grad_norm(&mut pgrad, self.cfg.max_grad_norm);
                clip_grad_norm(&mut vgrad, self.cfg.max_grad_norm);
                let stepped = self
                    .policy_opt
                    .step(self.policy.params_mut(), &pgrad)
                    .and_then(|_| self.value_opt.step(self.value.params_mut(), &vgrad));
                match stepped {
                    Ok(()) => {}
                    Err(Error::NonFiniteGradient) => {
                        log::warn!("non-finite PPO gradient; minibatch skipped");
                        stats.skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
                if let (Some(aux), Some(opt)) = (self.aux_value.as_mut(), self.aux_opt.as_mut()) {
                    let (_, mut g, _) = critic_loss_and_grad(aux, &states, &targets)?;
                    clip_grad_norm(&mut g, self.cfg.max_grad_norm);
                    if let Err(e) = opt.step(aux.params_mut(), &g) {
                        log::warn!("auxiliary value step skipped: {e}");
                    }
                }
                stats.policy_loss += sur.loss;
                stats.value_loss += vloss;
                stats.entropy += sur.entropy;
                stats.clip_fraction += sur.clip_fraction;
                applied += 1;
            }
        }
        if applied > 0 {
            let k = applied as f64;
            stats.policy_loss /= k;
            stats.value_loss /= k;
            stats.entropy /= k;
            stats.clip_fraction /= k;
        }
        Ok(stats)
    }

    /// Return-consistency windows starting at every rollout step, cut at
    /// episode ends and at the rollout boundary.
    pub fn rollout_windows(rollout: &Rollout, n: usize) -> Result<Vec<NStepWindow>> {
        if n < 1 {
            return Err(Error::InvalidHorizon(n));
        }
        let len = rollout.len();
        Ok((0..len)
            .map(|t| {
                let mut end = t;
                while end + 1 - t < n && !rollout.episode_end[end] && end + 1 < len {
                    end += 1;
                }
                NStepWindow {
                    state: rollout.states[t].clone(),
                    rewards: rollout.rewards[t..=end].to_vec(),
                    next_state: rollout.next_states[t].clone(),
                    last_state: rollout.next_states[end].clone(),
                    terminal: rollout.terminal[end],
                }
            })
            .collect())
    }

    fn td_samples(&self, rollout: &Rollout, idx: &[usize], value: &Mlp) -> Result<Vec<TdSample>> {
        let states = stack_rows(&rollout.states, idx, self.obs_dim)?;
        let next = stack_rows(&rollout.next_states, idx, self.obs_dim)?;
        let v = value.forward_batch(&states)?.into_vec();
        let vn = value.forward_batch(&next)?.into_vec();
        Ok(idx
            .iter()
            .enumerate()
            .map(|(k, &i)| TdSample {
                state: rollout.states[i].clone(),
                reward: rollout.rewards[i],
                next_value: vn[k],
                current_value: v[k],
                terminal: rollout.terminal[i],
            })
            .collect())
    }

    /// Discount-side training after the PPO epochs. Every random draw comes
    /// from `gamma_rng`. Returns the last loss terms, if any step ran.
    pub fn gamma_update(
        &mut self,
        rollout: &Rollout,
        est: &Estimates,
        gamma_rng: &mut Rng,
    ) -> Result<Option<GammaLossTerms>> {
        let settings = self.gamma_settings.clone();
        match settings.variant {
            GammaVariant::Fixed => return Ok(None),
            GammaVariant::Uncertainty => {
                self.uncertainty_step(rollout)?;
                return Ok(None);
            }
            _ => {}
        }
        let windows = match settings.variant {
            GammaVariant::AdagammaRc => Self::rollout_windows(rollout, settings.rc_horizon)?,
            _ => Vec::new(),
        };
        let mut idx: Vec<usize> = (0..rollout.len()).collect();
        let mut last = None;
        for _ in 0..settings.epochs {
            gamma_rng.shuffle(&mut idx);
            for chunk in idx.chunks(settings.batch_size) {
                let Discount::Learned(learned) = &self.discount else {
                    return Ok(None);
                };
                let loss: GammaLoss = match settings.variant {
                    GammaVariant::AdagammaRc => {
                        let batch: Vec<NStepWindow> = chunk.iter().map(|&i| windows[i].clone()).collect();
                        let value = &self.value;
                        let mut value_fn = |m: &Matrix| {
                            value
                                .forward_batch(m)
                                .expect("value states match the observation width")
                                .into_vec()
                        };
                        full_gamma_loss(
                            &learned.net,
                            &batch,
                            &mut value_fn,
                            self.reference.gamma(),
                            settings.rc_horizon,
                            &settings.weights,
                        )?
                    }
                    GammaVariant::NaiveTd => {
                        naive_td_gamma_loss(&learned.net, &self.td_samples(rollout, chunk, &self.value)?)?
                    }
                    GammaVariant::CrossValidated => {
                        if chunk.len() < 2 {
                            continue;
                        }
                        let (ia, ib) = cv_split(chunk.len(), gamma_rng)?;
                        let a: Vec<usize> = ia.iter().map(|&k| chunk[k]).collect();
                        let b: Vec<usize> = ib.iter().map(|&k| chunk[k]).collect();
                        // one value step on half A, on copies
                        let mut probe = self.value.clone();
                        let mut opt = self.value_opt.clone();
                        let states_a = stack_rows(&rollout.states, &a, self.obs_dim)?;
                        let targets_a: Vec<f64> = a.iter().map(|&i| est.value_targets[i]).collect();
                        let (_, mut g, _) = critic_loss_and_grad(&probe, &states_a, &targets_a)?;
                        clip_grad_norm(&mut g, self.cfg.max_grad_norm);
                        opt.step(probe.params_mut(), &g)?;
                        cross_validated_loss(&learned.net, &self.td_samples(rollout, &b, &probe)?)?
                    }
                    GammaVariant::Fixed | GammaVariant::Uncertainty => unreachable!(),
                };
                if !loss.total.is_finite() {
                    log::warn!("non-finite gamma loss; step skipped");
                    continue;
                }
                if let Discount::Learned(learned) = &mut self.discount {
                    if let Err(e) = learned.apply(&loss) {
                        log::warn!("gamma step skipped: {e}");
                        continue;
                    }
                }
                last = Some(loss.terms);
            }
        }
        Ok(last)
    }

    /// Adam step on the disagreement scale along the one-step TD loss
    /// `mean((r + γ V(s') - V(s))²)` of the primary value network.
    fn uncertainty_step(&mut self, rollout: &Rollout) -> Result<()> {
        let states = rollout.state_matrix()?;
        let v = self.values(&states)?;
        let vn = self.values(&rollout.next_state_matrix()?)?;
        let d = self.disagreement(&states)?;
        let Discount::Uncertainty(u) = &mut self.discount else {
            return Ok(());
        };
        let b = rollout.len() as f64;
        let dl: Vec<f64> = (0..rollout.len())
            .map(|i| {
                let next = if rollout.terminal[i] { 0.0 } else { vn[i] };
                let delta = rollout.rewards[i] + u.gamma(d[i]) * next - v[i];
                2.0 * delta * next / b
            })
            .collect();
        if let Err(e) = u.step(&d, &dl) {
            log::warn!("uncertainty scale step skipped: {e}");
        }
        Ok(())
    }

    /// EMA step of the reference discount toward the mean discount over the
    /// rollout states.
    pub fn update_reference(&mut self, rollout: &Rollout) -> Result<f64> {
        let Some(net) = self.discount.net() else {
            return Ok(self.reference.gamma());
        };
        let g = net.gammas(&rollout.state_matrix()?)?;
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        Ok(self.reference.update(mean))
    }
}
