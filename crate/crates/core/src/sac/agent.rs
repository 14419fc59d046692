use serde::{Deserialize, Serialize};

use super::policy::{PolicyTape, SquashedGaussian};
use super::replay::{Batch, ReplayBuffer};
use crate::error::{Error, Result};
use crate::gamma::{
    cross_validated_loss, cv_split, full_gamma_loss, naive_td_gamma_loss, Discount, GammaLoss, GammaSettings,
    GammaVariant, ReferenceDiscount, TdSample,
};
use crate::numerics::{clip_grad_norm, AdamState, ForwardCache, Matrix, Mlp, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Training starts (and random exploration stops) at this buffer size.
    pub min_buffer: usize,
    pub replay_capacity: usize,
    pub init_alpha: f64,
    pub auto_alpha: bool,
    /// Defaults to `-action_dim`.
    pub target_entropy: Option<f64>,
    pub max_grad_norm: f64,
    pub updates_per_step: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            tau: 5e-3,
            batch_size: 256,
            min_buffer: 5000,
            replay_capacity: 1_000_000,
            init_alpha: 0.2,
            auto_alpha: true,
            target_entropy: None,
            max_grad_norm: 1.0,
            updates_per_step: 1,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("min_buffer", self.min_buffer),
            ("replay_capacity", self.replay_capacity),
            ("updates_per_step", self.updates_per_step),
        ] {
            if v == 0 {
                return Err(Error::config(format!("sac.{key}"), "must be >= 1"));
            }
        }
        for (key, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("alpha_lr", self.alpha_lr),
            ("init_alpha", self.init_alpha),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("sac.{key}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(
                "sac.tau",
                format!("must lie in (0, 1], got {}", self.tau),
            ));
        }
        if self.min_buffer > self.replay_capacity {
            return Err(Error::config("sac.min_buffer", "cannot exceed replay_capacity"));
        }
        Ok(())
    }
}

/// Losses from one gradient step, kept for logging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SacStats {
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub alpha_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub gamma_settings: GammaSettings,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub policy: SquashedGaussian,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub discount: Discount,
    pub reference: ReferenceDiscount,
    policy_opt: AdamState,
    critic_opts: [AdamState; 2],
    alpha_opt: AdamState,
}

/// `[states | actions]` row-wise.
pub fn critic_input(states: &Matrix, actions: &Matrix) -> Matrix {
    let (n, o, a) = (states.rows(), states.cols(), actions.cols());
    let mut data = Vec::with_capacity(n * (o + a));
    for r in 0..n {
        data.extend_from_slice(states.row(r));
        data.extend_from_slice(actions.row(r));
    }
    Matrix::from_vec(n, o + a, data).expect("shape")
}

/// `y = r + γ (1 - d) V'`, elementwise.
pub fn compose_targets(rewards: &[f64], dones: &[f64], gammas: &[f64], next_values: &[f64]) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .zip(gammas.iter().zip(next_values))
        .map(|((r, d), (g, v))| r + g * (1.0 - d) * v)
        .collect()
}

/// Mean squared error of one critic against fixed targets, with the
/// parameter gradient and the predictions.
pub fn critic_loss_and_grad(critic: &Mlp, inputs: &Matrix, targets: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (out, cache) = critic.forward_batch_cached(inputs)?;
    let q = out.into_vec();
    let (loss, grad) = critic_grad_from_cache(critic, &cache, &q, targets)?;
    Ok((loss, grad, q))
}

fn critic_grad_from_cache(critic: &Mlp, cache: &ForwardCache, q: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let b = q.len() as f64;
    let mut loss = 0.0;
    let mut up = Vec::with_capacity(q.len());
    for (qi, yi) in q.iter().zip(targets) {
        let e = qi - yi;
        loss += e * e / b;
        up.push(2.0 * e / b);
    }
    let up = Matrix::from_vec(q.len(), 1, up)?;
    Ok((loss, critic.backward(cache, &up)?.params))
}

/// Temperature loss `-log α · mean(log π + H̄)` and its derivative.
pub fn alpha_loss_and_grad(log_alpha: f64, log_probs: &[f64], target_entropy: f64) -> (f64, f64) {
    let m = log_probs.iter().map(|l| l + target_entropy).sum::<f64>() / log_probs.len() as f64;
    (-log_alpha * m, -m)
}

fn min_rows(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).collect()
}

impl SacAgent {
    /// Fresh agent. Actor/critic weights come from `rng`; the discount
    /// network from `gamma_rng`, so variants share identical main streams.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        cfg: SacConfig,
        gamma_settings: GammaSettings,
        rng: &mut Rng,
        gamma_rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        gamma_settings.validate()?;
        let policy = SquashedGaussian::new(obs_dim, act_dim, cfg.hidden, rng);
        let c1 = Mlp::new(&[obs_dim + act_dim, cfg.hidden, cfg.hidden, 1], rng);
        let c2 = Mlp::new(&[obs_dim + act_dim, cfg.hidden, cfg.hidden, 1], rng);
        let discount = Discount::build(&gamma_settings, obs_dim, gamma_rng)?;
        let reference = ReferenceDiscount::new(
            gamma_settings.ref_init,
            gamma_settings.ref_tau,
            gamma_settings.ref_period,
            gamma_settings.ref_adaptive,
            gamma_settings.gamma_min,
            gamma_settings.gamma_max,
        )?;
        Ok(Self {
            policy_opt: AdamState::new(policy.net.param_count(), cfg.actor_lr),
            critic_opts: [
                AdamState::new(c1.param_count(), cfg.critic_lr),
                AdamState::new(c2.param_count(), cfg.critic_lr),
            ],
            alpha_opt: AdamState::new(1, cfg.alpha_lr),
            log_alpha: cfg.init_alpha.ln(),
            target_entropy: cfg.target_entropy.unwrap_or(-(act_dim as f64)),
            targets: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            policy,
            discount,
            reference,
            obs_dim,
            act_dim,
            cfg,
            gamma_settings,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let s = Matrix::from_vec(1, state.len(), state.to_vec())?;
        Ok(self.policy.sample(&s, rng)?.0.into_vec())
    }

    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        let s = Matrix::from_vec(1, state.len(), state.to_vec())?;
        Ok(self.policy.deterministic(&s)?.into_vec())
    }

    fn q_values(critic: &Mlp, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        Ok(critic.forward_batch(&critic_input(states, actions))?.into_vec())
    }

    /// Sampled soft value `min_i Q̄_i(s, a) - α log π(a|s)`, `a ~ π(·|s)`.
    pub fn soft_value(&self, states: &Matrix, rng: &mut Rng) -> Result<Vec<f64>> {
        let (a, lp) = self.policy.sample(states, rng)?;
        let q1 = Self::q_values(&self.targets[0], states, &a)?;
        let q2 = Self::q_values(&self.targets[1], states, &a)?;
        let alpha = self.alpha();
        Ok(min_rows(&q1, &q2).iter().zip(&lp).map(|(q, l)| q - alpha * l).collect())
    }

    /// Per-sample discounts for a batch. `online_q` supplies the twin online
    /// critic values at `(s_t, a_t)` used by the disagreement rule.
    pub fn discounts(&self, states: &Matrix, online_q: (&[f64], &[f64])) -> Result<Vec<f64>> {
        match &self.discount {
            Discount::Uncertainty(u) => Ok(online_q
                .0
                .iter()
                .zip(online_q.1)
                .map(|(a, b)| u.gamma((a - b).abs()))
                .collect()),
            d => Ok(d.state_gammas(states)?.expect("state-only discount")),
        }
    }

    /// Discounts at arbitrary states, using the deterministic action for the
    /// disagreement rule.
    pub fn state_gammas(&self, states: &Matrix) -> Result<Vec<f64>> {
        if let Some(g) = self.discount.state_gammas(states)? {
            return Ok(g);
        }
        let a = self.policy.deterministic(states)?;
        let q1 = Self::q_values(&self.critics[0], states, &a)?;
        let q2 = Self::q_values(&self.critics[1], states, &a)?;
        self.discounts(states, (&q1, &q2))
    }

    /// Bootstrapped critic targets with a fresh next action per element.
    pub fn sac_target(&self, batch: &Batch, rng: &mut Rng) -> Result<Vec<f64>> {
        let inputs = critic_input(&batch.states, &batch.actions);
        let q1 = self.critics[0].forward_batch(&inputs)?.into_vec();
        let q2 = self.critics[1].forward_batch(&inputs)?.into_vec();
        let next = self.soft_value(&batch.next_states, rng)?;
        let gammas = self.discounts(&batch.states, (&q1, &q2))?;
        Ok(compose_targets(&batch.rewards, &batch.dones, &gammas, &next))
    }

    /// Twin-critic regression onto [`SacAgent::sac_target`]. Returns the
    /// summed critic loss and the discounts used.
    pub fn critic_update(&mut self, batch: &Batch, rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        let inputs = critic_input(&batch.states, &batch.actions);
        let next = self.soft_value(&batch.next_states, rng)?;
        let (o1, c1) = self.critics[0].forward_batch_cached(&inputs)?;
        let (o2, c2) = self.critics[1].forward_batch_cached(&inputs)?;
        let (q1, q2) = (o1.into_vec(), o2.into_vec());
        let gammas = self.discounts(&batch.states, (&q1, &q2))?;
        let y = compose_targets(&batch.rewards, &batch.dones, &gammas, &next);
        let mut total = 0.0;
        let mut dgamma = vec![0.0; y.len()];
        let b = y.len() as f64;
        for (i, (cache, q)) in [(&c1, &q1), (&c2, &q2)].into_iter().enumerate() {
            let (loss, mut grad) = critic_grad_from_cache(&self.critics[i], cache, q, &y)?;
            if !loss.is_finite() {
                log::warn!("non-finite critic loss; step skipped");
                continue;
            }
            for k in 0..y.len() {
                dgamma[k] -= 2.0 * (q[k] - y[k]) * (1.0 - batch.dones[k]) * next[k] / b;
            }
            clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
            match self.critic_opts[i].step(self.critics[i].params_mut(), &grad) {
                Ok(()) => total += loss,
                Err(Error::NonFiniteGradient) => log::warn!("non-finite critic gradient; step skipped"),
                Err(e) => return Err(e),
            }
        }
        if let Discount::Uncertainty(u) = &mut self.discount {
            let d: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| (a - b).abs()).collect();
            if let Err(e) = u.step(&d, &dgamma) {
                log::warn!("uncertainty scale step skipped: {e}");
            }
        }
        Ok((total, gammas))
    }

    /// `mean(α log π(a|s) - min_i Q_i(s, a))` with `a` reparameterized by
    /// `noise`; returns the loss, the policy gradient and `log π`.
    pub fn policy_loss_and_grad(&self, states: &Matrix, noise: &Matrix) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (actions, logp, tape): (Matrix, Vec<f64>, PolicyTape) = self.policy.sample_with_noise(states, noise)?;
        let inputs = critic_input(states, &actions);
        let (o1, c1) = self.critics[0].forward_batch_cached(&inputs)?;
        let (o2, c2) = self.critics[1].forward_batch_cached(&inputs)?;
        let (q1, q2) = (o1.as_slice(), o2.as_slice());
        let n = states.rows();
        let b = n as f64;
        let alpha = self.alpha();
        let mut up1 = Matrix::zeros(n, 1);
        let mut up2 = Matrix::zeros(n, 1);
        let mut loss = 0.0;
        for r in 0..n {
            // ties go to the first critic
            if q1[r] <= q2[r] {
                up1[(r, 0)] = -1.0 / b;
                loss += (alpha * logp[r] - q1[r]) / b;
            } else {
                up2[(r, 0)] = -1.0 / b;
                loss += (alpha * logp[r] - q2[r]) / b;
            }
        }
        let g1 = self.critics[0].backward_input(&c1, &up1)?;
        let g2 = self.critics[1].backward_input(&c2, &up2)?;
        let mut d_action = Matrix::zeros(n, self.act_dim);
        for r in 0..n {
            for j in 0..self.act_dim {
                d_action[(r, j)] = g1[(r, self.obs_dim + j)] + g2[(r, self.obs_dim + j)];
            }
        }
        let d_logp = vec![alpha / b; n];
        let grad = self.policy.backward(&tape, &d_action, &d_logp)?;
        Ok((loss, grad, logp))
    }

    /// Policy step followed by the temperature step. Returns the policy and
    /// temperature losses.
    pub fn policy_update(&mut self, states: &Matrix, rng: &mut Rng) -> Result<(f64, f64)> {
        let noise = self.policy.noise(states.rows(), rng);
        let (loss, mut grad, logp) = self.policy_loss_and_grad(states, &noise)?;
        if loss.is_finite() {
            clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
            if let Err(e) = self.policy_opt.step(self.policy.net.params_mut(), &grad) {
                log::warn!("policy step skipped: {e}");
            }
        } else {
            log::warn!("non-finite policy loss; step skipped");
        }
        let (alpha_loss, g) = alpha_loss_and_grad(self.log_alpha, &logp, self.target_entropy);
        if self.cfg.auto_alpha {
            let mut p = [self.log_alpha];
            match self.alpha_opt.step(&mut p, &[g]) {
                Ok(()) => self.log_alpha = p[0],
                Err(e) => log::warn!("temperature step skipped: {e}"),
            }
        }
        Ok((loss, alpha_loss))
    }

    pub fn soft_update_targets(&mut self) {
        for i in 0..2 {
            self.targets[i].soft_update_from(&self.critics[i], self.cfg.tau);
        }
    }

    /// One full gradient pass: critics, policy and temperature, then the
    /// target networks. Gamma updates are scheduled by the caller.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut Rng) -> Result<SacStats> {
        let batch = buffer.sample(self.cfg.batch_size, rng)?;
        let (critic_loss, _) = self.critic_update(&batch, rng)?;
        let (policy_loss, alpha_loss) = self.policy_update(&batch.states, rng)?;
        Ok(SacStats {
            critic_loss,
            policy_loss,
            alpha_loss,
        })
    }

    fn td_samples(&self, batch: &Batch, current: &[f64], next: &[f64]) -> Vec<TdSample> {
        (0..batch.len())
            .map(|i| TdSample {
                state: batch.states.row(i).to_vec(),
                reward: batch.rewards[i],
                next_value: next[i],
                current_value: current[i],
                terminal: batch.dones[i] > 0.5,
            })
            .collect()
    }

    /// One discount-network step for the configured variant. Every random
    /// draw comes from `gamma_rng`. Returns `None` for variants without a
    /// discount network.
    pub fn gamma_update(&mut self, buffer: &ReplayBuffer, gamma_rng: &mut Rng) -> Result<Option<GammaLoss>> {
        let settings = self.gamma_settings.clone();
        let Discount::Learned(learned) = &self.discount else {
            return Ok(None);
        };
        let loss = match settings.variant {
            GammaVariant::AdagammaRc => {
                let windows = buffer.sample_windows(settings.batch_size, settings.rc_horizon, gamma_rng)?;
                let mut value_fn = |states: &Matrix| {
                    self.soft_value(states, gamma_rng)
                        .expect("value states match the observation width")
                };
                full_gamma_loss(
                    &learned.net,
                    &windows,
                    &mut value_fn,
                    self.reference.gamma(),
                    settings.rc_horizon,
                    &settings.weights,
                )?
            }
            GammaVariant::NaiveTd => {
                let batch = buffer.sample(settings.batch_size, gamma_rng)?;
                let next = self.soft_value(&batch.next_states, gamma_rng)?;
                let q1 = Self::q_values(&self.critics[0], &batch.states, &batch.actions)?;
                let q2 = Self::q_values(&self.critics[1], &batch.states, &batch.actions)?;
                naive_td_gamma_loss(&learned.net, &self.td_samples(&batch, &min_rows(&q1, &q2), &next))?
            }
            GammaVariant::CrossValidated => {
                let batch = buffer.sample(settings.batch_size, gamma_rng)?;
                let (ia, ib) = cv_split(batch.len(), gamma_rng)?;
                let (half_a, half_b) = (batch.select(&ia), batch.select(&ib));
                // one critic step on A, on copies
                let mut probe = self.clone();
                probe.critic_update(&half_a, gamma_rng)?;
                let next = self.soft_value(&half_b.next_states, gamma_rng)?;
                let q1 = Self::q_values(&probe.critics[0], &half_b.states, &half_b.actions)?;
                let q2 = Self::q_values(&probe.critics[1], &half_b.states, &half_b.actions)?;
                cross_validated_loss(&learned.net, &self.td_samples(&half_b, &min_rows(&q1, &q2), &next))?
            }
            GammaVariant::Fixed | GammaVariant::Uncertainty => return Ok(None),
        };
        if !loss.total.is_finite() {
            log::warn!("non-finite gamma loss; step skipped");
            return Ok(Some(loss));
        }
        if let Discount::Learned(learned) = &mut self.discount {
            if let Err(e) = learned.apply(&loss) {
                log::warn!("gamma step skipped: {e}");
            }
        }
        Ok(Some(loss))
    }

    /// EMA step of the reference discount toward the mean learned discount
    /// over a replay sample.
    pub fn update_reference(&mut self, buffer: &ReplayBuffer, gamma_rng: &mut Rng) -> Result<f64> {
        let Some(net) = self.discount.net() else {
            return Ok(self.reference.gamma());
        };
        let idx = buffer.sample_indices(self.gamma_settings.batch_size, gamma_rng)?;
        let states = buffer.batch(&idx).states;
        let g = net.gammas(&states)?;
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        Ok(self.reference.update(mean))
    }
}
