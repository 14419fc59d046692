use super::agent::{SacAgent, SacConfig, SacStats};
use super::replay::{ReplayBuffer, Transition};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::gamma::{GammaLossTerms, GammaSettings, GammaStats};
use crate::harness::{LogRow, RunLog, Schedule};
use crate::numerics::{mean, std_pop, Matrix, Rng};

/// Independent random streams of one run. Keeping the discount side on its
/// own stream makes runs with a constant learned discount replay the fixed
/// discount run exactly.
pub struct RunStreams {
    pub main: Rng,
    pub gamma: Rng,
    pub env: Rng,
    pub eval: Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            main: Rng::with_stream(seed, 0),
            gamma: Rng::with_stream(seed, 1),
            env: Rng::with_stream(seed, 2),
            eval: Rng::with_stream(seed, 3),
        }
    }
}

/// Returns and visited states of deterministic evaluation episodes.
pub struct EvalResult {
    pub returns: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

pub fn evaluate(
    env: &mut dyn Env,
    episodes: usize,
    rng: &mut Rng,
    mut policy: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<EvalResult> {
    let bound = env.action_bound();
    let mut returns = Vec::with_capacity(episodes);
    let mut states = Vec::new();
    for _ in 0..episodes {
        let mut s = env.reset(rng);
        let mut total = 0.0;
        loop {
            let a: Vec<f64> = policy(&s)?.iter().map(|x| x * bound).collect();
            let step = env.step(&a, rng);
            states.push(std::mem::replace(&mut s, step.next_state));
            total += step.reward;
            if step.terminal || step.truncated {
                break;
            }
        }
        returns.push(total);
    }
    Ok(EvalResult { returns, states })
}

pub fn stack(states: &[Vec<f64>], dim: usize) -> Result<Matrix> {
    Matrix::from_vec(states.len(), dim, states.concat())
}

pub struct SacRun {
    pub agent: SacAgent,
    pub steps: u64,
    pub episodes: u64,
    /// First evaluation step that reached the schedule's target return.
    pub solved_at: Option<u64>,
}

/// Train SAC with the configured discount on `env`, evaluating on
/// `eval_env` every `schedule.eval_interval` steps.
pub fn sac_train(
    cfg: &SacConfig,
    gamma: &GammaSettings,
    schedule: &Schedule,
    env: &mut dyn Env,
    eval_env: &mut dyn Env,
    seed: u64,
    log: &mut RunLog,
) -> Result<SacRun> {
    if schedule.eval_interval == 0 {
        return Err(Error::config("run.eval_interval", "must be >= 1"));
    }
    let mut rs = RunStreams::new(seed);
    let (obs_dim, act_dim) = (env.obs_dim(), env.action_dim());
    let mut agent = SacAgent::new(
        obs_dim,
        act_dim,
        cfg.clone(),
        gamma.clone(),
        &mut rs.main,
        &mut rs.gamma,
    )?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, obs_dim, act_dim)?;
    let bound = env.action_bound();
    let learns_gamma = gamma.variant.has_network();

    let mut state = env.reset(&mut rs.env);
    let (mut episode, mut ep_step) = (0u64, 0u64);
    let mut stats = SacStats::default();
    let mut gamma_terms = GammaLossTerms::default();
    let mut solved_at = None;
    let mut step = 0u64;

    while step < schedule.max_steps {
        step += 1;
        let action = if buffer.len() < cfg.min_buffer {
            (0..act_dim).map(|_| rs.main.uniform_range(-1.0, 1.0)).collect()
        } else {
            agent.act(&state, &mut rs.main)?
        };
        let env_action: Vec<f64> = action.iter().map(|a| a * bound).collect();
        let out = env.step(&env_action, &mut rs.env);
        buffer.push(Transition {
            state: std::mem::take(&mut state),
            action,
            reward: out.reward,
            next_state: out.next_state.clone(),
            terminal: out.terminal,
            episode,
            step: ep_step,
        })?;
        ep_step += 1;
        agent.reference.warm = step as usize >= gamma.warmup;
        if out.terminal || out.truncated {
            episode += 1;
            ep_step = 0;
            state = env.reset(&mut rs.env);
            if agent.reference.tick() && learns_gamma && agent.reference.warm {
                agent.update_reference(&buffer, &mut rs.gamma)?;
            }
        } else {
            state = out.next_state;
        }

        if buffer.len() >= cfg.min_buffer {
            for _ in 0..cfg.updates_per_step {
                let batch = buffer.sample(cfg.batch_size, &mut rs.main)?;
                let (critic_loss, _) = agent.critic_update(&batch, &mut rs.main)?;
                let (policy_loss, alpha_loss) = agent.policy_update(&batch.states, &mut rs.main)?;
                stats = SacStats {
                    critic_loss,
                    policy_loss,
                    alpha_loss,
                };
                if learns_gamma && step as usize > gamma.warmup && step % gamma.update_freq as u64 == 0 {
                    if let Some(loss) = agent.gamma_update(&buffer, &mut rs.gamma)? {
                        gamma_terms = loss.terms;
                    }
                }
                agent.soft_update_targets();
            }
        }

        if step % schedule.eval_interval == 0 {
            let ev = evaluate(eval_env, schedule.eval_episodes, &mut rs.eval, |s| {
                agent.act_deterministic(s)
            })?;
            let (eval_mean, eval_std) = if ev.returns.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (mean(&ev.returns), std_pop(&ev.returns))
            };
            let probe = if ev.states.is_empty() {
                buffer.recent_states(1000)
            } else {
                stack(&ev.states, obs_dim)?
            };
            let gs = agent.state_gammas(&probe)?;
            log.push(LogRow {
                step,
                episode,
                eval_return_mean: eval_mean,
                eval_return_std: eval_std,
                gamma: GammaStats::of(&gs),
                gamma_loss: gamma_terms,
                critic_loss: stats.critic_loss,
                policy_loss: stats.policy_loss,
                alpha: agent.alpha(),
                gamma_ref: agent.reference.gamma(),
            })?;
            log::info!(
                "sac step {step} episode {episode} eval {eval_mean:.2} mean_gamma {:.4}",
                mean(&gs)
            );
            if let Some(target) = schedule.target_return {
                if eval_mean >= target {
                    solved_at = Some(step);
                    break;
                }
            }
        }
    }
    Ok(SacRun {
        agent,
        steps: step,
        episodes: episode,
        solved_at,
    })
}
