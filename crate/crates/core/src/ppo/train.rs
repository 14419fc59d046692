use super::agent::{PpoAgent, PpoConfig, PpoStats};
use super::gae::Rollout;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::gamma::{GammaLossTerms, GammaSettings, GammaStats};
use crate::harness::{LogRow, RunLog, Schedule};
use crate::numerics::{mean, std_pop};
use crate::sac::{evaluate, stack, RunStreams};

pub struct PpoRun {
    pub agent: PpoAgent,
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    /// First evaluation step that reached the schedule's target return.
    pub solved_at: Option<u64>,
}

struct Progress {
    stats: PpoStats,
    gamma_terms: GammaLossTerms,
    solved_at: Option<u64>,
}

fn eval_row(
    agent: &PpoAgent,
    schedule: &Schedule,
    eval_env: &mut dyn Env,
    rs: &mut RunStreams,
    step: u64,
    episode: u64,
    progress: &mut Progress,
    log: &mut RunLog,
) -> Result<bool> {
    let ev = evaluate(eval_env, schedule.eval_episodes, &mut rs.eval, |s| {
        agent.act_deterministic(s)
    })?;
    let (eval_mean, eval_std) = if ev.returns.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (mean(&ev.returns), std_pop(&ev.returns))
    };
    let gs = if ev.states.is_empty() {
        vec![f64::NAN]
    } else {
        agent.state_gammas(&stack(&ev.states, agent.obs_dim)?)?
    };
    log.push(LogRow {
        step,
        episode,
        eval_return_mean: eval_mean,
        eval_return_std: eval_std,
        gamma: GammaStats::of(&gs),
        gamma_loss: progress.gamma_terms,
        critic_loss: progress.stats.value_loss,
        policy_loss: progress.stats.policy_loss,
        // PPO has no temperature; the column carries the action std
        alpha: agent.action_std,
        gamma_ref: agent.reference.gamma(),
    })?;
    log::info!(
        "ppo step {step} episode {episode} eval {eval_mean:.2} mean_gamma {:.4}",
        mean(&gs)
    );
    if let Some(target) = schedule.target_return {
        if eval_mean >= target {
            progress.solved_at = Some(step);
            return Ok(true);
        }
    }
    Ok(false)
}

/// Train PPO with the configured discount: collect a rollout, freeze its
/// discounts, run the epochs, then train the discount side.
pub fn ppo_train(
    cfg: &PpoConfig,
    gamma: &GammaSettings,
    schedule: &Schedule,
    env: &mut dyn Env,
    eval_env: &mut dyn Env,
    seed: u64,
    log: &mut RunLog,
) -> Result<PpoRun> {
    if schedule.eval_interval == 0 {
        return Err(Error::config("run.eval_interval", "must be >= 1"));
    }
    let mut rs = RunStreams::new(seed);
    let mut agent = PpoAgent::new(
        env.obs_dim(),
        env.action_dim(),
        cfg.clone(),
        gamma.clone(),
        &mut rs.main,
        &mut rs.gamma,
    )?;
    let bound = env.action_bound();
    let learns_gamma = gamma.variant.has_network() || gamma.variant == crate::gamma::GammaVariant::Uncertainty;

    let mut state = env.reset(&mut rs.env);
    let (mut step, mut episode, mut updates) = (0u64, 0u64, 0u64);
    let mut progress = Progress {
        stats: PpoStats::default(),
        gamma_terms: GammaLossTerms::default(),
        solved_at: None,
    };

    'outer: while step < schedule.max_steps {
        agent.action_std = cfg.action_std_at(step);
        let mut rollout = Rollout::default();
        let len = (cfg.rollout_len as u64).min(schedule.max_steps - step);
        for _ in 0..len {
            step += 1;
            let (action, logp) = agent.act(&state, &mut rs.main)?;
            let env_action: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0) * bound).collect();
            let out = env.step(&env_action, &mut rs.env);
            let ended = out.terminal || out.truncated;
            let prev = std::mem::replace(&mut state, out.next_state.clone());
            rollout.push(
                prev,
                action,
                logp,
                out.reward,
                out.next_state,
                out.terminal,
                out.truncated,
            );
            if ended {
                episode += 1;
                state = env.reset(&mut rs.env);
            }
            if step % schedule.eval_interval == 0
                && eval_row(&agent, schedule, eval_env, &mut rs, step, episode, &mut progress, log)?
            {
                break 'outer;
            }
        }
        if rollout.len() < 2 {
            break;
        }
        agent.annotate(&mut rollout)?;
        let est = agent.estimate(&rollout)?;
        progress.stats = agent.ppo_update(&rollout, &est, &mut rs.main)?;
        updates += 1;
        let warm = episode as usize >= gamma.warmup;
        agent.reference.warm = warm;
        if learns_gamma && warm {
            if let Some(terms) = agent.gamma_update(&rollout, &est, &mut rs.gamma)? {
                progress.gamma_terms = terms;
            }
        }
        if agent.reference.tick() && warm && gamma.variant.has_network() {
            agent.update_reference(&rollout)?;
        }
    }
    Ok(PpoRun {
        agent,
        steps: step,
        episodes: episode,
        updates,
        solved_at: progress.solved_at,
    })
}
