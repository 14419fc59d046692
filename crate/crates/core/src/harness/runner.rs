use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, RunConfig};
use super::log::RunLog;
use crate::error::{Error, Result};
use crate::gamma::GammaSettings;
use crate::numerics::Matrix;
use crate::ppo::{ppo_train, PpoAgent};
use crate::sac::{sac_train, SacAgent};

/// A trained agent, saved as JSON at the end of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Snapshot {
    Sac(SacAgent),
    Ppo(PpoAgent),
}

impl Snapshot {
    pub fn obs_dim(&self) -> usize {
        match self {
            Snapshot::Sac(a) => a.obs_dim,
            Snapshot::Ppo(a) => a.obs_dim,
        }
    }

    pub fn gamma_settings(&self) -> &GammaSettings {
        match self {
            Snapshot::Sac(a) => &a.gamma_settings,
            Snapshot::Ppo(a) => &a.gamma_settings,
        }
    }

    pub fn state_gammas(&self, states: &Matrix) -> Result<Vec<f64>> {
        match self {
            Snapshot::Sac(a) => a.state_gammas(states),
            Snapshot::Ppo(a) => a.state_gammas(states),
        }
    }

    /// Deterministic action in the unit box.
    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        match self {
            Snapshot::Sac(a) => a.act_deterministic(state),
            Snapshot::Ppo(a) => a.act_deterministic(state),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
    }
}

pub struct RunOutcome {
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    pub solved_at: Option<u64>,
    /// Mean return of the last evaluation (NaN if none ran).
    pub final_return: f64,
    /// Mean discount over the last evaluation's states.
    pub final_mean_gamma: f64,
    pub snapshot: Snapshot,
}

/// One training run of `cfg` with `seed`, logging into `log`.
pub fn train_seed(cfg: &RunConfig, seed: u64, log: &mut RunLog) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut env = cfg.env.build()?;
    let mut eval_env = cfg.env.build()?;
    let gamma = cfg.gamma_settings();
    let schedule = cfg.schedule();
    let (steps, episodes, solved_at, snapshot) = match cfg.run.algorithm {
        Algorithm::Sac => {
            let r = sac_train(&cfg.sac, &gamma, &schedule, &mut env, &mut eval_env, seed, log)?;
            (r.steps, r.episodes, r.solved_at, Snapshot::Sac(r.agent))
        }
        Algorithm::Ppo => {
            let r = ppo_train(&cfg.ppo, &gamma, &schedule, &mut env, &mut eval_env, seed, log)?;
            (r.steps, r.episodes, r.solved_at, Snapshot::Ppo(r.agent))
        }
    };
    let (final_return, final_mean_gamma) = log
        .last()
        .map_or((f64::NAN, f64::NAN), |r| (r.eval_return_mean, r.gamma.mean));
    Ok(RunOutcome {
        seed,
        steps,
        episodes,
        solved_at,
        final_return,
        final_mean_gamma,
        snapshot,
    })
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}"))
}

/// [`train_seed`] writing `log.csv` and `snapshot.json` under
/// `<out_dir>/seed_<seed>/`.
pub fn train_to_dir(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<RunOutcome> {
    let dir = seed_dir(out_dir, seed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut log = RunLog::create(dir.join("log.csv"))?;
    let outcome = train_seed(cfg, seed, &mut log)?;
    outcome.snapshot.save(&dir.join("snapshot.json"))?;
    Ok(outcome)
}
