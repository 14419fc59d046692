use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::runner::train_to_dir;
use crate::error::{Error, Result};
use crate::numerics::{mean, std_pop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SeedStatus {
    Done {
        final_return: f64,
        final_mean_gamma: f64,
        steps: u64,
        solved_at: Option<u64>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    #[serde(flatten)]
    pub status: SeedStatus,
}

/// Aggregates over completed seeds; the std is the population std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seeds: Vec<SeedResult>,
    pub completed: usize,
    pub failed: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub gamma_mean: f64,
    pub gamma_std: f64,
}

pub fn summarize(seeds: Vec<SeedResult>) -> SweepSummary {
    let mut returns = Vec::new();
    let mut gammas = Vec::new();
    for s in &seeds {
        if let SeedStatus::Done {
            final_return,
            final_mean_gamma,
            ..
        } = s.status
        {
            returns.push(final_return);
            gammas.push(final_mean_gamma);
        }
    }
    let agg = |xs: &[f64]| {
        if xs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (mean(xs), std_pop(xs))
        }
    };
    let (return_mean, return_std) = agg(&returns);
    let (gamma_mean, gamma_std) = agg(&gammas);
    SweepSummary {
        completed: returns.len(),
        failed: seeds.len() - returns.len(),
        seeds,
        return_mean,
        return_std,
        gamma_mean,
        gamma_std,
    }
}

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,status,final_return,final_mean_gamma,steps,solved_at\n");
        for r in &self.seeds {
            match &r.status {
                SeedStatus::Done {
                    final_return,
                    final_mean_gamma,
                    steps,
                    solved_at,
                } => {
                    let solved = solved_at.map(|x| x.to_string()).unwrap_or_default();
                    let _ = writeln!(
                        s,
                        "{},ok,{final_return:.8e},{final_mean_gamma:.8e},{steps},{solved}",
                        r.seed
                    );
                }
                SeedStatus::Failed { error } => {
                    let _ = writeln!(s, "{},failed: {},,,,", r.seed, error.replace([',', '\n'], ";"));
                }
            }
        }
        let _ = writeln!(s, "mean,,{:.8e},{:.8e},,", self.return_mean, self.gamma_mean);
        let _ = writeln!(s, "std,,{:.8e},{:.8e},,", self.return_std, self.gamma_std);
        s
    }
}

/// Run `run_seed` for every seed, sequentially or on one thread per seed.
/// A failing seed is recorded and the others proceed.
pub fn run_sweep_with<F>(seeds: &[u64], parallel: bool, run_seed: F) -> SweepSummary
where
    F: Fn(u64) -> Result<SeedStatus> + Sync,
{
    let status_of = |seed: u64| match run_seed(seed) {
        Ok(s) => s,
        Err(e) => {
            log::error!("seed {seed} failed: {e}");
            SeedStatus::Failed { error: e.to_string() }
        }
    };
    let statuses: Vec<SeedStatus> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || status_of(s))).collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| SeedStatus::Failed {
                        error: "seed run panicked".into(),
                    })
                })
                .collect()
        })
    } else {
        seeds.iter().map(|&s| status_of(s)).collect()
    };
    summarize(
        seeds
            .iter()
            .zip(statuses)
            .map(|(&seed, status)| SeedResult { seed, status })
            .collect(),
    )
}

/// Train every seed of `cfg` into `out_dir`, writing the config echo,
/// per-seed logs and snapshots, `summary.csv` and `summary.json`.
pub fn run_sweep(cfg: &RunConfig, seeds: &[u64], out_dir: &Path) -> Result<SweepSummary> {
    if seeds.is_empty() {
        return Err(Error::config("run.seeds", "need at least one seed"));
    }
    cfg.write_echo(out_dir)?;
    let summary = run_sweep_with(seeds, cfg.run.parallel, |seed| {
        let o = train_to_dir(cfg, seed, out_dir)?;
        Ok(SeedStatus::Done {
            final_return: o.final_return,
            final_mean_gamma: o.final_mean_gamma,
            steps: o.steps,
            solved_at: o.solved_at,
        })
    });
    let csv = out_dir.join("summary.csv");
    std::fs::write(&csv, summary.to_csv()).map_err(|e| Error::io(&csv, e))?;
    let json = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(summary)
}
