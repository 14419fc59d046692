//! Matched naive-TD versus return-consistency runs on the corridor.
//!
//! Training the discount on its own TD error lets it shrink errors by
//! shortening the horizon, so the mean discount slides to the lower bound.
//! The return-consistency objective should keep it high.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, EnvName, RunConfig};
use super::log::RunLog;
use super::runner::train_seed;
use crate::error::{Error, Result};
use crate::gamma::{GammaSettings, GammaVariant};

/// The naive arm passes when its final mean discount is within this of
/// `gamma_min`.
pub const NAIVE_MARGIN: f64 = 0.005;
/// The return-consistency arm passes when every post-warmup mean discount
/// stays at or above this.
pub const RC_FLOOR: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSeed {
    pub seed: u64,
    /// `(step, mean discount over evaluation states)`.
    pub trajectory: Vec<(u64, f64)>,
    pub final_mean_gamma: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseArm {
    pub variant: GammaVariant,
    pub seeds: Vec<ArmSeed>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub gamma_min: f64,
    pub warmup: usize,
    pub naive: CollapseArm,
    pub rc: CollapseArm,
    pub pass: bool,
}

/// The two arms' settings: identical apart from the variant.
pub fn arm_settings(base: &GammaSettings) -> (GammaSettings, GammaSettings) {
    let naive = GammaSettings {
        variant: GammaVariant::NaiveTd,
        ..base.clone()
    };
    let rc = GammaSettings {
        variant: GammaVariant::AdagammaRc,
        ..base.clone()
    };
    (naive, rc)
}

pub fn naive_verdict(trajectory: &[(u64, f64)], gamma_min: f64) -> bool {
    trajectory.last().is_some_and(|&(_, g)| g <= gamma_min + NAIVE_MARGIN)
}

pub fn rc_verdict(trajectory: &[(u64, f64)], warmup: usize) -> bool {
    let post: Vec<f64> = trajectory
        .iter()
        .filter(|(s, _)| *s as usize > warmup)
        .map(|&(_, g)| g)
        .collect();
    !post.is_empty() && post.iter().all(|&g| g >= RC_FLOOR)
}

fn run_arm(cfg: &RunConfig, settings: &GammaSettings, out_dir: Option<&Path>) -> Result<CollapseArm> {
    let mut arm_cfg = cfg.clone();
    arm_cfg.gamma = super::config::GammaSection::explicit(settings);
    let mut seeds = Vec::new();
    for &seed in &cfg.run.seeds {
        let mut log = match out_dir {
            Some(dir) => {
                let d = dir.join(variant_name(settings.variant));
                std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
                RunLog::create(d.join(format!("seed_{seed}.csv")))?
            }
            None => RunLog::in_memory(),
        };
        let outcome = train_seed(&arm_cfg, seed, &mut log)?;
        let trajectory: Vec<(u64, f64)> = log.rows().iter().map(|r| (r.step, r.gamma.mean)).collect();
        let pass = match settings.variant {
            GammaVariant::NaiveTd => naive_verdict(&trajectory, settings.gamma_min),
            _ => rc_verdict(&trajectory, settings.warmup),
        };
        log::info!(
            "collapse {:?} seed {seed}: final mean gamma {:.4} ({})",
            settings.variant,
            outcome.final_mean_gamma,
            if pass { "pass" } else { "fail" }
        );
        seeds.push(ArmSeed {
            seed,
            trajectory,
            final_mean_gamma: outcome.final_mean_gamma,
            pass,
        });
    }
    Ok(CollapseArm {
        variant: settings.variant,
        pass: seeds.iter().all(|s| s.pass),
        seeds,
    })
}

fn variant_name(v: GammaVariant) -> &'static str {
    match v {
        GammaVariant::NaiveTd => "naive-td",
        GammaVariant::AdagammaRc => "adagamma-rc",
        GammaVariant::CrossValidated => "cross-validated",
        GammaVariant::Uncertainty => "uncertainty",
        GammaVariant::Fixed => "fixed",
    }
}

/// Run both arms over `cfg.run.seeds`. Requires SAC on the corridor. When
/// `out_dir` is given, per-seed logs and `collapse_report.json` go there.
pub fn collapse_experiment(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<CollapseReport> {
    if cfg.run.algorithm != Algorithm::Sac {
        return Err(Error::config("run.algorithm", "the collapse experiment runs SAC"));
    }
    if cfg.env.name != EnvName::Corridor {
        return Err(Error::config(
            "env.name",
            "the collapse experiment runs on the corridor",
        ));
    }
    let base = cfg.gamma_settings();
    let (naive_s, rc_s) = arm_settings(&base);
    if let Some(dir) = out_dir {
        cfg.write_echo(dir)?;
    }
    let naive = run_arm(cfg, &naive_s, out_dir)?;
    let rc = run_arm(cfg, &rc_s, out_dir)?;
    let report = CollapseReport {
        gamma_min: base.gamma_min,
        warmup: base.warmup,
        pass: naive.pass && rc.pass,
        naive,
        rc,
    };
    if let Some(dir) = out_dir {
        let path = dir.join("collapse_report.json");
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
