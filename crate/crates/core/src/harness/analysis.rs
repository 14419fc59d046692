//! Per-state discount dumps over the visitation distribution of a frozen
//! policy.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::Snapshot;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::numerics::{mean, Rng};
use crate::sac::{evaluate, stack};

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Histogram range; the configured discount bounds.
    pub lo: f64,
    pub hi: f64,
    pub histogram: Vec<usize>,
}

/// Equal-width bins over `[lo, hi]`; values outside are clamped into the
/// edge bins. With `hi <= lo` everything lands in the first bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for &v in values {
        let i = if hi > lo {
            (((v - lo) / (hi - lo)) * bins as f64)
                .floor()
                .clamp(0.0, (bins - 1) as f64) as usize
        } else {
            0
        };
        h[i] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaDump {
    pub states: Vec<Vec<f64>>,
    pub gammas: Vec<f64>,
    pub summary: GammaSummary,
}

impl GammaDump {
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(0, Vec::len);
        let mut s: String = (0..dim).map(|i| format!("s{i},")).collect();
        s.push_str("gamma\n");
        for (x, g) in self.states.iter().zip(&self.gammas) {
            for v in x {
                let _ = write!(s, "{v:.8e},");
            }
            let _ = writeln!(s, "{g:.8e}");
        }
        s
    }

    /// Writes `gamma_dump.csv` and `gamma_summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("gamma_dump.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join("gamma_summary.json");
        let text = serde_json::to_string_pretty(&self.summary).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }
}

/// Roll out the snapshot's deterministic policy for `episodes` episodes and
/// record the discount at every visited state.
pub fn gamma_dump(snapshot: &Snapshot, env: &mut dyn Env, episodes: usize, rng: &mut Rng) -> Result<GammaDump> {
    if env.obs_dim() != snapshot.obs_dim() {
        return Err(Error::Shape {
            expected: snapshot.obs_dim(),
            got: env.obs_dim(),
        });
    }
    let ev = evaluate(env, episodes, rng, |s| snapshot.act_deterministic(s))?;
    let gammas = if ev.states.is_empty() {
        Vec::new()
    } else {
        snapshot.state_gammas(&stack(&ev.states, snapshot.obs_dim())?)?
    };
    let gs = snapshot.gamma_settings();
    let summary = GammaSummary {
        count: gammas.len(),
        mean: mean(&gammas),
        min: gammas.iter().copied().fold(f64::INFINITY, f64::min),
        max: gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lo: gs.gamma_min,
        hi: gs.gamma_max,
        histogram: histogram(&gammas, gs.gamma_min, gs.gamma_max, HISTOGRAM_BINS),
    };
    Ok(GammaDump {
        states: ev.states,
        gammas,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 0.05, 0.5, 0.99, 1.0, 2.0, -1.0], 0.0, 1.0, 20);
        assert_eq!(h.iter().sum::<usize>(), 7);
        assert_eq!(h[0], 2);
        assert_eq!(h[1], 1);
        assert_eq!(h[10], 1);
        assert_eq!(h[19], 3);
        assert_eq!(histogram(&[0.5, 0.5], 0.5, 0.5, 4), vec![2, 0, 0, 0]);
    }
}
