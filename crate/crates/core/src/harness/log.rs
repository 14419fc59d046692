use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::{GammaLossTerms, GammaStats};

pub const LOG_COLUMNS: [&str; 15] = [
    "step",
    "episode",
    "eval_return_mean",
    "eval_return_std",
    "mean_gamma",
    "min_gamma",
    "max_gamma",
    "gamma_loss_rc",
    "gamma_loss_dev",
    "gamma_loss_var",
    "gamma_loss_bound",
    "critic_loss",
    "policy_loss",
    "alpha",
    "gamma_ref",
];

/// Training length and evaluation cadence shared by both trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub max_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Stop after the first evaluation whose mean return reaches this.
    pub target_return: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub episode: u64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub gamma: GammaStats,
    pub gamma_loss: GammaLossTerms,
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub alpha: f64,
    pub gamma_ref: f64,
}

impl LogRow {
    fn to_csv(&self) -> String {
        let floats = [
            self.eval_return_mean,
            self.eval_return_std,
            self.gamma.mean,
            self.gamma.min,
            self.gamma.max,
            self.gamma_loss.rc,
            self.gamma_loss.dev,
            self.gamma_loss.var,
            self.gamma_loss.bound,
            self.critic_loss,
            self.policy_loss,
            self.alpha,
            self.gamma_ref,
        ];
        let mut line = format!("{},{}", self.step, self.episode);
        for f in floats {
            line.push_str(&format!(",{f:.8e}"));
        }
        line
    }

    fn parse(line: &str) -> Option<Self> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != LOG_COLUMNS.len() {
            return None;
        }
        let f: Vec<f64> = cells[2..].iter().map(|c| c.parse().ok()).collect::<Option<_>>()?;
        Some(Self {
            step: cells[0].parse().ok()?,
            episode: cells[1].parse().ok()?,
            eval_return_mean: f[0],
            eval_return_std: f[1],
            gamma: GammaStats {
                mean: f[2],
                min: f[3],
                max: f[4],
            },
            gamma_loss: GammaLossTerms {
                rc: f[5],
                dev: f[6],
                var: f[7],
                bound: f[8],
            },
            critic_loss: f[9],
            policy_loss: f[10],
            alpha: f[11],
            gamma_ref: f[12],
        })
    }
}

/// Append-only run log, optionally mirrored to a CSV file that is flushed
/// after every row.
#[derive(Debug, Default)]
pub struct RunLog {
    rows: Vec<LogRow>,
    file: Option<(PathBuf, BufWriter<File>)>,
}

impl RunLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{}", LOG_COLUMNS.join(",")).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            rows: Vec::new(),
            file: Some((path, w)),
        })
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(prev) = self.rows.last() {
            if row.step <= prev.step {
                return Err(Error::InvalidRange {
                    name: "log step",
                    reason: format!("steps must increase strictly ({} after {})", row.step, prev.step),
                });
            }
        }
        if let Some((path, w)) = self.file.as_mut() {
            writeln!(w, "{}", row.to_csv())
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = LOG_COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    /// Parse a log written by [`RunLog::create`]. A trailing partial row is
    /// ignored.
    pub fn parse_csv(text: &str) -> Result<Vec<LogRow>> {
        let mut lines = text.split_inclusive('\n');
        match lines.next() {
            Some(h) if h.trim_end() == LOG_COLUMNS.join(",") => {}
            _ => return Err(Error::Serde("missing or unexpected log header".into())),
        }
        let mut rows = Vec::new();
        for line in lines {
            if !line.ends_with('\n') {
                break;
            }
            match LogRow::parse(line.trim_end()) {
                Some(r) => rows.push(r),
                None => return Err(Error::Serde(format!("malformed log row: {}", line.trim_end()))),
            }
        }
        Ok(rows)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> LogRow {
        LogRow {
            step,
            episode: step / 10,
            eval_return_mean: -123.456789012,
            eval_return_std: f64::NAN,
            gamma: GammaStats::constant(0.98),
            gamma_loss: GammaLossTerms::default(),
            critic_loss: 1.0 / 3.0,
            policy_loss: -2.0,
            alpha: 0.2,
            gamma_ref: 0.98,
        }
    }

    #[test]
    fn nine_significant_digits_round_trip() {
        let mut log = RunLog::in_memory();
        log.push(row(10)).unwrap();
        let text = log.to_csv();
        assert!(text.contains("-1.23456789e2"));
        let parsed = RunLog::parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert!((parsed[0].critic_loss - 1.0 / 3.0).abs() < 1e-9);
        assert!(parsed[0].eval_return_std.is_nan());
    }

    #[test]
    fn steps_must_increase() {
        let mut log = RunLog::in_memory();
        log.push(row(10)).unwrap();
        assert!(log.push(row(10)).is_err());
    }

    #[test]
    fn partial_file_parses_to_last_complete_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        let mut log = RunLog::create(&p).unwrap();
        log.push(row(1)).unwrap();
        log.push(row(2)).unwrap();
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("3,0,1.0e0,2.0");
        assert_eq!(RunLog::parse_csv(&text).unwrap().len(), 2);
        assert_eq!(RunLog::read(&p).unwrap().len(), 2);
    }
}
