//! Run configuration: a TOML document with the sections `run`, `env`,
//! `sac`, `ppo` and `gamma`. Every key is optional; unknown keys are
//! rejected. Keys can be overridden from the environment as
//! `ADAGAMMA_<SECTION>_<KEY>=<value>`, where the value is parsed as a TOML
//! value (falling back to a bare string).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{CorridorEnv, CorridorParams, Env, PendulumEnv};
use crate::error::{Error, Result};
use crate::gamma::{GammaLossWeights, GammaSettings, GammaTarget, GammaVariant};
use crate::harness::Schedule;
use crate::ppo::PpoConfig;
use crate::sac::SacConfig;

pub const ENV_PREFIX: &str = "ADAGAMMA_";
const SECTIONS: [&str; 5] = ["run", "env", "sac", "ppo", "gamma"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sac,
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvName {
    Pendulum,
    Corridor,
    /// Finite MDPs; only `theory-check` uses them.
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub max_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub target_return: Option<f64>,
    pub out_dir: PathBuf,
    /// Run sweep seeds on separate threads.
    pub parallel: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sac,
            seeds: vec![0, 1, 2, 3, 4],
            max_steps: 1_000_000,
            eval_interval: 10_000,
            eval_episodes: 10,
            target_return: None,
            out_dir: PathBuf::from("runs"),
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub name: EnvName,
    /// Episode cap; defaults to 200 for the pendulum and the corridor's own
    /// `horizon` otherwise.
    pub horizon: Option<usize>,
    pub corridor_length: f64,
    pub corridor_noisy_end: f64,
    pub corridor_noise_std: f64,
    pub corridor_goal: f64,
    pub corridor_goal_reward: f64,
    pub corridor_shaping_scale: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let c = CorridorParams::default();
        Self {
            name: EnvName::Pendulum,
            horizon: None,
            corridor_length: c.length,
            corridor_noisy_end: c.noisy_end,
            corridor_noise_std: c.noise_std,
            corridor_goal: c.goal,
            corridor_goal_reward: c.goal_reward,
            corridor_shaping_scale: c.shaping_scale,
        }
    }
}

impl EnvSection {
    pub fn corridor_params(&self) -> CorridorParams {
        CorridorParams {
            length: self.corridor_length,
            noisy_end: self.corridor_noisy_end,
            noise_std: self.corridor_noise_std,
            goal: self.corridor_goal,
            goal_reward: self.corridor_goal_reward,
            shaping_scale: self.corridor_shaping_scale,
            horizon: self.horizon.unwrap_or(CorridorParams::default().horizon),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Env>> {
        match self.name {
            EnvName::Pendulum => Ok(Box::new(PendulumEnv::new(self.horizon.unwrap_or(200)))),
            EnvName::Corridor => Ok(Box::new(CorridorEnv::new(self.corridor_params()))),
            EnvName::Tabular => Err(Error::config(
                "env.name",
                "tabular MDPs have no continuous-action interface; use theory-check",
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == Some(0) {
            return Err(Error::config("env.horizon", "must be >= 1"));
        }
        if self.name == EnvName::Corridor {
            let c = self.corridor_params();
            if !(c.length > 0.0 && c.noisy_end >= 0.0 && c.noisy_end <= c.goal && c.goal <= c.length) {
                return Err(Error::config(
                    "env.corridor_*",
                    "need 0 <= noisy_end <= goal <= length and length > 0",
                ));
            }
            if !(c.noise_std >= 0.0) {
                return Err(Error::config("env.corridor_noise_std", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Discount settings as written in a file. Unset keys take the selected
/// algorithm's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSection {
    pub variant: Option<GammaVariant>,
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub boundary_margin: Option<f64>,
    pub lambda_rc: Option<f64>,
    pub lambda_dev: Option<f64>,
    pub lambda_var: Option<f64>,
    pub lambda_bound: Option<f64>,
    /// `"reference"` or `{ fixed = <gamma> }`.
    pub dev_target: Option<GammaTarget>,
    pub rc_horizon: Option<usize>,
    pub lr: Option<f64>,
    pub hidden: Option<usize>,
    pub init_gamma: Option<f64>,
    pub update_freq: Option<usize>,
    pub warmup: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub max_grad_norm: Option<f64>,
    pub ref_init: Option<f64>,
    pub ref_tau: Option<f64>,
    pub ref_period: Option<u64>,
    pub ref_adaptive: Option<bool>,
    pub fixed_gamma: Option<f64>,
    pub uncertainty_beta: Option<f64>,
    pub uncertainty_lr: Option<f64>,
    pub uncertainty_eta: Option<f64>,
    pub uncertainty_base: Option<f64>,
}

impl GammaSection {
    pub fn resolve(&self, defaults: &GammaSettings) -> GammaSettings {
        let d = defaults;
        GammaSettings {
            variant: self.variant.unwrap_or(d.variant),
            gamma_min: self.gamma_min.unwrap_or(d.gamma_min),
            gamma_max: self.gamma_max.unwrap_or(d.gamma_max),
            boundary_margin: self.boundary_margin.unwrap_or(d.boundary_margin),
            weights: GammaLossWeights {
                rc: self.lambda_rc.unwrap_or(d.weights.rc),
                dev: self.lambda_dev.unwrap_or(d.weights.dev),
                var: self.lambda_var.unwrap_or(d.weights.var),
                bound: self.lambda_bound.unwrap_or(d.weights.bound),
                target: self.dev_target.unwrap_or(d.weights.target),
            },
            rc_horizon: self.rc_horizon.unwrap_or(d.rc_horizon),
            lr: self.lr.unwrap_or(d.lr),
            hidden: self.hidden.unwrap_or(d.hidden),
            init_gamma: self.init_gamma.unwrap_or(d.init_gamma),
            update_freq: self.update_freq.unwrap_or(d.update_freq),
            warmup: self.warmup.unwrap_or(d.warmup),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            max_grad_norm: self.max_grad_norm.unwrap_or(d.max_grad_norm),
            ref_init: self.ref_init.unwrap_or(d.ref_init),
            ref_tau: self.ref_tau.unwrap_or(d.ref_tau),
            ref_period: self.ref_period.unwrap_or(d.ref_period),
            ref_adaptive: self.ref_adaptive.unwrap_or(d.ref_adaptive),
            fixed_gamma: self.fixed_gamma.unwrap_or(d.fixed_gamma),
            uncertainty_beta: self.uncertainty_beta.unwrap_or(d.uncertainty_beta),
            uncertainty_lr: self.uncertainty_lr.unwrap_or(d.uncertainty_lr),
            uncertainty_eta: self.uncertainty_eta.unwrap_or(d.uncertainty_eta),
            uncertainty_base: self.uncertainty_base.unwrap_or(d.uncertainty_base),
        }
    }

    /// Fully populated section for `settings`.
    pub fn explicit(s: &GammaSettings) -> Self {
        Self {
            variant: Some(s.variant),
            gamma_min: Some(s.gamma_min),
            gamma_max: Some(s.gamma_max),
            boundary_margin: Some(s.boundary_margin),
            lambda_rc: Some(s.weights.rc),
            lambda_dev: Some(s.weights.dev),
            lambda_var: Some(s.weights.var),
            lambda_bound: Some(s.weights.bound),
            dev_target: Some(s.weights.target),
            rc_horizon: Some(s.rc_horizon),
            lr: Some(s.lr),
            hidden: Some(s.hidden),
            init_gamma: Some(s.init_gamma),
            update_freq: Some(s.update_freq),
            warmup: Some(s.warmup),
            batch_size: Some(s.batch_size),
            epochs: Some(s.epochs),
            max_grad_norm: Some(s.max_grad_norm),
            ref_init: Some(s.ref_init),
            ref_tau: Some(s.ref_tau),
            ref_period: Some(s.ref_period),
            ref_adaptive: Some(s.ref_adaptive),
            fixed_gamma: Some(s.fixed_gamma),
            uncertainty_beta: Some(s.uncertainty_beta),
            uncertainty_lr: Some(s.uncertainty_lr),
            uncertainty_eta: Some(s.uncertainty_eta),
            uncertainty_base: Some(s.uncertainty_base),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvSection,
    pub sac: SacConfig,
    pub ppo: PpoConfig,
    pub gamma: GammaSection,
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply `ADAGAMMA_<SECTION>_<KEY>` pairs to a parsed document. Variables
/// with the prefix but an unknown section are rejected.
pub fn apply_overrides<I>(doc: &mut toml::Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let rest = rest.to_ascii_lowercase();
        let Some((section, key)) = SECTIONS
            .iter()
            .find_map(|s| rest.strip_prefix(&format!("{s}_")).map(|k| (*s, k.to_string())))
        else {
            return Err(Error::config(name, "unknown section in override"));
        };
        let table = doc
            .entry(section)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(table) = table else {
            return Err(Error::config(section, "expected a table"));
        };
        table.insert(key, parse_override_value(&raw));
    }
    Ok(())
}

fn serde_key_error(e: &toml::de::Error) -> Error {
    let msg = e.message().to_string();
    // toml reports unknown keys as "unknown field `x`, expected ..."
    let key = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".into());
    Error::config(key, msg)
}

impl RunConfig {
    /// Parse, apply overrides, fill defaults and validate.
    pub fn from_toml_str<I>(text: &str, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| serde_key_error(&e))?;
        apply_overrides(&mut doc, overrides)?;
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| serde_key_error(&e))?;
        cfg.gamma = GammaSection::explicit(&cfg.gamma_settings());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults_for(&self) -> GammaSettings {
        match self.run.algorithm {
            Algorithm::Sac => GammaSettings::sac_defaults(),
            Algorithm::Ppo => GammaSettings::ppo_defaults(),
        }
    }

    /// Effective discount settings for the selected algorithm.
    pub fn gamma_settings(&self) -> GammaSettings {
        self.gamma.resolve(&self.defaults_for())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            max_steps: self.run.max_steps,
            eval_interval: self.run.eval_interval,
            eval_episodes: self.run.eval_episodes,
            target_return: self.run.target_return,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.seeds.is_empty() {
            return Err(Error::config("run.seeds", "need at least one seed"));
        }
        for (key, v) in [("max_steps", r.max_steps), ("eval_interval", r.eval_interval)] {
            if v == 0 {
                return Err(Error::config(format!("run.{key}"), "must be >= 1"));
            }
        }
        if r.eval_episodes == 0 {
            return Err(Error::config("run.eval_episodes", "must be >= 1"));
        }
        if self.env.name == EnvName::Tabular {
            return Err(Error::config(
                "env.name",
                "tabular MDPs are only used by theory-check, not by an algorithm",
            ));
        }
        self.env.validate()?;
        match r.algorithm {
            Algorithm::Sac => self.sac.validate()?,
            Algorithm::Ppo => self.ppo.validate()?,
        }
        self.gamma_settings().validate()
    }

    /// The effective configuration as TOML. Loading it back yields an equal
    /// config.
    pub fn echo(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn write_echo(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.echo()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Read a config file and apply `ADAGAMMA_*` variables from the process
/// environment.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml_str(&text, std::env::vars())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml_str(text, Vec::new())
    }

    #[test]
    fn empty_file_gives_sac_pendulum_defaults() {
        let c = load("").unwrap();
        assert_eq!(c.run.algorithm, Algorithm::Sac);
        assert_eq!(c.env.name, EnvName::Pendulum);
        assert_eq!(c.sac, SacConfig::default());
        assert_eq!(c.gamma_settings(), GammaSettings::sac_defaults());
        assert_eq!(c.run.seeds.len(), 5);
        assert_eq!(c.run.eval_interval, 10_000);
    }

    #[test]
    fn ppo_picks_its_own_gamma_defaults() {
        let c = load("[run]\nalgorithm = \"ppo\"\n").unwrap();
        assert_eq!(c.gamma_settings(), GammaSettings::ppo_defaults());
        let c = load("[run]\nalgorithm = \"ppo\"\n[gamma]\nrc_horizon = 5\n").unwrap();
        assert_eq!(c.gamma_settings().rc_horizon, 5);
        assert_eq!(c.gamma_settings().lr, 3e-4);
    }

    #[test]
    fn gamma_max_one_rejected() {
        let e = load("[gamma]\ngamma_max = 1.0\n").unwrap_err();
        assert!(
            matches!(e, Error::Config { ref key, .. } if key.contains("gamma_max")),
            "{e}"
        );
    }

    #[test]
    fn unknown_key_named() {
        let e = load("[sac]\nhiddn = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "hiddn"), "{e}");
        let e = load("[nope]\nx = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "nope"), "{e}");
    }

    #[test]
    fn tabular_with_algorithm_rejected() {
        let e = load("[env]\nname = \"tabular\"\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "env.name"));
    }

    #[test]
    fn range_checks_name_the_key() {
        for (text, key) in [
            ("[run]\nseeds = []\n", "run.seeds"),
            ("[sac]\ntau = 2.0\n", "sac.tau"),
            ("[ppo]\nclip_eps = 0.0\n", "ppo.clip_eps"),
            ("[gamma]\nrc_horizon = 0\n", "gamma.rc_horizon"),
            ("[run]\neval_interval = 0\n", "run.eval_interval"),
        ] {
            let mut t = text.to_string();
            if key.starts_with("ppo") {
                t.push_str("[run]\nalgorithm = \"ppo\"\n");
            }
            let e = load(&t).unwrap_err();
            assert!(matches!(e, Error::Config { key: ref k, .. } if k == key), "{text}: {e}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let text = "[run]\nalgorithm = \"ppo\"\nseeds = [3, 4]\ntarget_return = -300.0\n\
                    [env]\nname = \"corridor\"\nhorizon = 50\n\
                    [gamma]\nvariant = \"naive-td\"\ndev_target = { fixed = 0.97 }\n";
        let a = load(text).unwrap();
        let b = load(&a.echo().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.gamma_settings().weights.target, GammaTarget::Fixed(0.97));
        let c = load(&b.echo().unwrap()).unwrap();
        assert_eq!(b, c);
        assert_eq!(load("").unwrap(), load(&load("").unwrap().echo().unwrap()).unwrap());
    }

    #[test]
    fn environment_overrides() {
        let vars = vec![
            ("ADAGAMMA_GAMMA_GAMMA_MIN".to_string(), "0.95".to_string()),
            ("ADAGAMMA_RUN_ALGORITHM".to_string(), "ppo".to_string()),
            ("ADAGAMMA_RUN_SEEDS".to_string(), "[7]".to_string()),
            ("ADAGAMMA_GAMMA_VARIANT".to_string(), "fixed".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ];
        let c = RunConfig::from_toml_str("[gamma]\ngamma_min = 0.9\n", vars).unwrap();
        assert_eq!(c.gamma_settings().gamma_min, 0.95);
        assert_eq!(c.gamma_settings().variant, GammaVariant::Fixed);
        assert_eq!(c.run.algorithm, Algorithm::Ppo);
        assert_eq!(c.run.seeds, vec![7]);
        let bad = vec![("ADAGAMMA_FOO_BAR".to_string(), "1".to_string())];
        assert!(RunConfig::from_toml_str("", bad).is_err());
        let bad = vec![("ADAGAMMA_SAC_NOT_A_KEY".to_string(), "1".to_string())];
        assert!(matches!(
            RunConfig::from_toml_str("", bad),
            Err(Error::Config { ref key, .. }) if key == "not_a_key"
        ));
    }

    #[test]
    fn builds_envs() {
        let c = load("[env]\nname = \"corridor\"\n").unwrap();
        let env = c.env.build().unwrap();
        assert_eq!(env.obs_dim(), 1);
        assert_eq!(env.horizon(), 100);
        let c = load("[env]\nhorizon = 50\n").unwrap();
        assert_eq!(c.env.build().unwrap().horizon(), 50);
    }
}
