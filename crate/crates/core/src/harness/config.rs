use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::mle::ConfidenceSpec;
use crate::policy::PessimismMode;
use crate::selector::{DesignConfig, SelectorKind};
use crate::sim::{default_theta_star, SimSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Contextual-bandit benchmark generated by [`crate::sim::gen_sim_env`].
    Sim61,
    /// Four-action scenario without coverage of the optimal action.
    GreedyTrap,
    /// Pool, teachers and evaluation contexts read from `env_file`.
    Custom,
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sim61" | "sim" => Ok(Experiment::Sim61),
            "greedy_trap" | "trap" => Ok(Experiment::GreedyTrap),
            "custom" => Ok(Experiment::Custom),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Accepts either a scalar or a list in config files.
fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// Everything needed to reproduce a batch of runs.
///
/// `method`, `budget_t` and `batch_k` accept a single value or a list; every
/// combination forms one cell with `replications` seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(deserialize_with = "one_or_many")]
    pub method: Vec<SelectorKind>,
    #[serde(deserialize_with = "one_or_many")]
    pub budget_t: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub batch_k: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    pub n: usize,
    pub n_eval: usize,
    pub d: usize,
    pub g: usize,
    pub m: usize,
    pub beta_low: f64,
    pub beta_high: f64,
    pub c_beta: f64,
    pub c_theta: f64,
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
    pub pessimism_mode: PessimismMode,
    pub ridge: f64,
    /// Initial design size; `None` means `2d`.
    pub t0: Option<usize>,
    pub no_repeat: bool,
    pub output_dir: Option<PathBuf>,
    /// Environment file for [`Experiment::Custom`].
    pub env_file: Option<PathBuf>,
    pub write_traces: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimSpec::default();
        let conf = ConfidenceSpec::default();
        let design = DesignConfig::default();
        Self {
            experiment: Experiment::Sim61,
            method: vec![SelectorKind::DualDOptimal],
            budget_t: vec![1000],
            batch_k: vec![50],
            replications: 1,
            base_seed: 0,
            n: sim.n,
            n_eval: sim.n_eval,
            d: sim.d,
            g: sim.g,
            m: sim.m,
            beta_low: sim.beta_low,
            beta_high: sim.beta_high,
            c_beta: sim.c_beta,
            c_theta: sim.c_theta,
            c1: conf.c1,
            c2: conf.c2,
            delta: conf.delta,
            pessimism_mode: PessimismMode::PerContext,
            ridge: design.ridge,
            t0: None,
            no_repeat: false,
            output_dir: None,
            env_file: None,
            write_traces: true,
        }
    }
}

impl RunConfig {
    /// Reads a TOML (`.toml`) or JSON (anything else) config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn t0(&self) -> usize {
        self.t0.unwrap_or(2 * self.d)
    }

    pub fn confidence(&self) -> Result<ConfidenceSpec> {
        ConfidenceSpec::new(self.c1, self.c2, self.delta).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn design(&self) -> DesignConfig {
        DesignConfig {
            ridge: self.ridge,
            bound_c_theta: self.c_theta,
            ..DesignConfig::default()
        }
    }

    /// Benchmark spec for replication seed `seed`.
    pub fn sim_spec(&self, seed: u64) -> SimSpec {
        SimSpec {
            n: self.n,
            n_eval: self.n_eval,
            d: self.d,
            g: self.g,
            m: self.m,
            beta_low: self.beta_low,
            beta_high: self.beta_high,
            c_beta: self.c_beta,
            c_theta: self.c_theta,
            theta_star: default_theta_star(self.d),
            seed,
        }
    }

    /// Seed of replication `rep`.
    pub fn seed_for(&self, rep: usize) -> u64 {
        self.base_seed.wrapping_add(rep as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if self.method.is_empty() || self.budget_t.is_empty() || self.batch_k.is_empty() {
            return fail("method, budget_t and batch_k need at least one value".into());
        }
        if self.batch_k.contains(&0) {
            return fail("batch_k must be at least 1".into());
        }
        if !(self.ridge >= 0.0) {
            return fail("ridge must be nonnegative".into());
        }
        self.confidence()?;
        match self.experiment {
            Experiment::Sim61 => {
                self.sim_spec(self.base_seed)
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
                if self.t0() == 0 {
                    return fail("t0 must be at least 1".into());
                }
                if let Some(t) = self.budget_t.iter().find(|t| **t < self.t0()) {
                    return fail(format!("budget_t {t} is below t0 = {}", self.t0()));
                }
            }
            Experiment::GreedyTrap => {
                if self.budget_t.contains(&0) {
                    return fail("budget_t must be at least 1".into());
                }
            }
            Experiment::Custom => {
                if self.env_file.is_none() {
                    return fail("custom experiments need env_file".into());
                }
                if let Some(t) = self.budget_t.iter().find(|t| **t < self.t0()) {
                    return fail(format!("budget_t {t} is below t0 = {}", self.t0()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_accepts_scalars_and_lists() {
        let cfg: RunConfig = toml::from_str(
            r#"
            experiment = "sim61"
            method = ["dual_d_optimal", "random"]
            budget_t = 500
            batch_k = [10, 50]
            replications = 3
            beta_high = 3.0
            pessimism_mode = "joint"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.method, vec![SelectorKind::DualDOptimal, SelectorKind::Random]);
        assert_eq!(cfg.budget_t, vec![500]);
        assert_eq!(cfg.batch_k, vec![10, 50]);
        assert_eq!(cfg.pessimism_mode, PessimismMode::Joint);
        assert_eq!(cfg.n, 10_000);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad = [
            RunConfig {
                replications: 0,
                ..RunConfig::default()
            },
            RunConfig {
                budget_t: vec![5],
                ..RunConfig::default()
            },
            RunConfig {
                delta: 1.5,
                ..RunConfig::default()
            },
            RunConfig {
                beta_high: 5.0,
                ..RunConfig::default()
            },
            RunConfig {
                experiment: Experiment::Custom,
                ..RunConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        RunConfig::default().validate().unwrap();
    }
}
