//! Run configuration: a nested TOML file plus `key=value` overrides.
//!
//! Every key has a default and unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineConfig;
use crate::environment::{OracleConfig, TaskCounts, WorldParams};
use crate::policy::RemoteConfig;
use crate::reward::RewardConfig;
use crate::rl::{AdvantageConfig, PpoConfig, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("bad override {0:?}: expected key=value")]
    BadOverride(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSection {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub adv_norm: bool,
    pub iterations: usize,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub temperature: f64,
}

impl Default for RlSection {
    fn default() -> Self {
        let a = AdvantageConfig::default();
        let p = PpoConfig::default();
        let t = TrainConfig::default();
        RlSection {
            gamma: a.gamma,
            lambda: a.lambda,
            clip_eps: p.clip_eps,
            epochs: p.epochs,
            minibatch: p.minibatch,
            lr: p.lr,
            entropy_coef: p.entropy_coef,
            value_coef: p.value_coef,
            adv_norm: p.adv_norm,
            iterations: t.iterations,
            batch_size: t.batch_size,
            eval_interval: t.eval_interval,
            temperature: t.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub corpus: Option<String>,
    pub tasks: Option<String>,
    pub eval_tasks: Option<String>,
    pub entities: usize,
    pub distractors: usize,
    pub single: usize,
    pub serial: usize,
    pub parallel: usize,
    pub eval_single: usize,
    pub eval_serial: usize,
    pub eval_parallel: usize,
    pub noise_rate: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let w = WorldParams::default();
        EnvSection {
            corpus: None,
            tasks: None,
            eval_tasks: None,
            entities: w.entities,
            distractors: w.distractors,
            single: 100,
            serial: 100,
            parallel: 100,
            eval_single: 67,
            eval_serial: 67,
            eval_parallel: 66,
            noise_rate: DEFAULT_NOISE_RATE,
        }
    }
}

/// Executor corruption rate used for training runs.
pub const DEFAULT_NOISE_RATE: f64 = 0.32;

impl EnvSection {
    pub fn world(&self) -> WorldParams {
        WorldParams { entities: self.entities, distractors: self.distractors }
    }

    pub fn train_counts(&self) -> TaskCounts {
        TaskCounts { single: self.single, serial: self.serial, parallel: self.parallel }
    }

    pub fn eval_counts(&self) -> TaskCounts {
        TaskCounts { single: self.eval_single, serial: self.eval_serial, parallel: self.eval_parallel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Scripted,
    Remote,
    Toy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Replay script for the scripted backend; without one the world-aware
    /// oracle executors are used.
    pub script: Option<String>,
    /// Trained planner weights for the toy backend.
    pub weights: Option<String>,
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Rollout threads; 0 uses every core.
    pub jobs: usize,
    pub reward: RewardConfig,
    pub rl: RlSection,
    pub engine: EngineConfig,
    pub env: EnvSection,
    pub backend: BackendSection,
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut t) => t.remove("v").expect("probe key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value` inside a TOML table, creating sub-tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(assignment.into()));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads an optional file, then applies overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let raw = match path {
            Some(p) => fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml(&raw, overrides)
    }

    pub fn from_toml(raw: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        let rl = &self.rl;
        TrainConfig {
            seed: self.seed,
            iterations: rl.iterations,
            batch_size: rl.batch_size,
            eval_interval: rl.eval_interval,
            temperature: rl.temperature,
            jobs: self.jobs,
            reward: self.reward,
            advantage: AdvantageConfig { gamma: rl.gamma, lambda: rl.lambda },
            ppo: PpoConfig {
                clip_eps: rl.clip_eps,
                epochs: rl.epochs,
                minibatch: rl.minibatch,
                lr: rl.lr,
                entropy_coef: rl.entropy_coef,
                value_coef: rl.value_coef,
                adv_norm: rl.adv_norm,
            },
            engine: self.engine,
            oracle: OracleConfig { noise_rate: self.env.noise_rate, seed: self.seed },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::from_toml("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        let c = RunConfig::from_toml(
            "[reward]\nalpha = 0.1\n",
            &["reward.beta=0.2".into(), "rl.adv_norm=false".into(), "env.corpus=data/c.tsv".into()],
        )
        .unwrap();
        assert_eq!(c.reward.alpha, 0.1);
        assert_eq!(c.reward.beta, 0.2);
        assert!(!c.rl.adv_norm);
        assert_eq!(c.env.corpus.as_deref(), Some("data/c.tsv"));
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(RunConfig::from_toml("[reward]\ngamma = 1.0\n", &[]).is_err());
        assert!(RunConfig::from_toml("", &["rl.nope=1".into()]).is_err());
        assert!(RunConfig::from_toml("", &["novalue".into()]).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let mut c = RunConfig::default();
        c.seed = 7;
        c.reward.alpha = 0.5;
        c.env.tasks = Some("t.jsonl".into());
        assert_eq!(RunConfig::from_toml(&c.to_toml(), &[]).unwrap(), c);
    }
}
