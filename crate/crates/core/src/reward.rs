//! Terminal answer quality, normalized cost, and per-step reward assignment.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{StepRecord, TrajectoryResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_rounds_norm: u32,
    pub max_retrievals_norm: u32,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { alpha: 0.0, beta: 0.0, max_rounds_norm: 3, max_retrievals_norm: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_perf: f64,
    pub r_cost: f64,
    pub r_global: f64,
    pub per_step: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("reward normalizers must be at least 1")]
    BadNormalizer,
}

fn normalize_answer(s: &str) -> Vec<String> {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

/// Bag-of-tokens F1 after lowercasing, stripping punctuation and articles.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// `α·min(T, max)/max + β·min(N_ret, max)/max`.
pub fn cost_penalty(rounds: usize, retrievals: usize, cfg: &RewardConfig) -> f64 {
    let mr = cfg.max_rounds_norm.max(1) as f64;
    let mn = cfg.max_retrievals_norm.max(1) as f64;
    cfg.alpha * (rounds as f64).min(mr) / mr + cfg.beta * (retrievals as f64).min(mn) / mn
}

pub fn format_penalty(step: &StepRecord) -> f64 {
    if step.format_violation {
        -1.0
    } else {
        0.0
    }
}

/// Format penalty on every step, plus the global reward on the last one.
pub fn assign_step_rewards(
    trajectory: &TrajectoryResult,
    gold: &str,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    if cfg.max_rounds_norm == 0 || cfg.max_retrievals_norm == 0 {
        return Err(RewardError::BadNormalizer);
    }
    if trajectory.steps.is_empty() {
        return Err(RewardError::EmptyTrajectory);
    }
    let r_perf = token_f1(&trajectory.final_answer, gold);
    let r_cost = cost_penalty(trajectory.rounds_used, trajectory.retrievals_used, cfg);
    let r_global = r_perf - r_cost;
    let last = trajectory.steps.len() - 1;
    let per_step = trajectory
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| format_penalty(s) + if i == last { r_global } else { 0.0 })
        .collect();
    Ok(RewardBreakdown { r_perf, r_cost, r_global, per_step })
}
