use serde::{Deserialize, Serialize};

use super::RlError;
use crate::engine::TrajectoryResult;
use crate::policy::{featurize, ValueEstimator};
use crate::reward::{format_penalty, RewardBreakdown};
use crate::trace::Role;

/// One flattened agent step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: Vec<f64>,
    pub role: Role,
    pub action_index: Option<usize>,
    pub action_text: String,
    pub solve_only: bool,
    pub reward: f64,
    pub log_prob_old: Option<f64>,
    pub value: f64,
    pub advantage: f64,
    pub return_target: f64,
    /// RA steps are bookkeeping only and never contribute gradients.
    pub trainable: bool,
}

impl Transition {
    /// Carries what a policy-gradient term needs.
    pub fn is_policy_sample(&self) -> bool {
        self.trainable && self.action_index.is_some() && self.log_prob_old.is_some()
    }
}

/// Transitions from many trajectories and roles in one pool.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperienceBuffer {
    pub transitions: Vec<Transition>,
}

impl ExperienceBuffer {
    pub fn extend(&mut self, items: impl IntoIterator<Item = Transition>) {
        self.transitions.extend(items);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Orders the steps of one trajectory by `(t, k)` and attaches rewards.
///
/// The rewards must be the ones computed for this trajectory: each entry is
/// checked against the step's format flag and the terminal global reward.
pub fn flatten(trajectory: &TrajectoryResult, rewards: &RewardBreakdown) -> Result<Vec<Transition>, RlError> {
    let steps = &trajectory.steps;
    if rewards.per_step.len() != steps.len() {
        return Err(RlError::Misalignment(format!(
            "{} rewards for {} steps",
            rewards.per_step.len(),
            steps.len()
        )));
    }
    if steps.windows(2).any(|w| (w[0].t, w[0].k) >= (w[1].t, w[1].k)) {
        return Err(RlError::Misalignment("steps are not in (t, k) order".into()));
    }
    let last = steps.len().saturating_sub(1);
    let mut out = Vec::with_capacity(steps.len());
    for (i, (step, r)) in steps.iter().zip(&rewards.per_step).enumerate() {
        let expected = format_penalty(step) + if i == last { rewards.r_global } else { 0.0 };
        if (expected - r).abs() > 1e-12 {
            return Err(RlError::Misalignment(format!("reward {r} at step {i} does not match its step")));
        }
        out.push(Transition {
            features: featurize(&step.target_query),
            role: step.role,
            action_index: step.action_index,
            action_text: step.action.clone(),
            solve_only: step.solve_only,
            reward: *r,
            log_prob_old: step.log_prob,
            value: 0.0,
            advantage: 0.0,
            return_target: 0.0,
            trainable: step.role.is_trainable(),
        });
    }
    Ok(out)
}

/// Fills value estimates, advantages and returns for one trajectory's
/// transitions (terminal bootstrap 0).
pub fn annotate(
    transitions: &mut [Transition],
    value: &ValueEstimator,
    cfg: &super::AdvantageConfig,
) -> Result<(), RlError> {
    let mut values: Vec<f64> = transitions.iter().map(|t| value.value(&t.features)).collect();
    values.push(0.0);
    let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
    let (adv, ret) = super::compute_gae(&rewards, &values, cfg)?;
    for (i, t) in transitions.iter_mut().enumerate() {
        t.value = values[i];
        t.advantage = adv[i];
        t.return_target = ret[i];
    }
    Ok(())
}
