//! Trainable linear-softmax planner over the eight canonical plans, and a
//! linear value estimator on the same features.

use rand::{Rng, RngCore};
use thiserror::Error;

use super::features::{featurize, FEATURE_DIM};
use super::{ActionSample, BackendError, PolicyBackend};
use crate::trace::{Observation, Role};
use crate::workflow::{encode, plan_menu, N_ACTIONS, N_SOLVE_ACTIONS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("action index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("feature vector has {got} entries, expected {expected}")]
    FeatureDim { expected: usize, got: usize },
}

/// Number of selectable actions under the depth restriction.
pub fn allowed_actions(solve_only: bool) -> usize {
    if solve_only {
        N_SOLVE_ACTIONS
    } else {
        N_ACTIONS
    }
}

/// `softmax(θᵀx / temperature)` over the plan menu.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPlannerPolicy {
    feature_dim: usize,
    temperature: f64,
    /// Row-major `[feature][action]`.
    weights: Vec<f64>,
}

impl ToyPlannerPolicy {
    pub fn new(temperature: f64) -> Self {
        Self::with_dim(FEATURE_DIM, temperature)
    }

    pub fn with_dim(feature_dim: usize, temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        ToyPlannerPolicy { feature_dim, temperature, weights: vec![0.0; feature_dim * N_ACTIONS] }
    }

    pub fn from_weights(feature_dim: usize, temperature: f64, weights: Vec<f64>) -> Result<Self, PolicyError> {
        if weights.len() != feature_dim * N_ACTIONS {
            return Err(PolicyError::FeatureDim { expected: feature_dim * N_ACTIONS, got: weights.len() });
        }
        assert!(temperature > 0.0, "temperature must be positive");
        Ok(ToyPlannerPolicy { feature_dim, temperature, weights })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_mut(&mut self, feature: usize, action: usize) -> &mut f64 {
        &mut self.weights[feature * N_ACTIONS + action]
    }

    pub fn logits(&self, x: &[f64]) -> [f64; N_ACTIONS] {
        debug_assert_eq!(x.len(), self.feature_dim);
        let mut z = [0.0; N_ACTIONS];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * N_ACTIONS..(i + 1) * N_ACTIONS];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        z.iter_mut().for_each(|v| *v /= self.temperature);
        z
    }

    /// Probabilities over the first `allowed_actions(solve_only)` entries;
    /// masked actions get zero.
    pub fn distribution_masked(&self, x: &[f64], solve_only: bool) -> [f64; N_ACTIONS] {
        let n = allowed_actions(solve_only);
        let z = self.logits(x);
        let max = z[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p = [0.0; N_ACTIONS];
        let mut total = 0.0;
        for j in 0..n {
            p[j] = (z[j] - max).exp();
            total += p[j];
        }
        p[..n].iter_mut().for_each(|v| *v /= total);
        p
    }

    pub fn distribution(&self, x: &[f64]) -> [f64; N_ACTIONS] {
        self.distribution_masked(x, false)
    }

    /// Exact log-probability via log-sum-exp.
    pub fn log_prob_masked(&self, x: &[f64], action: usize, solve_only: bool) -> Result<f64, PolicyError> {
        let n = allowed_actions(solve_only);
        if action >= n {
            return Err(PolicyError::IndexOutOfRange(action));
        }
        let z = self.logits(x);
        let max = z[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z[..n].iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(z[action] - lse)
    }

    pub fn log_prob_of(&self, x: &[f64], action: usize) -> Result<f64, PolicyError> {
        self.log_prob_masked(x, action, false)
    }

    /// `θ += delta`.
    pub fn apply_gradient(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.weights.len());
        self.weights.iter_mut().zip(delta).for_each(|(w, d)| *w += d);
    }

    pub fn sample(&self, x: &[f64], solve_only: bool, rng: &mut dyn RngCore) -> usize {
        let p = self.distribution_masked(x, solve_only);
        let n = allowed_actions(solve_only);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, pj) in p[..n].iter().enumerate() {
            acc += pj;
            if u < acc {
                return j;
            }
        }
        n - 1
    }

    pub fn greedy(&self) -> GreedyPlanner<'_> {
        GreedyPlanner(self)
    }

    fn sample_action(&self, index: usize, x: &[f64], solve_only: bool) -> ActionSample {
        let log_prob = self.log_prob_masked(x, index, solve_only).expect("index within mask");
        ActionSample {
            text: encode(&plan_menu()[index]),
            log_prob: Some(log_prob),
            action_index: Some(index),
        }
    }
}

impl PolicyBackend for ToyPlannerPolicy {
    fn supports(&self, role: Role) -> bool {
        role == Role::Planner
    }

    fn act(&self, role: Role, obs: &Observation, rng: &mut dyn RngCore) -> Result<ActionSample, BackendError> {
        if role != Role::Planner {
            return Err(BackendError::UnsupportedRole(role));
        }
        let x = featurize(&obs.target_query);
        let solve_only = obs.global_selection.solve_only;
        let index = self.sample(&x, solve_only, rng);
        Ok(self.sample_action(index, &x, solve_only))
    }
}

/// Deterministic argmax view of a [`ToyPlannerPolicy`], used for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPlanner<'a>(pub &'a ToyPlannerPolicy);

impl PolicyBackend for GreedyPlanner<'_> {
    fn supports(&self, role: Role) -> bool {
        role == Role::Planner
    }

    fn act(&self, role: Role, obs: &Observation, _rng: &mut dyn RngCore) -> Result<ActionSample, BackendError> {
        if role != Role::Planner {
            return Err(BackendError::UnsupportedRole(role));
        }
        let x = featurize(&obs.target_query);
        let solve_only = obs.global_selection.solve_only;
        let p = self.0.distribution_masked(&x, solve_only);
        let n = allowed_actions(solve_only);
        let mut best = 0;
        for j in 1..n {
            if p[j] > p[best] {
                best = j;
            }
        }
        Ok(self.0.sample_action(best, &x, solve_only))
    }
}

/// `V(x) = φ·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimator {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ValueEstimator {
    pub fn new(feature_dim: usize) -> Self {
        ValueEstimator { weights: vec![0.0; feature_dim], bias: 0.0 }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_are_uniform() {
        let p = ToyPlannerPolicy::new(1.0);
        let x = featurize("who directed stone river");
        for a in 0..N_ACTIONS {
            assert!((p.log_prob_of(&x, a).unwrap() - (1.0f64 / 8.0).ln()).abs() < 1e-12);
        }
        assert!((p.log_prob_of(&x, 0).unwrap() + 2.0794).abs() < 1e-4);
        assert_eq!(p.log_prob_of(&x, 8), Err(PolicyError::IndexOutOfRange(8)));
        assert_eq!(p.log_prob_masked(&x, 6, true), Err(PolicyError::IndexOutOfRange(6)));
    }

    #[test]
    fn dominant_logit() {
        let mut p = ToyPlannerPolicy::with_dim(1, 1.0);
        *p.weight_mut(0, 3) = 10.0;
        let lp = p.log_prob_of(&[1.0], 3).unwrap();
        // -ln(1 + 7 e^-10)
        let expected = -(1.0 + 7.0 * (-10.0f64).exp()).ln();
        assert!((lp - expected).abs() < 1e-15);
        assert!((lp + 3.178e-4).abs() < 1e-7);
    }

    #[test]
    fn masked_distribution() {
        let mut p = ToyPlannerPolicy::with_dim(2, 0.5);
        *p.weight_mut(0, 6) = 3.0;
        let d = p.distribution_masked(&[1.0, 0.0], true);
        assert_eq!(&d[6..], &[0.0, 0.0]);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d[..6].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn sampling_respects_mask() {
        let mut p = ToyPlannerPolicy::with_dim(1, 1.0);
        *p.weight_mut(0, 7) = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert!(p.sample(&[1.0], true, &mut rng) < 6);
        }
        assert_eq!(p.sample(&[1.0], false, &mut rng), 7);
    }

    #[test]
    fn value_is_linear() {
        let mut v = ValueEstimator::new(3);
        v.weights = vec![1.0, -2.0, 0.5];
        v.bias = 0.25;
        assert_eq!(v.value(&[1.0, 1.0, 2.0]), 0.25);
    }
}
