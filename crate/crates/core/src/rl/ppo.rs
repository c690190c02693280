//! Clipped-surrogate updates for the toy planner and the linear value
//! estimator, with hand-written gradients and Adam.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::buffer::Transition;
use super::RlError;
use crate::policy::{allowed_actions, ToyPlannerPolicy, ValueEstimator};
use crate::workflow::N_ACTIONS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Normalize advantages to zero mean and unit variance per batch.
    pub adv_norm: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            epochs: 2,
            minibatch: 4096,
            lr: 0.01,
            entropy_coef: 0.1,
            value_coef: 0.5,
            adv_norm: true,
        }
    }
}

/// What one policy-gradient term needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub features: Vec<f64>,
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub solve_only: bool,
}

/// `min(ρÂ, clip(ρ, 1−ε, 1+ε)Â)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Mean over samples of the clipped term plus `entropy_coef · H(π)`.
pub fn surrogate_objective(policy: &ToyPlannerPolicy, samples: &[PolicySample], cfg: &PpoConfig) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            let p = policy.distribution_masked(&s.features, s.solve_only);
            let lp = policy.log_prob_masked(&s.features, s.action, s.solve_only).expect("action within mask");
            let ratio = (lp - s.log_prob_old).exp();
            clipped_objective(ratio, s.advantage, cfg.clip_eps) + cfg.entropy_coef * entropy(&p)
        })
        .sum();
    total / samples.len() as f64
}

/// Analytic gradient of [`surrogate_objective`] with respect to the
/// policy weights, laid out like [`ToyPlannerPolicy::weights`].
pub fn surrogate_gradient(policy: &ToyPlannerPolicy, samples: &[PolicySample], cfg: &PpoConfig) -> Vec<f64> {
    let mut grad = vec![0.0; policy.weights().len()];
    if samples.is_empty() {
        return grad;
    }
    let scale = 1.0 / (samples.len() as f64 * policy.temperature());
    for s in samples {
        let n = allowed_actions(s.solve_only);
        let p = policy.distribution_masked(&s.features, s.solve_only);
        let lp = policy.log_prob_masked(&s.features, s.action, s.solve_only).expect("action within mask");
        let ratio = (lp - s.log_prob_old).exp();
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * s.advantage;
        // Only the unclipped branch depends on θ when it is the active minimum.
        let coef = if unclipped <= clipped { s.advantage * ratio } else { 0.0 };
        let h = entropy(&p[..n]);
        let mut dz = [0.0; N_ACTIONS];
        for j in 0..n {
            let onehot = if j == s.action { 1.0 } else { 0.0 };
            dz[j] = coef * (onehot - p[j]) - cfg.entropy_coef * p[j] * (p[j].ln() + h);
        }
        for (f, x) in s.features.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            let row = &mut grad[f * N_ACTIONS..(f + 1) * N_ACTIONS];
            for j in 0..n {
                row[j] += x * dz[j] * scale;
            }
        }
    }
    grad
}

/// `value_coef · mean((V − target)²)` over `(features, target)` pairs.
pub fn value_loss(value: &ValueEstimator, samples: &[(&[f64], f64)], value_coef: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    value_coef * samples.iter().map(|(x, y)| (value.value(x) - y).powi(2)).sum::<f64>() / samples.len() as f64
}

/// Gradient of [`value_loss`]: weights then bias.
pub fn value_gradient(value: &ValueEstimator, samples: &[(&[f64], f64)], value_coef: f64) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; value.weights.len()];
    let mut gb = 0.0;
    if samples.is_empty() {
        return (gw, gb);
    }
    let scale = 2.0 * value_coef / samples.len() as f64;
    for (x, y) in samples {
        let err = (value.value(x) - y) * scale;
        for (g, xi) in gw.iter_mut().zip(x.iter()) {
            *g += err * xi;
        }
        gb += err;
    }
    (gw, gb)
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Step of size `lr` along `direction` (ascent on an objective, or a
    /// negated gradient for descent). Returns the parameter delta.
    pub fn delta(&mut self, direction: &[f64], lr: f64) -> Vec<f64> {
        assert_eq!(direction.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        direction
            .iter()
            .enumerate()
            .map(|(i, g)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
            })
            .collect()
    }
}

/// Optimizer state carried across updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl Optimizers {
    pub fn new(policy: &ToyPlannerPolicy, value: &ValueEstimator) -> Self {
        Optimizers { policy: Adam::new(policy.weights().len()), value: Adam::new(value.weights.len() + 1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    pub updates: usize,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub value_loss: f64,
    pub adv_mean: f64,
    pub adv_std: f64,
}

/// Runs `epochs` passes of shuffled mini-batches over the trainable part of
/// `batch`, one gradient step per mini-batch.
///
/// Mini-batches mix roles; the policy term uses the steps that carry a
/// toy-planner action, the value term uses every trainable step.
pub fn ppo_update(
    policy: &mut ToyPlannerPolicy,
    value: &mut ValueEstimator,
    opt: &mut Optimizers,
    batch: &[Transition],
    cfg: &PpoConfig,
    rng: &mut dyn RngCore,
) -> Result<PpoStats, RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    if cfg.minibatch == 0 || cfg.clip_eps <= 0.0 {
        return Err(RlError::Configuration("minibatch and clip_eps must be positive".into()));
    }
    let trainable: Vec<&Transition> = batch.iter().filter(|t| t.trainable).collect();
    let mut stats = PpoStats::default();
    if trainable.is_empty() {
        return Ok(stats);
    }
    let n = trainable.len() as f64;
    let mean = trainable.iter().map(|t| t.advantage).sum::<f64>() / n;
    let std = (trainable.iter().map(|t| (t.advantage - mean).powi(2)).sum::<f64>() / n).sqrt();
    stats.adv_mean = mean;
    stats.adv_std = std;
    let norm = |a: f64| if cfg.adv_norm { (a - mean) / (std + 1e-8) } else { a };

    let mut order: Vec<usize> = (0..trainable.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let samples: Vec<PolicySample> = chunk
                .iter()
                .map(|i| trainable[*i])
                .filter(|t| t.is_policy_sample())
                .map(|t| PolicySample {
                    features: t.features.clone(),
                    action: t.action_index.expect("policy sample"),
                    log_prob_old: t.log_prob_old.expect("policy sample"),
                    advantage: norm(t.advantage),
                    solve_only: t.solve_only,
                })
                .collect();
            let targets: Vec<(&[f64], f64)> =
                chunk.iter().map(|i| (trainable[*i].features.as_slice(), trainable[*i].return_target)).collect();
            if cfg.lr > 0.0 {
                if !samples.is_empty() {
                    let g = surrogate_gradient(policy, &samples, cfg);
                    let d = opt.policy.delta(&g, cfg.lr);
                    policy.apply_gradient(&d);
                }
                let (gw, gb) = value_gradient(value, &targets, cfg.value_coef);
                let mut dir: Vec<f64> = gw.iter().map(|g| -g).collect();
                dir.push(-gb);
                let d = opt.value.delta(&dir, cfg.lr);
                value.weights.iter_mut().zip(&d).for_each(|(w, dw)| *w += dw);
                value.bias += d[d.len() - 1];
            }
            stats.updates += 1;
        }
    }

    // Diagnostics under the final parameters.
    let samples: Vec<&Transition> = trainable.iter().copied().filter(|t| t.is_policy_sample()).collect();
    if !samples.is_empty() {
        let mut ratio_sum = 0.0;
        let mut clipped = 0usize;
        let mut ent = 0.0;
        for t in &samples {
            let a = t.action_index.expect("policy sample");
            let lp = policy.log_prob_masked(&t.features, a, t.solve_only).expect("action within mask");
            let r = (lp - t.log_prob_old.expect("policy sample")).exp();
            ratio_sum += r;
            if (r - 1.0).abs() > cfg.clip_eps {
                clipped += 1;
            }
            ent += entropy(&policy.distribution_masked(&t.features, t.solve_only));
        }
        let m = samples.len() as f64;
        stats.mean_ratio = ratio_sum / m;
        stats.clip_fraction = clipped as f64 / m;
        stats.entropy = ent / m;
    }
    let targets: Vec<(&[f64], f64)> = trainable.iter().map(|t| (t.features.as_slice(), t.return_target)).collect();
    stats.value_loss = value_loss(value, &targets, cfg.value_coef);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_fixtures() {
        assert_eq!(clipped_objective(1.0, 0.7, 0.2), 0.7);
        assert!((clipped_objective(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn on_policy_surrogate_is_mean_advantage() {
        let policy = ToyPlannerPolicy::with_dim(2, 1.0);
        let cfg = PpoConfig { entropy_coef: 0.0, ..PpoConfig::default() };
        let x = vec![1.0, 0.0];
        let lp = policy.log_prob_of(&x, 0).unwrap();
        let samples: Vec<PolicySample> = [0.5, -0.25, 1.0]
            .iter()
            .map(|a| PolicySample { features: x.clone(), action: 0, log_prob_old: lp, advantage: *a, solve_only: false })
            .collect();
        assert!((surrogate_objective(&policy, &samples, &cfg) - 1.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_lr_is_noop() {
        let mut adam = Adam::new(3);
        assert_eq!(adam.delta(&[1.0, -2.0, 0.5], 0.0), vec![0.0, 0.0, 0.0]);
    }
}
