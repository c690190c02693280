use serde::{Deserialize, Serialize};

use super::RlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        AdvantageConfig { gamma: 1.0, lambda: 0.95 }
    }
}

/// Generalized advantage estimation by backward recursion.
///
/// `values` carries one bootstrap entry past the last reward (0 for a
/// terminal state). Returns `(advantages, returns)` with
/// `returns[i] = advantages[i] + values[i]`.
pub fn compute_gae(rewards: &[f64], values: &[f64], cfg: &AdvantageConfig) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    if values.len() != rewards.len() + 1 {
        return Err(RlError::LengthMismatch { expected: rewards.len() + 1, got: values.len() });
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        let delta = rewards[i] + cfg.gamma * values[i + 1] - values[i];
        acc = delta + cfg.gamma * cfg.lambda * acc;
        adv[i] = acc;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gae(r: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
        compute_gae(r, v, &AdvantageConfig { gamma, lambda }).unwrap().0
    }

    #[test]
    fn fixtures() {
        assert_eq!(gae(&[1.0], &[0.0, 0.0], 0.7, 0.3), vec![1.0]);
        assert_eq!(gae(&[0.0, 0.0, 1.0], &[0.0; 4], 1.0, 1.0), vec![1.0, 1.0, 1.0]);
        assert_eq!(gae(&[0.0, 1.0], &[0.0; 3], 0.5, 1.0), vec![0.5, 1.0]);
    }

    #[test]
    fn returns_add_values() {
        let (a, r) = compute_gae(&[0.5, -1.0], &[0.2, 0.1, 0.0], &AdvantageConfig::default()).unwrap();
        assert!((r[0] - (a[0] + 0.2)).abs() < 1e-15);
        assert!((r[1] - (a[1] + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_gae(&[1.0], &[0.0], &AdvantageConfig::default()),
            Err(RlError::LengthMismatch { .. })
        ));
    }
}
