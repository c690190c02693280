//! Versioned binary file holding the planner and value weights.
//!
//! Layout (little endian): magic `RAGOW`, version byte, feature_dim u32,
//! action count u32, temperature f64, planner weights f64 × dim × actions,
//! value weights f64 × dim, value bias f64.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::policy::{ToyPlannerPolicy, ValueEstimator};
use crate::workflow::N_ACTIONS;

pub const MAGIC: &[u8; 5] = b"RAGOW";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not a weights file")]
    BadMagic,
    #[error("unsupported weights format version {0}")]
    UnsupportedVersion(u8),
    #[error("weights file truncated or malformed")]
    Malformed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(policy: &ToyPlannerPolicy, value: &ValueEstimator) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * (policy.weights().len() + value.weights.len()));
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(policy.feature_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(N_ACTIONS as u32).to_le_bytes());
    out.extend_from_slice(&policy.temperature().to_le_bytes());
    for w in policy.weights().iter().chain(&value.weights) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&value.bias.to_le_bytes());
    out
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], WeightsError> {
        if self.0.len() < n {
            return Err(WeightsError::Malformed);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, WeightsError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ToyPlannerPolicy, ValueEstimator), WeightsError> {
    let mut r = Reader(bytes);
    if r.take(MAGIC.len()).map_err(|_| WeightsError::BadMagic)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = r.take(1)?[0];
    if version != FORMAT_VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let dim = r.u32()? as usize;
    if r.u32()? as usize != N_ACTIONS {
        return Err(WeightsError::Malformed);
    }
    let temperature = r.f64()?;
    if !(temperature > 0.0) {
        return Err(WeightsError::Malformed);
    }
    let theta = (0..dim * N_ACTIONS).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let phi = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let bias = r.f64()?;
    if !r.0.is_empty() {
        return Err(WeightsError::Malformed);
    }
    let policy = ToyPlannerPolicy::from_weights(dim, temperature, theta).map_err(|_| WeightsError::Malformed)?;
    Ok((policy, ValueEstimator { weights: phi, bias }))
}

pub fn save(path: impl AsRef<Path>, policy: &ToyPlannerPolicy, value: &ValueEstimator) -> Result<(), WeightsError> {
    Ok(fs::write(path, encode(policy, value))?)
}

pub fn load(path: impl AsRef<Path>) -> Result<(ToyPlannerPolicy, ValueEstimator), WeightsError> {
    decode(&fs::read(path)?)
}
