use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ActionSample, BackendError, PolicyBackend};
use crate::trace::{Observation, Role};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed script: {0}")]
    Json(#[from] serde_json::Error),
}

/// Scripted outputs keyed by role and by the query the role acts on (the
/// original question for AS, the target sub-query otherwise).
///
/// File format: a JSON object mapping role names to `{query: output}` maps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplayBackend {
    scripts: BTreeMap<Role, BTreeMap<String, String>>,
}

impl ReplayBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, role: Role, query: &str, output: &str) -> Self {
        self.scripts.entry(role).or_default().insert(query.to_string(), output.to_string());
        self
    }

    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        let raw = fs::read_to_string(path.as_ref())?;
        Ok(Self::from_json(&raw)?)
    }
}

impl PolicyBackend for ReplayBackend {
    fn supports(&self, role: Role) -> bool {
        role != Role::RA
    }

    fn act(&self, role: Role, obs: &Observation, _rng: &mut dyn RngCore) -> Result<ActionSample, BackendError> {
        let key = obs.query().trim();
        self.scripts
            .get(&role)
            .and_then(|m| m.get(key))
            .map(|out| ActionSample::text(out.clone()))
            .ok_or_else(|| BackendError::NoScript { role, key: key.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{GlobalSelection, RoundContext};
    use rand::SeedableRng;

    #[test]
    fn looks_up_by_role_and_query() {
        let json = r#"{"Planner": {"q": "<workflow>QDS</workflow>"}, "AG": {"q": "<answer>x</answer>"}}"#;
        let backend = ReplayBackend::from_json(json).unwrap();
        let obs = Observation {
            role: Role::Planner,
            target_query: "q".into(),
            local_context: RoundContext::new(),
            global_selection: GlobalSelection::default(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(backend.act(Role::Planner, &obs, &mut rng).unwrap().text, "<workflow>QDS</workflow>");
        assert!(matches!(backend.act(Role::QR, &obs, &mut rng), Err(BackendError::NoScript { .. })));
    }
}
