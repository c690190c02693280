//! Role-conditioned action sources.
//!
//! Every role acts through a [`PolicyBackend`]: a scripted replay, a remote
//! chat-completion endpoint, a world-aware oracle (see
//! [`crate::environment::oracle`]) or the trainable [`ToyPlannerPolicy`].
//! Outputs travel as tagged text and are turned into typed actions by
//! [`parse_output`]; any structural failure there is a format violation.

mod features;
mod prompts;
mod remote;
mod replay;
mod toy;

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{featurize, FEATURE_DIM};
pub use prompts::{render_prompt, template, PromptError};
pub use remote::{RemoteBackend, RemoteConfig, TOKEN_ENV_VAR};
pub use replay::{ReplayBackend, ReplayError};
pub use toy::{allowed_actions, GreedyPlanner, PolicyError, ToyPlannerPolicy, ValueEstimator};

use crate::tags::{self, TagError};
use crate::trace::{Observation, Role, MAX_SUB_QUERIES};
use crate::workflow::{self, ValidationRule, WorkflowFormatError, WorkflowPlan};

/// One sampled action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub text: String,
    /// Present for trainable backends; always `<= 0`.
    pub log_prob: Option<f64>,
    /// Categorical choice of the toy planner.
    pub action_index: Option<usize>,
}

impl ActionSample {
    pub fn text(text: impl Into<String>) -> Self {
        ActionSample { text: text.into(), log_prob: None, action_index: None }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend does not support role {0}")]
    UnsupportedRole(Role),
    #[error("no scripted output for {role} on {key:?}")]
    NoScript { role: Role, key: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// A source of actions for one or more roles.
///
/// Implementations must be callable concurrently from many trajectories;
/// randomness comes from the caller so rollouts stay reproducible.
pub trait PolicyBackend: Send + Sync {
    fn supports(&self, role: Role) -> bool;

    fn act(&self, role: Role, obs: &Observation, rng: &mut dyn RngCore) -> Result<ActionSample, BackendError>;
}

/// Checks role support before delegating to the backend.
pub fn act(
    backend: &dyn PolicyBackend,
    role: Role,
    obs: &Observation,
    rng: &mut dyn RngCore,
) -> Result<ActionSample, BackendError> {
    if !backend.supports(role) {
        return Err(BackendError::UnsupportedRole(role));
    }
    backend.act(role, obs, rng)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypedAction {
    Plan(WorkflowPlan),
    Rewrite(String),
    SubQueries(Vec<String>),
    /// Zero-based indices into the candidate list.
    Selection(BTreeSet<usize>),
    Answer(String),
    /// RA carries the query it searched with.
    Search(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationReason {
    MissingTag,
    DuplicateTag,
    BadNumbering,
    TooMany,
    OutOfRange,
    NonInteger,
    Workflow(ValidationRule),
    /// Decomposition requested where only solving chains are allowed.
    DepthLimit,
    /// Backend call failed after retries.
    BackendFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("format violation: {reason:?}")]
pub struct FormatViolation {
    pub reason: ViolationReason,
}

impl From<ViolationReason> for FormatViolation {
    fn from(reason: ViolationReason) -> Self {
        FormatViolation { reason }
    }
}

impl From<TagError> for FormatViolation {
    fn from(e: TagError) -> Self {
        match e {
            TagError::Missing => ViolationReason::MissingTag.into(),
            TagError::Multiple => ViolationReason::DuplicateTag.into(),
        }
    }
}

/// Bounds needed to validate some outputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseBounds {
    /// Highest valid document id for DS; `None` when there are no candidates.
    pub max_id: Option<usize>,
}

impl ParseBounds {
    pub fn for_candidates(n: usize) -> Self {
        ParseBounds { max_id: n.checked_sub(1) }
    }
}

/// Parses a role's raw output according to its tag protocol.
///
/// This is the single predicate behind the format penalty: an output earns
/// the penalty exactly when this returns `Err`.
pub fn parse_output(role: Role, text: &str, bounds: ParseBounds) -> Result<TypedAction, FormatViolation> {
    match role {
        Role::Planner => workflow::parse_workflow(text).map(TypedAction::Plan).map_err(|e| match e {
            WorkflowFormatError::MissingTag => ViolationReason::MissingTag.into(),
            WorkflowFormatError::MultipleTags => ViolationReason::DuplicateTag.into(),
            WorkflowFormatError::Invalid(v) => ViolationReason::Workflow(v.rule).into(),
        }),
        Role::QR => {
            let q = tags::extract_single(text, "query")?.trim();
            if q.is_empty() {
                return Err(ViolationReason::MissingTag.into());
            }
            Ok(TypedAction::Rewrite(q.to_string()))
        }
        Role::QDS | Role::QDP => parse_sub_queries(text).map(TypedAction::SubQueries),
        Role::DS => parse_selection(text, bounds).map(TypedAction::Selection),
        Role::AG | Role::AS => {
            let a = tags::extract_single(text, "answer")?;
            Ok(TypedAction::Answer(a.trim().to_string()))
        }
        Role::RA => Ok(TypedAction::Search(text.trim().to_string())),
    }
}

fn parse_sub_queries(text: &str) -> Result<Vec<String>, FormatViolation> {
    let spans = tags::numbered_spans(text, "q").ok_or(ViolationReason::MissingTag)?;
    if spans.is_empty() {
        return Err(ViolationReason::MissingTag.into());
    }
    for (i, (n, _)) in spans.iter().enumerate() {
        if *n as usize != i + 1 {
            return Err(ViolationReason::BadNumbering.into());
        }
    }
    if spans.len() > MAX_SUB_QUERIES {
        return Err(ViolationReason::TooMany.into());
    }
    spans
        .into_iter()
        .map(|(_, q)| {
            let q = q.trim();
            if q.is_empty() {
                Err(ViolationReason::MissingTag.into())
            } else {
                Ok(q.to_string())
            }
        })
        .collect()
}

fn parse_selection(text: &str, bounds: ParseBounds) -> Result<BTreeSet<usize>, FormatViolation> {
    let body = tags::extract_single(text, "id")?.trim();
    let mut ids = BTreeSet::new();
    if body.is_empty() {
        return Ok(ids);
    }
    for raw in body.split(',') {
        let raw = raw.trim();
        // Selections are sometimes written with the label used in the prompt.
        let digits = raw.strip_prefix("Document").unwrap_or(raw).trim();
        let id: usize = digits.parse().map_err(|_| ViolationReason::NonInteger)?;
        match bounds.max_id {
            Some(max) if id <= max => {
                ids.insert(id);
            }
            _ => return Err(ViolationReason::OutOfRange.into()),
        }
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::{DecomposeMode, ExecutorKind::*};

    fn ds(text: &str, max: usize) -> Result<TypedAction, FormatViolation> {
        parse_output(Role::DS, text, ParseBounds { max_id: Some(max) })
    }

    fn reason<T: std::fmt::Debug>(r: Result<T, FormatViolation>) -> ViolationReason {
        r.unwrap_err().reason
    }

    #[test]
    fn selector_protocol() {
        assert_eq!(ds("<id>0, 2</id>", 4), Ok(TypedAction::Selection([0, 2].into())));
        assert_eq!(reason(ds("<id>0, 7</id>", 4)), ViolationReason::OutOfRange);
        assert_eq!(reason(ds("<id>0, x</id>", 4)), ViolationReason::NonInteger);
        assert_eq!(ds("<id></id>", 4), Ok(TypedAction::Selection(BTreeSet::new())));
        assert_eq!(
            ds("<id>Document0, Document1, Document2, Document4</id>", 4),
            Ok(TypedAction::Selection([0, 1, 2, 4].into()))
        );
        assert_eq!(reason(ds("0, 1", 4)), ViolationReason::MissingTag);
        assert_eq!(reason(ds("<id>0</id><id>1</id>", 4)), ViolationReason::DuplicateTag);
        assert_eq!(
            reason(parse_output(Role::DS, "<id>0</id>", ParseBounds::for_candidates(0))),
            ViolationReason::OutOfRange
        );
    }

    #[test]
    fn decomposition_protocol() {
        let p = |t| parse_output(Role::QDS, t, ParseBounds::default());
        assert_eq!(p("<q1>A</q1><q2>B</q2>"), Ok(TypedAction::SubQueries(vec!["A".into(), "B".into()])));
        assert_eq!(reason(p("<q1>A</q1><q3>B</q3>")), ViolationReason::BadNumbering);
        assert_eq!(reason(p("<q2>A</q2>")), ViolationReason::BadNumbering);
        assert_eq!(
            reason(p("<q1>a</q1><q2>b</q2><q3>c</q3><q4>d</q4><q5>e</q5>")),
            ViolationReason::TooMany
        );
        assert_eq!(reason(p("just text")), ViolationReason::MissingTag);
        assert_eq!(reason(p("<q1> </q1>")), ViolationReason::MissingTag);
        assert!(parse_output(Role::QDP, "<q1>a</q1>\n<q2>b</q2>\n<q3>c</q3>\n<q4>d</q4>", ParseBounds::default()).is_ok());
    }

    #[test]
    fn answer_and_rewrite_protocols() {
        assert_eq!(
            parse_output(Role::AG, "<answer>1982</answer>", ParseBounds::default()),
            Ok(TypedAction::Answer("1982".into()))
        );
        assert_eq!(
            parse_output(Role::AS, "Final: <answer> American </answer>", ParseBounds::default()),
            Ok(TypedAction::Answer("American".into()))
        );
        assert_eq!(
            reason(parse_output(Role::AG, "1982", ParseBounds::default())),
            ViolationReason::MissingTag
        );
        assert_eq!(
            parse_output(Role::QR, "<query>Heritage of Fred Astaire</query>", ParseBounds::default()),
            Ok(TypedAction::Rewrite("Heritage of Fred Astaire".into()))
        );
        assert_eq!(
            reason(parse_output(Role::QR, "<query></query>", ParseBounds::default())),
            ViolationReason::MissingTag
        );
    }

    #[test]
    fn planner_protocol() {
        assert_eq!(
            parse_output(Role::Planner, "<workflow>QDS</workflow>", ParseBounds::default()),
            Ok(TypedAction::Plan(WorkflowPlan::Decompose(DecomposeMode::Serial)))
        );
        assert_eq!(
            parse_output(Role::Planner, "<workflow>R,DS,AG</workflow>", ParseBounds::default()),
            Ok(TypedAction::Plan(WorkflowPlan::Solve(vec![R, DS, AG])))
        );
        assert_eq!(
            reason(parse_output(Role::Planner, "<workflow>DS,AG</workflow>", ParseBounds::default())),
            ViolationReason::Workflow(ValidationRule::DsWithoutPriorR)
        );
    }
}
