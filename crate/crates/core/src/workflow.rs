//! The Planner's action space: workflow grammar, validation and the
//! `<workflow>...</workflow>` wire encoding.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tags::{self, TagError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExecutorKind {
    QR,
    /// Retrieval agent; spelled `R` in plan syntax.
    R,
    DS,
    AG,
    QDS,
    QDP,
}

impl ExecutorKind {
    pub const ALL: [ExecutorKind; 6] = [
        ExecutorKind::QR,
        ExecutorKind::R,
        ExecutorKind::DS,
        ExecutorKind::AG,
        ExecutorKind::QDS,
        ExecutorKind::QDP,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ExecutorKind::QR => "QR",
            ExecutorKind::R => "R",
            ExecutorKind::DS => "DS",
            ExecutorKind::AG => "AG",
            ExecutorKind::QDS => "QDS",
            ExecutorKind::QDP => "QDP",
        }
    }

    /// Case-sensitive token lookup.
    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.token() == token)
    }

    pub fn is_decomposition(self) -> bool {
        matches!(self, ExecutorKind::QDS | ExecutorKind::QDP)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecomposeMode {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkflowPlan {
    Decompose(DecomposeMode),
    /// Ordered solving chain over QR, R, DS, AG.
    Solve(Vec<ExecutorKind>),
}

impl WorkflowPlan {
    pub fn is_decompose(&self) -> bool {
        matches!(self, WorkflowPlan::Decompose(_))
    }

    pub fn fallback() -> Self {
        WorkflowPlan::Solve(vec![ExecutorKind::R, ExecutorKind::AG])
    }

    /// Position of this plan in [`PLAN_MENU`], if it is one of the eight
    /// canonical actions.
    pub fn menu_index(&self) -> Option<usize> {
        plan_menu().iter().position(|p| p == self)
    }
}

impl fmt::Display for WorkflowPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkflowPlan::Decompose(DecomposeMode::Serial) => f.write_str("QDS"),
            WorkflowPlan::Decompose(DecomposeMode::Parallel) => f.write_str("QDP"),
            WorkflowPlan::Solve(chain) => {
                let tokens: Vec<&str> = chain.iter().map(|k| k.token()).collect();
                f.write_str(&tokens.join(","))
            }
        }
    }
}

/// Number of canonical planner actions.
pub const N_ACTIONS: usize = 8;

/// Number of menu entries that are solving chains (the first six).
pub const N_SOLVE_ACTIONS: usize = 6;

/// The eight valid plans in a fixed order: the six solving chains followed by
/// serial and parallel decomposition.
pub fn plan_menu() -> [WorkflowPlan; N_ACTIONS] {
    use ExecutorKind::*;
    [
        WorkflowPlan::Solve(vec![AG]),
        WorkflowPlan::Solve(vec![QR, AG]),
        WorkflowPlan::Solve(vec![R, AG]),
        WorkflowPlan::Solve(vec![QR, R, AG]),
        WorkflowPlan::Solve(vec![R, DS, AG]),
        WorkflowPlan::Solve(vec![QR, R, DS, AG]),
        WorkflowPlan::Decompose(DecomposeMode::Serial),
        WorkflowPlan::Decompose(DecomposeMode::Parallel),
    ]
}

/// Short, CSV-safe label for a menu entry.
pub fn menu_label(index: usize) -> &'static str {
    ["ag", "qr_ag", "r_ag", "qr_r_ag", "r_ds_ag", "qr_r_ds_ag", "qds", "qdp"][index]
}

/// Validation rules, listed in the order they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidationRule {
    DecomposeNotAlone,
    UnknownToken,
    Duplicate,
    Empty,
    DsWithoutPriorR,
    LastNotAG,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid workflow: {rule:?}")]
pub struct ValidationError {
    pub rule: ValidationRule,
}

impl From<ValidationRule> for ValidationError {
    fn from(rule: ValidationRule) -> Self {
        ValidationError { rule }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowFormatError {
    #[error("no <workflow>...</workflow> span")]
    MissingTag,
    #[error("more than one <workflow> tag")]
    MultipleTags,
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Validates raw (trimmed) plan tokens, reporting the first violated rule.
pub fn validate_tokens(tokens: &[&str]) -> Result<WorkflowPlan, ValidationError> {
    let decompose = tokens.iter().any(|t| *t == "QDS" || *t == "QDP");
    if decompose && tokens.len() > 1 {
        return Err(ValidationRule::DecomposeNotAlone.into());
    }
    let kinds = tokens
        .iter()
        .map(|t| ExecutorKind::from_token(t))
        .collect::<Option<Vec<_>>>()
        .ok_or(ValidationRule::UnknownToken)?;
    validate(&kinds)
}

/// Validates a mapped chain or decomposition directive.
pub fn validate(chain: &[ExecutorKind]) -> Result<WorkflowPlan, ValidationError> {
    use ExecutorKind::*;
    if chain.len() > 1 && chain.iter().any(|k| k.is_decomposition()) {
        return Err(ValidationRule::DecomposeNotAlone.into());
    }
    for (i, kind) in chain.iter().enumerate() {
        if chain[..i].contains(kind) {
            return Err(ValidationRule::Duplicate.into());
        }
    }
    match chain {
        [] => Err(ValidationRule::Empty.into()),
        [QDS] => Ok(WorkflowPlan::Decompose(DecomposeMode::Serial)),
        [QDP] => Ok(WorkflowPlan::Decompose(DecomposeMode::Parallel)),
        _ => {
            if let Some(ds) = chain.iter().position(|k| *k == DS) {
                if !chain[..ds].contains(&R) {
                    return Err(ValidationRule::DsWithoutPriorR.into());
                }
            }
            if chain.last() != Some(&AG) {
                return Err(ValidationRule::LastNotAG.into());
            }
            Ok(WorkflowPlan::Solve(chain.to_vec()))
        }
    }
}

/// Parses a Planner output into a validated plan.
pub fn parse_workflow(text: &str) -> Result<WorkflowPlan, WorkflowFormatError> {
    let body = tags::extract_single(text, "workflow").map_err(|e| match e {
        TagError::Missing => WorkflowFormatError::MissingTag,
        TagError::Multiple => WorkflowFormatError::MultipleTags,
    })?;
    let body = body.trim();
    let tokens: Vec<&str> = if body.is_empty() {
        Vec::new()
    } else {
        body.split(',').map(str::trim).collect()
    };
    Ok(validate_tokens(&tokens)?)
}

pub fn encode(plan: &WorkflowPlan) -> String {
    format!("<workflow>{plan}</workflow>")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ExecutorKind::*;

    #[test]
    fn parses_case_study_plans() {
        assert_eq!(
            parse_workflow("<workflow>QDS</workflow>"),
            Ok(WorkflowPlan::Decompose(DecomposeMode::Serial))
        );
        assert_eq!(
            parse_workflow("<workflow>R,DS,AG</workflow>"),
            Ok(WorkflowPlan::Solve(vec![R, DS, AG]))
        );
        assert_eq!(parse_workflow("<workflow>R,AG</workflow>"), Ok(WorkflowPlan::Solve(vec![R, AG])));
        assert_eq!(parse_workflow("I think QDS"), Err(WorkflowFormatError::MissingTag));
    }

    #[test]
    fn whitespace_and_case() {
        assert_eq!(
            parse_workflow("Plan: <workflow> QR , R,AG </workflow>"),
            Ok(WorkflowPlan::Solve(vec![QR, R, AG]))
        );
        assert_eq!(
            parse_workflow("<workflow>r,ag</workflow>"),
            Err(ValidationError::from(ValidationRule::UnknownToken).into())
        );
        assert_eq!(
            parse_workflow("<workflow>R,AG</workflow><workflow>AG</workflow>"),
            Err(WorkflowFormatError::MultipleTags)
        );
        assert_eq!(
            parse_workflow("<workflow>  </workflow>"),
            Err(ValidationError::from(ValidationRule::Empty).into())
        );
    }

    #[test]
    fn rule_examples() {
        assert_eq!(validate(&[QDS, AG]).unwrap_err().rule, ValidationRule::DecomposeNotAlone);
        assert_eq!(validate(&[DS, AG]).unwrap_err().rule, ValidationRule::DsWithoutPriorR);
        assert_eq!(validate(&[R, DS]).unwrap_err().rule, ValidationRule::LastNotAG);
        assert_eq!(validate(&[QR, R, AG]), Ok(WorkflowPlan::Solve(vec![QR, R, AG])));
        assert_eq!(validate(&[AG]), Ok(WorkflowPlan::Solve(vec![AG])));
        assert_eq!(validate(&[R, R, AG]).unwrap_err().rule, ValidationRule::Duplicate);
        assert_eq!(validate_tokens(&["QDS", "X"]).unwrap_err().rule, ValidationRule::DecomposeNotAlone);
        assert_eq!(validate_tokens(&["R", "X"]).unwrap_err().rule, ValidationRule::UnknownToken);
    }

    #[test]
    fn encodes() {
        assert_eq!(encode(&WorkflowPlan::Solve(vec![R, AG])), "<workflow>R,AG</workflow>");
        assert_eq!(encode(&WorkflowPlan::Decompose(DecomposeMode::Parallel)), "<workflow>QDP</workflow>");
        assert_eq!(
            encode(&WorkflowPlan::Solve(vec![QR, R, DS, AG])),
            "<workflow>QR,R,DS,AG</workflow>"
        );
    }

    #[test]
    fn menu_round_trips() {
        for (i, plan) in plan_menu().iter().enumerate() {
            assert_eq!(parse_workflow(&encode(plan)).as_ref(), Ok(plan));
            assert_eq!(plan.menu_index(), Some(i));
        }
    }
}
