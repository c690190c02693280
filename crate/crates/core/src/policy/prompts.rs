//! Role system prompts and placeholder substitution.

use thiserror::Error;

use crate::environment::Document;
use crate::trace::{Observation, Role};

const PLANNER: &str = include_str!("../../prompts/planner.txt");
const QUERY_REWRITE: &str = include_str!("../../prompts/query_rewrite.txt");
const DECOMPOSE_PARALLEL: &str = include_str!("../../prompts/decompose_parallel.txt");
const DECOMPOSE_SERIAL: &str = include_str!("../../prompts/decompose_serial.txt");
const DOCUMENT_SELECTION: &str = include_str!("../../prompts/document_selection.txt");
const ANSWER_GENERATION: &str = include_str!("../../prompts/answer_generation.txt");
const ANSWER_SUMMARIZATION: &str = include_str!("../../prompts/answer_summarization.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("placeholder {{{0}}} has no value")]
    UnfilledPlaceholder(String),
    #[error("template uses unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("role {0} has no prompt")]
    NoTemplate(Role),
    #[error("observation is for {found}, not {expected}")]
    RoleMismatch { expected: Role, found: Role },
}

/// The raw template for a role. RA is a retriever and has none.
pub fn template(role: Role) -> Option<&'static str> {
    Some(match role {
        Role::Planner => PLANNER,
        Role::QR => QUERY_REWRITE,
        Role::QDP => DECOMPOSE_PARALLEL,
        Role::QDS => DECOMPOSE_SERIAL,
        Role::DS => DOCUMENT_SELECTION,
        Role::AG => ANSWER_GENERATION,
        Role::AS => ANSWER_SUMMARIZATION,
        Role::RA => return None,
    })
}

fn doc_content(docs: &[Document]) -> String {
    docs.iter()
        .enumerate()
        .map(|(i, d)| format!("Document{i}: {}", d.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn observation_block(obs: &Observation) -> String {
    let pairs = &obs.global_selection.resolved;
    if pairs.is_empty() {
        return "No sub-question has been answered.".to_string();
    }
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| format!("Sub-question {}: {}\nAnswer {}: {}", i + 1, p.question, i + 1, p.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the role's prompt for `obs`.
///
/// `{query}` and `{observation}` must be non-empty; `{doc_content}` may be
/// empty (closed-book generation).
pub fn render_prompt(role: Role, obs: &Observation) -> Result<String, PromptError> {
    if obs.role != role {
        return Err(PromptError::RoleMismatch { expected: role, found: obs.role });
    }
    let template = template(role).ok_or(PromptError::NoTemplate(role))?;
    let docs = obs.documents();
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| PromptError::UnknownPlaceholder(after.chars().take(16).collect()))?;
        let name = &after[..close];
        let value = match name {
            "query" => {
                let q = obs.query().trim();
                if q.is_empty() {
                    return Err(PromptError::UnfilledPlaceholder(name.into()));
                }
                q.to_string()
            }
            "doc_content" => doc_content(docs),
            "max_id" => (docs.len() as i64 - 1).to_string(),
            "observation" => observation_block(obs),
            other => return Err(PromptError::UnknownPlaceholder(other.into())),
        };
        out.push_str(&value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{ContextPayload, GlobalSelection, QaPair, RoundContext};

    fn obs(role: Role, query: &str) -> Observation {
        Observation {
            role,
            target_query: query.into(),
            local_context: RoundContext::new(),
            global_selection: GlobalSelection::default(),
        }
    }

    #[test]
    fn selector_prompt_lists_documents() {
        let mut o = obs(Role::DS, "when did canada become fully independent from britain?");
        let docs = (0..3).map(|i| Document { doc_id: 10 + i, text: format!("text {i}") }).collect();
        o.local_context.push(Role::RA, ContextPayload::Documents(docs));
        let p = render_prompt(Role::DS, &o).unwrap();
        assert!(p.contains("strictly inside <id>...</id> tags"));
        assert!(p.contains("IDs (0, 1, ..., 2)"));
        assert!(p.contains("Document0: text 0\nDocument1: text 1\nDocument2: text 2"));
    }

    #[test]
    fn summarizer_prompt_holds_sub_answers() {
        let mut o = obs(Role::AS, "ignored");
        o.global_selection.origin = Some("Something's Gotta Give was first performed by an actor of what heritage?".into());
        o.global_selection.resolved = vec![
            QaPair { question: "Who is the actor?".into(), answer: "Fred Astaire".into() },
            QaPair { question: "What is the heritage of this actor?".into(), answer: "American".into() },
        ];
        let p = render_prompt(Role::AS, &o).unwrap();
        assert!(p.contains("Fred Astaire") && p.contains("American"));
        assert!(p.contains("based on the observations"));
        assert!(p.contains("Original Question: Something's Gotta Give"));
    }

    #[test]
    fn empty_query_is_unfilled() {
        assert_eq!(
            render_prompt(Role::QR, &obs(Role::QR, "  ")),
            Err(PromptError::UnfilledPlaceholder("query".into()))
        );
        assert!(matches!(render_prompt(Role::RA, &obs(Role::RA, "q")), Err(PromptError::NoTemplate(Role::RA))));
        assert!(matches!(
            render_prompt(Role::AG, &obs(Role::QR, "q")),
            Err(PromptError::RoleMismatch { .. })
        ));
    }

    #[test]
    fn every_template_renders() {
        for role in Role::ALL.into_iter().filter(|r| *r != Role::RA) {
            let mut o = obs(role, "who directed Stone River?");
            o.global_selection.origin = Some("who directed Stone River?".into());
            let p = render_prompt(role, &o).unwrap();
            assert!(!p.contains('{'), "{role} left a placeholder");
        }
    }
}
