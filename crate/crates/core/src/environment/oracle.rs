//! Scripted executors that read the synthetic world, plus a rule-based
//! planner used for closed-loop checks and the `scripted` CLI backend.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::world::{Clause, EntityKind, Interpretation, KnowledgeBase, Relation, Subject, BRIDGE_PRONOUN};
use crate::policy::{ActionSample, BackendError, PolicyBackend};
use crate::trace::{Observation, Role};
use crate::workflow::{encode, DecomposeMode, ExecutorKind, WorkflowPlan};

pub const IDK: &str = "I don't know";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Probability that one executor call is corrupted. A corrupted call
    /// drops its tags with probability `noise_rate³`, otherwise it names a
    /// wrong entity, so a rate of 1 always produces unparseable output.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { noise_rate: 0.0, seed: 0 }
    }
}

/// Correct-by-construction executors for QR, QDS, QDP, DS, AG and AS.
#[derive(Debug, Clone)]
pub struct ScriptedExecutors {
    kb: Arc<KnowledgeBase>,
    config: OracleConfig,
}

enum Corruption {
    None,
    DropTag,
    WrongEntity,
}

fn wrap(tag: &str, body: &str) -> String {
    format!("<{tag}>{body}</{tag}>")
}

impl ScriptedExecutors {
    pub fn new(kb: Arc<KnowledgeBase>, config: OracleConfig) -> Self {
        assert!((0.0..=1.0).contains(&config.noise_rate), "noise_rate must lie in [0, 1]");
        ScriptedExecutors { kb, config }
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Corruption {
        let n = self.config.noise_rate;
        if n == 0.0 || rng.random::<f64>() >= n {
            Corruption::None
        } else if rng.random::<f64>() < n.powi(3) {
            Corruption::DropTag
        } else {
            Corruption::WrongEntity
        }
    }

    fn random_entity(&self, kind: EntityKind, rng: &mut dyn RngCore) -> String {
        self.kb.entities(kind).choose(rng).cloned().unwrap_or_else(|| IDK.to_string())
    }

    fn clauses(&self, q: &str) -> Vec<Clause> {
        match self.kb.interpret(q) {
            Interpretation::Clauses(c) => c,
            Interpretation::Unknown => Vec::new(),
        }
    }

    /// A question of the same shape as `clause` about a random subject.
    fn wrong_question(&self, clause: Option<&Clause>, rng: &mut dyn RngCore) -> String {
        let relation = clause.map_or(Relation::BornIn, |c| c.relation);
        let kind = match relation {
            Relation::BornIn => EntityKind::Person,
            Relation::DirectedBy => EntityKind::Film,
            Relation::FoundedBy => EntityKind::Company,
        };
        relation.question(&self.random_entity(kind, rng))
    }

    fn rewrite(&self, obs: &Observation) -> String {
        let q = &obs.target_query;
        match obs.global_selection.resolved.last() {
            Some(prev) if q.contains(BRIDGE_PRONOUN) => q.replacen(BRIDGE_PRONOUN, &prev.answer, 1),
            _ => q.clone(),
        }
    }

    fn decompose(&self, q: &str, mode: DecomposeMode) -> Vec<String> {
        let clauses = self.clauses(q);
        match clauses.as_slice() {
            [] => vec![q.trim().to_string()],
            [Clause { relation, subject: Subject::Described { relation: inner, of } }] => {
                let first = inner.question(of);
                let second = match mode {
                    DecomposeMode::Serial => relation.question(BRIDGE_PRONOUN),
                    // Independent sub-questions cannot refer back to hop one.
                    DecomposeMode::Parallel => self.kb.clause_question(&clauses[0]),
                };
                vec![first, second]
            }
            [_] => vec![q.trim().to_string()],
            many => many.iter().map(|c| self.kb.clause_question(c)).collect(),
        }
    }

    fn select(&self, obs: &Observation) -> Vec<usize> {
        let docs = obs.documents();
        let clauses = self.clauses(obs.query());
        let mut support: Vec<u32> = clauses.iter().flat_map(|c| self.kb.support(c)).collect();
        for c in clauses.iter().filter(|c| c.subject == Subject::Pronoun) {
            support.extend(KnowledgeBase::pronoun_doc(c.relation, docs).map(|d| d.doc_id));
        }
        docs.iter()
            .enumerate()
            .filter(|(_, d)| support.contains(&d.doc_id))
            .map(|(i, _)| i)
            .collect()
    }

    fn answer(&self, obs: &Observation) -> String {
        self.clauses(&obs.target_query)
            .first()
            .and_then(|c| self.kb.answer_from(c, obs.documents()))
            .unwrap_or_else(|| IDK.to_string())
    }

    fn summarize(&self, obs: &Observation) -> String {
        let answers: Vec<&str> = obs.global_selection.resolved.iter().map(|p| p.answer.as_str()).collect();
        match (obs.global_selection.decomposition, answers.last()) {
            (_, None) => IDK.to_string(),
            (Some(DecomposeMode::Parallel), _) => answers.join(" and "),
            (_, Some(last)) => last.to_string(),
        }
    }

    fn respond(&self, role: Role, obs: &Observation, rng: &mut dyn RngCore) -> Result<String, BackendError> {
        let corruption = self.draw(rng);
        let (tagless, wrong) = match corruption {
            Corruption::None => (false, false),
            Corruption::DropTag => (true, false),
            Corruption::WrongEntity => (false, true),
        };
        let out = match role {
            Role::QR => {
                let q = if wrong {
                    self.wrong_question(self.clauses(&obs.target_query).first(), rng)
                } else {
                    self.rewrite(obs)
                };
                if tagless { q } else { wrap("query", &q) }
            }
            Role::QDS | Role::QDP => {
                let mode = if role == Role::QDS { DecomposeMode::Serial } else { DecomposeMode::Parallel };
                let mut subs = self.decompose(&obs.target_query, mode);
                if wrong {
                    let i = rng.random_range(0..subs.len());
                    let clauses = self.clauses(&subs[i]);
                    subs[i] = self.wrong_question(clauses.first(), rng);
                }
                if tagless {
                    subs.join("\n")
                } else {
                    subs.iter().enumerate().map(|(i, s)| wrap(&format!("q{}", i + 1), s)).collect()
                }
            }
            Role::DS => {
                let ids = if wrong {
                    vec![rng.random_range(0..obs.documents().len().max(1))]
                } else {
                    self.select(obs)
                };
                let body = ids.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
                if tagless { body } else { wrap("id", &body) }
            }
            Role::AG | Role::AS => {
                let answer = if wrong {
                    let kind = self.clauses(obs.query()).last().map_or(EntityKind::City, |c| c.relation.object_kind());
                    self.random_entity(kind, rng)
                } else if role == Role::AG {
                    self.answer(obs)
                } else {
                    self.summarize(obs)
                };
                if tagless { answer } else { wrap("answer", &answer) }
            }
            Role::Planner | Role::RA => return Err(BackendError::UnsupportedRole(role)),
        };
        Ok(out)
    }
}

impl PolicyBackend for ScriptedExecutors {
    fn supports(&self, role: Role) -> bool {
        !matches!(role, Role::Planner | Role::RA)
    }

    fn act(&self, role: Role, obs: &Observation, rng: &mut dyn RngCore) -> Result<ActionSample, BackendError> {
        self.respond(role, obs, rng).map(ActionSample::text)
    }
}

/// Picks the plan matching how a question reads: QDS for a described
/// subject, QDP for joined clauses, QR first when a pronoun needs resolving.
#[derive(Debug, Clone)]
pub struct OraclePlanner {
    kb: Arc<KnowledgeBase>,
}

impl OraclePlanner {
    pub fn new(kb: Arc<KnowledgeBase>) -> Self {
        OraclePlanner { kb }
    }

    pub fn plan(&self, query: &str, solve_only: bool) -> WorkflowPlan {
        use ExecutorKind::{AG, QR, R};
        match self.kb.interpret(query) {
            Interpretation::Clauses(c) if !solve_only && c.len() > 1 => WorkflowPlan::Decompose(DecomposeMode::Parallel),
            Interpretation::Clauses(c) if !solve_only && matches!(c[0].subject, Subject::Described { .. }) => {
                WorkflowPlan::Decompose(DecomposeMode::Serial)
            }
            Interpretation::Clauses(c) if c[0].subject == Subject::Pronoun => WorkflowPlan::Solve(vec![QR, R, AG]),
            _ => WorkflowPlan::Solve(vec![R, AG]),
        }
    }
}

impl PolicyBackend for OraclePlanner {
    fn supports(&self, role: Role) -> bool {
        role == Role::Planner
    }

    fn act(&self, role: Role, obs: &Observation, _rng: &mut dyn RngCore) -> Result<ActionSample, BackendError> {
        if role != Role::Planner {
            return Err(BackendError::UnsupportedRole(role));
        }
        let plan = self.plan(&obs.target_query, obs.global_selection.solve_only);
        Ok(ActionSample { text: encode(&plan), log_prob: None, action_index: plan.menu_index() })
    }
}
