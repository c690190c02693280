//! Global state: the execution trace of sub-queries and answers, the
//! intra-round working memory, and role-scoped observations built from them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Document;
use crate::workflow::DecomposeMode;

/// Maximum number of sub-queries a single decomposition may add.
pub const MAX_SUB_QUERIES: usize = 4;

/// Answer written into decomposed parents once the final synthesis exists.
pub const DELEGATED: &str = "delegated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Planner,
    QDS,
    QDP,
    QR,
    RA,
    DS,
    AG,
    AS,
}

impl Role {
    pub const ALL: [Role; 8] =
        [Role::Planner, Role::QDS, Role::QDP, Role::QR, Role::RA, Role::DS, Role::AG, Role::AS];

    /// RA is an interface to a frozen retriever; every other role is a
    /// trainable persona.
    pub fn is_trainable(self) -> bool {
        self != Role::RA
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Planner => "Planner",
            Role::QDS => "QDS",
            Role::QDP => "QDP",
            Role::QR => "QR",
            Role::RA => "RA",
            Role::DS => "DS",
            Role::AG => "AG",
            Role::AS => "AS",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("at most {MAX_SUB_QUERIES} sub-queries per decomposition, got {0}")]
    TooManySubQueries(usize),
    #[error("decomposition produced no sub-queries")]
    NoSubQueries,
    #[error("unknown parent node {0}")]
    UnknownParent(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("node {0} is already resolved")]
    AlreadyResolved(usize),
    #[error("{0} observation requires context that is absent this round")]
    MissingContext(Role),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceNode {
    pub node_id: usize,
    pub parent_id: Option<usize>,
    pub depth: usize,
    pub sub_query: String,
    pub answer: Option<String>,
    /// Set once this node has been decomposed into children.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecomposeMode>,
}

impl TraceNode {
    pub fn is_solved(&self) -> bool {
        self.answer.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionTrace {
    nodes: Vec<TraceNode>,
}

impl ExecutionTrace {
    pub fn nodes(&self) -> &[TraceNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, node_id: usize) -> Option<&TraceNode> {
        // node_ids are assigned densely in insertion order.
        self.nodes.get(node_id).filter(|n| n.node_id == node_id)
    }

    fn get_mut(&mut self, node_id: usize) -> Option<&mut TraceNode> {
        self.nodes.get_mut(node_id).filter(|n| n.node_id == node_id)
    }

    pub fn root(&self) -> &TraceNode {
        &self.nodes[0]
    }

    /// Smallest-id unsolved node. Decomposed nodes wait for synthesis and
    /// are skipped.
    pub fn first_unsolved(&self) -> Option<&TraceNode> {
        self.nodes.iter().find(|n| !n.is_solved() && n.decomposition.is_none())
    }

    pub fn all_solved(&self) -> bool {
        self.nodes.iter().all(TraceNode::is_solved)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalState {
    pub q_origin: String,
    pub trace: ExecutionTrace,
    pub round: usize,
}

impl GlobalState {
    pub fn new(question: &str) -> Result<Self, TraceError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(TraceError::EmptyQuestion);
        }
        let root = TraceNode {
            node_id: 0,
            parent_id: None,
            depth: 0,
            sub_query: question.to_string(),
            answer: None,
            decomposition: None,
        };
        Ok(GlobalState {
            q_origin: question.to_string(),
            trace: ExecutionTrace { nodes: vec![root] },
            round: 0,
        })
    }

    pub fn first_unsolved_node(&self) -> Option<&TraceNode> {
        self.trace.first_unsolved()
    }

    /// Appends the sub-queries of a decomposition as unsolved children of
    /// `parent`. Returns the new node ids.
    pub fn append_children(
        &mut self,
        parent: usize,
        mode: DecomposeMode,
        sub_queries: &[String],
    ) -> Result<Vec<usize>, TraceError> {
        let parent_node = self.trace.get(parent).ok_or(TraceError::UnknownParent(parent))?;
        if parent_node.is_solved() {
            return Err(TraceError::AlreadyResolved(parent));
        }
        if sub_queries.is_empty() {
            return Err(TraceError::NoSubQueries);
        }
        if sub_queries.len() > MAX_SUB_QUERIES {
            return Err(TraceError::TooManySubQueries(sub_queries.len()));
        }
        let depth = parent_node.depth + 1;
        let first = self.trace.nodes.len();
        for (i, q) in sub_queries.iter().enumerate() {
            self.trace.nodes.push(TraceNode {
                node_id: first + i,
                parent_id: Some(parent),
                depth,
                sub_query: q.clone(),
                answer: None,
                decomposition: None,
            });
        }
        if let Some(p) = self.trace.get_mut(parent) {
            p.decomposition = Some(mode);
        }
        Ok((first..first + sub_queries.len()).collect())
    }

    pub fn resolve_node(&mut self, node: usize, answer: &str) -> Result<(), TraceError> {
        let n = self.trace.get_mut(node).ok_or(TraceError::UnknownNode(node))?;
        if n.is_solved() {
            return Err(TraceError::AlreadyResolved(node));
        }
        n.answer = Some(answer.to_string());
        Ok(())
    }

    /// Marks every still-unsolved decomposed node as [`DELEGATED`].
    pub fn mark_delegated(&mut self) {
        for n in &mut self.trace.nodes {
            if n.decomposition.is_some() && n.answer.is_none() {
                n.answer = Some(DELEGATED.to_string());
            }
        }
    }

    /// Resolved `(sub_query, answer)` pairs that carry real answers.
    pub fn resolved_pairs(&self) -> Vec<QaPair> {
        self.trace
            .nodes
            .iter()
            .filter(|n| n.decomposition.is_none())
            .filter_map(|n| {
                n.answer.as_ref().map(|a| QaPair { question: n.sub_query.clone(), answer: a.clone() })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextPayload {
    Text(String),
    Documents(Vec<Document>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub producer: Role,
    pub payload: ContextPayload,
}

/// Intra-round working memory: outputs of earlier steps in the current round.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundContext {
    entries: Vec<ContextEntry>,
}

impl RoundContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, producer: Role, payload: ContextPayload) {
        self.entries.push(ContextEntry { producer, payload });
    }

    pub fn entries(&self) -> &[ContextEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn latest(&self, role: Role) -> Option<&ContextEntry> {
        self.entries.iter().rev().find(|e| e.producer == role)
    }

    fn latest_text(&self, role: Role) -> Option<&str> {
        match self.latest(role).map(|e| &e.payload) {
            Some(ContextPayload::Text(t)) => Some(t),
            _ => None,
        }
    }

    fn latest_documents(&self, role: Role) -> Option<&[Document]> {
        match self.latest(role).map(|e| &e.payload) {
            Some(ContextPayload::Documents(d)) => Some(d),
            _ => None,
        }
    }

    fn only(entry: Option<&ContextEntry>) -> RoundContext {
        RoundContext { entries: entry.into_iter().cloned().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// Role-filtered excerpt of the global state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GlobalSelection {
    pub origin: Option<String>,
    pub resolved: Vec<QaPair>,
    /// Decomposition mode of the root, for synthesis.
    pub decomposition: Option<DecomposeMode>,
    /// Planner menu is restricted to solving chains (depth limit reached).
    pub solve_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub role: Role,
    pub target_query: String,
    pub local_context: RoundContext,
    pub global_selection: GlobalSelection,
}

impl Observation {
    /// Query the role should act on: the rewritten query for RA when QR ran
    /// this round, the original question for AS, otherwise the target.
    pub fn query(&self) -> &str {
        match self.role {
            Role::RA => self.local_context.latest_text(Role::QR).unwrap_or(&self.target_query),
            Role::AS => self.global_selection.origin.as_deref().unwrap_or(&self.target_query),
            _ => &self.target_query,
        }
    }

    /// Documents visible to the role: candidates for DS, selected (or all
    /// retrieved) documents for AG, nothing otherwise.
    pub fn documents(&self) -> &[Document] {
        match self.role {
            Role::DS => self.local_context.latest_documents(Role::RA).unwrap_or(&[]),
            Role::AG => self
                .local_context
                .latest_documents(Role::DS)
                .or_else(|| self.local_context.latest_documents(Role::RA))
                .unwrap_or(&[]),
            _ => &[],
        }
    }

    /// Stable 64-bit FNV-1a digest of the observation contents.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("observation serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Builds the observation for `role` acting on `target`.
///
/// Query rewriters see resolved answers of earlier siblings under a serial
/// decomposition (parallel siblings are independent by construction);
/// the summarizer sees the original question with every resolved pair.
pub fn build_observation(
    state: &GlobalState,
    ctx: &RoundContext,
    target: &TraceNode,
    role: Role,
) -> Result<Observation, TraceError> {
    let mut selection = GlobalSelection::default();
    let local_context = match role {
        Role::Planner | Role::QDS | Role::QDP => RoundContext::new(),
        Role::QR => {
            if let Some(parent) = target.parent_id.and_then(|p| state.trace.get(p)) {
                if parent.decomposition == Some(DecomposeMode::Serial) {
                    selection.resolved = state
                        .trace
                        .nodes()
                        .iter()
                        .filter(|n| n.parent_id == target.parent_id && n.node_id < target.node_id)
                        .filter_map(|n| {
                            n.answer.as_ref().map(|a| QaPair {
                                question: n.sub_query.clone(),
                                answer: a.clone(),
                            })
                        })
                        .collect();
                }
            }
            RoundContext::new()
        }
        Role::RA => RoundContext::only(ctx.latest(Role::QR)),
        Role::DS => {
            let entry = ctx.latest(Role::RA).ok_or(TraceError::MissingContext(Role::DS))?;
            RoundContext::only(Some(entry))
        }
        Role::AG => RoundContext::only(ctx.latest(Role::DS).or_else(|| ctx.latest(Role::RA))),
        Role::AS => {
            selection.origin = Some(state.q_origin.clone());
            selection.resolved = state.resolved_pairs();
            selection.decomposition = state.trace.root().decomposition;
            RoundContext::new()
        }
    };
    Ok(Observation {
        role,
        target_query: target.sub_query.clone(),
        local_context,
        global_selection: selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case1() -> GlobalState {
        let mut s = GlobalState::new("Something's Gotta Give was first performed by an actor of what heritage?")
            .unwrap();
        s.append_children(
            0,
            DecomposeMode::Serial,
            &[
                "Who is the actor that first performed Something's Gotta Give?".into(),
                "What is the heritage of this actor?".into(),
            ],
        )
        .unwrap();
        s
    }

    #[test]
    fn new_state() {
        let s = GlobalState::new("when did canada become fully independent from britain?").unwrap();
        assert_eq!(s.trace.len(), 1);
        assert_eq!(s.round, 0);
        assert!(!s.trace.root().is_solved());
        assert_eq!(s.trace.root().depth, 0);
        assert_eq!(GlobalState::new("x").unwrap().trace.len(), 1);
        assert_eq!(GlobalState::new("   "), Err(TraceError::EmptyQuestion));
        assert_eq!(GlobalState::new(""), Err(TraceError::EmptyQuestion));
    }

    #[test]
    fn first_unsolved() {
        let mut s = GlobalState::new("q0").unwrap();
        assert_eq!(s.first_unsolved_node().unwrap().node_id, 0);
        s.append_children(0, DecomposeMode::Parallel, &["q1".into(), "q2".into()]).unwrap();
        // the decomposed root waits for synthesis
        assert_eq!(s.first_unsolved_node().unwrap().node_id, 1);
        s.resolve_node(1, "b").unwrap();
        assert_eq!(s.first_unsolved_node().unwrap().node_id, 2);
        s.resolve_node(2, "c").unwrap();
        assert!(s.first_unsolved_node().is_none());
        assert!(!s.trace.all_solved());
        s.mark_delegated();
        assert!(s.trace.all_solved());
    }

    #[test]
    fn append_children_rules() {
        let s = case1();
        assert_eq!(s.trace.len(), 3);
        assert!(s.trace.nodes()[1..].iter().all(|n| n.depth == 1 && !n.is_solved()));
        assert!(!s.trace.root().is_solved());

        let mut s = GlobalState::new("q").unwrap();
        let five: Vec<String> = (0..5).map(|i| format!("q{i}")).collect();
        assert_eq!(s.append_children(0, DecomposeMode::Serial, &five), Err(TraceError::TooManySubQueries(5)));
        assert_eq!(s.append_children(3, DecomposeMode::Serial, &["a".into()]), Err(TraceError::UnknownParent(3)));
        assert_eq!(s.append_children(0, DecomposeMode::Serial, &[]), Err(TraceError::NoSubQueries));
        s.append_children(0, DecomposeMode::Serial, &["a".into()]).unwrap();
        assert_eq!(s.trace.len(), 2);
    }

    #[test]
    fn resolve_is_write_once() {
        let mut s = case1();
        s.resolve_node(1, "Fred Astaire").unwrap();
        assert_eq!(s.trace.get(1).unwrap().answer.as_deref(), Some("Fred Astaire"));
        assert_eq!(s.resolve_node(1, "Gene Kelly"), Err(TraceError::AlreadyResolved(1)));
        s.resolve_node(2, "American").unwrap();
        assert_eq!(s.trace.get(2).unwrap().answer.as_deref(), Some("American"));
        assert_eq!(s.resolve_node(9, "x"), Err(TraceError::UnknownNode(9)));
        let mut resolved = GlobalState::new("q").unwrap();
        resolved.resolve_node(0, "a").unwrap();
        assert_eq!(
            resolved.append_children(0, DecomposeMode::Serial, &["b".into()]),
            Err(TraceError::AlreadyResolved(0))
        );
    }

    #[test]
    fn summarizer_sees_all_answers() {
        let mut s = case1();
        s.resolve_node(1, "Fred Astaire").unwrap();
        s.resolve_node(2, "American").unwrap();
        let root = s.trace.root().clone();
        let obs = build_observation(&s, &RoundContext::new(), &root, Role::AS).unwrap();
        assert_eq!(obs.query(), s.q_origin);
        let answers: Vec<&str> = obs.global_selection.resolved.iter().map(|p| p.answer.as_str()).collect();
        assert_eq!(answers, vec!["Fred Astaire", "American"]);
        assert_eq!(obs.global_selection.decomposition, Some(DecomposeMode::Serial));
    }

    #[test]
    fn rewriter_sees_prior_serial_siblings() {
        let mut s = case1();
        s.resolve_node(1, "Fred Astaire").unwrap();
        let target = s.trace.get(2).unwrap().clone();
        let obs = build_observation(&s, &RoundContext::new(), &target, Role::QR).unwrap();
        assert_eq!(
            obs.global_selection.resolved,
            vec![QaPair {
                question: "Who is the actor that first performed Something's Gotta Give?".into(),
                answer: "Fred Astaire".into()
            }]
        );

        let mut p = GlobalState::new("a and b").unwrap();
        p.append_children(0, DecomposeMode::Parallel, &["a".into(), "b".into()]).unwrap();
        p.resolve_node(1, "x").unwrap();
        let target = p.trace.get(2).unwrap().clone();
        let obs = build_observation(&p, &RoundContext::new(), &target, Role::QR).unwrap();
        assert!(obs.global_selection.resolved.is_empty());
    }

    #[test]
    fn selector_needs_retrieval() {
        let s = GlobalState::new("q").unwrap();
        let root = s.trace.root().clone();
        assert_eq!(
            build_observation(&s, &RoundContext::new(), &root, Role::DS),
            Err(TraceError::MissingContext(Role::DS))
        );
        let mut ctx = RoundContext::new();
        ctx.push(Role::QR, ContextPayload::Text("rewritten".into()));
        let ra = build_observation(&s, &ctx, &root, Role::RA).unwrap();
        assert_eq!(ra.query(), "rewritten");
        let docs = vec![Document { doc_id: 3, text: "d".into() }];
        ctx.push(Role::RA, ContextPayload::Documents(docs.clone()));
        let ds = build_observation(&s, &ctx, &root, Role::DS).unwrap();
        assert_eq!(ds.documents(), docs.as_slice());
        let ag = build_observation(&s, &ctx, &root, Role::AG).unwrap();
        assert_eq!(ag.documents(), docs.as_slice());
        ctx.push(Role::DS, ContextPayload::Documents(vec![]));
        let ag = build_observation(&s, &ctx, &root, Role::AG).unwrap();
        assert!(ag.documents().is_empty());
    }

    #[test]
    fn delegated_marks_parents() {
        let mut s = case1();
        s.resolve_node(1, "Fred Astaire").unwrap();
        s.resolve_node(2, "American").unwrap();
        s.mark_delegated();
        assert_eq!(s.trace.root().answer.as_deref(), Some(DELEGATED));
        assert!(s.trace.all_solved());
        assert_eq!(s.resolved_pairs().len(), 2);
    }
}
