//! The Plan → Execute → Update round loop over an execution trace.
//!
//! Every role invocation, including fallbacks after a malformed output,
//! becomes exactly one [`StepRecord`]. Rounds are numbered from 1 and steps
//! within a round from 0; the final synthesis step is appended to the last
//! round.

use std::io::{BufRead, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::environment::{CorpusError, Document, Retriever};
use crate::policy::{parse_output, ActionSample, BackendError, ParseBounds, PolicyBackend, TypedAction, ViolationReason};
use crate::reward::RewardBreakdown;
use crate::trace::{build_observation, ContextPayload, GlobalState, Observation, Role, RoundContext, TraceError, TraceNode};
use crate::workflow::{DecomposeMode, ExecutorKind, WorkflowPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineLimits {
    pub max_rounds: usize,
    /// Nodes at this depth or deeper may only be solved, not decomposed.
    pub max_depth: usize,
    pub max_retrievals: usize,
}

impl Default for EngineLimits {
    fn default() -> Self {
        EngineLimits { max_rounds: 3, max_depth: 1, max_retrievals: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub limits: EngineLimits,
    pub top_k: usize,
    /// Stop with an error when a backend call fails instead of recording a
    /// format violation and continuing.
    pub abort_on_backend_error: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { limits: EngineLimits::default(), top_k: 5, abort_on_backend_error: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub k: usize,
    pub role: Role,
    pub target_query: String,
    /// Planner menu was restricted to solving chains.
    pub solve_only: bool,
    pub observation_digest: String,
    pub action: String,
    pub outcome: Option<TypedAction>,
    pub format_violation: bool,
    pub violation: Option<ViolationReason>,
    pub log_prob: Option<f64>,
    pub action_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub final_answer: String,
    pub steps: Vec<StepRecord>,
    pub rounds_used: usize,
    pub retrievals_used: usize,
    /// The round cap was hit with unsolved nodes left.
    pub truncated: bool,
    pub final_state: GlobalState,
}

impl TrajectoryResult {
    /// Plan chosen at the root, if the Planner produced a valid one.
    pub fn root_action_index(&self) -> Option<usize> {
        self.steps.first().filter(|s| s.role == Role::Planner && !s.format_violation).and_then(|s| match &s.outcome {
            Some(TypedAction::Plan(p)) => p.menu_index(),
            _ => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{role} backend failed")]
    Backend { role: Role, source: BackendError },
    #[error(transparent)]
    Retrieval(#[from] CorpusError),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("trajectory line {line}: {reason}")]
    Reload { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which backend acts for each role. RA is served by the retriever.
#[derive(Clone, Copy, Default)]
pub struct Backends<'a> {
    slots: [Option<&'a dyn PolicyBackend>; 8],
}

fn slot(role: Role) -> usize {
    Role::ALL.iter().position(|r| *r == role).expect("role listed")
}

impl<'a> Backends<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, role: Role, backend: &'a dyn PolicyBackend) -> Self {
        self.slots[slot(role)] = Some(backend);
        self
    }

    /// Uses `backend` for every role except Planner and RA.
    pub fn with_executors(self, backend: &'a dyn PolicyBackend) -> Self {
        [Role::QDS, Role::QDP, Role::QR, Role::DS, Role::AG, Role::AS]
            .into_iter()
            .fold(self, |b, r| b.with(r, backend))
    }

    pub fn get(&self, role: Role) -> Option<&'a dyn PolicyBackend> {
        self.slots[slot(role)]
    }

    fn check(&self) -> Result<(), EngineError> {
        for role in Role::ALL.into_iter().filter(|r| *r != Role::RA) {
            match self.get(role) {
                None => return Err(EngineError::Configuration(format!("no backend for role {role}"))),
                Some(b) if !b.supports(role) => {
                    return Err(EngineError::Configuration(format!("backend for {role} does not support it")))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

struct Runner<'a, 'r> {
    backends: &'r Backends<'a>,
    retriever: &'r dyn Retriever,
    config: &'r EngineConfig,
    rng: &'r mut dyn RngCore,
    state: GlobalState,
    steps: Vec<StepRecord>,
    retrievals: usize,
}

struct Call {
    sample: ActionSample,
    failed: bool,
}

impl Runner<'_, '_> {
    fn call(&mut self, role: Role, obs: &Observation) -> Result<Call, EngineError> {
        let backend = self.backends.get(role).expect("checked before the loop");
        match backend.act(role, obs, self.rng) {
            Ok(sample) => Ok(Call { sample, failed: false }),
            Err(source) if self.config.abort_on_backend_error => Err(EngineError::Backend { role, source }),
            Err(e) => {
                log::warn!("{role} backend failed, recording a violation: {e}");
                Ok(Call { sample: ActionSample::text(""), failed: true })
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        t: usize,
        k: usize,
        obs: &Observation,
        call: Call,
        parsed: Result<TypedAction, ViolationReason>,
    ) -> Option<TypedAction> {
        let (outcome, violation) = match (call.failed, parsed) {
            (true, _) => (None, Some(ViolationReason::BackendFailure)),
            (false, Ok(a)) => (Some(a), None),
            (false, Err(v)) => (None, Some(v)),
        };
        self.steps.push(StepRecord {
            t,
            k,
            role: obs.role,
            target_query: obs.target_query.clone(),
            solve_only: obs.global_selection.solve_only,
            observation_digest: obs.digest(),
            action: call.sample.text,
            outcome: outcome.clone(),
            format_violation: violation.is_some(),
            violation,
            log_prob: call.sample.log_prob,
            action_index: call.sample.action_index,
        });
        outcome
    }

    /// Acts, parses and records one step; `None` means a violation.
    fn step(&mut self, t: usize, k: &mut usize, obs: Observation, bounds: ParseBounds) -> Result<Option<TypedAction>, EngineError> {
        let call = self.call(obs.role, &obs)?;
        let parsed = parse_output(obs.role, &call.sample.text, bounds).map_err(|v| v.reason);
        let out = self.record(t, *k, &obs, call, parsed);
        *k += 1;
        Ok(out)
    }

    fn retrieve(&mut self, query: &str) -> Result<Vec<Document>, EngineError> {
        if self.retrievals >= self.config.limits.max_retrievals {
            return Ok(Vec::new());
        }
        self.retrievals += 1;
        Ok(self.retriever.retrieve(query, self.config.top_k)?)
    }

    fn execute_solve_chain(
        &mut self,
        chain: &[ExecutorKind],
        target: &TraceNode,
        ctx: &mut RoundContext,
        t: usize,
        k: &mut usize,
    ) -> Result<String, EngineError> {
        let mut answer = String::new();
        for module in chain {
            match module {
                ExecutorKind::QR => {
                    let obs = build_observation(&self.state, ctx, target, Role::QR)?;
                    if let Some(TypedAction::Rewrite(q)) = self.step(t, k, obs, ParseBounds::default())? {
                        ctx.push(Role::QR, ContextPayload::Text(q));
                    }
                }
                ExecutorKind::R => {
                    let obs = build_observation(&self.state, ctx, target, Role::RA)?;
                    let query = obs.query().to_string();
                    let docs = self.retrieve(&query)?;
                    let call = Call { sample: ActionSample::text(query.clone()), failed: false };
                    self.record(t, *k, &obs, call, Ok(TypedAction::Search(query)));
                    *k += 1;
                    ctx.push(Role::RA, ContextPayload::Documents(docs));
                }
                ExecutorKind::DS => {
                    let obs = build_observation(&self.state, ctx, target, Role::DS)?;
                    let candidates = obs.documents().to_vec();
                    let bounds = ParseBounds::for_candidates(candidates.len());
                    let kept = match self.step(t, k, obs, bounds)? {
                        Some(TypedAction::Selection(ids)) => ids.iter().map(|i| candidates[*i].clone()).collect(),
                        _ => candidates,
                    };
                    ctx.push(Role::DS, ContextPayload::Documents(kept));
                }
                ExecutorKind::AG => {
                    let obs = build_observation(&self.state, ctx, target, Role::AG)?;
                    answer = match self.step(t, k, obs, ParseBounds::default())? {
                        Some(TypedAction::Answer(a)) => a,
                        _ => String::new(),
                    };
                    ctx.push(Role::AG, ContextPayload::Text(answer.clone()));
                }
                ExecutorKind::QDS | ExecutorKind::QDP => {
                    unreachable!("validated solving chains contain no decomposition")
                }
            }
        }
        self.state.resolve_node(target.node_id, &answer)?;
        Ok(answer)
    }

    fn round(&mut self, target: TraceNode, t: usize) -> Result<(), EngineError> {
        let mut ctx = RoundContext::new();
        let mut k = 0;
        let solve_only = target.depth >= self.config.limits.max_depth;
        let mut obs = build_observation(&self.state, &ctx, &target, Role::Planner)?;
        obs.global_selection.solve_only = solve_only;

        let call = self.call(Role::Planner, &obs)?;
        let parsed = parse_output(Role::Planner, &call.sample.text, ParseBounds::default())
            .map_err(|v| v.reason)
            .and_then(|a| match a {
                TypedAction::Plan(WorkflowPlan::Decompose(_)) if solve_only => Err(ViolationReason::DepthLimit),
                other => Ok(other),
            });
        let plan = match self.record(t, k, &obs, call, parsed) {
            Some(TypedAction::Plan(p)) => p,
            _ => WorkflowPlan::fallback(),
        };
        k += 1;

        match plan {
            WorkflowPlan::Decompose(mode) => {
                let role = match mode {
                    DecomposeMode::Serial => Role::QDS,
                    DecomposeMode::Parallel => Role::QDP,
                };
                let obs = build_observation(&self.state, &ctx, &target, role)?;
                match self.step(t, &mut k, obs, ParseBounds::default())? {
                    Some(TypedAction::SubQueries(subs)) => {
                        self.state.append_children(target.node_id, mode, &subs)?;
                    }
                    _ => {
                        let WorkflowPlan::Solve(chain) = WorkflowPlan::fallback() else { unreachable!() };
                        self.execute_solve_chain(&chain, &target, &mut ctx, t, &mut k)?;
                    }
                }
            }
            WorkflowPlan::Solve(chain) => {
                self.execute_solve_chain(&chain, &target, &mut ctx, t, &mut k)?;
            }
        }
        Ok(())
    }

    fn synthesize(&mut self, t: usize) -> Result<String, EngineError> {
        let root = self.state.trace.root().clone();
        let obs = build_observation(&self.state, &RoundContext::new(), &root, Role::AS)?;
        let mut k = self.steps.last().map_or(0, |s| s.k + 1);
        let answer = match self.step(t, &mut k, obs, ParseBounds::default())? {
            Some(TypedAction::Answer(a)) => a,
            _ => String::new(),
        };
        self.state.mark_delegated();
        Ok(answer)
    }
}

/// Runs the inference loop on one question.
pub fn run_inference(
    question: &str,
    backends: &Backends<'_>,
    retriever: &dyn Retriever,
    config: &EngineConfig,
    rng: &mut dyn RngCore,
) -> Result<TrajectoryResult, EngineError> {
    let limits = &config.limits;
    if limits.max_rounds == 0 || limits.max_depth == 0 || limits.max_retrievals == 0 || config.top_k == 0 {
        return Err(EngineError::Configuration("engine limits and top_k must be at least 1".into()));
    }
    backends.check()?;
    let mut runner = Runner {
        backends,
        retriever,
        config,
        rng,
        state: GlobalState::new(question)?,
        steps: Vec::new(),
        retrievals: 0,
    };
    let mut rounds = 0;
    let mut truncated = false;
    while let Some(target) = runner.state.first_unsolved_node().cloned() {
        if rounds >= limits.max_rounds {
            truncated = true;
            break;
        }
        rounds += 1;
        runner.state.round = rounds;
        runner.round(target, rounds)?;
    }
    let final_answer = if runner.state.trace.len() > 1 {
        runner.synthesize(rounds)?
    } else {
        runner.state.trace.root().answer.clone().unwrap_or_default()
    };
    Ok(TrajectoryResult {
        final_answer,
        steps: runner.steps,
        rounds_used: rounds,
        retrievals_used: runner.retrievals,
        truncated,
        final_state: runner.state,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct StepLine {
    query_id: String,
    reward: Option<f64>,
    advantage: Option<f64>,
    #[serde(flatten)]
    record: StepRecord,
}

/// Trailing summary line of an emitted trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub query_id: String,
    pub summary: bool,
    pub answer: String,
    pub f1: Option<f64>,
    pub rounds: usize,
    pub retrievals: usize,
    pub r_global: Option<f64>,
    pub truncated: bool,
    pub trace: Vec<TraceNode>,
}

/// One JSON line per step followed by a summary line.
pub fn emit_trajectory(
    query_id: &str,
    result: &TrajectoryResult,
    rewards: Option<&RewardBreakdown>,
    advantages: Option<&[f64]>,
) -> Result<Vec<String>, EngineError> {
    let n = result.steps.len();
    if let Some(r) = rewards {
        if r.per_step.len() != n {
            return Err(EngineError::LengthMismatch { expected: n, got: r.per_step.len() });
        }
    }
    if let Some(a) = advantages {
        if a.len() != n {
            return Err(EngineError::LengthMismatch { expected: n, got: a.len() });
        }
    }
    let mut lines = Vec::with_capacity(n + 1);
    for (i, step) in result.steps.iter().enumerate() {
        let line = StepLine {
            query_id: query_id.to_string(),
            reward: rewards.map(|r| r.per_step[i]),
            advantage: advantages.map(|a| a[i]),
            record: step.clone(),
        };
        lines.push(serde_json::to_string(&line).expect("step serializes"));
    }
    let summary = SummaryLine {
        query_id: query_id.to_string(),
        summary: true,
        answer: result.final_answer.clone(),
        f1: rewards.map(|r| r.r_perf),
        rounds: result.rounds_used,
        retrievals: result.retrievals_used,
        r_global: rewards.map(|r| r.r_global),
        truncated: result.truncated,
        trace: result.final_state.trace.nodes().to_vec(),
    };
    lines.push(serde_json::to_string(&summary).expect("summary serializes"));
    Ok(lines)
}

pub fn write_trajectory(mut out: impl Write, lines: &[String]) -> std::io::Result<()> {
    for l in lines {
        writeln!(out, "{l}")?;
    }
    Ok(())
}

/// Reads back the step records and summary of one emitted trajectory.
pub fn reload_trajectory(input: impl BufRead) -> Result<(Vec<StepRecord>, SummaryLine), EngineError> {
    let mut steps = Vec::new();
    let mut summary = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| EngineError::Reload { line: i + 1, reason: e.to_string() })?;
        let bad = |e: serde_json::Error| EngineError::Reload { line: i + 1, reason: e.to_string() };
        if value.get("summary") == Some(&json!(true)) {
            summary = Some(serde_json::from_value(value).map_err(bad)?);
        } else {
            let step: StepLine = serde_json::from_value(value).map_err(bad)?;
            steps.push(step.record);
        }
    }
    let summary = summary.ok_or(EngineError::Reload { line: 0, reason: "missing summary line".into() })?;
    Ok((steps, summary))
}
