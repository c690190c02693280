use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::TrajectoryResult;
use crate::environment::PlanClass;
use crate::policy::TypedAction;
use crate::trace::Role;
use crate::workflow::{menu_label, WorkflowPlan, N_ACTIONS};

/// A finished trajectory with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedTrajectory {
    pub result: TrajectoryResult,
    pub f1: f64,
    pub gold_plan_class: Option<PlanClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub f1: f64,
    pub mean_rounds: f64,
    pub mean_retrievals: f64,
    /// DS invocations per round.
    pub ds_ratio: f64,
    /// Share of trajectories whose root plan matches the gold plan class.
    pub gold_rate: f64,
    /// Fractions of all Planner decisions per menu entry; a malformed plan
    /// counts as the fallback it triggers.
    pub workflow: [f64; N_ACTIONS],
}

fn executed_plan_index(outcome: &Option<TypedAction>) -> usize {
    match outcome {
        Some(TypedAction::Plan(p)) => p.menu_index(),
        _ => None,
    }
    .or_else(|| WorkflowPlan::fallback().menu_index())
    .expect("fallback is on the menu")
}

pub fn behavior_metrics(trajectories: &[EvaluatedTrajectory]) -> MetricsRecord {
    let mut m = MetricsRecord::default();
    if trajectories.is_empty() {
        return m;
    }
    let n = trajectories.len() as f64;
    let mut rounds = 0usize;
    let mut ds = 0usize;
    let mut plans = [0usize; N_ACTIONS];
    let mut gold = 0usize;
    for e in trajectories {
        m.f1 += e.f1;
        rounds += e.result.rounds_used;
        m.mean_retrievals += e.result.retrievals_used as f64;
        for s in &e.result.steps {
            match s.role {
                Role::DS => ds += 1,
                Role::Planner => plans[executed_plan_index(&s.outcome)] += 1,
                _ => {}
            }
        }
        if let Some(g) = e.gold_plan_class {
            let root = e.result.steps.first().map(|s| executed_plan_index(&s.outcome));
            if root.map(PlanClass::of_menu_index) == Some(g) {
                gold += 1;
            }
        }
    }
    m.f1 /= n;
    m.mean_rounds = rounds as f64 / n;
    m.mean_retrievals /= n;
    m.ds_ratio = if rounds > 0 { ds as f64 / rounds as f64 } else { 0.0 };
    m.gold_rate = gold as f64 / n;
    let total: usize = plans.iter().sum();
    if total > 0 {
        for (w, c) in m.workflow.iter_mut().zip(plans) {
            *w = c as f64 / total as f64;
        }
    }
    m
}

/// Metrics CSV header.
pub fn csv_header() -> String {
    let mut h = String::from("step,f1,mean_rounds,mean_retrievals,ds_ratio,gold_rate");
    for i in 0..N_ACTIONS {
        write!(h, ",wf_{}", menu_label(i)).unwrap();
    }
    h
}

pub fn csv_row(step: usize, m: &MetricsRecord) -> String {
    let mut r = format!(
        "{step},{:.6},{:.6},{:.6},{:.6},{:.6}",
        m.f1, m.mean_rounds, m.mean_retrievals, m.ds_ratio, m.gold_rate
    );
    for w in m.workflow {
        write!(r, ",{w:.6}").unwrap();
    }
    r
}
