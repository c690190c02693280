//! Planner/executor orchestration for agentic retrieval-augmented generation.
//!
//! A Planner composes a workflow for each unsolved sub-query in an execution
//! trace, specialised executors carry it out, and a cooperative PPO loop
//! trains the Planner from a shared terminal reward plus local format
//! penalties collected in one experience buffer.

pub mod config;
pub mod engine;
pub mod environment;
pub mod policy;
pub mod reward;
pub mod rl;
pub mod tags;
pub mod trace;
pub mod weights;
pub mod workflow;

pub use engine::{run_inference, EngineConfig, EngineLimits, StepRecord, TrajectoryResult};
pub use environment::{Corpus, Document, SyntheticTask};
pub use policy::{ActionSample, PolicyBackend, ToyPlannerPolicy, ValueEstimator};
pub use trace::{GlobalState, Observation, Role, RoundContext, TraceNode};
pub use workflow::{DecomposeMode, ExecutorKind, WorkflowPlan};
