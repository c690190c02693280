//! Synchronous collect-then-update training of the toy planner against
//! scripted executors.

use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{annotate, flatten, ExperienceBuffer};
use super::metrics::{behavior_metrics, EvaluatedTrajectory, MetricsRecord};
use super::ppo::{ppo_update, Optimizers, PpoConfig};
use super::{AdvantageConfig, RlError};
use crate::engine::{run_inference, Backends, EngineConfig};
use crate::environment::{KnowledgeBase, OracleConfig, Retriever, ScriptedExecutors, SyntheticTask};
use crate::policy::{GreedyPlanner, PolicyBackend, ToyPlannerPolicy, ValueEstimator, FEATURE_DIM};
use crate::reward::{assign_step_rewards, RewardConfig};
use crate::trace::Role;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    /// Collect-then-update cycles.
    pub iterations: usize,
    /// Trajectories collected per cycle.
    pub batch_size: usize,
    /// Evaluate every this many cycles (and always after the last).
    pub eval_interval: usize,
    pub temperature: f64,
    /// Rollout threads; 0 lets the pool decide.
    pub jobs: usize,
    pub reward: RewardConfig,
    pub advantage: AdvantageConfig,
    pub ppo: PpoConfig,
    pub engine: EngineConfig,
    pub oracle: OracleConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 2400,
            batch_size: 256,
            eval_interval: 100,
            temperature: 1.0,
            jobs: 0,
            reward: RewardConfig::default(),
            advantage: AdvantageConfig::default(),
            ppo: PpoConfig::default(),
            engine: EngineConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Gradient steps taken so far.
    pub step: usize,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub rows: Vec<MetricsRow>,
    pub policy: ToyPlannerPolicy,
    pub value: ValueEstimator,
    pub updates: usize,
}

impl TrainReport {
    pub fn final_metrics(&self) -> MetricsRecord {
        self.rows.last().map(|r| r.metrics).unwrap_or_default()
    }
}

/// SplitMix64 finalizer; decorrelates derived seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `a`, item `b` under a base seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(base) ^ a) ^ b)
}

const EVAL_STREAM: u64 = 0xe7a1;
const ROLLOUT_STREAM: u64 = 0x5011;

fn pool(jobs: usize) -> Result<rayon::ThreadPool, RlError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RlError::Configuration(e.to_string()))
}

fn rollout(
    task: &SyntheticTask,
    backends: &Backends<'_>,
    retriever: &dyn Retriever,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(EvaluatedTrajectory, crate::reward::RewardBreakdown), RlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = run_inference(&task.question, backends, retriever, &cfg.engine, &mut rng)?;
    let rewards = assign_step_rewards(&result, &task.gold_answer, &cfg.reward)?;
    let eval = EvaluatedTrajectory { f1: rewards.r_perf, gold_plan_class: Some(task.gold_plan_class), result };
    Ok((eval, rewards))
}

/// Greedy-planner evaluation with fixed per-task executor seeds.
pub fn evaluate(
    policy: &ToyPlannerPolicy,
    tasks: &[SyntheticTask],
    retriever: &dyn Retriever,
    executors: &ScriptedExecutors,
    cfg: &TrainConfig,
) -> Result<Vec<EvaluatedTrajectory>, RlError> {
    let greedy = GreedyPlanner(policy);
    let backends = Backends::new().with(Role::Planner, &greedy).with_executors(executors);
    pool(cfg.jobs)?.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| rollout(t, &backends, retriever, cfg, derive_seed(cfg.seed, EVAL_STREAM, i as u64)).map(|r| r.0))
            .collect()
    })
}

/// Trains from a zero-initialized planner and value estimator.
pub fn train(
    tasks: &[SyntheticTask],
    eval_tasks: &[SyntheticTask],
    retriever: &dyn Retriever,
    kb: Arc<KnowledgeBase>,
    cfg: &TrainConfig,
) -> Result<TrainReport, RlError> {
    if tasks.is_empty() {
        return Err(RlError::Configuration("no training tasks".into()));
    }
    if cfg.batch_size == 0 || cfg.eval_interval == 0 || cfg.temperature <= 0.0 {
        return Err(RlError::Configuration("batch_size, eval_interval and temperature must be positive".into()));
    }
    if !(cfg.advantage.gamma > 0.0 && cfg.advantage.gamma <= 1.0 && (0.0..=1.0).contains(&cfg.advantage.lambda)) {
        return Err(RlError::Configuration("gamma must lie in (0, 1] and lambda in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&cfg.oracle.noise_rate) {
        return Err(RlError::Configuration("noise_rate must lie in [0, 1]".into()));
    }
    let executors = ScriptedExecutors::new(kb, cfg.oracle);
    let mut policy = ToyPlannerPolicy::new(cfg.temperature);
    let mut value = ValueEstimator::new(FEATURE_DIM);
    let mut opt = Optimizers::new(&policy, &value);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let threads = pool(cfg.jobs)?;
    let mut rows = Vec::new();
    let mut updates = 0;

    let record = |policy: &ToyPlannerPolicy, updates: usize, rows: &mut Vec<MetricsRow>| -> Result<(), RlError> {
        let set = if eval_tasks.is_empty() { tasks } else { eval_tasks };
        let metrics = behavior_metrics(&evaluate(policy, set, retriever, &executors, cfg)?);
        info!(
            "step {updates}: f1 {:.3} rounds {:.3} gold {:.3}",
            metrics.f1, metrics.mean_rounds, metrics.gold_rate
        );
        rows.push(MetricsRow { step: updates, metrics });
        Ok(())
    };
    record(&policy, 0, &mut rows)?;

    for iteration in 0..cfg.iterations {
        let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..tasks.len())).collect();
        let backends = Backends::new().with(Role::Planner, &policy as &dyn PolicyBackend).with_executors(&executors);
        let collected: Vec<_> = threads.install(|| {
            picks
                .par_iter()
                .enumerate()
                .map(|(slot, i)| {
                    let seed = derive_seed(cfg.seed, ROLLOUT_STREAM, (iteration * cfg.batch_size + slot) as u64);
                    rollout(&tasks[*i], &backends, retriever, cfg, seed)
                })
                .collect::<Result<_, _>>()
        })?;

        // Merge in task order so the buffer is identical for any thread count.
        let mut buffer = ExperienceBuffer::default();
        for (eval, rewards) in &collected {
            let mut transitions = flatten(&eval.result, rewards)?;
            annotate(&mut transitions, &value, &cfg.advantage)?;
            buffer.extend(transitions);
        }
        let stats = ppo_update(&mut policy, &mut value, &mut opt, &buffer.transitions, &cfg.ppo, &mut rng)?;
        updates += stats.updates;

        let last = iteration + 1 == cfg.iterations;
        if (iteration + 1) % cfg.eval_interval == 0 || last {
            record(&policy, updates, &mut rows)?;
        }
    }
    Ok(TrainReport { rows, policy, value, updates })
}

/// One training run per `(alpha, beta)` point; failures are kept per point.
pub fn sweep(
    grid: &[(f64, f64)],
    tasks: &[SyntheticTask],
    eval_tasks: &[SyntheticTask],
    retriever: &dyn Retriever,
    kb: Arc<KnowledgeBase>,
    base: &TrainConfig,
) -> Vec<Result<TrainReport, RlError>> {
    grid.iter()
        .map(|(alpha, beta)| {
            let mut cfg = *base;
            cfg.reward.alpha = *alpha;
            cfg.reward.beta = *beta;
            train(tasks, eval_tasks, retriever, kb.clone(), &cfg)
        })
        .collect()
}

