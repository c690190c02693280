use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rag_orchestra::config::{BackendKind, RunConfig};
use rag_orchestra::engine::{emit_trajectory, run_inference, write_trajectory, Backends, EngineError};
use rag_orchestra::environment::{
    generate_split, load_tasks, save_tasks, Corpus, KnowledgeBase, OracleConfig, OraclePlanner, ScriptedExecutors,
    SyntheticTask, World,
};
use rag_orchestra::policy::{PolicyBackend, RemoteBackend, ReplayBackend, ToyPlannerPolicy, FEATURE_DIM};
use rag_orchestra::reward::assign_step_rewards;
use rag_orchestra::rl::{self, behavior_metrics, csv_header, csv_row, MetricsRecord, RlError, TrainReport};
use rag_orchestra::trace::Role;
use rag_orchestra::weights;

#[derive(Parser)]
#[command(name = "rag-orchestra", version, about = "Planner/executor orchestration for agentic RAG")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set reward.alpha=0.1 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent rollouts; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus, training tasks and held-out tasks.
    Generate(GenerateArgs),
    /// Answer one question.
    Infer(InferArgs),
    /// Train the toy planner.
    Train(TrainArgs),
    /// Evaluate saved planner weights.
    Eval(EvalArgs),
    /// Train once per (alpha, beta) grid point.
    Sweep(SweepArgs),
    /// Print the effective configuration.
    DumpConfig,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    single: Option<usize>,
    #[arg(long)]
    serial: Option<usize>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    entities: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    question: String,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Replay script (JSON) for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Planner weights for the toy backend.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    endpoint_url: Option<String>,
    /// Executor noise for the world-aware scripted executors.
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    /// Gold answer; adds F1 and rewards to the trace.
    #[arg(long)]
    gold: Option<String>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    eval_tasks: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value = "metrics.csv")]
    metrics_out: PathBuf,
    #[arg(long, default_value = "weights.bin")]
    weights_out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated alpha values.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Comma-separated beta values.
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value = "sweep.csv")]
    metrics_out: PathBuf,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;

trait ExitContext<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitContext<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, error: anyhow!(msg.into()) }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides).exit_with(EXIT_CONFIG)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    match cli.command {
        Command::Generate(args) => generate(cfg, args),
        Command::Infer(args) => infer(cfg, args),
        Command::Train(args) => train(cfg, args),
        Command::Eval(args) => eval(cfg, args),
        Command::Sweep(args) => sweep(cfg, args),
        Command::DumpConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn generate(mut cfg: RunConfig, args: GenerateArgs) -> Result<(), Failure> {
    let env = &mut cfg.env;
    env.single = args.single.unwrap_or(env.single);
    env.serial = args.serial.unwrap_or(env.serial);
    env.parallel = args.parallel.unwrap_or(env.parallel);
    env.entities = args.entities.unwrap_or(env.entities);
    env.distractors = args.distractors.unwrap_or(env.distractors);
    let (world, train, held_out) =
        generate_split(cfg.seed, env.world(), env.train_counts(), env.eval_counts()).exit_with(EXIT_CONFIG)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display())).exit_with(EXIT_FAILURE)?;
    let corpus_path = args.out_dir.join("corpus.tsv");
    world.corpus.save(&corpus_path).exit_with(EXIT_FAILURE)?;
    save_tasks(args.out_dir.join("tasks.jsonl"), &train).exit_with(EXIT_FAILURE)?;
    save_tasks(args.out_dir.join("eval_tasks.jsonl"), &held_out).exit_with(EXIT_FAILURE)?;
    println!(
        "wrote {} documents, {} tasks, {} held-out tasks to {}",
        world.corpus.len(),
        train.len(),
        held_out.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn load_corpus(path: &Path) -> Result<Corpus, Failure> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display())).exit_with(EXIT_CONFIG)
}

fn infer(mut cfg: RunConfig, args: InferArgs) -> Result<(), Failure> {
    let kind = args.backend.unwrap_or(cfg.backend.kind);
    if let Some(url) = args.endpoint_url {
        cfg.backend.remote.endpoint_url = url;
    }
    if !(0.0..=1.0).contains(&args.noise_rate) {
        return Err(config_error("--noise-rate must lie in [0, 1]"));
    }
    let corpus_path = args.corpus.or(cfg.env.corpus.clone().map(PathBuf::from));
    let corpus_path = corpus_path.ok_or_else(|| config_error("--corpus is required"))?;
    let corpus = load_corpus(&corpus_path)?;
    let kb = Arc::new(KnowledgeBase::from_corpus(&corpus));
    let oracle = OracleConfig { noise_rate: args.noise_rate, seed: cfg.seed };

    let replay;
    let remote;
    let toy;
    let oracle_planner;
    let executors;
    let backends = match kind {
        BackendKind::Scripted => match args.script.or(cfg.backend.script.clone().map(PathBuf::from)) {
            Some(path) => {
                replay = ReplayBackend::load(&path).with_context(|| format!("loading script {}", path.display())).exit_with(EXIT_CONFIG)?;
                Backends::new().with(Role::Planner, &replay).with_executors(&replay)
            }
            None => {
                oracle_planner = OraclePlanner::new(kb.clone());
                executors = ScriptedExecutors::new(kb.clone(), oracle);
                Backends::new().with(Role::Planner, &oracle_planner).with_executors(&executors)
            }
        },
        BackendKind::Remote => {
            remote = RemoteBackend::from_env(cfg.backend.remote.clone()).exit_with(EXIT_CONFIG)?;
            Backends::new().with(Role::Planner, &remote).with_executors(&remote)
        }
        BackendKind::Toy => {
            toy = match args.weights.or(cfg.backend.weights.clone().map(PathBuf::from)) {
                Some(path) => weights::load(&path).with_context(|| format!("loading {}", path.display())).exit_with(EXIT_CONFIG)?.0,
                None => ToyPlannerPolicy::new(cfg.rl.temperature),
            };
            executors = ScriptedExecutors::new(kb.clone(), oracle);
            Backends::new().with(Role::Planner, &toy as &dyn PolicyBackend).with_executors(&executors)
        }
    };

    let mut engine = cfg.engine;
    engine.abort_on_backend_error = true;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let result = run_inference(&args.question, &backends, &corpus, &engine, &mut rng).map_err(|e| {
        let code = match e {
            EngineError::Backend { .. } => EXIT_BACKEND,
            EngineError::Configuration(_) | EngineError::Trace(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        Failure { code, error: e.into() }
    })?;
    println!("{}", result.final_answer);

    if let Some(path) = args.trace {
        let rewards = match &args.gold {
            Some(g) => Some(assign_step_rewards(&result, g, &cfg.reward).exit_with(EXIT_FAILURE)?),
            None => None,
        };
        let lines = emit_trajectory("q0", &result, rewards.as_ref(), None).exit_with(EXIT_FAILURE)?;
        let file = File::create(&path).with_context(|| format!("creating {}", path.display())).exit_with(EXIT_FAILURE)?;
        write_trajectory(BufWriter::new(file), &lines).exit_with(EXIT_FAILURE)?;
    }
    Ok(())
}

struct Data {
    corpus: Corpus,
    kb: Arc<KnowledgeBase>,
    train: Vec<SyntheticTask>,
    eval: Vec<SyntheticTask>,
}

fn load_data(cfg: &RunConfig, args: &DataArgs) -> Result<Data, Failure> {
    let corpus_path = args.corpus.clone().or(cfg.env.corpus.clone().map(PathBuf::from));
    let tasks_path = args.tasks.clone().or(cfg.env.tasks.clone().map(PathBuf::from));
    let eval_path = args.eval_tasks.clone().or(cfg.env.eval_tasks.clone().map(PathBuf::from));
    let load = |p: &Path| load_tasks(p).with_context(|| format!("loading tasks {}", p.display())).exit_with(EXIT_CONFIG);
    let (corpus, train, eval) = match (corpus_path, tasks_path) {
        (Some(c), Some(t)) => {
            let corpus = load_corpus(&c)?;
            let train = load(&t)?;
            let eval = match eval_path {
                Some(e) => load(&e)?,
                None => Vec::new(),
            };
            (corpus, train, eval)
        }
        (None, None) => {
            let env = &cfg.env;
            let (World { corpus, .. }, train, eval) =
                generate_split(cfg.seed, env.world(), env.train_counts(), env.eval_counts()).exit_with(EXIT_CONFIG)?;
            (corpus, train, eval)
        }
        _ => return Err(config_error("--corpus and --tasks must be given together")),
    };
    if train.is_empty() {
        return Err(config_error("no training tasks"));
    }
    let kb = Arc::new(KnowledgeBase::from_corpus(&corpus));
    Ok(Data { corpus, kb, train, eval })
}

fn rl_failure(e: RlError) -> Failure {
    let code = match e {
        RlError::Configuration(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    };
    Failure { code, error: e.into() }
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), Failure> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display())).exit_with(EXIT_FAILURE)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{header}").exit_with(EXIT_FAILURE)?;
    for r in rows {
        writeln!(out, "{r}").exit_with(EXIT_FAILURE)?;
    }
    out.flush().exit_with(EXIT_FAILURE)
}

fn print_summary(m: &MetricsRecord) {
    println!("{:<16} {:>9}", "metric", "value");
    println!("{:<16} {:>9.4}", "f1", m.f1);
    println!("{:<16} {:>9.4}", "mean_rounds", m.mean_rounds);
    println!("{:<16} {:>9.4}", "mean_retrievals", m.mean_retrievals);
    println!("{:<16} {:>9.4}", "ds_ratio", m.ds_ratio);
    println!("{:<16} {:>9.4}", "gold_rate", m.gold_rate);
    for (i, w) in m.workflow.iter().enumerate() {
        println!("{:<16} {:>9.4}", format!("wf_{}", rag_orchestra::workflow::menu_label(i)), w);
    }
}

fn train(mut cfg: RunConfig, args: TrainArgs) -> Result<(), Failure> {
    if let Some(a) = args.alpha {
        cfg.reward.alpha = a;
    }
    if let Some(b) = args.beta {
        cfg.reward.beta = b;
    }
    if let Some(lr) = args.lr {
        cfg.rl.lr = lr;
    }
    if let Some(n) = args.iterations {
        cfg.rl.iterations = n;
    }
    let data = load_data(&cfg, &args.data)?;
    let report = rl::train(&data.train, &data.eval, &data.corpus, data.kb, &cfg.train_config()).map_err(rl_failure)?;
    let rows: Vec<String> = report.rows.iter().map(|r| csv_row(r.step, &r.metrics)).collect();
    write_csv(&args.metrics_out, &csv_header(), &rows)?;
    weights::save(&args.weights_out, &report.policy, &report.value).exit_with(EXIT_FAILURE)?;
    println!("updates: {}", report.updates);
    print_summary(&report.final_metrics());
    Ok(())
}

fn eval(cfg: RunConfig, args: EvalArgs) -> Result<(), Failure> {
    let (policy, _) = weights::load(&args.weights)
        .with_context(|| format!("loading {}", args.weights.display()))
        .exit_with(EXIT_CONFIG)?;
    if policy.feature_dim() != FEATURE_DIM {
        return Err(config_error(format!("weights have feature_dim {}, expected {FEATURE_DIM}", policy.feature_dim())));
    }
    let data = load_data(&cfg, &args.data)?;
    let set = if data.eval.is_empty() { &data.train } else { &data.eval };
    let tc = cfg.train_config();
    let executors = ScriptedExecutors::new(data.kb, tc.oracle);
    let runs = rl::evaluate(&policy, set, &data.corpus, &executors, &tc).map_err(rl_failure)?;
    let m = behavior_metrics(&runs);
    if let Some(path) = &args.metrics_out {
        write_csv(path, &csv_header(), &[csv_row(0, &m)])?;
    }
    print_summary(&m);
    Ok(())
}

fn sweep(mut cfg: RunConfig, args: SweepArgs) -> Result<(), Failure> {
    if args.alphas.is_empty() || args.betas.is_empty() {
        return Err(config_error("the grid is empty: give --alphas and --betas"));
    }
    if let Some(n) = args.iterations {
        cfg.rl.iterations = n;
    }
    let mut grid = Vec::new();
    let mut seen = HashSet::new();
    for a in &args.alphas {
        for b in &args.betas {
            if seen.insert((a.to_bits(), b.to_bits())) {
                grid.push((*a, *b));
            }
        }
    }
    let data = load_data(&cfg, &args.data)?;
    let results = rl::sweep(&grid, &data.train, &data.eval, &data.corpus, data.kb, &cfg.train_config());
    let mut rows = Vec::new();
    let mut failed = 0;
    println!("{:>6} {:>6} {:>8} {:>11} {:>9}", "alpha", "beta", "f1", "mean_rounds", "gold_rate");
    for ((a, b), res) in grid.iter().zip(&results) {
        match res {
            Ok(TrainReport { rows: r, .. }) => {
                rows.extend(r.iter().map(|row| format!("{a},{b},{}", csv_row(row.step, &row.metrics))));
                let m = res.as_ref().map(|r| r.final_metrics()).unwrap_or_default();
                println!("{a:>6} {b:>6} {:>8.4} {:>11.4} {:>9.4}", m.f1, m.mean_rounds, m.gold_rate);
            }
            Err(e) => {
                failed += 1;
                eprintln!("point alpha={a} beta={b} failed: {e}");
            }
        }
    }
    write_csv(&args.metrics_out, &format!("alpha,beta,{}", csv_header()), &rows)?;
    if failed > 0 {
        return Err(Failure { code: EXIT_FAILURE, error: anyhow!("{failed} of {} grid points failed", grid.len()) });
    }
    Ok(())
}
