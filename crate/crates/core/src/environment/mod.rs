//! The external world: corpus and retriever, synthetic tasks, and scripted
//! executors with a tunable noise rate.

pub mod corpus;
pub mod oracle;
pub mod world;

pub use corpus::{tokenize, Corpus, CorpusError, Document, Retriever};
pub use oracle::{OracleConfig, OraclePlanner, ScriptedExecutors};
pub use world::{
    generate_split, generate_tasks, load_tasks, save_tasks, GeneratorError, KnowledgeBase, PlanClass, SyntheticTask, TaskClass,
    TaskCounts, World, WorldParams,
};
