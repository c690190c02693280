//! Synthetic entity-relation world: fact documents, distractors, question
//! templates and their interpretation.
//!
//! Facts are stored only as corpus text. [`KnowledgeBase::from_corpus`]
//! recovers them by matching the fact templates, so any corpus written in the
//! same style can drive the scripted executors.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::corpus::{Corpus, CorpusError, Document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    BornIn,
    DirectedBy,
    FoundedBy,
}

impl Relation {
    const ALL: [Relation; 3] = [Relation::BornIn, Relation::DirectedBy, Relation::FoundedBy];

    fn fact_marker(self) -> &'static str {
        match self {
            Relation::BornIn => " was born in ",
            Relation::DirectedBy => " was directed by ",
            Relation::FoundedBy => " was founded by ",
        }
    }

    /// Canonical single-hop question about `subject`.
    pub fn question(self, subject: &str) -> String {
        match self {
            Relation::BornIn => format!("Where was {subject} born?"),
            Relation::DirectedBy => format!("Who directed {subject}?"),
            Relation::FoundedBy => format!("Who founded {subject}?"),
        }
    }

    fn clause(self, subject: &str) -> String {
        match self {
            Relation::BornIn => format!("where was {subject} born"),
            Relation::DirectedBy => format!("who directed {subject}"),
            Relation::FoundedBy => format!("who founded {subject}"),
        }
    }

    fn subject_kind(self) -> EntityKind {
        match self {
            Relation::BornIn => EntityKind::Person,
            Relation::DirectedBy => EntityKind::Film,
            Relation::FoundedBy => EntityKind::Company,
        }
    }

    pub fn object_kind(self) -> EntityKind {
        match self {
            Relation::BornIn => EntityKind::City,
            Relation::DirectedBy | Relation::FoundedBy => EntityKind::Person,
        }
    }

    fn description(self) -> Option<&'static str> {
        match self {
            Relation::DirectedBy => Some("the director of "),
            Relation::FoundedBy => Some("the founder of "),
            Relation::BornIn => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Person,
    Film,
    Company,
    City,
}

/// Placeholder a serial decomposition uses for the bridge entity.
pub const BRIDGE_PRONOUN: &str = "that person";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub relation: Relation,
    pub subject: String,
    pub object: String,
    pub doc_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subject {
    Named(String),
    /// "the director of X": the object of `relation` applied to `of`.
    Described { relation: Relation, of: String },
    Pronoun,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub relation: Relation,
    pub subject: Subject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Interpretation {
    Clauses(Vec<Clause>),
    Unknown,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    facts: HashMap<(Relation, String), Fact>,
    names: HashMap<String, (EntityKind, String)>,
    by_kind: HashMap<EntityKind, Vec<String>>,
}

impl KnowledgeBase {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut kb = KnowledgeBase::default();
        for doc in corpus.documents() {
            let Some(body) = doc.text.strip_suffix('.') else { continue };
            for relation in Relation::ALL {
                if let Some((subject, object)) = body.split_once(relation.fact_marker()) {
                    kb.insert(Fact {
                        relation,
                        subject: subject.to_string(),
                        object: object.to_string(),
                        doc_id: doc.doc_id,
                    });
                    break;
                }
            }
        }
        for names in kb.by_kind.values_mut() {
            names.sort();
            names.dedup();
        }
        kb
    }

    fn insert(&mut self, fact: Fact) {
        self.register(&fact.subject, fact.relation.subject_kind());
        self.register(&fact.object, fact.relation.object_kind());
        self.facts.insert((fact.relation, fact.subject.to_lowercase()), fact);
    }

    fn register(&mut self, name: &str, kind: EntityKind) {
        self.names.entry(name.to_lowercase()).or_insert((kind, name.to_string()));
        self.by_kind.entry(kind).or_default().push(name.to_string());
    }

    pub fn fact(&self, relation: Relation, subject: &str) -> Option<&Fact> {
        self.facts.get(&(relation, subject.to_lowercase()))
    }

    pub fn entities(&self, kind: EntityKind) -> &[String] {
        self.by_kind.get(&kind).map_or(&[], Vec::as_slice)
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    fn display_name(&self, lower: &str, kind: EntityKind) -> Option<String> {
        self.names.get(lower).filter(|(k, _)| *k == kind).map(|(_, n)| n.clone())
    }

    fn parse_subject(&self, text: &str, relation: Relation) -> Option<Subject> {
        let text = text.trim();
        if text == BRIDGE_PRONOUN {
            return Some(Subject::Pronoun);
        }
        for inner in [Relation::DirectedBy, Relation::FoundedBy] {
            if let Some(rest) = text.strip_prefix(inner.description().unwrap_or_default()) {
                if let Some(of) = self.display_name(rest.trim(), inner.subject_kind()) {
                    return Some(Subject::Described { relation: inner, of });
                }
            }
        }
        self.display_name(text, relation.subject_kind()).map(Subject::Named)
    }

    fn parse_clause(&self, text: &str) -> Option<Clause> {
        let text = text.trim();
        let patterns: [(&str, &str, Relation); 3] = [
            ("where was ", " born", Relation::BornIn),
            ("who directed ", "", Relation::DirectedBy),
            ("who founded ", "", Relation::FoundedBy),
        ];
        for (prefix, suffix, relation) in patterns {
            if let Some(rest) = text.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) {
                if let Some(subject) = self.parse_subject(rest, relation) {
                    return Some(Clause { relation, subject });
                }
            }
        }
        None
    }

    /// Reads a question as one or more clauses joined by " and ".
    pub fn interpret(&self, question: &str) -> Interpretation {
        let q = question.trim().trim_end_matches('?').trim().to_lowercase();
        if let Some(c) = self.parse_clause(&q) {
            return Interpretation::Clauses(vec![c]);
        }
        let parts: Vec<&str> = q.split(" and ").collect();
        if parts.len() > 1 {
            if let Some(clauses) = parts.iter().map(|p| self.parse_clause(p)).collect::<Option<Vec<_>>>() {
                return Interpretation::Clauses(clauses);
            }
        }
        Interpretation::Unknown
    }

    /// Fact documents needed to answer `clause`.
    pub fn support(&self, clause: &Clause) -> Vec<u32> {
        match &clause.subject {
            Subject::Named(s) => self.fact(clause.relation, s).map(|f| vec![f.doc_id]).unwrap_or_default(),
            Subject::Described { relation, of } => {
                let Some(bridge) = self.fact(*relation, of) else { return Vec::new() };
                let mut ids = vec![bridge.doc_id];
                ids.extend(self.fact(clause.relation, &bridge.object).map(|f| f.doc_id));
                ids
            }
            Subject::Pronoun => Vec::new(),
        }
    }

    /// Answers `clause` using only facts whose documents are in `docs`.
    /// A pronoun subject is read off the highest-ranked matching document.
    pub fn answer_from(&self, clause: &Clause, docs: &[Document]) -> Option<String> {
        let visible: HashSet<u32> = docs.iter().map(|d| d.doc_id).collect();
        let lookup = |relation: Relation, subject: &str| {
            self.fact(relation, subject).filter(|f| visible.contains(&f.doc_id)).map(|f| f.object.clone())
        };
        match &clause.subject {
            Subject::Named(s) => lookup(clause.relation, s),
            Subject::Described { relation, of } => {
                let bridge = lookup(*relation, of)?;
                lookup(clause.relation, &bridge)
            }
            Subject::Pronoun => {
                let doc = Self::pronoun_doc(clause.relation, docs)?;
                let (_, object) = doc.text.strip_suffix('.')?.split_once(clause.relation.fact_marker())?;
                Some(object.to_string())
            }
        }
    }

    /// Highest-ranked document stating a `relation` fact.
    pub fn pronoun_doc(relation: Relation, docs: &[Document]) -> Option<&Document> {
        docs.iter().find(|d| d.text.strip_suffix('.').is_some_and(|b| b.contains(relation.fact_marker())))
    }

    /// Canonical question for a clause with a named subject.
    pub fn clause_question(&self, clause: &Clause) -> String {
        match &clause.subject {
            Subject::Named(s) => clause.relation.question(s),
            Subject::Pronoun => clause.relation.question(BRIDGE_PRONOUN),
            Subject::Described { relation, of } => {
                clause.relation.question(&format!("{}{of}", relation.description().unwrap_or_default()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskClass {
    SingleHop,
    SerialTwoHop,
    ParallelTwoFact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanClass {
    SolveDirect,
    QDS,
    QDP,
}

impl PlanClass {
    /// Class of a plan-menu index.
    pub fn of_menu_index(index: usize) -> Self {
        match index {
            6 => PlanClass::QDS,
            7 => PlanClass::QDP,
            _ => PlanClass::SolveDirect,
        }
    }
}

impl TaskClass {
    pub fn gold_plan_class(self) -> PlanClass {
        match self {
            TaskClass::SingleHop => PlanClass::SolveDirect,
            TaskClass::SerialTwoHop => PlanClass::QDS,
            TaskClass::ParallelTwoFact => PlanClass::QDP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub question: String,
    pub gold_answer: String,
    pub task_class: TaskClass,
    pub gold_plan_class: PlanClass,
    pub supporting_fact_ids: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskCounts {
    pub single: usize,
    pub serial: usize,
    pub parallel: usize,
}

impl TaskCounts {
    pub fn total(&self) -> usize {
        self.single + self.serial + self.parallel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldParams {
    /// Number of people; film, company and city counts scale from it.
    pub entities: usize,
    /// Distractor documents per person, film and company.
    pub distractors: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams { entities: 60, distractors: 4 }
    }
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("task file line {line}: {source}")]
    TaskParse { line: usize, source: serde_json::Error },
}

const FIRST: [&str; 24] = [
    "Alice", "Bruno", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Lorenzo",
    "Mira", "Nikolai", "Olga", "Pavel", "Quinn", "Rosa", "Stefan", "Talia", "Umar", "Vera", "Wendell", "Yara",
];
const LAST: [&str; 24] = [
    "Abbott", "Brandt", "Castell", "Draper", "Ekwall", "Fontaine", "Galloway", "Hartmann", "Ivers", "Jansen",
    "Kowalski", "Lindqvist", "Marchetti", "Novak", "Okafor", "Petrov", "Quiroga", "Rasmussen", "Sorensen",
    "Thorne", "Ueda", "Varga", "Whitlock", "Zeller",
];
const ADJ: [&str; 20] = [
    "Silent", "Crimson", "Hollow", "Golden", "Broken", "Distant", "Frozen", "Hidden", "Burning", "Velvet",
    "Electric", "Paper", "Midnight", "Quiet", "Iron", "Glass", "Wild", "Northern", "Lost", "Bright",
];
const NOUN: [&str; 20] = [
    "Harbor", "Orchard", "Lantern", "Meridian", "Cathedral", "Compass", "Tide", "Garden", "Signal", "Summit",
    "Mirror", "Canyon", "Parade", "Frontier", "Labyrinth", "Voyage", "Archive", "Ember", "Horizon", "Cipher",
];
const CO_HEAD: [&str; 16] = [
    "Apex", "Borealis", "Cobalt", "Dynamo", "Evergreen", "Fulcrum", "Granite", "Helix", "Ionic", "Juniper",
    "Keystone", "Lumen", "Monolith", "Nimbus", "Obsidian", "Paragon",
];
const CO_TAIL: [&str; 6] = ["Works", "Labs", "Industries", "Systems", "Holdings", "Dynamics"];
const SYLLABLES: [&str; 16] =
    ["vel", "mor", "tan", "ku", "ris", "bel", "dra", "zon", "lin", "ost", "qua", "fen", "rad", "mi", "sor", "tel"];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
}

/// Draws `n` distinct names produced by `make`.
fn distinct<R: Rng>(rng: &mut R, n: usize, mut make: impl FnMut(&mut R) -> String) -> Result<Vec<String>, GeneratorError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 100 * (n + 10) {
            return Err(GeneratorError::InvalidParams(format!("cannot draw {n} distinct names")));
        }
        let name = make(rng);
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    Ok(out)
}

/// A generated world: its corpus and the facts it encodes.
#[derive(Debug, Clone)]
pub struct World {
    pub corpus: Corpus,
    pub kb: KnowledgeBase,
}

impl World {
    pub fn generate(seed: u64, params: WorldParams) -> Result<Self, GeneratorError> {
        if params.entities < 4 {
            return Err(GeneratorError::InvalidParams("entities must be at least 4".into()));
        }
        if params.entities > FIRST.len() * LAST.len() {
            return Err(GeneratorError::InvalidParams(format!(
                "entities must be at most {}",
                FIRST.len() * LAST.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_people = params.entities;
        let n_films = params.entities.min(ADJ.len() * NOUN.len());
        let n_companies = (params.entities / 2).clamp(2, CO_HEAD.len() * CO_TAIL.len());
        let n_cities = (params.entities / 3).max(6);

        let people = distinct(&mut rng, n_people, |r| {
            format!("{} {}", FIRST.choose(r).unwrap(), LAST.choose(r).unwrap())
        })?;
        let films = distinct(&mut rng, n_films, |r| {
            format!("{} {}", ADJ.choose(r).unwrap(), NOUN.choose(r).unwrap())
        })?;
        let companies = distinct(&mut rng, n_companies, |r| {
            format!("{} {}", CO_HEAD.choose(r).unwrap(), CO_TAIL.choose(r).unwrap())
        })?;
        let cities = distinct(&mut rng, n_cities, |r| {
            let n = r.random_range(2..=3);
            capitalize(&(0..n).map(|_| *SYLLABLES.choose(r).unwrap()).collect::<String>())
        })?;

        let mut texts: Vec<String> = Vec::new();
        for p in &people {
            texts.push(format!("{p} was born in {}.", cities.choose(&mut rng).unwrap()));
        }
        for f in &films {
            texts.push(format!("{f} was directed by {}.", people.choose(&mut rng).unwrap()));
        }
        for c in &companies {
            texts.push(format!("{c} was founded by {}.", people.choose(&mut rng).unwrap()));
        }
        for _ in 0..params.distractors {
            for p in &people {
                let city = cities.choose(&mut rng).unwrap();
                let film = films.choose(&mut rng).unwrap();
                texts.push(match rng.random_range(0..3) {
                    0 => format!("{p} visited {city} last spring."),
                    1 => format!("{p} gave a lecture in {city}."),
                    _ => format!("{p} wrote a review of {film}."),
                });
            }
            for f in &films {
                let city = cities.choose(&mut rng).unwrap();
                texts.push(match rng.random_range(0..3) {
                    0 => format!("{f} was screened in {city}."),
                    1 => format!("{f} won an award at a festival in {city}."),
                    _ => format!("A restored print of {f} toured {city}."),
                });
            }
            for c in &companies {
                let city = cities.choose(&mut rng).unwrap();
                let film = films.choose(&mut rng).unwrap();
                texts.push(match rng.random_range(0..2) {
                    0 => format!("{c} opened an office in {city}."),
                    _ => format!("{c} sponsored a screening of {film}."),
                });
            }
        }
        texts.shuffle(&mut rng);
        let docs = texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Document { doc_id: i as u32, text })
            .collect();
        let corpus = Corpus::new(docs)?;
        let kb = KnowledgeBase::from_corpus(&corpus);
        Ok(World { corpus, kb })
    }

    fn single_hop<R: Rng>(&self, rng: &mut R, exclude: &HashSet<String>) -> Option<(Clause, String, Fact)> {
        let relation = *Relation::ALL.choose(rng).unwrap();
        let subjects = self.kb.entities(relation.subject_kind());
        let candidates: Vec<&String> =
            subjects.iter().filter(|s| !exclude.contains(*s) && self.kb.fact(relation, s).is_some()).collect();
        let subject = (*candidates.choose(rng)?).clone();
        let fact = self.kb.fact(relation, &subject)?.clone();
        Some((Clause { relation, subject: Subject::Named(subject.clone()) }, subject, fact))
    }

    fn make_task<R: Rng>(&self, rng: &mut R, class: TaskClass) -> Option<SyntheticTask> {
        match class {
            TaskClass::SingleHop => {
                let (clause, _, fact) = self.single_hop(rng, &HashSet::new())?;
                Some(SyntheticTask {
                    question: self.kb.clause_question(&clause),
                    gold_answer: fact.object.clone(),
                    task_class: class,
                    gold_plan_class: class.gold_plan_class(),
                    supporting_fact_ids: [fact.doc_id].into(),
                })
            }
            TaskClass::SerialTwoHop => {
                let inner = *[Relation::DirectedBy, Relation::FoundedBy].choose(rng).unwrap();
                let of = self.kb.entities(inner.subject_kind()).choose(rng)?.clone();
                let bridge = self.kb.fact(inner, &of)?;
                let last = self.kb.fact(Relation::BornIn, &bridge.object)?;
                let clause = Clause { relation: Relation::BornIn, subject: Subject::Described { relation: inner, of } };
                Some(SyntheticTask {
                    question: self.kb.clause_question(&clause),
                    gold_answer: last.object.clone(),
                    task_class: class,
                    gold_plan_class: class.gold_plan_class(),
                    supporting_fact_ids: [bridge.doc_id, last.doc_id].into(),
                })
            }
            TaskClass::ParallelTwoFact => {
                let (c1, s1, f1) = self.single_hop(rng, &HashSet::new())?;
                let (c2, _, f2) = self.single_hop(rng, &[s1].into())?;
                let name = |c: &Clause| match &c.subject {
                    Subject::Named(s) => s.clone(),
                    _ => unreachable!("parallel clauses are named"),
                };
                let question = format!(
                    "{} and {}?",
                    capitalize(&c1.relation.clause(&name(&c1))),
                    c2.relation.clause(&name(&c2))
                );
                Some(SyntheticTask {
                    question,
                    gold_answer: format!("{} and {}", f1.object, f2.object),
                    task_class: class,
                    gold_plan_class: class.gold_plan_class(),
                    supporting_fact_ids: [f1.doc_id, f2.doc_id].into(),
                })
            }
        }
    }

    /// Samples tasks of each class, avoiding questions listed in `avoid`
    /// while fresh ones are available.
    pub fn sample_tasks(
        &self,
        seed: u64,
        counts: TaskCounts,
        avoid: &HashSet<String>,
    ) -> Result<Vec<SyntheticTask>, GeneratorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(counts.total());
        let mut seen: HashSet<String> = HashSet::new();
        for (class, n) in [
            (TaskClass::SingleHop, counts.single),
            (TaskClass::SerialTwoHop, counts.serial),
            (TaskClass::ParallelTwoFact, counts.parallel),
        ] {
            for _ in 0..n {
                let mut task = None;
                for _ in 0..64 {
                    let t = self
                        .make_task(&mut rng, class)
                        .ok_or_else(|| GeneratorError::InvalidParams("world too small for task mix".into()))?;
                    let fresh = !avoid.contains(&t.question) && !seen.contains(&t.question);
                    task = Some(t);
                    if fresh {
                        break;
                    }
                }
                let task = task.expect("at least one attempt");
                seen.insert(task.question.clone());
                out.push(task);
            }
        }
        Ok(out)
    }
}

/// Builds a world and samples tasks from it; deterministic in `seed`.
pub fn generate_tasks(
    seed: u64,
    counts: TaskCounts,
    params: WorldParams,
) -> Result<(Corpus, Vec<SyntheticTask>), GeneratorError> {
    let world = World::generate(seed, params)?;
    let tasks = world.sample_tasks(seed.wrapping_add(1), counts, &HashSet::new())?;
    Ok((world.corpus, tasks))
}

/// World plus a training set and a held-out set whose questions avoid the
/// training ones where the world allows it.
pub fn generate_split(
    seed: u64,
    params: WorldParams,
    train: TaskCounts,
    held_out: TaskCounts,
) -> Result<(World, Vec<SyntheticTask>, Vec<SyntheticTask>), GeneratorError> {
    let world = World::generate(seed, params)?;
    let train_tasks = world.sample_tasks(seed.wrapping_add(1), train, &HashSet::new())?;
    let seen: HashSet<String> = train_tasks.iter().map(|t| t.question.clone()).collect();
    let eval_tasks = world.sample_tasks(seed.wrapping_add(2), held_out, &seen)?;
    Ok((world, train_tasks, eval_tasks))
}

pub fn save_tasks(path: impl AsRef<Path>, tasks: &[SyntheticTask]) -> Result<(), GeneratorError> {
    let mut out = fs::File::create(path)?;
    for t in tasks {
        writeln!(out, "{}", serde_json::to_string(t).expect("task serializes"))?;
    }
    Ok(())
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<SyntheticTask>, GeneratorError> {
    let raw = fs::read_to_string(path)?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| GeneratorError::TaskParse { line: i + 1, source }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> World {
        World::generate(42, WorldParams::default()).unwrap()
    }

    #[test]
    fn deterministic() {
        let counts = TaskCounts { single: 5, serial: 5, parallel: 5 };
        let (c1, t1) = generate_tasks(42, counts, WorldParams::default()).unwrap();
        let (c2, t2) = generate_tasks(42, counts, WorldParams::default()).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(t1, t2);
        let (c3, _) = generate_tasks(43, counts, WorldParams::default()).unwrap();
        assert_ne!(c1, c3);
    }

    #[test]
    fn class_tally() {
        let counts = TaskCounts { single: 10, serial: 10, parallel: 10 };
        let (_, tasks) = generate_tasks(7, counts, WorldParams::default()).unwrap();
        assert_eq!(tasks.len(), 30);
        for class in [TaskClass::SingleHop, TaskClass::SerialTwoHop, TaskClass::ParallelTwoFact] {
            assert_eq!(tasks.iter().filter(|t| t.task_class == class).count(), 10);
        }
        assert!(tasks.iter().all(|t| t.gold_plan_class == t.task_class.gold_plan_class()));
    }

    #[test]
    fn kb_recovers_every_fact() {
        let w = world();
        let p = WorldParams::default();
        assert_eq!(w.kb.fact_count(), p.entities + p.entities + p.entities / 2);
        assert_eq!(w.kb.entities(EntityKind::Person).len(), p.entities);
    }

    #[test]
    fn interprets_templates() {
        let w = world();
        let film = w.kb.entities(EntityKind::Film)[0].clone();
        let person = w.kb.entities(EntityKind::Person)[0].clone();
        let q = format!("Where was the director of {film} born?");
        let Interpretation::Clauses(c) = w.kb.interpret(&q) else { panic!("unparsed {q}") };
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].subject, Subject::Described { relation: Relation::DirectedBy, of: film.clone() });
        assert_eq!(w.kb.support(&c[0]).len(), 2);

        let q = format!("Who directed {film} and where was {person} born?");
        let Interpretation::Clauses(c) = w.kb.interpret(&q) else { panic!("unparsed {q}") };
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].relation, Relation::BornIn);

        let Interpretation::Clauses(c) = w.kb.interpret("Where was that person born?") else { panic!() };
        assert_eq!(c[0].subject, Subject::Pronoun);
        assert_eq!(w.kb.interpret("What is the meaning of life?"), Interpretation::Unknown);
    }

    #[test]
    fn rejects_tiny_worlds() {
        assert!(matches!(
            World::generate(1, WorldParams { entities: 2, distractors: 0 }),
            Err(GeneratorError::InvalidParams(_))
        ));
    }

    #[test]
    fn task_file_round_trip() {
        let (_, tasks) = generate_tasks(3, TaskCounts { single: 2, serial: 2, parallel: 2 }, WorldParams::default())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.jsonl");
        save_tasks(&path, &tasks).unwrap();
        assert_eq!(load_tasks(&path).unwrap(), tasks);
    }
}
