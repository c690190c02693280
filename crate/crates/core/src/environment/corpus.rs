//! Document corpus with an inverted index and a TF-IDF lexical retriever.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u32,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate doc_id {0}")]
    DuplicateId(u32),
    #[error("retrieval depth must be at least 1")]
    ZeroK,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Lowercased alphanumeric word tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Anything that can play the frozen retrieval agent.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError>;
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    // term -> (position in `documents`, term frequency)
    index: HashMap<String, Vec<(usize, u32)>>,
    positions: HashMap<u32, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents
    }
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut positions = HashMap::with_capacity(documents.len());
        let mut index: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (pos, doc) in documents.iter().enumerate() {
            if positions.insert(doc.doc_id, pos).is_some() {
                return Err(CorpusError::DuplicateId(doc.doc_id));
            }
            let mut tf: HashMap<String, u32> = HashMap::new();
            for token in tokenize(&doc.text) {
                *tf.entry(token).or_default() += 1;
            }
            for (term, count) in tf {
                index.entry(term).or_default().push((pos, count));
            }
        }
        Ok(Corpus { documents, index, positions })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: u32) -> Option<&Document> {
        self.positions.get(&doc_id).map(|&p| &self.documents[p])
    }

    /// Number of documents containing `term` (already lowercased).
    pub fn document_frequency(&self, term: &str) -> usize {
        self.index.get(term).map_or(0, Vec::len)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.documents.len() as f64;
        ((n + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }

    /// Top-`k` documents by TF-IDF weighted term overlap, highest first, ties
    /// broken by ascending `doc_id`. Documents with no overlapping term rank
    /// below every matching one, so the result always holds `min(k, len)`
    /// documents.
    pub fn lexical_retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError> {
        if k == 0 {
            return Err(CorpusError::ZeroK);
        }
        if self.documents.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let terms: HashSet<String> = tokenize(query).collect();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        // Sorted term order keeps floating-point accumulation reproducible.
        let mut terms: Vec<String> = terms.into_iter().collect();
        terms.sort();
        for term in &terms {
            if let Some(postings) = self.index.get(term) {
                let idf = self.idf(postings.len());
                for &(pos, tf) in postings {
                    *scores.entry(pos).or_default() += tf as f64 * idf;
                }
            }
        }
        let mut ranked: Vec<(f64, u32, usize)> = scores
            .into_iter()
            .map(|(pos, s)| (s, self.documents[pos].doc_id, pos))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<Document> = ranked
            .iter()
            .take(k)
            .map(|&(_, _, pos)| self.documents[pos].clone())
            .collect();
        if out.len() < k {
            let taken: HashSet<u32> = out.iter().map(|d| d.doc_id).collect();
            let mut rest: Vec<&Document> =
                self.documents.iter().filter(|d| !taken.contains(&d.doc_id)).collect();
            rest.sort_by_key(|d| d.doc_id);
            out.extend(rest.into_iter().take(k - out.len()).cloned());
        }
        Ok(out)
    }

    /// Reads the `doc_id<TAB>text` line format. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let raw = fs::read_to_string(path)?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let mut docs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, text) = line.split_once('\t').ok_or_else(|| CorpusError::Parse {
                line: line_no,
                reason: "expected doc_id<TAB>text".into(),
            })?;
            let doc_id = id.trim().parse::<u32>().map_err(|e| CorpusError::Parse {
                line: line_no,
                reason: format!("bad doc_id {id:?}: {e}"),
            })?;
            docs.push(Document { doc_id, text: text.to_string() });
        }
        if docs.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        Self::new(docs)
    }

    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        for doc in &self.documents {
            writeln!(out, "{}\t{}", doc.doc_id, doc.text)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }
}

impl Retriever for Corpus {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, CorpusError> {
        self.lexical_retrieve(query, k)
    }
}
