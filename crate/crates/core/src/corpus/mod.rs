//! Review corpora: JSON Lines ingestion, tokenization, folds and balancing.

mod folds;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LscError, Result};

pub use folds::{balance, make_folds, FoldAssignment};
pub use tokenize::{tokenize, Tokenizer, NEGATION_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn opposite(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    /// Labels derived from a star rating: above 3 is positive, below 3 is
    /// negative, exactly 3 carries no label.
    pub fn from_rating(rating: f64) -> Option<Polarity> {
        if rating > 3.0 {
            Some(Polarity::Positive)
        } else if rating < 3.0 {
            Some(Polarity::Negative)
        } else {
            None
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        })
    }
}

/// A labelled bag of words. Every stored count is at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub counts: BTreeMap<String, u32>,
    pub label: Polarity,
}

impl Document {
    pub fn from_tokens<I, S>(id: impl Into<String>, tokens: I, label: Polarity) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut counts = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.into()).or_insert(0) += 1;
        }
        Document {
            id: id.into(),
            counts,
            label,
        }
    }

    /// Total number of token occurrences.
    pub fn token_count(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    pub fn distinct_count(&self) -> usize {
        self.counts.len()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }
}

/// All labelled documents of one product domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    name: String,
    documents: Vec<Document>,
    vocabulary: BTreeSet<String>,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Self {
        let vocabulary = vocabulary_of(&documents);
        DomainDataset {
            name: name.into(),
            documents,
            vocabulary,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn class_count(&self, label: Polarity) -> usize {
        self.documents.iter().filter(|d| d.label == label).count()
    }
}

/// Union of the words of `docs`.
pub fn vocabulary_of<'a, I>(docs: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut vocab = BTreeSet::new();
    for d in docs {
        for w in d.counts.keys() {
            if !vocab.contains(w) {
                vocab.insert(w.clone());
            }
        }
    }
    vocab
}

/// One line of a review file.
///
/// Exactly one of `rating` and `label` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ReviewRecord {
    /// `Ok(None)` for a rating of exactly 3.
    pub fn polarity(&self) -> std::result::Result<Option<Polarity>, String> {
        match (self.rating, self.label.as_deref()) {
            (Some(_), Some(_)) => Err("record has both rating and label".into()),
            (None, None) => Err("record has neither rating nor label".into()),
            (Some(r), None) if !r.is_finite() => Err(format!("rating {r} is not finite")),
            (Some(r), None) => Ok(Polarity::from_rating(r)),
            (None, Some("pos")) => Ok(Some(Polarity::Positive)),
            (None, Some("neg")) => Ok(Some(Polarity::Negative)),
            (None, Some(other)) => Err(format!("label must be \"pos\" or \"neg\", got {other:?}")),
        }
    }
}

pub fn load_domain(path: impl AsRef<Path>, name: &str) -> Result<DomainDataset> {
    load_domain_with(path, name, &Tokenizer::default())
}

/// Reads a JSON Lines review file. Rating-3 records and blank lines are
/// skipped; any other bad line aborts the load with its line number.
pub fn load_domain_with(path: impl AsRef<Path>, name: &str, tokenizer: &Tokenizer) -> Result<DomainDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LscError::io(path, e))?;
    let malformed = |line: usize, message: String| LscError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut documents = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| LscError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ReviewRecord = serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        let Some(label) = record.polarity().map_err(|m| malformed(lineno, m))? else {
            continue;
        };
        let id = record.id.unwrap_or_else(|| format!("{name}:{lineno}"));
        if !seen_ids.insert(id.clone()) {
            return Err(malformed(lineno, format!("duplicate document id {id:?}")));
        }
        documents.push(Document::from_tokens(id, tokenizer.tokenize(&record.text), label));
    }
    Ok(DomainDataset::new(name, documents))
}

/// Loads every `*.jsonl` file in `dir` as a domain named after the file
/// stem, sorted by name.
pub fn load_corpus_dir(dir: impl AsRef<Path>, tokenizer: &Tokenizer) -> Result<Vec<DomainDataset>> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| LscError::io(dir, e))? {
        let path = entry.map_err(|e| LscError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| LscError::InvalidArgument(format!("bad file name {}", p.display())))?;
            load_domain_with(p, name, tokenizer)
        })
        .collect()
}

pub fn write_jsonl<'a, I>(path: impl AsRef<Path>, records: I) -> Result<()>
where
    I: IntoIterator<Item = &'a ReviewRecord>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LscError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| LscError::Parse(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| LscError::io(path, e))?;
    }
    w.flush().map_err(|e| LscError::io(path, e))
}
