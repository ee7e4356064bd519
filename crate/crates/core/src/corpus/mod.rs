//! Document corpus: tokenized sentences, event mentions, typed relations.
//!
//! A [`Document`] is a list of tokenized sentences plus the events annotated
//! on them. Each [`Event`] has one or more [`Mention`]s, a mention being a
//! token span inside one sentence. Gold [`RelationInstance`]s are directed,
//! typed edges between two events of the same document; the absence of an
//! edge means "no relation" and is never stored explicitly.

mod schema;
pub mod synth;

pub use schema::{load_corpus, save_corpus, LoadOptions};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relation taxonomy: the ordered set of positive relation type names.
///
/// Classifier outputs and reward bookkeeping index types by their position
/// in this list. "NONE" is not a member; it is the implicit empty set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    names: Vec<String>,
}

impl Taxonomy {
    pub fn new(names: Vec<String>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() || name.eq_ignore_ascii_case("none") {
                return Err(CorpusError::BadTaxonomy { name: name.clone() });
            }
            if !seen.insert(name.to_ascii_uppercase()) {
                return Err(CorpusError::BadTaxonomy { name: name.clone() });
            }
        }
        Ok(Taxonomy { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Index of a type name, case-insensitive.
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::new(vec![
            "CAUSE".to_string(),
            "PRECONDITION".to_string(),
            "SUBEVENT".to_string(),
        ])
        .expect("default taxonomy is valid")
    }
}

/// One tokenized sentence. `index` is the position within the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A trigger mention: the half-open token span `[start, end)` of sentence
/// `sentence` within its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

/// An event: a stable id plus at least one trigger mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub mentions: Vec<Mention>,
}

/// A directed, typed gold relation `head -> tail` between two event ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub head: String,
    pub tail: String,
    #[serde(rename = "type")]
    pub rtype: String,
}

/// Distance unit for event pair distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnit {
    /// Tokens strictly between the closest mention spans in the flattened document.
    Words,
    /// Absolute difference of sentence indices of the closest mentions.
    Sentences,
}

/// Corpus split labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::BadSplit { label: other.to_string() }),
        }
    }
}

/// A single annotated document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub events: Vec<Event>,
    pub relations: Vec<RelationInstance>,
}

impl Document {
    /// Total token count over all sentences.
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    /// Start offset of each sentence in the flattened token stream.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sentences.len());
        let mut acc = 0;
        for s in &self.sentences {
            offsets.push(acc);
            acc += s.len();
        }
        offsets
    }

    pub fn event_index(&self, id: &str) -> Option<usize> {
        self.events.iter().position(|e| e.id == id)
    }

    pub fn event(&self, id: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.id == id)
    }

    /// Tokens covered by a mention span.
    pub fn mention_tokens(&self, mention: &Mention) -> &[String] {
        &self.sentences[mention.sentence].tokens[mention.start..mention.end]
    }

    /// Surface form of a mention: its tokens joined with single spaces.
    pub fn mention_surface(&self, mention: &Mention) -> String {
        self.mention_tokens(mention).join(" ")
    }

    /// All surface tokens of an event's mentions, in mention order.
    pub fn trigger_tokens(&self, event: &Event) -> Vec<&str> {
        event
            .mentions
            .iter()
            .flat_map(|m| self.mention_tokens(m).iter().map(String::as_str))
            .collect()
    }

    /// Lowercased set of every trigger token in the document.
    pub fn trigger_token_set(&self) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        for event in &self.events {
            for token in self.trigger_tokens(event) {
                set.insert(token.to_ascii_lowercase());
            }
        }
        set
    }

    /// All ordered event pairs `(i, j)` with `i != j`, as indices into
    /// `self.events`, in lexicographic index order.
    pub fn event_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.events.len();
        let mut pairs = Vec::with_capacity(n.saturating_mul(n.saturating_sub(1)));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Minimum distance between any mention of `a` and any mention of `b`.
    ///
    /// With [`DistanceUnit::Words`] the distance is the number of tokens
    /// strictly between the two spans in the flattened document (0 when they
    /// touch or overlap); with [`DistanceUnit::Sentences`] it is the absolute
    /// sentence index difference. Symmetric in its arguments.
    pub fn pair_distance(&self, a: &str, b: &str, unit: DistanceUnit) -> Result<usize, CorpusError> {
        let ea = self.event(a).ok_or_else(|| CorpusError::UnknownEvent { id: a.to_string() })?;
        let eb = self.event(b).ok_or_else(|| CorpusError::UnknownEvent { id: b.to_string() })?;
        let offsets = self.sentence_offsets();
        let mut best = usize::MAX;
        for ma in &ea.mentions {
            for mb in &eb.mentions {
                let d = match unit {
                    DistanceUnit::Words => {
                        let ga = (offsets[ma.sentence] + ma.start, offsets[ma.sentence] + ma.end);
                        let gb = (offsets[mb.sentence] + mb.start, offsets[mb.sentence] + mb.end);
                        ga.0.max(gb.0).saturating_sub(ga.1.min(gb.1))
                    }
                    DistanceUnit::Sentences => ma.sentence.abs_diff(mb.sentence),
                };
                best = best.min(d);
            }
        }
        Ok(best)
    }

    /// Structural checks; returns every violation found rather than the first.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |path: String, message: String| {
            out.push(Violation { doc_id: self.id.clone(), path, message });
        };
        if self.id.is_empty() {
            push("id".into(), "document id is empty".into());
        }
        for (i, sentence) in self.sentences.iter().enumerate() {
            if sentence.tokens.is_empty() {
                push(format!("sentences[{i}]"), "sentence has no tokens".into());
            }
            if sentence.index != i {
                push(
                    format!("sentences[{i}]"),
                    format!("sentence index {} does not match position {i}", sentence.index),
                );
            }
        }
        let mut event_ids = BTreeSet::new();
        for (i, event) in self.events.iter().enumerate() {
            if !event_ids.insert(event.id.as_str()) {
                push(format!("events[{i}].id"), format!("duplicate event id `{}`", event.id));
            }
            if event.mentions.is_empty() {
                push(format!("events[{i}].mentions"), "event has no mentions".into());
            }
            for (j, m) in event.mentions.iter().enumerate() {
                let path = format!("events[{i}].mentions[{j}]");
                if m.sentence >= self.sentences.len() {
                    push(
                        path,
                        format!(
                            "sentence index {} out of range (document has {})",
                            m.sentence,
                            self.sentences.len()
                        ),
                    );
                    continue;
                }
                let len = self.sentences[m.sentence].len();
                if m.start >= m.end {
                    push(path, format!("empty span [{}, {})", m.start, m.end));
                } else if m.end > len {
                    push(path, format!("span end {} exceeds sentence length {len}", m.end));
                }
            }
        }
        let mut seen_edges = BTreeSet::new();
        for (i, rel) in self.relations.iter().enumerate() {
            let path = format!("relations[{i}]");
            for (role, id) in [("head", &rel.head), ("tail", &rel.tail)] {
                if !event_ids.contains(id.as_str()) {
                    push(format!("{path}.{role}"), format!("unknown event id `{id}`"));
                }
            }
            if rel.head == rel.tail {
                push(path.clone(), format!("self relation on event `{}`", rel.head));
            }
            if rel.rtype.eq_ignore_ascii_case("none") || rel.rtype.is_empty() {
                push(format!("{path}.type"), format!("invalid relation type `{}`", rel.rtype));
            }
            if !seen_edges.insert((rel.head.clone(), rel.tail.clone(), rel.rtype.clone())) {
                push(
                    path,
                    format!("duplicate relation {} -> {} ({})", rel.head, rel.tail, rel.rtype),
                );
            }
        }
        out
    }

    /// Gold positive type indices per ordered event pair, using `taxonomy`.
    /// Pairs without any relation are absent from the map.
    pub fn gold_pair_types(
        &self,
        taxonomy: &Taxonomy,
    ) -> Result<BTreeMap<(usize, usize), BTreeSet<usize>>, CorpusError> {
        let mut map: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for rel in &self.relations {
            let head = self
                .event_index(&rel.head)
                .ok_or_else(|| CorpusError::UnknownEvent { id: rel.head.clone() })?;
            let tail = self
                .event_index(&rel.tail)
                .ok_or_else(|| CorpusError::UnknownEvent { id: rel.tail.clone() })?;
            let t = taxonomy
                .index(&rel.rtype)
                .ok_or_else(|| CorpusError::UnknownRelationType { name: rel.rtype.clone() })?;
            map.entry((head, tail)).or_default().insert(t);
        }
        Ok(map)
    }
}

/// A set of documents plus their split assignment (parallel to `documents`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub splits: Vec<Split>,
}

impl Corpus {
    /// Build a corpus where every document lands in `split`.
    pub fn single_split(documents: Vec<Document>, split: Split) -> Self {
        let splits = vec![split; documents.len()];
        Corpus { documents, splits }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Documents assigned to `split`, in corpus order.
    pub fn docs_in_split(&self, split: Split) -> Vec<&Document> {
        self.documents
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(d, _)| d)
            .collect()
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.documents
            .iter()
            .position(|d| d.id == id)
            .map(|i| self.splits[i])
    }

    /// Validate every document plus corpus-level uniqueness of ids.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut ids = BTreeSet::new();
        for doc in &self.documents {
            if !ids.insert(doc.id.as_str()) {
                out.push(Violation {
                    doc_id: doc.id.clone(),
                    path: "id".into(),
                    message: format!("duplicate document id `{}`", doc.id),
                });
            }
            out.extend(doc.validate());
        }
        out
    }

    /// The relation taxonomy observed in gold annotations, in first-seen order.
    pub fn observed_taxonomy(&self) -> Result<Taxonomy, CorpusError> {
        let mut names: Vec<String> = Vec::new();
        for doc in &self.documents {
            for rel in &doc.relations {
                if !names.iter().any(|n| n.eq_ignore_ascii_case(&rel.rtype)) {
                    names.push(rel.rtype.clone());
                }
            }
        }
        Taxonomy::new(names)
    }
}

/// One structural problem found during validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub doc_id: String,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "doc `{}` {}: {}", self.doc_id, self.path, self.message)
    }
}

/// Errors from corpus construction, IO and lookups.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{path}`")]
    UnknownKey { line: usize, path: String },
    #[error("schema version mismatch: file has {found}, reader expects {expected}")]
    SchemaVersion { found: String, expected: String },
    #[error("validation failed with {} violation(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<Violation>),
    #[error("unknown event id `{id}`")]
    UnknownEvent { id: String },
    #[error("relation type `{name}` is not in the taxonomy")]
    UnknownRelationType { name: String },
    #[error("invalid taxonomy name `{name}`")]
    BadTaxonomy { name: String },
    #[error("unknown split label `{label}`")]
    BadSplit { label: String },
    #[error("split label for unknown document `{id}`")]
    SplitForUnknownDoc { id: String },
}
