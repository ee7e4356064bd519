//! Prompt construction and answer parsing for chat-model relation labeling.
//!
//! The wording here is original to this project and versioned through
//! [`PROMPT_VERSION`]; bump the version whenever any template text changes
//! so cached responses and transcripts from older wordings can be told
//! apart.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::content_key;
use crate::clustering::{ClusterRef, ClusterSet};
use crate::corpus::{Document, Taxonomy};
use crate::relation::SourceTag;
use crate::summarizer::{ClusterSummary, Summaries};

use super::LlmError;

/// Version tag for all template text in this file.
pub const PROMPT_VERSION: &str = "1";

/// Instruction line prefixing cluster-summarization requests.
pub const SUMMARIZE_INSTRUCTION: &str =
    "Summarize the following sentences, preserving all event trigger words:";

/// How much of the document a relation prompt shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    /// Every sentence of the document.
    Document,
    /// Only the sentences holding the two triggers.
    SentencePair,
    /// The sentences of a cluster covering both triggers.
    DocClustering,
    /// The summary of a cluster covering both triggers.
    ClusterSummary,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 4] = [
        PromptVariant::Document,
        PromptVariant::SentencePair,
        PromptVariant::DocClustering,
        PromptVariant::ClusterSummary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::Document => "document",
            PromptVariant::SentencePair => "sentence_pair",
            PromptVariant::DocClustering => "doc_clustering",
            PromptVariant::ClusterSummary => "cluster_summary",
        }
    }

    /// Whether prompts need a cluster set covering the document.
    pub fn needs_clusters(self) -> bool {
        matches!(self, PromptVariant::DocClustering | PromptVariant::ClusterSummary)
    }

    /// Whether prompts need cluster summaries.
    pub fn needs_summaries(self) -> bool {
        self == PromptVariant::ClusterSummary
    }
}

impl std::fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PromptVariant {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| LlmError::UnknownVariant { name: s.to_string() })
    }
}

/// Short gloss for a relation type, used in the instruction block.
fn type_definition(name: &str) -> String {
    match name.to_ascii_uppercase().as_str() {
        "CAUSE" => "the head event brings about the tail event".to_string(),
        "PRECONDITION" => {
            "the head event must hold for the tail event to be possible".to_string()
        }
        "SUBEVENT" => "the tail event is a component step of the head event".to_string(),
        _ => format!("a directed {} relation from head to tail", name.to_ascii_lowercase()),
    }
}

fn instruction_block(taxonomy: &Taxonomy) -> String {
    let mut out = String::from(
        "Task: label the directed relation between two event triggers in the context.\n\
         Relation types:\n",
    );
    for name in taxonomy.names() {
        out.push_str(&format!("- {name}: {}.\n", type_definition(name)));
    }
    out.push_str(
        "Direction matters: judge only HEAD -> TAIL as asked; a relation holding only \
         in the opposite direction counts as NONE.\n\
         Reply with one line: either NONE or `<TYPE>: <head trigger> -> <tail trigger>`.\n",
    );
    out
}

/// One worked example shown before the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub context_lines: Vec<String>,
    pub head_surface: String,
    pub tail_surface: String,
    pub answer: String,
}

fn sentence_line(doc: &Document, index: usize) -> String {
    format!("S{index}: {}", doc.sentences[index].tokens.join(" "))
}

/// Surface form and sentence of an event's first mention.
fn event_anchor(doc: &Document, event_idx: usize) -> Result<(String, usize), LlmError> {
    let event = &doc.events[event_idx];
    let mention = event.mentions.first().ok_or_else(|| LlmError::EventWithoutMention {
        doc: doc.id.clone(),
        event: event.id.clone(),
    })?;
    Ok((doc.mention_surface(mention), mention.sentence))
}

/// Context lines for the sentences holding the two triggers (1 when
/// co-sentential, else 2).
fn pair_sentence_lines(
    doc: &Document,
    head: usize,
    tail: usize,
) -> Result<Vec<String>, LlmError> {
    let (_, head_sent) = event_anchor(doc, head)?;
    let (_, tail_sent) = event_anchor(doc, tail)?;
    let mut sentences = vec![head_sent, tail_sent];
    sentences.sort_unstable();
    sentences.dedup();
    Ok(sentences.into_iter().map(|s| sentence_line(doc, s)).collect())
}

/// Pick `k` worked examples from `docs` (the train split), alternating a
/// gold relation with a NONE pair. Selection is a pure function of `seed`.
pub fn build_exemplars(
    docs: &[&Document],
    taxonomy: &Taxonomy,
    k: usize,
    seed: u64,
) -> Result<Vec<Exemplar>, LlmError> {
    // Candidates: (doc index, head, tail, Some(type) | None).
    let mut positives: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut negatives: Vec<(usize, usize, usize)> = Vec::new();
    for (di, doc) in docs.iter().enumerate() {
        let gold = doc.gold_pair_types(taxonomy)?;
        for (head, tail) in doc.event_pairs() {
            match gold.get(&(head, tail)).and_then(|types| types.iter().next()) {
                Some(&t) => positives.push((di, head, tail, t)),
                None => negatives.push((di, head, tail)),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(content_key(seed, b"llm-exemplars"));
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let mut out = Vec::with_capacity(k);
    let (mut pi, mut ni) = (0usize, 0usize);
    for slot in 0..k {
        let want_positive = slot % 2 == 0;
        let take_positive =
            (want_positive && pi < positives.len()) || ni >= negatives.len();
        if take_positive && pi < positives.len() {
            let (di, head, tail, t) = positives[pi];
            pi += 1;
            let doc = docs[di];
            let (head_surface, _) = event_anchor(doc, head)?;
            let (tail_surface, _) = event_anchor(doc, tail)?;
            out.push(Exemplar {
                context_lines: pair_sentence_lines(doc, head, tail)?,
                answer: format!(
                    "{}: {head_surface} -> {tail_surface}",
                    taxonomy.names()[t]
                ),
                head_surface,
                tail_surface,
            });
        } else if ni < negatives.len() {
            let (di, head, tail) = negatives[ni];
            ni += 1;
            let doc = docs[di];
            let (head_surface, _) = event_anchor(doc, head)?;
            let (tail_surface, _) = event_anchor(doc, tail)?;
            out.push(Exemplar {
                context_lines: pair_sentence_lines(doc, head, tail)?,
                answer: "NONE".to_string(),
                head_surface,
                tail_surface,
            });
        }
    }
    Ok(out)
}

/// Everything a single relation prompt draws on.
#[derive(Debug, Clone, Copy)]
pub struct PromptInputs<'a> {
    pub doc: &'a Document,
    /// Head event index into `doc.events`.
    pub head: usize,
    /// Tail event index into `doc.events`.
    pub tail: usize,
    /// Required by the cluster-context variants.
    pub cluster_set: Option<&'a ClusterSet>,
    /// Required by the summary-context variant.
    pub summaries: Option<&'a Summaries>,
}

fn covering_cluster(
    inputs: &PromptInputs<'_>,
    variant: PromptVariant,
) -> Result<ClusterRef, LlmError> {
    let cluster_set = inputs.cluster_set.ok_or_else(|| LlmError::MissingContext {
        variant: variant.name().to_string(),
        what: "cluster set".to_string(),
    })?;
    cluster_set
        .clusters_containing_pair(inputs.doc, inputs.head, inputs.tail)
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::NoCoveringCluster {
            doc: inputs.doc.id.clone(),
            head: inputs.doc.events[inputs.head].id.clone(),
            tail: inputs.doc.events[inputs.tail].id.clone(),
        })
}

fn summary_lines(doc: &Document, summary: &ClusterSummary) -> Vec<String> {
    if summary.sentences.is_empty() {
        // Generated text with no sentence alignment: one flat line.
        vec![format!("SUM: {}", summary.tokens.join(" "))]
    } else {
        summary.sentences.iter().map(|&s| sentence_line(doc, s)).collect()
    }
}

/// The variant's context lines plus a provenance tag for the scored
/// prediction.
fn context_lines(
    variant: PromptVariant,
    inputs: &PromptInputs<'_>,
) -> Result<(Vec<String>, SourceTag), LlmError> {
    match variant {
        PromptVariant::Document => Ok((
            (0..inputs.doc.sentences.len()).map(|s| sentence_line(inputs.doc, s)).collect(),
            SourceTag::Document,
        )),
        PromptVariant::SentencePair => Ok((
            pair_sentence_lines(inputs.doc, inputs.head, inputs.tail)?,
            SourceTag::Document,
        )),
        PromptVariant::DocClustering => {
            let cref = covering_cluster(inputs, variant)?;
            let cluster_set = inputs.cluster_set.expect("checked by covering_cluster");
            let sentences = cluster_set.sentences_of(cref).expect("ref from this set");
            let tag = match cref {
                ClusterRef::Intra(_) => SourceTag::Intra,
                ClusterRef::Inter(_, _) => SourceTag::Inter,
            };
            Ok((sentences.iter().map(|&s| sentence_line(inputs.doc, s)).collect(), tag))
        }
        PromptVariant::ClusterSummary => {
            let cref = covering_cluster(inputs, variant)?;
            let summaries = inputs.summaries.ok_or_else(|| LlmError::MissingContext {
                variant: variant.name().to_string(),
                what: "summaries".to_string(),
            })?;
            let summary = summaries
                .intra
                .iter()
                .chain(summaries.inter.iter())
                .find(|s| s.source == cref)
                .ok_or_else(|| LlmError::MissingContext {
                    variant: variant.name().to_string(),
                    what: format!("summary for {cref}"),
                })?;
            let tag = match cref {
                ClusterRef::Intra(_) => SourceTag::Intra,
                ClusterRef::Inter(_, _) => SourceTag::Inter,
            };
            Ok((summary_lines(inputs.doc, summary), tag))
        }
    }
}

/// Assemble the full prompt for one ordered pair. Returns the text and the
/// provenance tag recorded on the resulting prediction.
pub fn build_prompt(
    variant: PromptVariant,
    inputs: &PromptInputs<'_>,
    taxonomy: &Taxonomy,
    exemplars: &[Exemplar],
) -> Result<(String, SourceTag), LlmError> {
    let (lines, tag) = context_lines(variant, inputs)?;
    let (head_surface, _) = event_anchor(inputs.doc, inputs.head)?;
    let (tail_surface, _) = event_anchor(inputs.doc, inputs.tail)?;
    let mut out = instruction_block(taxonomy);
    for exemplar in exemplars {
        out.push_str("\nExample:\nContext:\n");
        for line in &exemplar.context_lines {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!(
            "Pair: HEAD `{}` -> TAIL `{}`\nAnswer: {}\n",
            exemplar.head_surface, exemplar.tail_surface, exemplar.answer
        ));
    }
    out.push_str("\nNow label this pair.\nContext:\n");
    for line in &lines {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&format!("Pair: HEAD `{head_surface}` -> TAIL `{tail_surface}`\nAnswer:"));
    Ok((out, tag))
}

/// The head and tail surfaces of the final `Pair:` line of a prompt.
/// Used to re-parse answers from stored transcripts.
pub fn pair_surfaces(prompt: &str) -> Option<(String, String)> {
    let line = prompt.lines().rev().find(|l| l.starts_with("Pair: "))?;
    let mut spans = line.split('`').skip(1).step_by(2);
    let head = spans.next()?.to_string();
    let tail = spans.next()?.to_string();
    Some((head, tail))
}

/// Lowercased alphanumeric word runs of `text`.
fn words_of(text: &str) -> Vec<String> {
    text.to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// First position of `needle` as a contiguous word run inside `haystack`.
fn find_words(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    (0..=haystack.len() - needle.len()).find(|&start| haystack[start..start + needle.len()] == *needle)
}

/// Outcome of reading one model answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    /// Predicted type indices for the asked direction.
    pub types: BTreeSet<usize>,
    /// The answer named a relation but in tail-to-head order; counted as
    /// no relation for the asked pair.
    pub reversed: bool,
    /// Nothing recognizable; counted as no relation, flagged.
    pub parse_failed: bool,
}

/// Read a free-text answer. Matching is case-insensitive on whole words;
/// a bare type name also matches its `-s` form (as in "causes"). If both
/// trigger surfaces appear and the tail comes first, the answer is about
/// the reverse pair and yields no types here.
pub fn parse_relation_answer(
    text: &str,
    taxonomy: &Taxonomy,
    head_surface: &str,
    tail_surface: &str,
) -> ParsedAnswer {
    let answer_words = words_of(text);
    let mut types = BTreeSet::new();
    for (index, name) in taxonomy.names().iter().enumerate() {
        let lowered = name.to_ascii_lowercase();
        let plural = format!("{lowered}s");
        if answer_words.iter().any(|w| *w == lowered || *w == plural) {
            types.insert(index);
        }
    }
    let says_none = answer_words.iter().any(|w| w == "none")
        || answer_words.windows(2).any(|w| w[0] == "no" && w[1] == "relation");
    if types.is_empty() {
        return ParsedAnswer { types, reversed: false, parse_failed: !says_none };
    }
    let head_words = words_of(head_surface);
    let tail_words = words_of(tail_surface);
    let head_pos = find_words(&answer_words, &head_words);
    let tail_pos = find_words(&answer_words, &tail_words);
    if let (Some(h), Some(t)) = (head_pos, tail_pos) {
        if t < h {
            return ParsedAnswer {
                types: BTreeSet::new(),
                reversed: true,
                parse_failed: false,
            };
        }
    }
    ParsedAnswer { types, reversed: false, parse_failed: false }
}
