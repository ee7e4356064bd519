//! Context construction: token ids, sentence grouping, mention positions,
//! and the shared truncation rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::summarizer::ClusterSummary;

/// Token -> id map built from the training split. Unknown tokens share a
/// single out-of-vocabulary id equal to `len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    map: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Collect every token of `docs`; ids follow sorted token order so the
    /// map does not depend on document order.
    pub fn build<'a, I: IntoIterator<Item = &'a Document>>(docs: I) -> Self {
        let mut tokens: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for doc in docs {
            for sentence in &doc.sentences {
                for token in &sentence.tokens {
                    tokens.insert(token.clone());
                }
            }
        }
        let map = tokens.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
        Vocabulary { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Id for a token; unseen tokens map to the OOV id (`len()`).
    pub fn id(&self, token: &str) -> usize {
        self.map.get(token).copied().unwrap_or(self.map.len())
    }

    /// Number of embedding rows needed: vocabulary plus the OOV bucket.
    pub fn rows(&self) -> usize {
        self.map.len() + 1
    }
}

/// Where a context came from; the order is the selection priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceTag {
    Inter,
    Intra,
    Document,
}

/// Identity of a context within one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextSource {
    Inter(usize, usize),
    Intra(usize),
    Document,
}

impl ContextSource {
    pub fn tag(&self) -> SourceTag {
        match self {
            ContextSource::Inter(..) => SourceTag::Inter,
            ContextSource::Intra(_) => SourceTag::Intra,
            ContextSource::Document => SourceTag::Document,
        }
    }
}

/// A tokenized context ready for encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSpec {
    pub source: ContextSource,
    /// Vocabulary id per kept token, in context order.
    pub token_ids: Vec<usize>,
    /// Context-sentence ordinal per kept token (for the sentence bag).
    pub sent_of: Vec<usize>,
    /// Token count per context sentence.
    pub sent_sizes: Vec<usize>,
    /// Event id -> flat positions of its mention tokens that survived.
    /// Events with no surviving mention are absent.
    pub event_positions: BTreeMap<String, Vec<usize>>,
    /// True when the truncation budget removed tokens.
    pub truncated: bool,
}

impl ContextSpec {
    pub fn token_count(&self) -> usize {
        self.token_ids.len()
    }
}

/// Keep a prefix of `sentences` within `max_tokens`. Cutting happens at
/// sentence boundaries, except that a first sentence longer than the whole
/// budget is kept as a token prefix so the context is never empty.
fn truncate_sentences(
    doc: &Document,
    sentences: &[usize],
    max_tokens: Option<usize>,
) -> (Vec<(usize, usize)>, bool) {
    // (sentence index, kept token count) pairs.
    let Some(cap) = max_tokens else {
        return (sentences.iter().map(|&s| (s, doc.sentences[s].len())).collect(), false);
    };
    let mut kept = Vec::new();
    let mut used = 0usize;
    let mut truncated = false;
    for (rank, &s) in sentences.iter().enumerate() {
        let len = doc.sentences[s].len();
        if used + len <= cap {
            kept.push((s, len));
            used += len;
        } else if rank == 0 {
            kept.push((s, cap));
            truncated = true;
            break;
        } else {
            truncated = true;
            break;
        }
    }
    (kept, truncated)
}

/// Build a context from document sentences (document order preserved).
pub fn build_cluster_context(
    doc: &Document,
    vocab: &Vocabulary,
    source: ContextSource,
    sentences: &[usize],
    max_tokens: Option<usize>,
) -> ContextSpec {
    let (kept, truncated) = truncate_sentences(doc, sentences, max_tokens);
    let mut token_ids = Vec::new();
    let mut sent_of = Vec::new();
    let mut sent_sizes = Vec::new();
    let mut offset_of: BTreeMap<usize, (usize, usize)> = BTreeMap::new(); // sentence -> (flat offset, kept len)
    for (ordinal, &(s, kept_len)) in kept.iter().enumerate() {
        offset_of.insert(s, (token_ids.len(), kept_len));
        for token in &doc.sentences[s].tokens[..kept_len] {
            token_ids.push(vocab.id(token));
            sent_of.push(ordinal);
        }
        sent_sizes.push(kept_len);
    }
    // A mention survives when its span lies fully within the kept part.
    let mut event_positions: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for event in &doc.events {
        let mut positions = Vec::new();
        for mention in &event.mentions {
            if let Some(&(offset, kept_len)) = offset_of.get(&mention.sentence) {
                if mention.end <= kept_len {
                    positions.extend(offset + mention.start..offset + mention.end);
                }
            }
        }
        if !positions.is_empty() {
            positions.sort_unstable();
            positions.dedup();
            event_positions.insert(event.id.clone(), positions);
        }
    }
    ContextSpec { source, token_ids, sent_of, sent_sizes, event_positions, truncated }
}

/// The whole document as a context.
pub fn build_document_context(
    doc: &Document,
    vocab: &Vocabulary,
    max_tokens: Option<usize>,
) -> ContextSpec {
    let all: Vec<usize> = (0..doc.sentences.len()).collect();
    build_cluster_context(doc, vocab, ContextSource::Document, &all, max_tokens)
}

/// Build a context from a cluster summary.
///
/// Extractive summaries (with sentence indices) keep exact mention spans;
/// abstractive summaries are a single synthetic sentence and mentions are
/// found by scanning for their token sequence, case-insensitively.
pub fn build_summary_context(
    doc: &Document,
    vocab: &Vocabulary,
    summary: &ClusterSummary,
    max_tokens: Option<usize>,
) -> ContextSpec {
    let source = match summary.source {
        crate::clustering::ClusterRef::Intra(id) => ContextSource::Intra(id),
        crate::clustering::ClusterRef::Inter(a, b) => ContextSource::Inter(a, b),
    };
    if !summary.sentences.is_empty() {
        return build_cluster_context(doc, vocab, source, &summary.sentences, max_tokens);
    }
    // Abstractive path: one synthetic sentence of free tokens.
    let cap = max_tokens.unwrap_or(summary.tokens.len());
    let kept = summary.tokens.len().min(cap);
    let truncated = kept < summary.tokens.len();
    let tokens = &summary.tokens[..kept];
    let token_ids: Vec<usize> = tokens.iter().map(|t| vocab.id(t)).collect();
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_ascii_lowercase()).collect();
    let mut event_positions: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for event in &doc.events {
        let mut positions = Vec::new();
        for mention in &event.mentions {
            let needle: Vec<String> = doc
                .mention_tokens(mention)
                .iter()
                .map(|t| t.to_ascii_lowercase())
                .collect();
            if needle.is_empty() || needle.len() > lowered.len() {
                continue;
            }
            for start in 0..=(lowered.len() - needle.len()) {
                if lowered[start..start + needle.len()] == needle[..] {
                    positions.extend(start..start + needle.len());
                }
            }
        }
        if !positions.is_empty() {
            positions.sort_unstable();
            positions.dedup();
            event_positions.insert(event.id.clone(), positions);
        }
    }
    ContextSpec {
        source,
        sent_of: vec![0; kept],
        sent_sizes: vec![kept],
        token_ids,
        event_positions,
        truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::ClusterRef;
    use crate::corpus::{Event, Mention, Sentence};

    fn doc() -> Document {
        let mk = |index: usize, text: &str| Sentence {
            index,
            tokens: text.split(' ').map(String::from).collect(),
        };
        Document {
            id: "x".into(),
            sentences: vec![mk(0, "aa bb cc"), mk(1, "dd ee"), mk(2, "ff gg hh ii")],
            events: vec![
                Event { id: "e1".into(), mentions: vec![Mention { sentence: 0, start: 1, end: 2 }] },
                Event { id: "e2".into(), mentions: vec![Mention { sentence: 2, start: 2, end: 4 }] },
            ],
            relations: vec![],
        }
    }

    #[test]
    fn vocabulary_ids_are_content_stable() {
        let d = doc();
        let v1 = Vocabulary::build([&d]);
        let v2 = Vocabulary::build([&d]);
        assert_eq!(v1, v2);
        assert_eq!(v1.len(), 9);
        assert_eq!(v1.id("aa"), 0); // sorted order
        assert_eq!(v1.id("unseen-token"), v1.len());
        assert_eq!(v1.rows(), 10);
    }

    #[test]
    fn untruncated_context_keeps_everything() {
        let d = doc();
        let v = Vocabulary::build([&d]);
        let ctx = build_document_context(&d, &v, None);
        assert_eq!(ctx.token_count(), 9);
        assert!(!ctx.truncated);
        assert_eq!(ctx.sent_sizes, vec![3, 2, 4]);
        assert_eq!(ctx.event_positions["e1"], vec![1]);
        assert_eq!(ctx.event_positions["e2"], vec![7, 8]);
    }

    #[test]
    fn truncation_cuts_at_sentence_boundaries() {
        let d = doc();
        let v = Vocabulary::build([&d]);
        // Budget 6: sentences 0 (3) + 1 (2) fit; sentence 2 (4) does not.
        let ctx = build_document_context(&d, &v, Some(6));
        assert_eq!(ctx.token_count(), 5);
        assert!(ctx.truncated);
        assert_eq!(ctx.sent_sizes, vec![3, 2]);
        assert!(ctx.event_positions.contains_key("e1"));
        assert!(!ctx.event_positions.contains_key("e2"), "e2's sentence was cut");
    }

    #[test]
    fn oversized_first_sentence_keeps_a_token_prefix() {
        let d = doc();
        let v = Vocabulary::build([&d]);
        let ctx = build_cluster_context(&d, &v, ContextSource::Intra(0), &[2], Some(3));
        assert_eq!(ctx.token_count(), 3);
        assert!(ctx.truncated);
        // e2 spans tokens 2..4 of sentence 2; only 3 tokens kept -> absent.
        assert!(!ctx.event_positions.contains_key("e2"));
        // A narrower mention inside the prefix would survive.
        let mut d2 = d.clone();
        d2.events[1].mentions = vec![Mention { sentence: 2, start: 0, end: 1 }];
        let ctx2 = build_cluster_context(&d2, &v, ContextSource::Intra(0), &[2], Some(3));
        assert_eq!(ctx2.event_positions["e2"], vec![0]);
    }

    #[test]
    fn cluster_context_respects_sentence_subset() {
        let d = doc();
        let v = Vocabulary::build([&d]);
        let ctx = build_cluster_context(&d, &v, ContextSource::Inter(0, 1), &[0, 2], None);
        assert_eq!(ctx.token_count(), 7);
        assert_eq!(ctx.event_positions["e1"], vec![1]);
        // Sentence 2 starts at flat offset 3 here.
        assert_eq!(ctx.event_positions["e2"], vec![5, 6]);
        assert_eq!(ctx.sent_of, vec![0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn summary_context_extractive_path() {
        let d = doc();
        let v = Vocabulary::build([&d]);
        let summary = crate::summarizer::identity_summary(&d, ClusterRef::Intra(1), &[2]);
        let ctx = build_summary_context(&d, &v, &summary, None);
        assert_eq!(ctx.source, ContextSource::Intra(1));
        assert_eq!(ctx.event_positions["e2"], vec![2, 3]);
        assert!(!ctx.event_positions.contains_key("e1"));
    }

    #[test]
    fn summary_context_abstractive_scan() {
        let d = doc();
        let v = Vocabulary::build([&d]);
        let summary = crate::summarizer::ClusterSummary {
            source: ClusterRef::Intra(0),
            sentences: vec![],
            tokens: "zz BB yy hh ii".split(' ').map(String::from).collect(),
            events: vec![],
            event_chain: vec![],
            log_prob: None,
            sampled_mask: None,
        };
        let ctx = build_summary_context(&d, &v, &summary, None);
        // "BB" matches e1's surface case-insensitively; "hh ii" matches e2.
        assert_eq!(ctx.event_positions["e1"], vec![1]);
        assert_eq!(ctx.event_positions["e2"], vec![3, 4]);
        assert_eq!(ctx.sent_sizes, vec![5]);
        // Truncating to 2 tokens drops e2's span.
        let short = build_summary_context(&d, &v, &summary, Some(2));
        assert!(short.truncated);
        assert!(!short.event_positions.contains_key("e2"));
    }
}
