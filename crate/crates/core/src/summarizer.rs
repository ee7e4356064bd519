//! Cluster summarization.
//!
//! Every cluster (intra or inter) gets compressed into a short summary whose
//! job is to keep event triggers while cutting tokens. The default backend
//! is extractive: a small logistic scorer assigns each sentence a keep
//! probability, and a summary is either sampled (one Bernoulli draw per
//! sentence, for training) or decoded greedily (for inference). A length
//! budget caps the summary at a fraction of the cluster's tokens.
//!
//! Summaries serialize to a single line, `[EVENTCHAIN] t1 | t2 [SUMMARY]
//! tokens...`, where the chain lists the trigger surfaces that survived, in
//! order of first appearance. [`parse_summary`] inverts the format.
//!
//! An identity backend (summary = whole cluster) and an external abstractive
//! backend (any text generator, triggers recovered by scanning) plug into
//! the same interface.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterRef, ClusterSet, FeatureVector};
use crate::corpus::Document;

/// Guard for log-probability terms when a sigmoid saturates in f64.
const LOG_FLOOR: f64 = 1e-12;

/// Inputs the scorer sees beyond the per-sentence feature vector (length
/// ratio and trigger count); the policy input width is feature dim plus this.
pub const POLICY_EXTRA_INPUTS: usize = 2;

/// Sentence-keep scorer: a one-hidden-layer MLP over sentence features plus
/// two cluster-relative components (length ratio, trigger count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPolicy {
    /// hidden x input
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl SummaryPolicy {
    /// Small random init; deterministic for a given rng stream.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 0.2).expect("valid normal");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(rng)).collect() };
        SummaryPolicy {
            w1: Array2::from_shape_vec((hidden, input_dim), draw(hidden * input_dim))
                .expect("shape matches"),
            b1: Array1::from_vec(draw(hidden)),
            w2: Array1::from_vec(draw(hidden)),
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Raw score for one input vector.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let x = Array1::from_vec(x.to_vec());
        let a = (self.w1.dot(&x) + &self.b1).mapv(f64::tanh);
        self.w2.dot(&a) + self.b2
    }

    /// Accumulate `coeff * d logit / d params` into `grads`.
    /// Used by the policy-gradient step, which owns the coefficient.
    pub fn accumulate_logit_grad(&self, x: &[f64], coeff: f64, grads: &mut PolicyGrads) {
        let x = Array1::from_vec(x.to_vec());
        let z = self.w1.dot(&x) + &self.b1;
        let a = z.mapv(f64::tanh);
        grads.b2 += coeff;
        grads.w2.scaled_add(coeff, &a);
        // d logit / d z = w2 * (1 - tanh^2 z)
        let dz = (&self.w2 * &(1.0 - &a * &a)) * coeff;
        grads.b1 += &dz;
        for (mut row, dzi) in grads.w1.rows_mut().into_iter().zip(dz.iter()) {
            row.scaled_add(*dzi, &x);
        }
    }
}

/// Gradient accumulator shaped like [`SummaryPolicy`].
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl PolicyGrads {
    pub fn zeros_like(policy: &SummaryPolicy) -> Self {
        PolicyGrads {
            w1: Array2::zeros(policy.w1.raw_dim()),
            b1: Array1::zeros(policy.b1.raw_dim()),
            w2: Array1::zeros(policy.w2.raw_dim()),
            b2: 0.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Build the scorer input for one sentence of a cluster:
/// `[sentence features | sentence len / cluster len | trigger count]`.
pub fn policy_input(
    doc: &Document,
    cluster_sentences: &[usize],
    features: &[FeatureVector],
    sentence: usize,
) -> Vec<f64> {
    let cluster_tokens: usize = cluster_sentences.iter().map(|&s| doc.sentences[s].len()).sum();
    let mut x = features[sentence].as_slice().to_vec();
    let len = doc.sentences[sentence].len();
    x.push(if cluster_tokens > 0 { len as f64 / cluster_tokens as f64 } else { 0.0 });
    let triggers: usize = doc
        .events
        .iter()
        .flat_map(|e| &e.mentions)
        .filter(|m| m.sentence == sentence)
        .map(|m| m.end - m.start)
        .sum();
    x.push(triggers as f64);
    x
}

/// Keep probability per cluster sentence, in cluster order.
pub fn score_sentences(
    policy: &SummaryPolicy,
    doc: &Document,
    cluster_sentences: &[usize],
    features: &[FeatureVector],
) -> Result<Vec<f64>, SummarizerError> {
    if features.len() != doc.sentences.len() {
        return Err(SummarizerError::FeatureMismatch {
            features: features.len(),
            sentences: doc.sentences.len(),
        });
    }
    if cluster_sentences.is_empty() {
        return Err(SummarizerError::EmptyCluster);
    }
    let expected = features[0].dim() + POLICY_EXTRA_INPUTS;
    if policy.input_dim() != expected {
        return Err(SummarizerError::PolicyDimMismatch {
            policy: policy.input_dim(),
            expected,
        });
    }
    Ok(cluster_sentences
        .iter()
        .map(|&s| sigmoid(policy.logit(&policy_input(doc, cluster_sentences, features, s))))
        .collect())
}

/// One cluster's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub source: ClusterRef,
    /// Selected sentence indices, ascending. Empty for abstractive output.
    pub sentences: Vec<usize>,
    /// Summary tokens in order.
    pub tokens: Vec<String>,
    /// Ids of events with at least one surviving mention, in order of first
    /// appearance in the summary.
    pub events: Vec<String>,
    /// Trigger surfaces aligned with `events`.
    pub event_chain: Vec<String>,
    /// Log probability of the *pre-repair* selection under the policy.
    /// `None` for greedy decoding and non-extractive backends.
    pub log_prob: Option<f64>,
    /// Raw Bernoulli outcomes per cluster sentence, before budget repair.
    /// `None` unless the summary was sampled.
    pub sampled_mask: Option<Vec<bool>>,
}

impl ClusterSummary {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

fn cluster_token_count(doc: &Document, sentences: &[usize]) -> usize {
    sentences.iter().map(|&s| doc.sentences[s].len()).sum()
}

/// Events surviving in `selected` sentences, ordered by first appearance.
fn chain_from_selection(doc: &Document, selected: &[usize]) -> (Vec<String>, Vec<String>) {
    let mut events = Vec::new();
    let mut chain = Vec::new();
    for &s in selected {
        // Mentions in this sentence, in span order, across all events.
        let mut here: Vec<(usize, usize, &crate::corpus::Event)> = doc
            .events
            .iter()
            .flat_map(|e| e.mentions.iter().map(move |m| (m.sentence, m.start, e)))
            .filter(|(sent, _, _)| *sent == s)
            .collect();
        here.sort_by_key(|(_, start, _)| *start);
        for (sent, start, event) in here {
            if !events.contains(&event.id) {
                let mention = event
                    .mentions
                    .iter()
                    .find(|m| m.sentence == sent && m.start == start)
                    .expect("mention exists");
                events.push(event.id.clone());
                chain.push(doc.mention_surface(mention));
            }
        }
    }
    (events, chain)
}

fn summary_from_selection(
    doc: &Document,
    source: ClusterRef,
    mut selected: Vec<usize>,
    log_prob: Option<f64>,
    sampled_mask: Option<Vec<bool>>,
) -> ClusterSummary {
    selected.sort_unstable();
    let tokens: Vec<String> = selected
        .iter()
        .flat_map(|&s| doc.sentences[s].tokens.iter().cloned())
        .collect();
    let (events, event_chain) = chain_from_selection(doc, &selected);
    ClusterSummary { source, sentences: selected, tokens, events, event_chain, log_prob, sampled_mask }
}

/// Sample a summary: one Bernoulli draw per sentence, then budget repair.
///
/// Repair drops the lowest-probability selected sentence (ties drop the
/// higher index first) until the summary fits `budget * cluster tokens`; a
/// single remaining over-budget sentence is kept, and an empty selection is
/// replaced by the highest-probability sentence. `log_prob` and
/// `sampled_mask` describe the raw draw, before repair.
pub fn sample_summary(
    policy: &SummaryPolicy,
    doc: &Document,
    source: ClusterRef,
    cluster_sentences: &[usize],
    features: &[FeatureVector],
    budget: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ClusterSummary, SummarizerError> {
    let probs = score_sentences(policy, doc, cluster_sentences, features)?;
    let mask: Vec<bool> = probs.iter().map(|&p| rng.gen_bool(p.clamp(0.0, 1.0))).collect();
    let log_prob: f64 = probs
        .iter()
        .zip(&mask)
        .map(|(&p, &b)| if b { p.max(LOG_FLOOR).ln() } else { (1.0 - p).max(LOG_FLOOR).ln() })
        .sum();
    let mut selected: Vec<usize> = cluster_sentences
        .iter()
        .zip(&mask)
        .filter(|(_, &b)| b)
        .map(|(&s, _)| s)
        .collect();
    let budget_tokens = budget * cluster_token_count(doc, cluster_sentences) as f64;
    while selected.len() > 1 && cluster_token_count(doc, &selected) as f64 > budget_tokens {
        // Drop the weakest selected sentence; ties drop the higher index.
        let weakest = selected
            .iter()
            .enumerate()
            .map(|(slot, &s)| {
                let rank = cluster_sentences.iter().position(|&c| c == s).expect("member");
                (probs[rank], std::cmp::Reverse(s), slot)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, _, slot)| slot)
            .expect("non-empty");
        selected.remove(weakest);
    }
    if selected.is_empty() {
        selected.push(top_sentence(cluster_sentences, &probs));
    }
    Ok(summary_from_selection(doc, source, selected, Some(log_prob), Some(mask)))
}

/// Highest-probability sentence; ties pick the lower sentence index.
fn top_sentence(cluster_sentences: &[usize], probs: &[f64]) -> usize {
    cluster_sentences
        .iter()
        .zip(probs)
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&s, _)| s)
        .expect("cluster non-empty")
}

/// Deterministic decode: keep sentences with p > 0.5, admitted in descending
/// probability order while they fit the budget; an empty result falls back
/// to the single highest-probability sentence.
pub fn greedy_summary(
    policy: &SummaryPolicy,
    doc: &Document,
    source: ClusterRef,
    cluster_sentences: &[usize],
    features: &[FeatureVector],
    budget: f64,
) -> Result<ClusterSummary, SummarizerError> {
    let probs = score_sentences(policy, doc, cluster_sentences, features)?;
    let budget_tokens = budget * cluster_token_count(doc, cluster_sentences) as f64;
    let mut ranked: Vec<(f64, usize)> = probs
        .iter()
        .zip(cluster_sentences)
        .filter(|(&p, _)| p > 0.5)
        .map(|(&p, &s)| (p, s))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut selected = Vec::new();
    let mut used = 0usize;
    for (_, s) in ranked {
        let len = doc.sentences[s].len();
        if (used + len) as f64 <= budget_tokens {
            selected.push(s);
            used += len;
        }
    }
    if selected.is_empty() {
        selected.push(top_sentence(cluster_sentences, &probs));
    }
    Ok(summary_from_selection(doc, source, selected, None, None))
}

/// Summary = whole cluster, unchanged.
pub fn identity_summary(doc: &Document, source: ClusterRef, cluster_sentences: &[usize]) -> ClusterSummary {
    summary_from_selection(doc, source, cluster_sentences.to_vec(), None, None)
}

/// An external text summarizer (e.g. a generation model).
pub trait AbstractiveSummarizer {
    /// Produce a summary of `cluster_text`, expected to keep trigger words.
    fn summarize(&self, cluster_text: &str) -> Result<String, String>;
}

/// How to produce the extractive summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Summarization backend choice for a pipeline run.
pub enum SummarizerBackend<'a> {
    Extractive { policy: &'a SummaryPolicy, mode: DecodeMode },
    Identity,
    External(&'a dyn AbstractiveSummarizer),
}

/// Summaries for every cluster of a document, intra then inter, each in
/// ascending id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summaries {
    pub intra: Vec<ClusterSummary>,
    pub inter: Vec<ClusterSummary>,
}

impl Summaries {
    pub fn all(&self) -> impl Iterator<Item = &ClusterSummary> {
        self.intra.iter().chain(self.inter.iter())
    }
}

fn external_summary(
    backend: &dyn AbstractiveSummarizer,
    doc: &Document,
    source: ClusterRef,
    cluster_sentences: &[usize],
) -> Result<ClusterSummary, SummarizerError> {
    let text: String = cluster_sentences
        .iter()
        .map(|&s| doc.sentences[s].tokens.join(" "))
        .collect::<Vec<_>>()
        .join(" ");
    let summary_text = backend
        .summarize(&text)
        .map_err(|message| SummarizerError::Backend { cluster: source, message })?;
    let tokens: Vec<String> = summary_text.split_whitespace().map(String::from).collect();
    // Recover the chain by scanning for each event's mention surface.
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_ascii_lowercase()).collect();
    let mut found: Vec<(usize, usize)> = Vec::new(); // (position, event index)
    for (ei, event) in doc.events.iter().enumerate() {
        let mut first: Option<usize> = None;
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
                    first = Some(first.map_or(start, |f: usize| f.min(start)));
                    break;
                }
            }
        }
        if let Some(pos) = first {
            found.push((pos, ei));
        }
    }
    found.sort_unstable();
    let events: Vec<String> = found.iter().map(|&(_, ei)| doc.events[ei].id.clone()).collect();
    let event_chain: Vec<String> = found
        .iter()
        .map(|&(_, ei)| doc.mention_surface(&doc.events[ei].mentions[0]))
        .collect();
    Ok(ClusterSummary {
        source,
        sentences: Vec::new(),
        tokens,
        events,
        event_chain,
        log_prob: None,
        sampled_mask: None,
    })
}

/// Summarize every cluster of `cluster_set` with one backend.
/// `rng` is consumed only by `DecodeMode::Sample`.
pub fn summarize_cluster_set(
    backend: &SummarizerBackend<'_>,
    doc: &Document,
    cluster_set: &ClusterSet,
    features: &[FeatureVector],
    budget: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Summaries, SummarizerError> {
    let mut run = |source: ClusterRef, sentences: &[usize]| -> Result<ClusterSummary, SummarizerError> {
        match backend {
            SummarizerBackend::Extractive { policy, mode: DecodeMode::Sample } => {
                sample_summary(policy, doc, source, sentences, features, budget, rng)
            }
            SummarizerBackend::Extractive { policy, mode: DecodeMode::Greedy } => {
                greedy_summary(policy, doc, source, sentences, features, budget)
            }
            SummarizerBackend::Identity => Ok(identity_summary(doc, source, sentences)),
            SummarizerBackend::External(external) => {
                external_summary(*external, doc, source, sentences)
            }
        }
    };
    let mut intra = Vec::with_capacity(cluster_set.intra.len());
    for c in &cluster_set.intra {
        intra.push(run(ClusterRef::Intra(c.id), &c.sentences)?);
    }
    let mut inter = Vec::with_capacity(cluster_set.inter.len());
    for c in &cluster_set.inter {
        inter.push(run(ClusterRef::Inter(c.source.0, c.source.1), &c.sentences)?);
    }
    Ok(Summaries { intra, inter })
}

/// Render a summary as one line: `[EVENTCHAIN] t1 | t2 [SUMMARY] tokens...`.
pub fn serialize_summary(summary: &ClusterSummary) -> String {
    format!(
        "[EVENTCHAIN] {} [SUMMARY] {}",
        summary.event_chain.join(" | "),
        summary.tokens.join(" ")
    )
    .trim_end()
    .to_string()
}

/// Chain surfaces and tokens recovered from the serialized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSummary {
    pub event_chain: Vec<String>,
    pub tokens: Vec<String>,
}

/// Inverse of [`serialize_summary`] up to the information the text carries
/// (selected sentence indices and probabilities are not serialized).
pub fn parse_summary(text: &str) -> Result<ParsedSummary, SummarizerError> {
    let bad = |message: &str| SummarizerError::Unparseable { message: message.to_string() };
    let rest = text
        .trim_start()
        .strip_prefix("[EVENTCHAIN]")
        .ok_or_else(|| bad("missing [EVENTCHAIN] marker"))?;
    let split_at = rest.find("[SUMMARY]").ok_or_else(|| bad("missing [SUMMARY] marker"))?;
    let chain_part = rest[..split_at].trim();
    let tokens_part = rest[split_at + "[SUMMARY]".len()..].trim();
    let event_chain: Vec<String> = if chain_part.is_empty() {
        Vec::new()
    } else {
        let entries: Vec<&str> = chain_part.split('|').map(str::trim).collect();
        if entries.iter().any(|e| e.is_empty()) {
            return Err(bad("empty event chain entry"));
        }
        entries.into_iter().map(String::from).collect()
    };
    let tokens: Vec<String> = tokens_part.split_whitespace().map(String::from).collect();
    Ok(ParsedSummary { event_chain, tokens })
}

/// Summarizer errors.
#[derive(Debug, Error)]
pub enum SummarizerError {
    #[error("feature count {features} does not match sentence count {sentences}")]
    FeatureMismatch { features: usize, sentences: usize },
    #[error("cluster has no sentences")]
    EmptyCluster,
    #[error("policy expects input dim {policy}, features give {expected}")]
    PolicyDimMismatch { policy: usize, expected: usize },
    #[error("external backend failed on cluster {cluster}: {message}")]
    Backend { cluster: ClusterRef, message: String },
    #[error("unparseable summary: {message}")]
    Unparseable { message: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{sentence_features, FeatureWeights, IdfStats};
    use crate::corpus::synth::{generate, SynthConfig};
    use crate::corpus::{Event, Mention, Sentence};
    use rand::SeedableRng;

    /// Document with three sentences of 2/3/4 tokens and one event each.
    fn tiny_doc() -> Document {
        let mk = |index: usize, text: &str| Sentence {
            index,
            tokens: text.split(' ').map(String::from).collect(),
        };
        Document {
            id: "t".into(),
            sentences: vec![mk(0, "alpha beta"), mk(1, "gamma delta eps"), mk(2, "zeta eta theta iota")],
            events: vec![
                Event { id: "e0".into(), mentions: vec![Mention { sentence: 0, start: 0, end: 1 }] },
                Event { id: "e1".into(), mentions: vec![Mention { sentence: 1, start: 1, end: 2 }] },
                Event { id: "e2".into(), mentions: vec![Mention { sentence: 2, start: 2, end: 3 }] },
            ],
            relations: vec![],
        }
    }

    /// One-feature policy whose keep probability rises with the feature.
    fn ramp_policy() -> SummaryPolicy {
        SummaryPolicy {
            w1: Array2::from_shape_vec((1, 3), vec![2.0, 0.0, 0.0]).unwrap(),
            b1: Array1::zeros(1),
            w2: Array1::from_vec(vec![3.0]),
            b2: 0.0,
        }
    }

    fn ramp_features() -> Vec<FeatureVector> {
        vec![
            FeatureVector(vec![-0.8]),
            FeatureVector(vec![0.1]),
            FeatureVector(vec![0.9]),
        ]
    }

    fn expected_probs(doc: &Document, cluster: &[usize], features: &[FeatureVector]) -> Vec<f64> {
        let policy = ramp_policy();
        cluster
            .iter()
            .map(|&s| {
                let x = policy_input(doc, cluster, features, s);
                1.0 / (1.0 + (-policy.logit(&x)).exp())
            })
            .collect()
    }

    #[test]
    fn sampled_mask_frequencies_match_probabilities() {
        let doc = tiny_doc();
        let features = ramp_features();
        let cluster = vec![0, 1, 2];
        let policy = ramp_policy();
        let probs = expected_probs(&doc, &cluster, &features);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let trials = 20_000usize;
        let mut hits = vec![0usize; 3];
        let mut joint = 0usize; // pattern (true, false, true)
        for _ in 0..trials {
            let s = sample_summary(
                &policy, &doc, ClusterRef::Intra(0), &cluster, &features, 1.0, &mut rng,
            )
            .unwrap();
            let mask = s.sampled_mask.unwrap();
            for (h, &b) in hits.iter_mut().zip(&mask) {
                *h += usize::from(b);
            }
            if mask == [true, false, true] {
                joint += 1;
            }
        }
        for (i, &p) in probs.iter().enumerate() {
            let freq = hits[i] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (freq - p).abs() < 4.0 * sigma + 1e-3,
                "sentence {i}: freq {freq} vs p {p}"
            );
        }
        // Draws are independent across sentences.
        let expect = probs[0] * (1.0 - probs[1]) * probs[2];
        let freq = joint as f64 / trials as f64;
        let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((freq - expect).abs() < 4.0 * sigma + 1e-3, "joint {freq} vs {expect}");
    }

    #[test]
    fn log_prob_matches_mask() {
        let doc = tiny_doc();
        let features = ramp_features();
        let cluster = vec![0, 1, 2];
        let probs = expected_probs(&doc, &cluster, &features);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sample_summary(
            &ramp_policy(), &doc, ClusterRef::Intra(0), &cluster, &features, 1.0, &mut rng,
        )
        .unwrap();
        let mask = s.sampled_mask.as_ref().unwrap();
        let expect: f64 = probs
            .iter()
            .zip(mask)
            .map(|(&p, &b)| if b { p.ln() } else { (1.0 - p).ln() })
            .sum();
        assert!((s.log_prob.unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn budget_repair_drops_lowest_probability_first() {
        let doc = tiny_doc(); // 9 tokens total
        let features = ramp_features(); // probs ascending by sentence
        let cluster = vec![0, 1, 2];
        // Budget of 0.5 -> 4.5 tokens. If all three are drawn (2+3+4 = 9),
        // repair drops sentence 0 (lowest p, 2 tokens -> 7), then sentence 1
        // (-> 4 tokens, fits).
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let s = sample_summary(
                &ramp_policy(), &doc, ClusterRef::Intra(0), &cluster, &features, 0.5, &mut rng,
            )
            .unwrap();
            let tokens = s.token_count();
            assert!(
                tokens as f64 <= 4.5 || s.sentences.len() == 1,
                "over budget: {:?}",
                s.sentences
            );
            if s.sampled_mask.as_ref().unwrap() == &[true, true, true] {
                assert_eq!(s.sentences, vec![2], "repair should keep the strongest sentence");
            }
        }
    }

    #[test]
    fn empty_draw_falls_back_to_top_sentence() {
        let doc = tiny_doc();
        let features = ramp_features();
        let cluster = vec![0, 1, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut saw_empty_draw = false;
        for _ in 0..500 {
            let s = sample_summary(
                &ramp_policy(), &doc, ClusterRef::Intra(0), &cluster, &features, 1.0, &mut rng,
            )
            .unwrap();
            assert!(!s.sentences.is_empty());
            if s.sampled_mask.as_ref().unwrap().iter().all(|&b| !b) {
                saw_empty_draw = true;
                assert_eq!(s.sentences, vec![2]); // highest probability
            }
        }
        assert!(saw_empty_draw, "test never exercised the empty-draw path");
    }

    #[test]
    fn greedy_is_deterministic_and_thresholded() {
        let doc = tiny_doc();
        let features = ramp_features();
        let cluster = vec![0, 1, 2];
        let probs = expected_probs(&doc, &cluster, &features);
        assert!(probs[0] < 0.5 && probs[1] > 0.5 && probs[2] > 0.5, "probs {probs:?}");
        let a = greedy_summary(&ramp_policy(), &doc, ClusterRef::Intra(0), &cluster, &features, 1.0)
            .unwrap();
        let b = greedy_summary(&ramp_policy(), &doc, ClusterRef::Intra(0), &cluster, &features, 1.0)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sentences, vec![1, 2]); // the two above threshold
        assert!(a.log_prob.is_none() && a.sampled_mask.is_none());
        // Tight budget admits only the strongest.
        let c = greedy_summary(&ramp_policy(), &doc, ClusterRef::Intra(0), &cluster, &features, 0.45)
            .unwrap();
        assert_eq!(c.sentences, vec![2]);
    }

    #[test]
    fn chain_lists_surviving_events_in_order() {
        let doc = tiny_doc();
        let summary = identity_summary(&doc, ClusterRef::Intra(0), &[1, 2]);
        assert_eq!(summary.events, vec!["e1", "e2"]);
        assert_eq!(summary.event_chain, vec!["delta", "theta"]);
        assert_eq!(summary.tokens.len(), 7);
    }

    #[test]
    fn multi_mention_event_uses_first_surviving_mention() {
        let mut doc = tiny_doc();
        // e0 also has a mention in sentence 2 with a different surface.
        doc.events[0].mentions.push(Mention { sentence: 2, start: 3, end: 4 });
        let summary = identity_summary(&doc, ClusterRef::Intra(0), &[1, 2]);
        // e0 survives through its sentence-2 mention ("iota"), appearing
        // after e1/e2 whose mentions come earlier.
        assert_eq!(summary.events, vec!["e1", "e2", "e0"]);
        assert_eq!(summary.event_chain[2], "iota");
    }

    #[test]
    fn serialization_round_trips() {
        let doc = tiny_doc();
        let summary = identity_summary(&doc, ClusterRef::Intra(0), &[0, 1, 2]);
        let line = serialize_summary(&summary);
        let parsed = parse_summary(&line).unwrap();
        assert_eq!(parsed.event_chain, summary.event_chain);
        assert_eq!(parsed.tokens, summary.tokens);
    }

    #[test]
    fn parses_prose_style_summaries() {
        let text = "[EVENTCHAIN] originated | introduced | traveled | sick [SUMMARY] \
                    The pandemic originated in the region and traveled widely .";
        let parsed = parse_summary(text).unwrap();
        assert_eq!(parsed.event_chain.len(), 4);
        assert_eq!(parsed.event_chain[0], "originated");
        assert_eq!(parsed.tokens[1], "pandemic");
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(parse_summary("no markers here").is_err());
        assert!(parse_summary("[EVENTCHAIN] a | b").is_err());
        assert!(parse_summary("[EVENTCHAIN] a | | b [SUMMARY] x").is_err());
        // Empty chain is legal.
        let parsed = parse_summary("[EVENTCHAIN] [SUMMARY] x y").unwrap();
        assert!(parsed.event_chain.is_empty());
        assert_eq!(parsed.tokens, vec!["x", "y"]);
    }

    #[test]
    fn identity_backend_covers_whole_cluster_set() {
        let corpus = generate(&SynthConfig { num_docs: 2, seed: 3, ..SynthConfig::default() })
            .unwrap();
        let doc = &corpus.documents[0];
        let idf = IdfStats::from_documents(corpus.documents.iter());
        let features = sentence_features(doc, &idf, &FeatureWeights::default(), None).unwrap();
        let assignment =
            crate::clustering::kmeans(&features, &crate::clustering::ClusteringConfig::default())
                .unwrap();
        let cs = ClusterSet::from_assignment(&assignment);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let summaries = summarize_cluster_set(
            &SummarizerBackend::Identity, doc, &cs, &features, 0.5, &mut rng,
        )
        .unwrap();
        assert_eq!(summaries.intra.len(), cs.intra.len());
        assert_eq!(summaries.inter.len(), cs.inter.len());
        for (summary, cluster) in summaries.intra.iter().zip(&cs.intra) {
            assert_eq!(summary.sentences, cluster.sentences);
        }
    }

    struct FixedSummarizer(String);
    impl AbstractiveSummarizer for FixedSummarizer {
        fn summarize(&self, _cluster_text: &str) -> Result<String, String> {
            Ok(self.0.clone())
        }
    }

    struct FailingSummarizer;
    impl AbstractiveSummarizer for FailingSummarizer {
        fn summarize(&self, _cluster_text: &str) -> Result<String, String> {
            Err("backend down".into())
        }
    }

    #[test]
    fn external_backend_recovers_chain_by_scanning() {
        let doc = tiny_doc();
        let backend = FixedSummarizer("things happened then Theta and delta occurred".into());
        let summary = external_summary(&backend, &doc, ClusterRef::Intra(0), &[0, 1, 2]).unwrap();
        // "Theta" (case-insensitive) appears before "delta" in the text.
        assert_eq!(summary.events, vec!["e2", "e1"]);
        assert!(summary.sentences.is_empty());
        assert_eq!(summary.tokens.len(), 7);
    }

    #[test]
    fn external_backend_failure_names_the_cluster() {
        let doc = tiny_doc();
        let err =
            external_summary(&FailingSummarizer, &doc, ClusterRef::Inter(0, 2), &[0]).unwrap_err();
        match err {
            SummarizerError::Backend { cluster, message } => {
                assert_eq!(cluster, ClusterRef::Inter(0, 2));
                assert_eq!(message, "backend down");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn logit_grad_matches_finite_differences() {
        let doc = tiny_doc();
        let features = ramp_features();
        let cluster = vec![0, 1, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let policy = SummaryPolicy::init(3, 4, &mut rng);
        let x = policy_input(&doc, &cluster, &features, 1);
        let mut grads = PolicyGrads::zeros_like(&policy);
        policy.accumulate_logit_grad(&x, 1.0, &mut grads);
        let h = 1e-5;
        let check = |analytic: f64, plus: &SummaryPolicy, minus: &SummaryPolicy| {
            let fd = (plus.logit(&x) - minus.logit(&x)) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                ((analytic - fd) / denom).abs() < 1e-4,
                "analytic {analytic} vs fd {fd}"
            );
        };
        for (r, c) in [(0, 0), (1, 2), (3, 1)] {
            let mut plus = policy.clone();
            let mut minus = policy.clone();
            plus.w1[[r, c]] += h;
            minus.w1[[r, c]] -= h;
            check(grads.w1[[r, c]], &plus, &minus);
        }
        for i in 0..policy.hidden_dim() {
            let mut plus = policy.clone();
            let mut minus = policy.clone();
            plus.w2[i] += h;
            minus.w2[i] -= h;
            check(grads.w2[i], &plus, &minus);
            let mut plus = policy.clone();
            let mut minus = policy.clone();
            plus.b1[i] += h;
            minus.b1[i] -= h;
            check(grads.b1[i], &plus, &minus);
        }
    }
}
