//! Relation labeling through a chat model: build one prompt per ordered
//! event pair, complete it against a pluggable backend (offline mock or
//! HTTP), parse the answers, and score them with the shared evaluator.
//!
//! Runs are reproducible: prompts are pure functions of their inputs,
//! responses are cached by prompt hash, and the transcript log carries
//! everything needed to re-score without touching the backend again.

mod backend;
mod prompt;

pub use backend::{
    prompt_sha256, ChatBackend, ChatSummarizer, MockBackend, ResponseCache,
};
#[cfg(feature = "http")]
pub use backend::{HttpBackend, HttpConfig};
pub use prompt::{
    build_exemplars, build_prompt, pair_surfaces, parse_relation_answer, Exemplar,
    ParsedAnswer, PromptInputs, PromptVariant, PROMPT_VERSION, SUMMARIZE_INSTRUCTION,
};

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    kmeans, sentence_features, ClusterSet, ClusteringConfig, ClusteringError, IdfStats,
};
use crate::corpus::{CorpusError, Document, Taxonomy};
use crate::evaluator::{tally_document, Counts, EvalConfig, EvalError};
use crate::pipeline::doc_rng;
use crate::relation::{PairPrediction, SourceTag};
use crate::summarizer::{summarize_cluster_set, SummarizerBackend, SummarizerError};

/// Settings for one labeling run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmRunConfig {
    pub variant: PromptVariant,
    /// Worked examples per prompt.
    pub k_shot: usize,
    /// Drives exemplar choice and summary sampling.
    pub seed: u64,
    /// Worker threads issuing requests.
    pub concurrency: usize,
    /// Used by the cluster-context variants.
    pub clustering: ClusteringConfig,
    /// Summary length fraction for the summary-context variant.
    pub budget: f64,
    /// Response cache directory; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub eval: EvalConfig,
}

impl Default for LlmRunConfig {
    fn default() -> Self {
        LlmRunConfig {
            variant: PromptVariant::ClusterSummary,
            k_shot: 2,
            seed: 0,
            concurrency: 4,
            clustering: ClusteringConfig::default(),
            budget: 0.25,
            cache_dir: None,
            eval: EvalConfig::default(),
        }
    }
}

/// One prompt/response exchange, enough to audit and re-score offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub doc: String,
    /// Head event id.
    pub head: String,
    /// Tail event id.
    pub tail: String,
    pub variant: String,
    pub prompt_sha256: String,
    pub prompt: String,
    /// `None` when the backend gave up on this pair.
    pub answer: Option<String>,
    /// Backend error text for failed pairs.
    pub error: Option<String>,
    pub parsed_types: Vec<usize>,
    pub parse_failed: bool,
    pub reversed: bool,
    pub cached: bool,
}

/// Scores and accounting reproducible from a transcript alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEvalReport {
    pub variant: String,
    pub prompt_version: String,
    pub documents: usize,
    /// Ordered candidate pairs prompted.
    pub pairs: usize,
    /// Pairs the backend never answered (excluded from predictions).
    pub failed_pairs: usize,
    /// Answers with no recognizable label (counted as no relation).
    pub parse_failures: usize,
    /// Answers naming the pair in reverse order (counted as no relation).
    pub reversed_answers: usize,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_triples: usize,
    pub predicted_triples: usize,
}

/// Run-side counters (cache behavior, token totals); not part of the
/// replayable report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Backend invocations actually made.
    pub calls: usize,
    pub cache_hits: usize,
    /// Whitespace tokens across all prompts.
    pub prompt_tokens: usize,
    /// Whitespace tokens across all answers.
    pub answer_tokens: usize,
}

/// Everything a labeling run produces.
#[derive(Debug, Clone)]
pub struct LlmRunOutcome {
    pub report: LlmEvalReport,
    pub stats: RunStats,
    pub transcript: Vec<TranscriptEntry>,
}

struct PairJob {
    doc_index: usize,
    head: usize,
    tail: usize,
    prompt: String,
    tag: SourceTag,
}

#[derive(Clone)]
struct CallOutcome {
    answer: Result<String, String>,
    cached: bool,
}

/// Build every prompt for `eval_docs` in canonical order (documents as
/// given, pairs in `event_pairs` order).
fn build_jobs(
    eval_docs: &[&Document],
    taxonomy: &Taxonomy,
    idf: &IdfStats,
    summarizer: &SummarizerBackend<'_>,
    exemplars: &[Exemplar],
    config: &LlmRunConfig,
) -> Result<Vec<PairJob>, LlmError> {
    let mut jobs = Vec::new();
    for (doc_index, doc) in eval_docs.iter().enumerate() {
        let mut cluster_set = None;
        let mut summaries = None;
        if config.variant.needs_clusters() {
            let features =
                sentence_features(doc, idf, &config.clustering.weights, None)?;
            let set = ClusterSet::from_assignment(&kmeans(&features, &config.clustering)?);
            if config.variant.needs_summaries() {
                let mut rng = doc_rng(config.seed, &doc.id);
                summaries = Some(summarize_cluster_set(
                    summarizer,
                    doc,
                    &set,
                    &features,
                    config.budget,
                    &mut rng,
                )?);
            }
            cluster_set = Some(set);
        }
        for (head, tail) in doc.event_pairs() {
            let inputs = PromptInputs {
                doc,
                head,
                tail,
                cluster_set: cluster_set.as_ref(),
                summaries: summaries.as_ref(),
            };
            let (prompt, tag) = build_prompt(config.variant, &inputs, taxonomy, exemplars)?;
            jobs.push(PairJob { doc_index, head, tail, prompt, tag });
        }
    }
    Ok(jobs)
}

/// Complete every job with at most `concurrency` requests in flight.
/// Results land by job index, so the outcome order never depends on
/// scheduling.
fn complete_jobs(
    jobs: &[PairJob],
    backend: &dyn ChatBackend,
    cache: Option<&ResponseCache>,
    concurrency: usize,
) -> Vec<CallOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CallOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    let cache = cache.map(Mutex::new);
    let workers = concurrency.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let prompt = &jobs[i].prompt;
                let hit = cache
                    .as_ref()
                    .and_then(|c| c.lock().expect("cache lock").get(prompt));
                let outcome = match hit {
                    Some(answer) => CallOutcome { answer: Ok(answer), cached: true },
                    None => match backend.complete(prompt) {
                        Ok(fresh) => {
                            if let Some(c) = cache.as_ref() {
                                if let Err(e) =
                                    c.lock().expect("cache lock").put(prompt, &fresh)
                                {
                                    log::warn!("response cache write failed: {e}");
                                }
                            }
                            CallOutcome { answer: Ok(fresh), cached: false }
                        }
                        Err(e) => CallOutcome { answer: Err(e.to_string()), cached: false },
                    },
                };
                slots.lock().expect("result lock")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|slot| slot.expect("every job completed"))
        .collect()
}

/// Label every ordered event pair of `eval_docs` through `backend` and
/// score the answers. `exemplar_docs` (the train split) supplies the
/// worked examples; `idf` supplies clustering features for the
/// cluster-context variants; `summarizer` produces the summaries the
/// summary-context variant quotes.
pub fn run_llm_eval(
    eval_docs: &[&Document],
    exemplar_docs: &[&Document],
    taxonomy: &Taxonomy,
    idf: &IdfStats,
    backend: &dyn ChatBackend,
    summarizer: &SummarizerBackend<'_>,
    config: &LlmRunConfig,
) -> Result<LlmRunOutcome, LlmError> {
    let exemplars = build_exemplars(exemplar_docs, taxonomy, config.k_shot, config.seed)?;
    let jobs = build_jobs(eval_docs, taxonomy, idf, summarizer, &exemplars, config)?;
    let cache = match &config.cache_dir {
        Some(dir) => Some(ResponseCache::open(dir)?),
        None => None,
    };
    let outcomes = complete_jobs(&jobs, backend, cache.as_ref(), config.concurrency);

    let mut stats = RunStats::default();
    let mut transcript = Vec::with_capacity(jobs.len());
    let mut rows: BTreeMap<usize, Vec<PairPrediction>> = BTreeMap::new();
    let mut failed_pairs = 0usize;
    let mut parse_failures = 0usize;
    let mut reversed_answers = 0usize;
    for (job, outcome) in jobs.iter().zip(&outcomes) {
        let doc = eval_docs[job.doc_index];
        stats.prompt_tokens += job.prompt.split_whitespace().count();
        if outcome.cached {
            stats.cache_hits += 1;
        } else {
            stats.calls += 1;
        }
        let (answer, error, parsed) = match &outcome.answer {
            Ok(text) => {
                stats.answer_tokens += text.split_whitespace().count();
                let (head_surface, tail_surface) =
                    pair_surfaces(&job.prompt).unwrap_or_default();
                let parsed =
                    parse_relation_answer(text, taxonomy, &head_surface, &tail_surface);
                (Some(text.clone()), None, Some(parsed))
            }
            Err(message) => {
                failed_pairs += 1;
                (None, Some(message.clone()), None)
            }
        };
        if let Some(parsed) = &parsed {
            if parsed.parse_failed {
                parse_failures += 1;
            }
            if parsed.reversed {
                reversed_answers += 1;
            }
            let probs: Vec<f64> = (0..taxonomy.len())
                .map(|t| if parsed.types.contains(&t) { 1.0 } else { 0.0 })
                .collect();
            rows.entry(job.doc_index).or_default().push(PairPrediction {
                head: doc.events[job.head].id.clone(),
                tail: doc.events[job.tail].id.clone(),
                probs,
                source: job.tag,
            });
        }
        transcript.push(TranscriptEntry {
            doc: doc.id.clone(),
            head: doc.events[job.head].id.clone(),
            tail: doc.events[job.tail].id.clone(),
            variant: config.variant.name().to_string(),
            prompt_sha256: prompt_sha256(&job.prompt),
            prompt: job.prompt.clone(),
            answer,
            error,
            parsed_types: parsed
                .as_ref()
                .map(|p| p.types.iter().copied().collect())
                .unwrap_or_default(),
            parse_failed: parsed.as_ref().is_some_and(|p| p.parse_failed),
            reversed: parsed.as_ref().is_some_and(|p| p.reversed),
            cached: outcome.cached,
        });
    }

    let mut counts = Counts::default();
    let mut gold_triples = 0usize;
    let mut predicted_triples = 0usize;
    let empty = Vec::new();
    for (doc_index, doc) in eval_docs.iter().enumerate() {
        let doc_rows = rows.get(&doc_index).unwrap_or(&empty);
        let tally = tally_document(doc, doc_rows, taxonomy, &config.eval)?;
        counts.merge(&tally.overall);
        gold_triples += tally.gold_triples;
        predicted_triples += tally.predicted_triples;
    }
    let report = LlmEvalReport {
        variant: config.variant.name().to_string(),
        prompt_version: PROMPT_VERSION.to_string(),
        documents: eval_docs.len(),
        pairs: jobs.len(),
        failed_pairs,
        parse_failures,
        reversed_answers,
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        gold_triples,
        predicted_triples,
    };
    Ok(LlmRunOutcome { report, stats, transcript })
}

/// Write a transcript as JSON lines.
pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> Result<(), LlmError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a transcript written by [`write_transcript`].
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(entries)
}

/// Re-score a transcript against gold documents, re-parsing every stored
/// answer. Produces the same report as the original run without any
/// backend access.
pub fn rescore_transcript(
    entries: &[TranscriptEntry],
    docs: &[&Document],
    taxonomy: &Taxonomy,
    eval: &EvalConfig,
) -> Result<LlmEvalReport, LlmError> {
    let by_id: BTreeMap<&str, usize> =
        docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let mut rows: BTreeMap<usize, Vec<PairPrediction>> = BTreeMap::new();
    let mut failed_pairs = 0usize;
    let mut parse_failures = 0usize;
    let mut reversed_answers = 0usize;
    for entry in entries {
        let &doc_index = by_id
            .get(entry.doc.as_str())
            .ok_or_else(|| LlmError::UnknownDoc { id: entry.doc.clone() })?;
        let Some(answer) = &entry.answer else {
            failed_pairs += 1;
            continue;
        };
        let (head_surface, tail_surface) = pair_surfaces(&entry.prompt).unwrap_or_default();
        let parsed = parse_relation_answer(answer, taxonomy, &head_surface, &tail_surface);
        if parsed.parse_failed {
            parse_failures += 1;
        }
        if parsed.reversed {
            reversed_answers += 1;
        }
        let probs: Vec<f64> = (0..taxonomy.len())
            .map(|t| if parsed.types.contains(&t) { 1.0 } else { 0.0 })
            .collect();
        let tag = match entry.variant.parse::<PromptVariant>() {
            Ok(PromptVariant::DocClustering) | Ok(PromptVariant::ClusterSummary) => SourceTag::Intra,
            _ => SourceTag::Document,
        };
        rows.entry(doc_index).or_default().push(PairPrediction {
            head: entry.head.clone(),
            tail: entry.tail.clone(),
            probs,
            source: tag,
        });
    }
    let mut counts = Counts::default();
    let mut gold_triples = 0usize;
    let mut predicted_triples = 0usize;
    let empty = Vec::new();
    for (doc_index, doc) in docs.iter().enumerate() {
        let doc_rows = rows.get(&doc_index).unwrap_or(&empty);
        let tally = tally_document(doc, doc_rows, taxonomy, eval)?;
        counts.merge(&tally.overall);
        gold_triples += tally.gold_triples;
        predicted_triples += tally.predicted_triples;
    }
    Ok(LlmEvalReport {
        variant: entries
            .first()
            .map_or_else(|| "unknown".to_string(), |e| e.variant.clone()),
        prompt_version: PROMPT_VERSION.to_string(),
        documents: docs.len(),
        pairs: entries.len(),
        failed_pairs,
        parse_failures,
        reversed_answers,
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        gold_triples,
        predicted_triples,
    })
}

/// Side-by-side table for several prompting variants.
pub fn render_llm_table(reports: &[&LlmEvalReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>6} {:>7} {:>7} {:>7} {:>6} {:>6} {:>6}\n",
        "variant", "pairs", "prec", "recall", "f1", "fail", "noparse", "rev"
    ));
    for report in reports {
        out.push_str(&format!(
            "{:<14} {:>6} {:>7.4} {:>7.4} {:>7.4} {:>6} {:>6} {:>6}\n",
            report.variant,
            report.pairs,
            report.precision,
            report.recall,
            report.f1,
            report.failed_pairs,
            report.parse_failures,
            report.reversed_answers,
        ));
    }
    out
}

/// Chat-labeling pipeline errors.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("unknown prompt variant `{name}`")]
    UnknownVariant { name: String },
    #[error("prompt variant `{variant}` needs {what}")]
    MissingContext { variant: String, what: String },
    #[error("no cluster covers pair ({head}, {tail}) in document `{doc}`")]
    NoCoveringCluster { doc: String, head: String, tail: String },
    #[error("event `{event}` in document `{doc}` has no mentions")]
    EventWithoutMention { doc: String, event: String },
    #[error("environment variable `{var}` is not set")]
    MissingKey { var: String },
    #[error("backend: {message}")]
    Backend { message: String },
    #[error("transcript names unknown document `{id}`")]
    UnknownDoc { id: String },
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}
