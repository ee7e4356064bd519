//! Synthetic corpus generator.
//!
//! Documents are built from vocabulary pools so that the structure a model
//! should recover is actually present in the tokens:
//!
//! * sentences come in contiguous topical blocks (shared topic words), so a
//!   bag-of-words clusterer can recover the blocks;
//! * every non-noise sentence carries exactly one single-token event trigger
//!   drawn from a shared pool;
//! * each planted relation `head -> tail` of type `r` places a cue token in
//!   the head sentence and a matching cue token in the tail sentence. Cue
//!   pairs are tagged with a group index so two relations of the same type in
//!   one document never produce a spurious crossed pair;
//! * a configurable fraction of relations is long-range: the trigger spans
//!   are at least `long_range_min_distance` words apart; the remainder are
//!   strictly closer.
//!
//! Output is bitwise deterministic for a given config: every random draw
//! comes from a per-document stream keyed on `(seed, document index)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::content_key;
use super::{Corpus, Document, Event, Mention, RelationInstance, Sentence, Split, Taxonomy};

/// Words available per topic; each document uses a subset so that topic words
/// do not appear in every document (which would flatten their idf weight).
const TOPIC_POOL: usize = 24;
/// Topic words sampled per document and topic.
const TOPIC_WORDS_PER_DOC: usize = 6;
/// Shared trigger vocabulary size (grown if a document needs more events).
const TRIGGER_POOL: usize = 48;
/// Filler vocabulary size.
const FILLER_POOL: usize = 40;
/// Cue groups per relation type; bounds same-type relations per document.
const CUE_GROUPS: usize = 4;
/// Token position of the trigger in an eventful sentence.
const TRIGGER_SLOT: usize = 3;
const HEAD_CUE_SLOT: usize = 2;
const TAIL_CUE_SLOT: usize = 4;

/// Generator configuration. All random choices derive from `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub sentences_per_doc: usize,
    /// Fixed sentence length in tokens (>= 6 to fit the cue/trigger layout).
    pub tokens_per_sentence: usize,
    /// Number of contiguous topical blocks per document.
    pub clusters_per_doc: usize,
    /// Fraction of ordered event pairs that receive a gold relation.
    pub relation_density: f64,
    /// Fraction of relations whose pair distance is at least
    /// `long_range_min_distance` words; the rest are strictly closer.
    pub long_range_fraction: f64,
    pub long_range_min_distance: usize,
    /// Fraction of sentences that carry no event.
    pub noise_fraction: f64,
    pub seed: u64,
    /// Train/dev/test fractions over documents, in corpus order.
    pub split_fractions: (f64, f64, f64),
    pub taxonomy: Taxonomy,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_docs: 100,
            sentences_per_doc: 12,
            tokens_per_sentence: 8,
            clusters_per_doc: 3,
            relation_density: 0.05,
            long_range_fraction: 0.3,
            long_range_min_distance: 40,
            noise_fraction: 0.25,
            seed: 0,
            split_fractions: (0.7, 0.15, 0.15),
            taxonomy: Taxonomy::default(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.num_docs == 0 || self.sentences_per_doc == 0 || self.clusters_per_doc == 0 {
            return bad("num_docs, sentences_per_doc and clusters_per_doc must be positive".into());
        }
        if self.tokens_per_sentence < 6 {
            return bad(format!(
                "tokens_per_sentence must be at least 6, got {}",
                self.tokens_per_sentence
            ));
        }
        if self.clusters_per_doc > self.sentences_per_doc {
            return bad(format!(
                "clusters_per_doc {} exceeds sentences_per_doc {}",
                self.clusters_per_doc, self.sentences_per_doc
            ));
        }
        for (name, value) in [
            ("relation_density", self.relation_density),
            ("long_range_fraction", self.long_range_fraction),
            ("noise_fraction", self.noise_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return bad(format!("{name} must be in [0, 1], got {value}"));
            }
        }
        let (a, b, c) = self.split_fractions;
        if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-6 {
            return bad(format!("split_fractions must be non-negative and sum to 1, got {:?}",
                self.split_fractions));
        }
        if self.taxonomy.is_empty() {
            return bad("taxonomy must have at least one relation type".into());
        }
        Ok(())
    }
}

/// Generator errors. `Infeasible` names the document where planting failed.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("infeasible config at document {doc}: {reason}")]
    Infeasible { doc: usize, reason: String },
}

/// Generate a corpus. Deterministic per config; see module docs.
pub fn generate(config: &SynthConfig) -> Result<Corpus, SynthError> {
    config.validate()?;
    let mut documents = Vec::with_capacity(config.num_docs);
    // Running totals let the long-range quota track the target fraction
    // across documents instead of rounding per document.
    let mut placed = 0usize;
    let mut placed_long = 0usize;
    for di in 0..config.num_docs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(content_key(config.seed, &(di as u64).to_le_bytes()));
        let doc = generate_doc(config, di, &mut rng, &mut placed, &mut placed_long)?;
        documents.push(doc);
    }
    let splits = assign_splits(config.num_docs, config.split_fractions);
    Ok(Corpus { documents, splits })
}

fn assign_splits(num_docs: usize, fractions: (f64, f64, f64)) -> Vec<Split> {
    let n_train = ((num_docs as f64) * fractions.0).round() as usize;
    let n_dev = (((num_docs as f64) * fractions.1).round() as usize).min(num_docs - n_train.min(num_docs));
    let n_train = n_train.min(num_docs);
    (0..num_docs)
        .map(|i| {
            if i < n_train {
                Split::Train
            } else if i < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            }
        })
        .collect()
}

/// Block id per sentence: `clusters_per_doc` contiguous runs, sizes within 1.
fn block_assignment(n: usize, blocks: usize) -> Vec<usize> {
    let base = n / blocks;
    let extra = n % blocks;
    let mut out = Vec::with_capacity(n);
    for b in 0..blocks {
        let size = base + usize::from(b < extra);
        out.extend(std::iter::repeat(b).take(size));
    }
    out
}

fn generate_doc(
    config: &SynthConfig,
    doc_index: usize,
    rng: &mut ChaCha8Rng,
    placed: &mut usize,
    placed_long: &mut usize,
) -> Result<Document, SynthError> {
    let n = config.sentences_per_doc;
    let len = config.tokens_per_sentence;
    let blocks = block_assignment(n, config.clusters_per_doc);

    // Per-document topic vocabulary: a subset of each topic's pool.
    let topic_words: Vec<Vec<String>> = (0..config.clusters_per_doc)
        .map(|t| {
            rand::seq::index::sample(rng, TOPIC_POOL, TOPIC_WORDS_PER_DOC)
                .iter()
                .map(|w| format!("t{t}w{w}"))
                .collect()
        })
        .collect();

    // Which sentences carry no event.
    let n_noise = ((n as f64) * config.noise_fraction).round() as usize;
    let mut noise: Vec<bool> = vec![false; n];
    for idx in rand::seq::index::sample(rng, n, n_noise.min(n)).iter() {
        noise[idx] = true;
    }

    // One event per non-noise sentence, each with a distinct trigger token.
    let eventful: Vec<usize> = (0..n).filter(|i| !noise[*i]).collect();
    let m = eventful.len();
    let pool = TRIGGER_POOL.max(m);
    let triggers: Vec<String> = rand::seq::index::sample(rng, pool, m)
        .iter()
        .map(|t| format!("trg{t}"))
        .collect();

    let relations = plant_relations(config, doc_index, rng, &eventful, placed, placed_long)?;

    // Cue tokens per sentence slot, filled by the planted relations.
    let mut head_cue: Vec<Option<String>> = vec![None; n];
    let mut tail_cue: Vec<Option<String>> = vec![None; n];
    for planted in &relations {
        let r = planted.type_index;
        let g = planted.group;
        head_cue[eventful[planted.head]] = Some(format!("c{r}g{g}h"));
        tail_cue[eventful[planted.tail]] = Some(format!("c{r}g{g}t"));
    }

    let mut sentences = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(m);
    let mut event_rank = 0usize;
    for i in 0..n {
        let topics = &topic_words[blocks[i]];
        let filler = |rng: &mut ChaCha8Rng| -> String {
            if rng.gen_bool(0.5) {
                topics.choose(rng).expect("topic pool non-empty").clone()
            } else {
                format!("f{}", rng.gen_range(0..FILLER_POOL))
            }
        };
        let mut tokens = Vec::with_capacity(len);
        for slot in 0..len {
            let token = match slot {
                0 | 1 => topics.choose(rng).expect("topic pool non-empty").clone(),
                HEAD_CUE_SLOT if head_cue[i].is_some() => head_cue[i].clone().unwrap(),
                TRIGGER_SLOT if !noise[i] => triggers[event_rank].clone(),
                TAIL_CUE_SLOT if tail_cue[i].is_some() => tail_cue[i].clone().unwrap(),
                _ => filler(rng),
            };
            tokens.push(token);
        }
        if !noise[i] {
            events.push(Event {
                id: format!("e{event_rank}"),
                mentions: vec![Mention {
                    sentence: i,
                    start: TRIGGER_SLOT,
                    end: TRIGGER_SLOT + 1,
                }],
            });
            event_rank += 1;
        }
        sentences.push(Sentence { index: i, tokens });
    }

    let relations = relations
        .into_iter()
        .map(|p| RelationInstance {
            head: format!("e{}", p.head),
            tail: format!("e{}", p.tail),
            rtype: config.taxonomy.name(p.type_index).to_string(),
        })
        .collect();

    Ok(Document { id: format!("d{doc_index:04}"), sentences, events, relations })
}

struct PlantedRelation {
    /// Event rank (position among eventful sentences) of head and tail.
    head: usize,
    tail: usize,
    type_index: usize,
    group: usize,
}

fn plant_relations(
    config: &SynthConfig,
    doc_index: usize,
    rng: &mut ChaCha8Rng,
    eventful: &[usize],
    placed: &mut usize,
    placed_long: &mut usize,
) -> Result<Vec<PlantedRelation>, SynthError> {
    let m = eventful.len();
    let ordered_pairs = m.saturating_mul(m.saturating_sub(1));
    let n_rel = (config.relation_density * ordered_pairs as f64).round() as usize;
    if n_rel == 0 {
        return Ok(Vec::new());
    }
    let infeasible = |reason: String| SynthError::Infeasible { doc: doc_index, reason };
    // Each event offers one head slot and one tail slot, and each
    // (type, group) cue pair may be used once per document.
    let capacity = m.min(config.taxonomy.len() * CUE_GROUPS);
    if n_rel > capacity {
        return Err(infeasible(format!(
            "{n_rel} relations requested but only {capacity} can be planted \
             ({m} events, {} cue pairs)",
            config.taxonomy.len() * CUE_GROUPS
        )));
    }

    // Long-range quota: keep the running total on target across documents.
    let target = config.long_range_fraction * ((*placed + n_rel) as f64);
    let n_long = (target.round() as usize)
        .saturating_sub(*placed_long)
        .min(n_rel);

    // Trigger spans sit at a fixed slot, so pair distance in words depends
    // only on the sentence gap.
    let distance = |a: usize, b: usize| -> usize {
        let (lo, hi) = if eventful[a] < eventful[b] { (a, b) } else { (b, a) };
        (eventful[hi] - eventful[lo]) * config.tokens_per_sentence - 1
    };

    let mut head_free = vec![true; m];
    let mut tail_free = vec![true; m];
    let mut out = Vec::with_capacity(n_rel);
    for k in 0..n_rel {
        let want_long = k < n_long;
        let candidates: Vec<(usize, usize)> = (0..m)
            .flat_map(|a| (0..m).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b && head_free[a] && tail_free[b])
            .filter(|&(a, b)| {
                let d = distance(a, b);
                if want_long {
                    d >= config.long_range_min_distance
                } else {
                    d < config.long_range_min_distance
                }
            })
            .collect();
        if candidates.is_empty() {
            return Err(infeasible(format!(
                "no {} candidate pair left for relation {k} of {n_rel}",
                if want_long { "long-range" } else { "short-range" }
            )));
        }
        let (a, b) = candidates[rng.gen_range(0..candidates.len())];
        head_free[a] = false;
        tail_free[b] = false;
        out.push(PlantedRelation {
            head: a,
            tail: b,
            type_index: out.len() % config.taxonomy.len(),
            group: out.len() / config.taxonomy.len(),
        });
        *placed += 1;
        if want_long {
            *placed_long += 1;
        }
    }
    Ok(out)
}
