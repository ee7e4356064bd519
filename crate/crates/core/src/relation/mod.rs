//! Event relation model: context selection, a small token encoder, and a
//! per-type pair classifier.
//!
//! Instead of always reading the whole document, each event pair is scored
//! against the shortest context that still contains both events: an
//! inter-cluster summary first, then an intra-cluster summary, then the
//! (possibly truncated) document as fallback. Contexts are encoded once per
//! document and shared across pairs.
//!
//! The encoder embeds each token together with a mean-of-sentence bag,
//! event vectors pool mention tokens with a per-coordinate log-sum-exp, and
//! a pair is represented as `[h_head | h_tail | h_head * h_tail]`. All
//! gradients are computed in closed form; tests check them against central
//! finite differences.

mod context;
mod model;

pub use context::{
    build_cluster_context, build_document_context, build_summary_context, ContextSpec, ContextSource,
    SourceTag, Vocabulary,
};
pub use model::{
    bce_dlogits, bce_loss, classifier_backward, classify, encode_context, encoder_backward,
    mention_pool, pair_rep, pair_rep_backward, pool_backward, ClassifierCache, ClassifierGrads,
    ClassifierParams, EncodedContext, EncoderConfig, EncoderGrads, EncoderParams, PROB_CLAMP,
};

use thiserror::Error;

/// Pick the context for one event pair from pre-encoded contexts.
///
/// `contexts` must be ordered inter (ascending source pair), intra
/// (ascending id), document last. Tags in `allowed` are searched in priority
/// order inter > intra > document; a context qualifies when both events have
/// at least one mention position in it. A document context is the fallback:
/// if allowed, it is returned even when truncation removed the mentions.
pub fn select_pair_context(
    contexts: &[model::EncodedContext],
    head: &str,
    tail: &str,
    allowed: &[SourceTag],
) -> Option<usize> {
    let has_both = |ctx: &model::EncodedContext| {
        ctx.positions(head).map_or(false, |p| !p.is_empty())
            && ctx.positions(tail).map_or(false, |p| !p.is_empty())
    };
    for tag in [SourceTag::Inter, SourceTag::Intra, SourceTag::Document] {
        if !allowed.contains(&tag) {
            continue;
        }
        for (idx, ctx) in contexts.iter().enumerate() {
            if ctx.source.tag() != tag {
                continue;
            }
            if has_both(ctx) || tag == SourceTag::Document {
                return Some(idx);
            }
        }
    }
    None
}

/// One scored event pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PairPrediction {
    pub head: String,
    pub tail: String,
    /// Per-type probabilities, aligned with the taxonomy.
    pub probs: Vec<f64>,
    /// Where the context came from.
    pub source: SourceTag,
}

impl PairPrediction {
    /// Type indices whose probability strictly exceeds `threshold`.
    pub fn predicted_types(&self, threshold: f64) -> std::collections::BTreeSet<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > threshold)
            .map(|(t, _)| t)
            .collect()
    }
}

/// Relation model errors.
#[derive(Debug, Error)]
pub enum RelationError {
    #[error("event `{id}` has no mention in the context")]
    EventAbsent { id: String },
    #[error("parameter shape mismatch: {message}")]
    ShapeMismatch { message: String },
    #[error("non-finite value during {stage}")]
    NonFinite { stage: String },
}
