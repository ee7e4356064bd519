//! Encoder, mention pooling, pair classifier, losses, and their gradients.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::context::{ContextSource, ContextSpec, Vocabulary};
use super::RelationError;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the
/// loss; the matching gradient is zero in the clamped region.
pub const PROB_CLAMP: f64 = 1e-7;

/// Encoder dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Token/event vector width.
    pub output_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { embed_dim: 16, hidden_dim: 32, output_dim: 32 }
    }
}

/// Encoder parameters: an embedding table (with OOV row) and two linear
/// maps. A token vector is `w2 * tanh(w1 * [emb(token) | mean emb of its
/// sentence])`; no bias terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub vocab: Vocabulary,
    /// rows x embed_dim
    pub embeddings: Array2<f64>,
    /// hidden x 2*embed_dim
    pub w1: Array2<f64>,
    /// output x hidden
    pub w2: Array2<f64>,
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, vocab: Vocabulary, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        let mut tensor = |r: usize, c: usize| -> Array2<f64> {
            Array2::from_shape_vec((r, c), (0..r * c).map(|_| normal.sample(rng)).collect())
                .expect("shape matches")
        };
        let rows = vocab.rows();
        EncoderParams {
            vocab,
            embeddings: tensor(rows, config.embed_dim),
            w1: tensor(config.hidden_dim, 2 * config.embed_dim),
            w2: tensor(config.output_dim, config.hidden_dim),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    /// Check internal shape coherence (e.g. after deserialization).
    pub fn validate(&self) -> Result<(), RelationError> {
        let mut problems = Vec::new();
        if self.embeddings.nrows() != self.vocab.rows() {
            problems.push(format!(
                "embedding rows {} != vocabulary rows {}",
                self.embeddings.nrows(),
                self.vocab.rows()
            ));
        }
        if self.w1.ncols() != 2 * self.embed_dim() {
            problems.push(format!(
                "w1 columns {} != 2 * embed dim {}",
                self.w1.ncols(),
                2 * self.embed_dim()
            ));
        }
        if self.w2.ncols() != self.hidden_dim() {
            problems.push(format!(
                "w2 columns {} != hidden dim {}",
                self.w2.ncols(),
                self.hidden_dim()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RelationError::ShapeMismatch { message: problems.join("; ") })
        }
    }
}

/// Gradient accumulator shaped like [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub embeddings: Array2<f64>,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        EncoderGrads {
            embeddings: Array2::zeros(params.embeddings.raw_dim()),
            w1: Array2::zeros(params.w1.raw_dim()),
            w2: Array2::zeros(params.w2.raw_dim()),
        }
    }
}

/// A context with its forward caches.
#[derive(Debug, Clone)]
pub struct EncodedContext {
    pub source: ContextSource,
    pub token_ids: Vec<usize>,
    pub sent_of: Vec<usize>,
    pub sent_sizes: Vec<usize>,
    event_positions: BTreeMap<String, Vec<usize>>,
    /// tokens x 2*embed_dim input rows
    pub x: Array2<f64>,
    /// tokens x hidden tanh activations
    pub a: Array2<f64>,
    /// tokens x output token vectors
    pub h: Array2<f64>,
}

impl EncodedContext {
    pub fn token_count(&self) -> usize {
        self.token_ids.len()
    }

    /// Flat positions of an event's mention tokens, if any survived.
    pub fn positions(&self, event: &str) -> Option<&[usize]> {
        self.event_positions.get(event).map(Vec::as_slice)
    }
}

/// Run the encoder over a context.
pub fn encode_context(params: &EncoderParams, spec: &ContextSpec) -> EncodedContext {
    let t = spec.token_ids.len();
    let e = params.embed_dim();
    // Sentence bags: mean embedding per context sentence.
    let mut bags = Array2::<f64>::zeros((spec.sent_sizes.len(), e));
    for (token, &s) in spec.token_ids.iter().zip(&spec.sent_of) {
        let emb = params.embeddings.row(*token);
        let mut row = bags.row_mut(s);
        row += &emb;
    }
    for (mut row, &size) in bags.rows_mut().into_iter().zip(&spec.sent_sizes) {
        if size > 0 {
            row /= size as f64;
        }
    }
    let mut x = Array2::<f64>::zeros((t, 2 * e));
    for (i, (&token, &s)) in spec.token_ids.iter().zip(&spec.sent_of).enumerate() {
        x.row_mut(i).slice_mut(ndarray::s![..e]).assign(&params.embeddings.row(token));
        x.row_mut(i).slice_mut(ndarray::s![e..]).assign(&bags.row(s));
    }
    let a = x.dot(&params.w1.t()).mapv(f64::tanh);
    let h = a.dot(&params.w2.t());
    EncodedContext {
        source: spec.source,
        token_ids: spec.token_ids.clone(),
        sent_of: spec.sent_of.clone(),
        sent_sizes: spec.sent_sizes.clone(),
        event_positions: spec.event_positions.clone(),
        x,
        a,
        h,
    }
}

/// Event vector: per-coordinate log-sum-exp over mention token positions.
/// A single position returns that token's vector exactly.
pub fn mention_pool(ctx: &EncodedContext, event: &str) -> Result<Array1<f64>, RelationError> {
    let positions = ctx
        .positions(event)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| RelationError::EventAbsent { id: event.to_string() })?;
    let d = ctx.h.ncols();
    let mut out = Array1::zeros(d);
    for c in 0..d {
        let mut maximum = f64::NEG_INFINITY;
        for &p in positions {
            maximum = maximum.max(ctx.h[[p, c]]);
        }
        let sum: f64 = positions.iter().map(|&p| (ctx.h[[p, c]] - maximum).exp()).sum();
        out[c] = maximum + sum.ln();
    }
    Ok(out)
}

/// Scatter `d_pooled` back onto token vectors: each position receives its
/// per-coordinate softmax share of the pooled gradient.
pub fn pool_backward(
    ctx: &EncodedContext,
    event: &str,
    d_pooled: &Array1<f64>,
    d_h: &mut Array2<f64>,
) -> Result<(), RelationError> {
    let positions = ctx
        .positions(event)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| RelationError::EventAbsent { id: event.to_string() })?;
    for c in 0..ctx.h.ncols() {
        let mut maximum = f64::NEG_INFINITY;
        for &p in positions {
            maximum = maximum.max(ctx.h[[p, c]]);
        }
        let denom: f64 = positions.iter().map(|&p| (ctx.h[[p, c]] - maximum).exp()).sum();
        for &p in positions {
            let weight = (ctx.h[[p, c]] - maximum).exp() / denom;
            d_h[[p, c]] += d_pooled[c] * weight;
        }
    }
    Ok(())
}

/// Pair representation: `[h_head | h_tail | h_head * h_tail]`.
pub fn pair_rep(head: &Array1<f64>, tail: &Array1<f64>) -> Array1<f64> {
    let d = head.len();
    let mut out = Array1::zeros(3 * d);
    out.slice_mut(ndarray::s![..d]).assign(head);
    out.slice_mut(ndarray::s![d..2 * d]).assign(tail);
    out.slice_mut(ndarray::s![2 * d..]).assign(&(head * tail));
    out
}

/// Gradients of the pair representation w.r.t. the two event vectors.
pub fn pair_rep_backward(
    head: &Array1<f64>,
    tail: &Array1<f64>,
    d_rep: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let d = head.len();
    let d_head = &d_rep.slice(ndarray::s![..d]) + &(&d_rep.slice(ndarray::s![2 * d..]) * tail);
    let d_tail = &d_rep.slice(ndarray::s![d..2 * d]) + &(&d_rep.slice(ndarray::s![2 * d..]) * head);
    (d_head.to_owned(), d_tail.to_owned())
}

/// Pair classifier: one hidden tanh layer, one sigmoid output per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    /// hidden x rep_dim
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// types x hidden
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ClassifierParams {
    pub fn init(rep_dim: usize, hidden: usize, num_types: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        let mut tensor = |r: usize, c: usize| -> Array2<f64> {
            Array2::from_shape_vec((r, c), (0..r * c).map(|_| normal.sample(rng)).collect())
                .expect("shape matches")
        };
        ClassifierParams {
            w1: tensor(hidden, rep_dim),
            b1: Array1::zeros(hidden),
            w2: tensor(num_types, hidden),
            b2: Array1::zeros(num_types),
        }
    }

    pub fn rep_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_types(&self) -> usize {
        self.w2.nrows()
    }

    pub fn validate(&self) -> Result<(), RelationError> {
        let ok = self.b1.len() == self.w1.nrows()
            && self.w2.ncols() == self.w1.nrows()
            && self.b2.len() == self.w2.nrows();
        if ok {
            Ok(())
        } else {
            Err(RelationError::ShapeMismatch {
                message: "classifier layer shapes are inconsistent".into(),
            })
        }
    }
}

/// Gradient accumulator shaped like [`ClassifierParams`].
#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ClassifierGrads {
    pub fn zeros_like(params: &ClassifierParams) -> Self {
        ClassifierGrads {
            w1: Array2::zeros(params.w1.raw_dim()),
            b1: Array1::zeros(params.b1.raw_dim()),
            w2: Array2::zeros(params.w2.raw_dim()),
            b2: Array1::zeros(params.b2.raw_dim()),
        }
    }
}

/// Forward cache for one classified pair.
#[derive(Debug, Clone)]
pub struct ClassifierCache {
    pub rep: Array1<f64>,
    /// Hidden tanh activations.
    pub u: Array1<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-type probabilities for one pair representation.
pub fn classify(params: &ClassifierParams, rep: &Array1<f64>) -> (Vec<f64>, ClassifierCache) {
    let u = (params.w1.dot(rep) + &params.b1).mapv(f64::tanh);
    let logits = params.w2.dot(&u) + &params.b2;
    let probs = logits.iter().map(|&z| sigmoid(z)).collect();
    (probs, ClassifierCache { rep: rep.clone(), u })
}

/// Binary cross-entropy summed over types, probabilities clamped away from
/// 0 and 1.
pub fn bce_loss(probs: &[f64], gold: &[bool]) -> f64 {
    debug_assert_eq!(probs.len(), gold.len());
    probs
        .iter()
        .zip(gold)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// d loss / d logit per type: `p - y` inside the clamp window, 0 outside
/// (where the clamped loss is flat in the logit).
pub fn bce_dlogits(probs: &[f64], gold: &[bool]) -> Vec<f64> {
    probs
        .iter()
        .zip(gold)
        .map(|(&p, &y)| {
            if p < PROB_CLAMP || p > 1.0 - PROB_CLAMP {
                0.0
            } else {
                p - f64::from(u8::from(y))
            }
        })
        .collect()
}

/// Backpropagate `d_logits` through the classifier; accumulates parameter
/// gradients and returns the gradient w.r.t. the pair representation.
pub fn classifier_backward(
    params: &ClassifierParams,
    cache: &ClassifierCache,
    d_logits: &[f64],
    grads: &mut ClassifierGrads,
) -> Array1<f64> {
    let d_logits = Array1::from_vec(d_logits.to_vec());
    for (mut row, &dl) in grads.w2.rows_mut().into_iter().zip(d_logits.iter()) {
        row.scaled_add(dl, &cache.u);
    }
    grads.b2 += &d_logits;
    let d_u = params.w2.t().dot(&d_logits);
    let d_z1 = &d_u * &(1.0 - &cache.u * &cache.u);
    for (mut row, &dz) in grads.w1.rows_mut().into_iter().zip(d_z1.iter()) {
        row.scaled_add(dz, &cache.rep);
    }
    grads.b1 += &d_z1;
    params.w1.t().dot(&d_z1)
}

/// Backpropagate token-vector gradients through the encoder for one context.
/// `d_h` has one row per context token.
pub fn encoder_backward(
    params: &EncoderParams,
    ctx: &EncodedContext,
    d_h: &Array2<f64>,
    grads: &mut EncoderGrads,
) {
    let e = params.embed_dim();
    // h = a w2^T  =>  d_a = d_h w2 ; d_w2 = d_h^T a
    grads.w2 += &d_h.t().dot(&ctx.a);
    let d_a = d_h.dot(&params.w2) * (1.0 - &ctx.a * &ctx.a);
    // a = tanh(x w1^T)  =>  d_x = d_a w1 ; d_w1 = d_a^T x
    grads.w1 += &d_a.t().dot(&ctx.x);
    let d_x = d_a.dot(&params.w1);
    // Token half of x goes straight to that token's embedding row; the bag
    // half spreads uniformly over the tokens of the same sentence.
    let mut d_bag = Array2::<f64>::zeros((ctx.sent_sizes.len(), e));
    for (i, (&token, &s)) in ctx.token_ids.iter().zip(&ctx.sent_of).enumerate() {
        let mut row = grads.embeddings.row_mut(token);
        row += &d_x.row(i).slice(ndarray::s![..e]);
        let mut bag_row = d_bag.row_mut(s);
        bag_row += &d_x.row(i).slice(ndarray::s![e..]);
    }
    for (i, (&token, &s)) in ctx.token_ids.iter().zip(&ctx.sent_of).enumerate() {
        let _ = i;
        let size = ctx.sent_sizes[s] as f64;
        let mut row = grads.embeddings.row_mut(token);
        row.scaled_add(1.0 / size, &d_bag.row(s));
    }
}
