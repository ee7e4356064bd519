//! Per-document orchestration: cluster sentences, summarize clusters, build
//! candidate contexts, pick one context per event pair, and classify.
//!
//! The same machinery serves prediction (greedy summaries) and training
//! (sampled summaries plus cached forward state for the backward pass).

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::content_key;
use crate::clustering::{
    kmeans, sentence_features, ClusterSet, ClusteringConfig, ClusteringError, ExternalEmbeddings,
    FeatureVector, IdfStats,
};
use crate::corpus::{Document, Taxonomy};
use crate::relation::{
    build_document_context, build_summary_context, classifier_backward, classify, encode_context,
    mention_pool, pair_rep, pair_rep_backward, pool_backward, select_pair_context, ClassifierCache,
    ClassifierGrads, ClassifierParams, ContextSpec, EncodedContext, EncoderConfig, EncoderGrads,
    EncoderParams, PairPrediction, RelationError, SourceTag, Vocabulary,
};
use crate::summarizer::{
    summarize_cluster_set, DecodeMode, Summaries, SummarizerBackend, SummarizerError,
    SummaryPolicy, POLICY_EXTRA_INPUTS,
};

/// How contexts are formed for a run. Every variant keeps the (possibly
/// truncated) document as the lowest-priority fallback context except
/// [`StrategyVariant::DocumentOnly`], which uses nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyVariant {
    /// Intra- and inter-cluster summaries plus the document fallback.
    Full,
    /// Drop intra-cluster summaries; keep inter-cluster ones.
    NoIntra,
    /// Drop inter-cluster summaries; keep intra-cluster ones.
    NoInter,
    /// Keep the clusters but skip compression: cluster text is used verbatim.
    NoSummarization,
    /// One summary of the whole document as a single cluster.
    OneSummary,
    /// Contiguous, evenly sized chunks instead of content-based clusters.
    EvenChunks,
    /// No clusters or summaries at all; the raw document is the one context.
    DocumentOnly,
}

impl StrategyVariant {
    pub const ALL: [StrategyVariant; 7] = [
        StrategyVariant::Full,
        StrategyVariant::NoIntra,
        StrategyVariant::NoInter,
        StrategyVariant::NoSummarization,
        StrategyVariant::OneSummary,
        StrategyVariant::EvenChunks,
        StrategyVariant::DocumentOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyVariant::Full => "full",
            StrategyVariant::NoIntra => "no_intra",
            StrategyVariant::NoInter => "no_inter",
            StrategyVariant::NoSummarization => "no_summarization",
            StrategyVariant::OneSummary => "one_summary",
            StrategyVariant::EvenChunks => "even_chunks",
            StrategyVariant::DocumentOnly => "document_only",
        }
    }

    /// Context kinds this variant may select, in priority order.
    pub fn allowed_sources(self) -> &'static [SourceTag] {
        match self {
            StrategyVariant::Full | StrategyVariant::NoSummarization => {
                &[SourceTag::Inter, SourceTag::Intra, SourceTag::Document]
            }
            StrategyVariant::NoIntra => &[SourceTag::Inter, SourceTag::Document],
            StrategyVariant::NoInter
            | StrategyVariant::OneSummary
            | StrategyVariant::EvenChunks => &[SourceTag::Intra, SourceTag::Document],
            StrategyVariant::DocumentOnly => &[SourceTag::Document],
        }
    }

    /// Whether the extractive scorer participates (and can be trained).
    pub fn uses_trained_policy(self) -> bool {
        !matches!(
            self,
            StrategyVariant::NoSummarization | StrategyVariant::DocumentOnly
        )
    }
}

impl std::fmt::Display for StrategyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyVariant {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PipelineError::UnknownVariant { name: s.to_string() })
    }
}

/// Sizes of the trainable parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub classifier_hidden: usize,
    pub policy_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            classifier_hidden: 32,
            policy_hidden: 16,
        }
    }
}

/// Everything learned or fitted from the training split: corpus statistics,
/// the encoder, the pair classifier, and the sentence-keep scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub taxonomy: Taxonomy,
    pub idf: IdfStats,
    /// Width of optional per-sentence external embeddings (0 when unused).
    pub external_dim: usize,
    pub encoder: EncoderParams,
    pub classifier: ClassifierParams,
    pub policy: SummaryPolicy,
}

impl Models {
    /// Initialize from training documents; `seed` drives one parameter
    /// stream (encoder, then classifier, then policy).
    pub fn init(
        config: &ModelConfig,
        taxonomy: Taxonomy,
        train_docs: &[&Document],
        external_dim: usize,
        seed: u64,
    ) -> Self {
        let idf = IdfStats::from_documents(train_docs.iter().copied());
        let vocab = Vocabulary::build(train_docs.iter().copied());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(&config.encoder, vocab, &mut rng);
        let mut classifier = ClassifierParams::init(
            3 * config.encoder.output_dim,
            config.classifier_hidden,
            taxonomy.len(),
            &mut rng,
        );
        // Start the output biases at the log-odds of the observed positive
        // rate. With ~1% positives, zero biases make the first updates an
        // avalanche of negative-class gradient that saturates the encoder
        // into a constant predictor before any discriminative signal forms.
        let mut positives = 0usize;
        let mut slots = 0usize;
        for doc in train_docs {
            positives += doc.relations.len();
            let events = doc.events.len();
            slots += events * events.saturating_sub(1) * taxonomy.len();
        }
        let rate = if slots > 0 {
            (positives as f64 / slots as f64).clamp(1e-4, 0.5)
        } else {
            0.01
        };
        classifier.b2.fill((rate / (1.0 - rate)).ln());
        let feature_dim = idf.vocab_size() + 1 + external_dim;
        let policy =
            SummaryPolicy::init(feature_dim + POLICY_EXTRA_INPUTS, config.policy_hidden, &mut rng);
        Models { taxonomy, idf, external_dim, encoder, classifier, policy }
    }

    /// Per-sentence feature width the bundle expects.
    pub fn feature_dim(&self) -> usize {
        self.idf.vocab_size() + 1 + self.external_dim
    }

    /// Cross-component shape checks (useful after deserialization).
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.encoder.validate()?;
        self.classifier.validate()?;
        let mut problems = Vec::new();
        if self.classifier.rep_dim() != 3 * self.encoder.output_dim() {
            problems.push(format!(
                "classifier input {} != 3 * encoder output {}",
                self.classifier.rep_dim(),
                self.encoder.output_dim()
            ));
        }
        if self.classifier.num_types() != self.taxonomy.len() {
            problems.push(format!(
                "classifier has {} outputs for {} relation types",
                self.classifier.num_types(),
                self.taxonomy.len()
            ));
        }
        let expected = self.feature_dim() + POLICY_EXTRA_INPUTS;
        if self.policy.input_dim() != expected {
            problems.push(format!(
                "scorer input {} != feature dim + {} = {}",
                self.policy.input_dim(),
                POLICY_EXTRA_INPUTS,
                expected
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Relation(RelationError::ShapeMismatch {
                message: problems.join("; "),
            }))
        }
    }
}

/// Run-time knobs shared by prediction, evaluation, and training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub variant: StrategyVariant,
    pub clustering: ClusteringConfig,
    /// Summary length budget as a fraction of the cluster's token count.
    pub budget: f64,
    /// Probability threshold for emitting a relation type.
    pub threshold: f64,
    /// Hard token cap applied to every built context (`None` = unlimited).
    pub max_context_tokens: Option<usize>,
    /// Chunk count for [`StrategyVariant::EvenChunks`]; defaults to
    /// `clustering.k`.
    pub even_chunks: Option<usize>,
    /// Base seed for per-document summary sampling streams.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: StrategyVariant::Full,
            clustering: ClusteringConfig::default(),
            budget: 0.25,
            threshold: 0.5,
            max_context_tokens: None,
            even_chunks: None,
            seed: 0,
        }
    }
}

/// Intermediate artifacts for one document, up to (unencoded) contexts.
#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub features: Vec<FeatureVector>,
    pub cluster_set: ClusterSet,
    pub summaries: Summaries,
    /// Inter summaries (ascending source pair), intra summaries (ascending
    /// id), then the document context last.
    pub contexts: Vec<ContextSpec>,
}

/// Deterministic per-document sampling stream.
pub fn doc_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(content_key(seed, doc_id.as_bytes()))
}

/// Cluster a document according to the strategy variant.
pub fn cluster_document(
    doc: &Document,
    features: &[FeatureVector],
    config: &PipelineConfig,
) -> Result<ClusterSet, ClusteringError> {
    Ok(match config.variant {
        StrategyVariant::Full
        | StrategyVariant::NoIntra
        | StrategyVariant::NoInter
        | StrategyVariant::NoSummarization => {
            let mut set = ClusterSet::from_assignment(&kmeans(features, &config.clustering)?);
            match config.variant {
                StrategyVariant::NoIntra => set.intra.clear(),
                StrategyVariant::NoInter => set.inter.clear(),
                _ => {}
            }
            set
        }
        StrategyVariant::OneSummary => ClusterSet::whole_document(doc),
        StrategyVariant::EvenChunks => {
            ClusterSet::even_chunks(doc, config.even_chunks.unwrap_or(config.clustering.k))
        }
        StrategyVariant::DocumentOnly => ClusterSet { intra: Vec::new(), inter: Vec::new() },
    })
}

/// Summarize a document's clusters according to the strategy variant.
/// `backend` is ignored where a variant forces its own behavior (verbatim
/// clusters, or no summaries at all).
pub fn summarize_for_variant(
    backend: &SummarizerBackend<'_>,
    doc: &Document,
    cluster_set: &ClusterSet,
    features: &[FeatureVector],
    config: &PipelineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Summaries, SummarizerError> {
    match config.variant {
        StrategyVariant::DocumentOnly => Ok(Summaries { intra: Vec::new(), inter: Vec::new() }),
        StrategyVariant::NoSummarization => summarize_cluster_set(
            &SummarizerBackend::Identity,
            doc,
            cluster_set,
            features,
            config.budget,
            rng,
        ),
        _ => summarize_cluster_set(backend, doc, cluster_set, features, config.budget, rng),
    }
}

/// Build the ordered context list: inter summaries, intra summaries, then
/// the document. All contexts share the same token cap.
pub fn build_contexts(
    doc: &Document,
    vocab: &Vocabulary,
    summaries: &Summaries,
    max_tokens: Option<usize>,
) -> Vec<ContextSpec> {
    let mut out = Vec::with_capacity(summaries.inter.len() + summaries.intra.len() + 1);
    for summary in &summaries.inter {
        out.push(build_summary_context(doc, vocab, summary, max_tokens));
    }
    for summary in &summaries.intra {
        out.push(build_summary_context(doc, vocab, summary, max_tokens));
    }
    out.push(build_document_context(doc, vocab, max_tokens));
    out
}

/// Cluster, summarize, and build contexts for one document.
pub fn prepare_document(
    models: &Models,
    doc: &Document,
    config: &PipelineConfig,
    mode: DecodeMode,
    external: Option<&ExternalEmbeddings>,
) -> Result<PreparedDoc, PipelineError> {
    let features =
        sentence_features(doc, &models.idf, &config.clustering.weights, external)?;
    if let Some(first) = features.first() {
        if first.dim() != models.feature_dim() {
            return Err(PipelineError::FeatureDim {
                expected: models.feature_dim(),
                found: first.dim(),
            });
        }
    }
    let cluster_set = cluster_document(doc, &features, config)?;
    let mut rng = doc_rng(config.seed, &doc.id);
    let backend = SummarizerBackend::Extractive { policy: &models.policy, mode };
    let summaries =
        summarize_for_variant(&backend, doc, &cluster_set, &features, config, &mut rng)?;
    let contexts =
        build_contexts(doc, &models.encoder.vocab, &summaries, config.max_context_tokens);
    Ok(PreparedDoc { features, cluster_set, summaries, contexts })
}

/// Forward state for one scored pair.
#[derive(Debug, Clone)]
pub struct PairComputation {
    /// Indices into `doc.events`.
    pub head: usize,
    pub tail: usize,
    pub head_id: String,
    pub tail_id: String,
    /// Index into the encoded context list.
    pub context: usize,
    /// Pooled event vectors (all-zero when the event is absent from the
    /// chosen context, which can only happen for a truncated document).
    pub head_pooled: Array1<f64>,
    pub tail_pooled: Array1<f64>,
    pub head_present: bool,
    pub tail_present: bool,
    pub probs: Vec<f64>,
    pub cache: ClassifierCache,
}

/// Encoded contexts plus per-pair forward state for one document.
#[derive(Debug, Clone)]
pub struct DocComputation {
    pub encoded: Vec<EncodedContext>,
    pub pairs: Vec<PairComputation>,
}

impl DocComputation {
    pub fn predictions(&self) -> Vec<PairPrediction> {
        self.pairs
            .iter()
            .map(|pair| PairPrediction {
                head: pair.head_id.clone(),
                tail: pair.tail_id.clone(),
                probs: pair.probs.clone(),
                source: self.encoded[pair.context].source.tag(),
            })
            .collect()
    }
}

/// Encode every context and classify every ordered event pair.
pub fn forward_document(
    encoder: &EncoderParams,
    classifier: &ClassifierParams,
    doc: &Document,
    contexts: &[ContextSpec],
    allowed: &[SourceTag],
) -> Result<DocComputation, PipelineError> {
    let encoded: Vec<EncodedContext> =
        contexts.iter().map(|spec| encode_context(encoder, spec)).collect();
    let dim = encoder.output_dim();
    // Pooled vectors are shared across pairs touching the same (context,
    // event); absent events (truncated document) pool to a zero vector.
    let mut memo: BTreeMap<(usize, String), (Array1<f64>, bool)> = BTreeMap::new();
    let mut pairs = Vec::new();
    for (head, tail) in doc.event_pairs() {
        let head_id = doc.events[head].id.clone();
        let tail_id = doc.events[tail].id.clone();
        let context = select_pair_context(&encoded, &head_id, &tail_id, allowed).ok_or_else(
            || PipelineError::NoContext { head: head_id.clone(), tail: tail_id.clone() },
        )?;
        let mut pooled = |id: &str| -> Result<(Array1<f64>, bool), PipelineError> {
            if let Some(entry) = memo.get(&(context, id.to_string())) {
                return Ok(entry.clone());
            }
            let entry = if encoded[context].positions(id).map_or(false, |p| !p.is_empty()) {
                (mention_pool(&encoded[context], id)?, true)
            } else {
                (Array1::zeros(dim), false)
            };
            memo.insert((context, id.to_string()), entry.clone());
            Ok(entry)
        };
        let (head_pooled, head_present) = pooled(&head_id)?;
        let (tail_pooled, tail_present) = pooled(&tail_id)?;
        let rep = pair_rep(&head_pooled, &tail_pooled);
        let (probs, cache) = classify(classifier, &rep);
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(PipelineError::Relation(RelationError::NonFinite {
                stage: format!("classifying pair `{head_id}` -> `{tail_id}`"),
            }));
        }
        pairs.push(PairComputation {
            head,
            tail,
            head_id,
            tail_id,
            context,
            head_pooled,
            tail_pooled,
            head_present,
            tail_present,
            probs,
            cache,
        });
    }
    Ok(DocComputation { encoded, pairs })
}

/// Backpropagate per-pair logit gradients into encoder and classifier
/// accumulators. `d_logits` is aligned with `comp.pairs`; pooled-vector
/// gradients are merged per (context, event) before the pooling backward so
/// shared event vectors are handled once.
pub fn backward_document(
    encoder: &EncoderParams,
    classifier: &ClassifierParams,
    comp: &DocComputation,
    d_logits: &[Vec<f64>],
    enc_grads: &mut EncoderGrads,
    clf_grads: &mut ClassifierGrads,
) -> Result<(), PipelineError> {
    if d_logits.len() != comp.pairs.len() {
        return Err(PipelineError::Gradients {
            message: format!(
                "{} gradient rows for {} pairs",
                d_logits.len(),
                comp.pairs.len()
            ),
        });
    }
    let mut d_pooled: BTreeMap<(usize, String), Array1<f64>> = BTreeMap::new();
    for (pair, dl) in comp.pairs.iter().zip(d_logits) {
        if dl.len() != classifier.num_types() {
            return Err(PipelineError::Gradients {
                message: format!(
                    "gradient width {} for {} relation types",
                    dl.len(),
                    classifier.num_types()
                ),
            });
        }
        let d_rep = classifier_backward(classifier, &pair.cache, dl, clf_grads);
        let (d_head, d_tail) = pair_rep_backward(&pair.head_pooled, &pair.tail_pooled, &d_rep);
        if pair.head_present {
            *d_pooled
                .entry((pair.context, pair.head_id.clone()))
                .or_insert_with(|| Array1::zeros(d_head.len())) += &d_head;
        }
        if pair.tail_present {
            *d_pooled
                .entry((pair.context, pair.tail_id.clone()))
                .or_insert_with(|| Array1::zeros(d_tail.len())) += &d_tail;
        }
    }
    let mut d_h: BTreeMap<usize, Array2<f64>> = BTreeMap::new();
    for ((context, id), grad) in &d_pooled {
        let entry = d_h
            .entry(*context)
            .or_insert_with(|| Array2::zeros(comp.encoded[*context].h.raw_dim()));
        pool_backward(&comp.encoded[*context], id, grad, entry)?;
    }
    for (context, grad) in &d_h {
        crate::relation::encoder_backward(encoder, &comp.encoded[*context], grad, enc_grads);
    }
    Ok(())
}

/// Greedy-decoded prediction for one document.
pub fn predict_document(
    models: &Models,
    doc: &Document,
    config: &PipelineConfig,
    external: Option<&ExternalEmbeddings>,
) -> Result<(PreparedDoc, Vec<PairPrediction>), PipelineError> {
    let prepared = prepare_document(models, doc, config, DecodeMode::Greedy, external)?;
    let comp = forward_document(
        &models.encoder,
        &models.classifier,
        doc,
        &prepared.contexts,
        config.variant.allowed_sources(),
    )?;
    Ok((prepared, comp.predictions()))
}

/// Pipeline orchestration errors.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error("no usable context for pair `{head}` -> `{tail}`")]
    NoContext { head: String, tail: String },
    #[error("feature width {found} does not match the models ({expected})")]
    FeatureDim { expected: usize, found: usize },
    #[error("gradient shape mismatch: {message}")]
    Gradients { message: String },
    #[error("unknown strategy variant `{name}`")]
    UnknownVariant { name: String },
}
