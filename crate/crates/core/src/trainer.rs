//! Joint optimization: supervised updates for the relation model and a
//! one-sample score-function gradient for the sentence-keep scorer, driven
//! by a prediction + coverage reward with an exponential-moving-average
//! baseline.
//!
//! Each batch runs two isolated phases: a relation phase (greedy summaries;
//! encoder and classifier updated against summed per-type cross-entropy)
//! and a policy phase (sampled summaries; only the scorer updated). Reward
//! for a cluster's summary combines the prediction reward over the pairs
//! that cluster's context actually served with the document-level coverage
//! reward over the intra-cluster summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{content_key, SCHEMA_VERSION};
use crate::clustering::{ExternalEmbeddings, FeatureVector};
use crate::corpus::{Corpus, CorpusError, Document, Split, Taxonomy};
use crate::evaluator::{evaluate_variant, EvalConfig, EvalError};
use crate::pipeline::{
    backward_document, forward_document, prepare_document, ModelConfig, Models, PipelineConfig,
    PipelineError,
};
use crate::relation::{bce_dlogits, bce_loss, ClassifierGrads, EncoderGrads};
use crate::reward::{
    combined_reward, coverage_reward, prediction_reward, RewardConfig, RewardError,
};
use crate::summarizer::{
    policy_input, score_sentences, DecodeMode, PolicyGrads, SummarizerError, SummaryPolicy,
};

/// Training hyperparameters plus the pipeline and reward settings the run
/// should use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Documents per optimization step.
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Decay of the moving-average reward baseline.
    pub baseline_decay: f64,
    pub seed: u64,
    /// Reshuffle document order each epoch.
    pub shuffle: bool,
    /// Relation type names; `None` uses the built-in default set.
    pub taxonomy: Option<Vec<String>>,
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub reward: RewardConfig,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            lr: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            baseline_decay: 0.95,
            seed: 0,
            shuffle: true,
            taxonomy: None,
            model: ModelConfig::default(),
            pipeline: PipelineConfig::default(),
            reward: RewardConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch size must be at least 1".to_string());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            problems.push(format!("learning rate {} must be finite and >= 0", self.lr));
        }
        for (name, value) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("baseline_decay", self.baseline_decay),
        ] {
            if !(0.0..1.0).contains(&value) {
                problems.push(format!("{name} {value} must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            problems.push(format!("adam_eps {} must be positive", self.adam_eps));
        }
        if !(0.0..=1.0).contains(&self.pipeline.threshold) {
            problems.push(format!(
                "prediction threshold {} must lie in [0, 1]",
                self.pipeline.threshold
            ));
        }
        if !(self.pipeline.budget > 0.0) {
            problems.push(format!("summary budget {} must be positive", self.pipeline.budget));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TrainError::BadConfig { message: problems.join("; ") })
        }
    }
}

fn adam_step<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    t: usize,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) {
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    });
}

fn adam_step_scalar(
    param: &mut f64,
    grad: f64,
    m: &mut f64,
    v: &mut f64,
    t: usize,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) {
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    *m = b1 * *m + (1.0 - b1) * grad;
    *v = b2 * *v + (1.0 - b2) * grad * grad;
    *param -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
}

/// Adam state for both parameter groups. The relation model and the scorer
/// keep separate step counters so alternating phases do not skew each
/// other's bias correction.
#[derive(Debug, Clone)]
pub struct Optimizer {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    relation_t: usize,
    policy_t: usize,
    enc_m: EncoderGrads,
    enc_v: EncoderGrads,
    clf_m: ClassifierGrads,
    clf_v: ClassifierGrads,
    pol_m: PolicyGrads,
    pol_v: PolicyGrads,
}

impl Optimizer {
    pub fn new(models: &Models, lr: f64, b1: f64, b2: f64, eps: f64) -> Self {
        Optimizer {
            lr,
            b1,
            b2,
            eps,
            relation_t: 0,
            policy_t: 0,
            enc_m: EncoderGrads::zeros_like(&models.encoder),
            enc_v: EncoderGrads::zeros_like(&models.encoder),
            clf_m: ClassifierGrads::zeros_like(&models.classifier),
            clf_v: ClassifierGrads::zeros_like(&models.classifier),
            pol_m: PolicyGrads::zeros_like(&models.policy),
            pol_v: PolicyGrads::zeros_like(&models.policy),
        }
    }

    /// Apply one Adam step to the encoder and classifier.
    pub fn step_relation(
        &mut self,
        models: &mut Models,
        enc_grads: &EncoderGrads,
        clf_grads: &ClassifierGrads,
    ) {
        self.relation_t += 1;
        let (t, lr, b1, b2, eps) = (self.relation_t, self.lr, self.b1, self.b2, self.eps);
        adam_step(&mut models.encoder.embeddings, &enc_grads.embeddings, &mut self.enc_m.embeddings, &mut self.enc_v.embeddings, t, lr, b1, b2, eps);
        adam_step(&mut models.encoder.w1, &enc_grads.w1, &mut self.enc_m.w1, &mut self.enc_v.w1, t, lr, b1, b2, eps);
        adam_step(&mut models.encoder.w2, &enc_grads.w2, &mut self.enc_m.w2, &mut self.enc_v.w2, t, lr, b1, b2, eps);
        adam_step(&mut models.classifier.w1, &clf_grads.w1, &mut self.clf_m.w1, &mut self.clf_v.w1, t, lr, b1, b2, eps);
        adam_step(&mut models.classifier.b1, &clf_grads.b1, &mut self.clf_m.b1, &mut self.clf_v.b1, t, lr, b1, b2, eps);
        adam_step(&mut models.classifier.w2, &clf_grads.w2, &mut self.clf_m.w2, &mut self.clf_v.w2, t, lr, b1, b2, eps);
        adam_step(&mut models.classifier.b2, &clf_grads.b2, &mut self.clf_m.b2, &mut self.clf_v.b2, t, lr, b1, b2, eps);
    }

    /// Apply one Adam step to the sentence-keep scorer.
    pub fn step_policy(&mut self, models: &mut Models, grads: &PolicyGrads) {
        self.policy_t += 1;
        let (t, lr, b1, b2, eps) = (self.policy_t, self.lr, self.b1, self.b2, self.eps);
        adam_step(&mut models.policy.w1, &grads.w1, &mut self.pol_m.w1, &mut self.pol_v.w1, t, lr, b1, b2, eps);
        adam_step(&mut models.policy.b1, &grads.b1, &mut self.pol_m.b1, &mut self.pol_v.b1, t, lr, b1, b2, eps);
        adam_step(&mut models.policy.w2, &grads.w2, &mut self.pol_m.w2, &mut self.pol_v.w2, t, lr, b1, b2, eps);
        adam_step_scalar(&mut models.policy.b2, grads.b2, &mut self.pol_m.b2, &mut self.pol_v.b2, t, lr, b1, b2, eps);
    }
}

/// Outcome of one relation-phase batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationStepStats {
    /// Mean per-document loss (summed over pairs and types within a doc).
    pub loss: f64,
    pub pairs: usize,
}

/// One supervised batch update of encoder and classifier. Summaries are
/// decoded greedily; the scorer's parameters are read but never written.
pub fn relation_step(
    models: &mut Models,
    docs: &[&Document],
    pipeline: &PipelineConfig,
    optimizer: &mut Optimizer,
    external: Option<&ExternalEmbeddings>,
) -> Result<RelationStepStats, TrainError> {
    if docs.is_empty() {
        return Ok(RelationStepStats { loss: 0.0, pairs: 0 });
    }
    let num_types = models.taxonomy.len();
    let mut enc_grads = EncoderGrads::zeros_like(&models.encoder);
    let mut clf_grads = ClassifierGrads::zeros_like(&models.classifier);
    let mut loss = 0.0f64;
    let mut pairs = 0usize;
    for doc in docs {
        let prepared = prepare_document(models, doc, pipeline, DecodeMode::Greedy, external)?;
        let comp = forward_document(
            &models.encoder,
            &models.classifier,
            doc,
            &prepared.contexts,
            pipeline.variant.allowed_sources(),
        )?;
        let gold = doc.gold_pair_types(&models.taxonomy)?;
        let mut d_logits = Vec::with_capacity(comp.pairs.len());
        for pair in &comp.pairs {
            let positives = gold.get(&(pair.head, pair.tail));
            let bits: Vec<bool> = (0..num_types)
                .map(|t| positives.map_or(false, |set| set.contains(&t)))
                .collect();
            loss += bce_loss(&pair.probs, &bits);
            d_logits.push(bce_dlogits(&pair.probs, &bits));
            pairs += 1;
        }
        backward_document(
            &models.encoder,
            &models.classifier,
            &comp,
            &d_logits,
            &mut enc_grads,
            &mut clf_grads,
        )?;
    }
    let scale = 1.0 / docs.len() as f64;
    for grad in [&mut enc_grads.embeddings, &mut enc_grads.w1, &mut enc_grads.w2, &mut clf_grads.w1, &mut clf_grads.w2] {
        grad.mapv_inplace(|g| g * scale);
    }
    clf_grads.b1.mapv_inplace(|g| g * scale);
    clf_grads.b2.mapv_inplace(|g| g * scale);
    optimizer.step_relation(models, &enc_grads, &clf_grads);
    Ok(RelationStepStats { loss: loss * scale, pairs })
}

/// Accumulate one sampled mask's score-function gradient:
/// `-advantage * d log P(mask) / d params`, where the mask's log-probability
/// is a product of independent per-sentence keep decisions.
pub fn accumulate_reinforce(
    policy: &SummaryPolicy,
    doc: &Document,
    cluster_sentences: &[usize],
    features: &[FeatureVector],
    probs: &[f64],
    mask: &[bool],
    advantage: f64,
    grads: &mut PolicyGrads,
) {
    for (i, &sentence) in cluster_sentences.iter().enumerate() {
        let x = policy_input(doc, cluster_sentences, features, sentence);
        let chosen = f64::from(u8::from(mask[i]));
        let coeff = -advantage * (chosen - probs[i]);
        policy.accumulate_logit_grad(&x, coeff, grads);
    }
}

/// Outcome of one policy-phase batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStepStats {
    /// Mean combined reward over cluster summaries.
    pub mean_reward: f64,
    /// Mean document-level coverage reward.
    pub mean_coverage: f64,
    pub clusters: usize,
    /// Baseline value after the batch.
    pub baseline: f64,
}

/// One score-function batch update of the scorer. Summaries are sampled;
/// encoder and classifier are read but never written.
pub fn policy_step(
    models: &mut Models,
    docs: &[&Document],
    pipeline: &PipelineConfig,
    reward: &RewardConfig,
    optimizer: &mut Optimizer,
    baseline: &mut f64,
    baseline_decay: f64,
    external: Option<&ExternalEmbeddings>,
) -> Result<PolicyStepStats, TrainError> {
    if docs.is_empty() {
        return Ok(PolicyStepStats {
            mean_reward: 0.0,
            mean_coverage: 0.0,
            clusters: 0,
            baseline: *baseline,
        });
    }
    let num_types = models.taxonomy.len();
    let mut grads = PolicyGrads::zeros_like(&models.policy);
    let mut reward_sum = 0.0f64;
    let mut coverage_sum = 0.0f64;
    let mut clusters = 0usize;
    for doc in docs {
        let prepared = prepare_document(models, doc, pipeline, DecodeMode::Sample, external)?;
        let comp = forward_document(
            &models.encoder,
            &models.classifier,
            doc,
            &prepared.contexts,
            pipeline.variant.allowed_sources(),
        )?;
        let gold = doc.gold_pair_types(&models.taxonomy)?;
        let predicted: BTreeMap<(usize, usize), BTreeSet<usize>> = comp
            .pairs
            .iter()
            .map(|pair| {
                let types: BTreeSet<usize> = pair
                    .probs
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > pipeline.threshold)
                    .map(|(t, _)| t)
                    .collect();
                ((pair.head, pair.tail), types)
            })
            .collect();
        let coverage =
            coverage_reward(&prepared.summaries.intra, &prepared.cluster_set.intra, doc, reward)?;
        coverage_sum += coverage;
        let mut served: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for pair in &comp.pairs {
            served.entry(pair.context).or_default().push((pair.head, pair.tail));
        }
        // Cluster summaries in context order: inter first, then intra; the
        // document context (last) carries no policy decision.
        let in_order = prepared.summaries.inter.iter().chain(prepared.summaries.intra.iter());
        for (context_index, summary) in in_order.enumerate() {
            let prediction_part = match served.get(&context_index) {
                Some(scope) if !scope.is_empty() => {
                    prediction_reward(&predicted, &gold, scope, num_types, reward)?
                }
                _ => 0.0,
            };
            let value = combined_reward(prediction_part, coverage, reward);
            let advantage = value - *baseline;
            *baseline = baseline_decay * *baseline + (1.0 - baseline_decay) * value;
            reward_sum += value;
            clusters += 1;
            let mask = summary.sampled_mask.as_ref().ok_or_else(|| TrainError::NotSampled {
                cluster: summary.source.to_string(),
            })?;
            let cluster_sentences =
                prepared.cluster_set.sentences_of(summary.source).ok_or_else(|| {
                    TrainError::NotSampled { cluster: summary.source.to_string() }
                })?;
            let probs =
                score_sentences(&models.policy, doc, cluster_sentences, &prepared.features)?;
            accumulate_reinforce(
                &models.policy,
                doc,
                cluster_sentences,
                &prepared.features,
                &probs,
                mask,
                advantage,
                &mut grads,
            );
        }
    }
    let scale = 1.0 / docs.len() as f64;
    grads.w1.mapv_inplace(|g| g * scale);
    grads.b1.mapv_inplace(|g| g * scale);
    grads.w2.mapv_inplace(|g| g * scale);
    grads.b2 *= scale;
    optimizer.step_policy(models, &grads);
    Ok(PolicyStepStats {
        mean_reward: if clusters > 0 { reward_sum / clusters as f64 } else { 0.0 },
        mean_coverage: coverage_sum * scale,
        clusters,
        baseline: *baseline,
    })
}

/// One epoch's log row (no wall-clock fields, so logs are reproducible).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-document relation loss over the epoch.
    pub relation_loss: f64,
    /// Mean combined reward per cluster summary; absent when the strategy
    /// has no trainable summaries.
    pub policy_reward: Option<f64>,
    pub coverage: Option<f64>,
    pub baseline: Option<f64>,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Models from the epoch with the best dev F1 (earliest on ties).
    pub best_models: Models,
    /// Models after the final epoch.
    pub final_models: Models,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub log: Vec<EpochLog>,
    pub baseline: f64,
}

/// Train on the corpus's train split, scoring the dev split each epoch.
/// Falls back to scoring on the train split when no dev documents exist.
pub fn train(
    corpus: &Corpus,
    config: &TrainConfig,
    external: Option<&ExternalEmbeddings>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let taxonomy = match &config.taxonomy {
        Some(names) => Taxonomy::new(names.clone())?,
        None => Taxonomy::default(),
    };
    let train_docs = corpus.docs_in_split(Split::Train);
    if train_docs.is_empty() {
        return Err(TrainError::NoTrainingDocuments);
    }
    let dev_docs = corpus.docs_in_split(Split::Dev);
    let dev: Vec<&Document> = if dev_docs.is_empty() {
        log::warn!("no dev documents; scoring epochs on the training split");
        train_docs.clone()
    } else {
        dev_docs
    };
    let mut models = Models::init(
        &config.model,
        taxonomy,
        &train_docs,
        external.map_or(0, |e| e.dim()),
        config.seed,
    );
    let mut optimizer = Optimizer::new(
        &models,
        config.lr,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let policy_trainable = config.pipeline.variant.uses_trained_policy();
    if !policy_trainable && config.reward.beta != 0.0 {
        log::warn!(
            "strategy `{}` trains no summaries; coverage weight beta={} is ignored",
            config.pipeline.variant,
            config.reward.beta
        );
    }
    let mut baseline = 0.0f64;
    let mut log_rows = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Models)> = None;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_docs.len()).collect();
        if config.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(content_key(
                config.seed,
                format!("epoch-order-{epoch}").as_bytes(),
            ));
            order.shuffle(&mut rng);
        }
        let sample_config = PipelineConfig {
            seed: content_key(config.seed, format!("policy-sample-{epoch}").as_bytes()),
            ..config.pipeline.clone()
        };
        let mut loss_sum = 0.0f64;
        let mut reward_sum = 0.0f64;
        let mut coverage_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let docs: Vec<&Document> = chunk.iter().map(|&i| train_docs[i]).collect();
            let stats =
                relation_step(&mut models, &docs, &config.pipeline, &mut optimizer, external)?;
            loss_sum += stats.loss * docs.len() as f64;
            if policy_trainable {
                let pstats = policy_step(
                    &mut models,
                    &docs,
                    &sample_config,
                    &config.reward,
                    &mut optimizer,
                    &mut baseline,
                    config.baseline_decay,
                    external,
                )?;
                reward_sum += pstats.mean_reward;
                coverage_sum += pstats.mean_coverage;
            }
            batches += 1;
        }
        let report = evaluate_variant(
            &models,
            &dev,
            &config.pipeline,
            config.pipeline.variant,
            &config.eval,
            external,
        )?;
        log_rows.push(EpochLog {
            epoch,
            relation_loss: loss_sum / train_docs.len() as f64,
            policy_reward: policy_trainable.then(|| reward_sum / batches.max(1) as f64),
            coverage: policy_trainable.then(|| coverage_sum / batches.max(1) as f64),
            baseline: policy_trainable.then_some(baseline),
            dev_precision: report.precision,
            dev_recall: report.recall,
            dev_f1: report.f1,
        });
        if best.as_ref().map_or(true, |(_, best_f1, _)| report.f1 > *best_f1) {
            best = Some((epoch, report.f1, models.clone()));
        }
    }
    let (best_epoch, best_f1, best_models) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best_models,
        final_models: models,
        best_epoch,
        best_f1,
        log: log_rows,
        baseline,
    })
}

/// A saved model bundle with enough context to reproduce or resume scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: String,
    pub best_epoch: usize,
    pub dev_f1: f64,
    pub baseline: f64,
    pub config: TrainConfig,
    pub models: Models,
}

impl Checkpoint {
    pub fn from_outcome(outcome: &TrainOutcome, config: &TrainConfig) -> Self {
        Checkpoint {
            schema_version: SCHEMA_VERSION.to_string(),
            best_epoch: outcome.best_epoch,
            dev_f1: outcome.best_f1,
            baseline: outcome.baseline,
            config: config.clone(),
            models: outcome.best_models.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)?;
        if checkpoint.schema_version != SCHEMA_VERSION {
            return Err(TrainError::SchemaVersion {
                expected: SCHEMA_VERSION.to_string(),
                found: checkpoint.schema_version,
            });
        }
        checkpoint.models.validate()?;
        Ok(checkpoint)
    }
}

/// Training errors.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {message}")]
    BadConfig { message: String },
    #[error("no documents in the training split")]
    NoTrainingDocuments,
    #[error("summary for `{cluster}` carries no sampling state")]
    NotSampled { cluster: String },
    #[error("checkpoint schema version `{found}` does not match `{expected}`")]
    SchemaVersion { expected: String, found: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}
