//! Scoring: micro precision/recall/F1 over directed typed triples, the same
//! broken down by pair distance, event visibility in the chosen contexts,
//! and a harness that runs every compression strategy side by side.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ExternalEmbeddings;
use crate::corpus::{CorpusError, DistanceUnit, Document, Taxonomy};
use crate::pipeline::{
    forward_document, prepare_document, DocComputation, Models, PipelineConfig, PipelineError,
    StrategyVariant,
};
use crate::relation::PairPrediction;
use crate::summarizer::DecodeMode;

/// Scoring knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub unit: DistanceUnit,
    /// Bucket lower edges; must start at 0 and increase. The last bucket is
    /// open-ended.
    pub bucket_edges: Vec<usize>,
    /// Probability threshold for emitting a relation (strictly greater).
    pub threshold: f64,
    /// Count event visibility over all ordered pairs instead of only pairs
    /// that carry a gold relation.
    pub ep_all_events: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            unit: DistanceUnit::Words,
            bucket_edges: vec![0, 50, 100, 200],
            threshold: 0.5,
            ep_all_events: false,
        }
    }
}

/// Triple-level confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl Counts {
    pub fn merge(&mut self, other: &Counts) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
    }

    pub fn precision(&self) -> f64 {
        let denom = self.true_positive + self.false_positive;
        if denom == 0 { 0.0 } else { self.true_positive as f64 / denom as f64 }
    }

    pub fn recall(&self) -> f64 {
        let denom = self.true_positive + self.false_negative;
        if denom == 0 { 0.0 } else { self.true_positive as f64 / denom as f64 }
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
    }
}

/// Index of the bucket a distance falls into: the largest `i` with
/// `edges[i] <= distance`. `edges` must be validated first.
pub fn bucket_of(edges: &[usize], distance: usize) -> usize {
    edges.iter().rposition(|&edge| edge <= distance).unwrap_or(0)
}

fn validate_edges(edges: &[usize]) -> Result<(), EvalError> {
    if edges.is_empty() {
        return Err(EvalError::BadEdges { message: "no bucket edges".into() });
    }
    if edges[0] != 0 {
        return Err(EvalError::BadEdges {
            message: format!("first edge must be 0, got {}", edges[0]),
        });
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadEdges { message: "edges must strictly increase".into() });
    }
    Ok(())
}

/// One document's contribution to the evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocTally {
    pub overall: Counts,
    /// Aligned with the bucket edges.
    pub buckets: Vec<Counts>,
    pub gold_triples: usize,
    pub predicted_triples: usize,
}

/// Score one document's predictions as directed `(head, tail, type)`
/// triples. Rejects duplicate or self pairs and unknown event ids so that
/// externally produced predictions cannot inflate counts.
pub fn tally_document(
    doc: &Document,
    predictions: &[PairPrediction],
    taxonomy: &Taxonomy,
    config: &EvalConfig,
) -> Result<DocTally, EvalError> {
    validate_edges(&config.bucket_edges)?;
    let gold = doc.gold_pair_types(taxonomy)?;
    let mut distance_memo: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut distance = |head: usize, tail: usize| -> Result<usize, EvalError> {
        if let Some(&d) = distance_memo.get(&(head, tail)) {
            return Ok(d);
        }
        let d = doc.pair_distance(&doc.events[head].id, &doc.events[tail].id, config.unit)?;
        distance_memo.insert((head, tail), d);
        Ok(d)
    };
    let mut overall = Counts::default();
    let mut buckets = vec![Counts::default(); config.bucket_edges.len()];
    let mut predicted: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for prediction in predictions {
        let head = doc.event_index(&prediction.head).ok_or_else(|| EvalError::UnknownEvent {
            doc: doc.id.clone(),
            id: prediction.head.clone(),
        })?;
        let tail = doc.event_index(&prediction.tail).ok_or_else(|| EvalError::UnknownEvent {
            doc: doc.id.clone(),
            id: prediction.tail.clone(),
        })?;
        if head == tail {
            return Err(EvalError::SelfPair { doc: doc.id.clone(), id: prediction.head.clone() });
        }
        if predicted.insert((head, tail), prediction.predicted_types(config.threshold)).is_some()
        {
            return Err(EvalError::DuplicatePair {
                doc: doc.id.clone(),
                head: prediction.head.clone(),
                tail: prediction.tail.clone(),
            });
        }
    }
    let mut gold_triples = 0usize;
    let mut predicted_triples = 0usize;
    let empty = BTreeSet::new();
    let all_pairs: BTreeSet<(usize, usize)> =
        predicted.keys().copied().chain(gold.keys().copied()).collect();
    for pair in all_pairs {
        let pred_types = predicted.get(&pair).unwrap_or(&empty);
        let gold_types = gold.get(&pair).unwrap_or(&empty);
        let bucket = bucket_of(&config.bucket_edges, distance(pair.0, pair.1)?);
        let tp = pred_types.intersection(gold_types).count();
        let fp = pred_types.difference(gold_types).count();
        let missed = gold_types.difference(pred_types).count();
        let counts = Counts { true_positive: tp, false_positive: fp, false_negative: missed };
        overall.merge(&counts);
        buckets[bucket].merge(&counts);
        gold_triples += gold_types.len();
        predicted_triples += pred_types.len();
    }
    Ok(DocTally { overall, buckets, gold_triples, predicted_triples })
}

/// Count event visibility over a document's scored pairs: of the two events
/// of each (optionally gold-filtered) pair, how many had at least one
/// mention inside the context that scored the pair. Returns
/// `(present, total)`.
pub fn event_presence(
    comp: &DocComputation,
    gold_pairs: Option<&BTreeSet<(usize, usize)>>,
) -> (usize, usize) {
    let mut present = 0usize;
    let mut total = 0usize;
    for pair in &comp.pairs {
        if let Some(filter) = gold_pairs {
            if !filter.contains(&(pair.head, pair.tail)) {
                continue;
            }
        }
        total += 2;
        present += usize::from(pair.head_present) + usize::from(pair.tail_present);
    }
    (present, total)
}

/// Evaluation of one strategy variant over a document set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: StrategyVariant,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Bucket counts aligned with the report's edges.
    pub buckets: Vec<Counts>,
    pub bucket_recall: Vec<f64>,
    pub bucket_f1: Vec<f64>,
    /// Fraction of pair events visible in their chosen context; `None` when
    /// no pair qualified.
    pub event_presence: Option<f64>,
    pub gold_triples: usize,
    pub predicted_triples: usize,
}

/// Side-by-side evaluation across strategy variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub unit: DistanceUnit,
    pub bucket_edges: Vec<usize>,
    pub threshold: f64,
    pub documents: usize,
    pub variants: Vec<VariantReport>,
}

/// Run one variant (greedy decoding) over `docs` and score it.
pub fn evaluate_variant(
    models: &Models,
    docs: &[&Document],
    base: &PipelineConfig,
    variant: StrategyVariant,
    config: &EvalConfig,
    external: Option<&ExternalEmbeddings>,
) -> Result<VariantReport, EvalError> {
    validate_edges(&config.bucket_edges)?;
    let pipeline_config = PipelineConfig { variant, ..base.clone() };
    let mut overall = Counts::default();
    let mut buckets = vec![Counts::default(); config.bucket_edges.len()];
    let mut gold_triples = 0usize;
    let mut predicted_triples = 0usize;
    let mut present = 0usize;
    let mut total = 0usize;
    for doc in docs {
        let prepared =
            prepare_document(models, doc, &pipeline_config, DecodeMode::Greedy, external)?;
        let comp = forward_document(
            &models.encoder,
            &models.classifier,
            doc,
            &prepared.contexts,
            variant.allowed_sources(),
        )?;
        let tally = tally_document(doc, &comp.predictions(), &models.taxonomy, config)?;
        overall.merge(&tally.overall);
        for (acc, b) in buckets.iter_mut().zip(&tally.buckets) {
            acc.merge(b);
        }
        gold_triples += tally.gold_triples;
        predicted_triples += tally.predicted_triples;
        let gold_pairs: BTreeSet<(usize, usize)> = doc
            .gold_pair_types(&models.taxonomy)?
            .keys()
            .copied()
            .collect();
        let filter = if config.ep_all_events { None } else { Some(&gold_pairs) };
        let (p, t) = event_presence(&comp, filter);
        present += p;
        total += t;
    }
    Ok(VariantReport {
        variant,
        counts: overall,
        precision: overall.precision(),
        recall: overall.recall(),
        f1: overall.f1(),
        bucket_recall: buckets.iter().map(Counts::recall).collect(),
        bucket_f1: buckets.iter().map(Counts::f1).collect(),
        buckets,
        event_presence: if total > 0 { Some(present as f64 / total as f64) } else { None },
        gold_triples,
        predicted_triples,
    })
}

/// Evaluate every strategy variant with shared models and settings.
pub fn evaluate_all(
    models: &Models,
    docs: &[&Document],
    base: &PipelineConfig,
    config: &EvalConfig,
    external: Option<&ExternalEmbeddings>,
) -> Result<EvalReport, EvalError> {
    let mut variants = Vec::with_capacity(StrategyVariant::ALL.len());
    for variant in StrategyVariant::ALL {
        variants.push(evaluate_variant(models, docs, base, variant, config, external)?);
    }
    Ok(EvalReport {
        unit: config.unit,
        bucket_edges: config.bucket_edges.clone(),
        threshold: config.threshold,
        documents: docs.len(),
        variants,
    })
}

fn bucket_label(edges: &[usize], i: usize) -> String {
    match edges.get(i + 1) {
        Some(high) => format!("[{},{})", edges[i], high),
        None => format!("[{},+)", edges[i]),
    }
}

/// Render a report as an aligned text table; bucket columns show recall.
pub fn render_table(report: &EvalReport) -> String {
    let labels: Vec<String> =
        (0..report.bucket_edges.len()).map(|i| bucket_label(&report.bucket_edges, i)).collect();
    let mut out = String::new();
    out.push_str(&format!(
        "{:<17} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6}",
        "variant", "prec", "recall", "f1", "vis", "gold", "pred"
    ));
    for label in &labels {
        out.push_str(&format!(" {:>11}", format!("R{label}")));
    }
    out.push('\n');
    for v in &report.variants {
        out.push_str(&format!(
            "{:<17} {:>7.4} {:>7.4} {:>7.4} {:>7} {:>6} {:>6}",
            v.variant.name(),
            v.precision,
            v.recall,
            v.f1,
            v.event_presence.map_or_else(|| "-".to_string(), |e| format!("{e:.4}")),
            v.gold_triples,
            v.predicted_triples,
        ));
        for r in &v.bucket_recall {
            out.push_str(&format!(" {r:>11.4}"));
        }
        out.push('\n');
    }
    out
}

/// Evaluation errors.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid bucket edges: {message}")]
    BadEdges { message: String },
    #[error("document `{doc}`: prediction names unknown event `{id}`")]
    UnknownEvent { doc: String, id: String },
    #[error("document `{doc}`: event `{id}` paired with itself")]
    SelfPair { doc: String, id: String },
    #[error("document `{doc}`: duplicate prediction for pair `{head}` -> `{tail}`")]
    DuplicatePair { doc: String, head: String, tail: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Event, Mention, RelationInstance, Sentence};
    use crate::pipeline::ModelConfig;
    use crate::relation::{build_document_context, SourceTag};

    fn doc() -> Document {
        let mk = |index: usize, text: &str| Sentence {
            index,
            tokens: text.split(' ').map(String::from).collect(),
        };
        Document {
            id: "d1".into(),
            sentences: vec![mk(0, "aa ev1 bb cc"), mk(1, "dd mid ee"), mk(2, "ff ev2 gg hh")],
            events: vec![
                Event { id: "e1".into(), mentions: vec![Mention { sentence: 0, start: 1, end: 2 }] },
                Event { id: "e2".into(), mentions: vec![Mention { sentence: 2, start: 1, end: 2 }] },
            ],
            relations: vec![RelationInstance {
                head: "e1".into(),
                tail: "e2".into(),
                rtype: "CAUSE".into(),
            }],
        }
    }

    fn prediction(head: &str, tail: &str, probs: Vec<f64>) -> PairPrediction {
        PairPrediction {
            head: head.into(),
            tail: tail.into(),
            probs,
            source: SourceTag::Document,
        }
    }

    #[test]
    fn bucket_assignment_uses_lower_edges() {
        let edges = [0usize, 50, 100, 200];
        assert_eq!(bucket_of(&edges, 0), 0);
        assert_eq!(bucket_of(&edges, 49), 0);
        assert_eq!(bucket_of(&edges, 50), 1);
        assert_eq!(bucket_of(&edges, 199), 2);
        assert_eq!(bucket_of(&edges, 200), 3);
        assert_eq!(bucket_of(&edges, 100_000), 3);
    }

    #[test]
    fn bad_edges_are_rejected() {
        let d = doc();
        let taxonomy = Taxonomy::default();
        for edges in [vec![], vec![10, 20], vec![0, 5, 5]] {
            let config = EvalConfig { bucket_edges: edges, ..Default::default() };
            assert!(matches!(
                tally_document(&d, &[], &taxonomy, &config),
                Err(EvalError::BadEdges { .. })
            ));
        }
    }

    #[test]
    fn hand_checked_micro_counts() {
        let d = doc();
        let taxonomy = Taxonomy::default();
        let config = EvalConfig::default();
        // CAUSE on (e1, e2) is a hit; PRECONDITION on (e2, e1) is spurious.
        let predictions = vec![
            prediction("e1", "e2", vec![0.9, 0.1, 0.2]),
            prediction("e2", "e1", vec![0.2, 0.8, 0.3]),
        ];
        let tally = tally_document(&d, &predictions, &taxonomy, &config).unwrap();
        assert_eq!(
            tally.overall,
            Counts { true_positive: 1, false_positive: 1, false_negative: 0 }
        );
        assert_eq!(tally.gold_triples, 1);
        assert_eq!(tally.predicted_triples, 2);
        assert!((tally.overall.precision() - 0.5).abs() < 1e-12);
        assert!((tally.overall.recall() - 1.0).abs() < 1e-12);
        assert!((tally.overall.f1() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn missed_gold_counts_even_without_a_prediction_row() {
        let d = doc();
        let tally =
            tally_document(&d, &[], &Taxonomy::default(), &EvalConfig::default()).unwrap();
        assert_eq!(
            tally.overall,
            Counts { true_positive: 0, false_positive: 0, false_negative: 1 }
        );
        assert_eq!(tally.overall.precision(), 0.0);
        assert_eq!(tally.overall.recall(), 0.0);
        assert_eq!(tally.overall.f1(), 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        let d = doc();
        let config = EvalConfig::default();
        let predictions = vec![prediction("e1", "e2", vec![0.5, 0.0, 0.0])];
        let tally = tally_document(&d, &predictions, &Taxonomy::default(), &config).unwrap();
        assert_eq!(tally.predicted_triples, 0, "probability equal to the threshold is not a hit");
    }

    #[test]
    fn duplicate_self_and_unknown_pairs_are_rejected() {
        let d = doc();
        let taxonomy = Taxonomy::default();
        let config = EvalConfig::default();
        let dup = vec![
            prediction("e1", "e2", vec![0.9, 0.0, 0.0]),
            prediction("e1", "e2", vec![0.1, 0.0, 0.0]),
        ];
        assert!(matches!(
            tally_document(&d, &dup, &taxonomy, &config),
            Err(EvalError::DuplicatePair { .. })
        ));
        let own = vec![prediction("e1", "e1", vec![0.9, 0.0, 0.0])];
        assert!(matches!(
            tally_document(&d, &own, &taxonomy, &config),
            Err(EvalError::SelfPair { .. })
        ));
        let ghost = vec![prediction("e1", "zz", vec![0.9, 0.0, 0.0])];
        assert!(matches!(
            tally_document(&d, &ghost, &taxonomy, &config),
            Err(EvalError::UnknownEvent { .. })
        ));
    }

    #[test]
    fn distances_fall_into_the_right_buckets() {
        let d = doc();
        // e1 span [1,2) in sentence 0, e2 span [9,10) flat: 7 tokens apart.
        let config = EvalConfig { bucket_edges: vec![0, 5, 9], ..Default::default() };
        let predictions = vec![prediction("e1", "e2", vec![0.9, 0.0, 0.0])];
        let tally = tally_document(&d, &predictions, &Taxonomy::default(), &config).unwrap();
        assert_eq!(tally.buckets[0], Counts::default());
        assert_eq!(
            tally.buckets[1],
            Counts { true_positive: 1, false_positive: 0, false_negative: 0 }
        );
        assert_eq!(tally.buckets[2], Counts::default());
        let sent = EvalConfig {
            bucket_edges: vec![0, 1, 2],
            unit: DistanceUnit::Sentences,
            ..Default::default()
        };
        let tally = tally_document(&d, &predictions, &Taxonomy::default(), &sent).unwrap();
        assert_eq!(tally.buckets[2].true_positive, 1, "two sentences apart");
    }

    #[test]
    fn event_presence_reflects_truncation() {
        let d = doc();
        let models = Models::init(&ModelConfig::default(), Taxonomy::default(), &[&d], 0, 1);
        // Budget 7 cuts sentence 2, so e2 is invisible.
        let contexts = vec![build_document_context(&d, &models.encoder.vocab, Some(7))];
        let comp = forward_document(
            &models.encoder,
            &models.classifier,
            &d,
            &contexts,
            &[SourceTag::Document],
        )
        .unwrap();
        let gold: BTreeSet<(usize, usize)> = [(0, 1)].into();
        assert_eq!(event_presence(&comp, Some(&gold)), (1, 2));
        assert_eq!(event_presence(&comp, None), (2, 4));
    }

    #[test]
    fn all_variants_report_and_render() {
        let d = doc();
        let models = Models::init(&ModelConfig::default(), Taxonomy::default(), &[&d], 0, 1);
        let report = evaluate_all(
            &models,
            &[&d],
            &PipelineConfig::default(),
            &EvalConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(report.variants.len(), StrategyVariant::ALL.len());
        let again = evaluate_all(
            &models,
            &[&d],
            &PipelineConfig::default(),
            &EvalConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(report, again, "evaluation is deterministic");
        let table = render_table(&report);
        for variant in StrategyVariant::ALL {
            assert!(table.contains(variant.name()), "table lists {variant}");
        }
        assert!(table.contains("R[200,+)"));
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
