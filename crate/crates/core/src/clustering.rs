//! Sentence features and per-document k-means clustering.
//!
//! Each document is clustered on its own: sentences become bag-of-words
//! feature vectors (tf-idf over the training split, a trigger-density
//! component, and optionally external embeddings), and Lloyd's algorithm
//! groups them into `k` intra-clusters. Pairwise unions of intra-clusters
//! form inter-clusters, which are the contexts that can bridge sentence
//! groups for long-range event pairs.
//!
//! Initialization is seeded but keyed on feature *content*, so permuting the
//! input order permutes the labels without changing the grouping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{content_unit, f64_bytes};
use crate::corpus::Document;

/// A sentence feature vector. All components are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Squared Euclidean distance between two equal-length vectors.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Weights for the feature blocks; a zero weight drops the block's signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureWeights {
    pub tfidf: f64,
    pub trigger: f64,
    pub external: f64,
    /// L2-normalize the final vector (zero vectors stay zero).
    pub normalize: bool,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights { tfidf: 1.0, trigger: 1.0, external: 1.0, normalize: true }
    }
}

/// Document frequencies computed over the training split only, so feature
/// extraction never peeks at evaluation documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfStats {
    vocab: BTreeMap<String, usize>,
    doc_freq: Vec<usize>,
    num_docs: usize,
}

impl IdfStats {
    pub fn from_documents<'a, I: IntoIterator<Item = &'a Document>>(docs: I) -> Self {
        let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
        let mut doc_freq: Vec<usize> = Vec::new();
        let mut num_docs = 0;
        for doc in docs {
            num_docs += 1;
            let mut seen = std::collections::BTreeSet::new();
            for sentence in &doc.sentences {
                for token in &sentence.tokens {
                    seen.insert(token.as_str());
                }
            }
            for token in seen {
                let next = vocab.len();
                let idx = *vocab.entry(token.to_string()).or_insert(next);
                if idx == doc_freq.len() {
                    doc_freq.push(0);
                }
                doc_freq[idx] += 1;
            }
        }
        IdfStats { vocab, doc_freq, num_docs }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied()
    }

    /// ln(N / df). Unseen tokens are simply absent from the vector.
    pub fn idf(&self, index: usize) -> f64 {
        (self.num_docs as f64 / self.doc_freq[index] as f64).ln()
    }
}

/// External sentence embeddings loaded from JSONL lines
/// `{"doc": "d0", "sent": 3, "vec": [..]}`. All vectors share one dimension.
#[derive(Debug, Clone, Default)]
pub struct ExternalEmbeddings {
    dim: usize,
    by_key: BTreeMap<(String, usize), Vec<f64>>,
}

impl ExternalEmbeddings {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, doc: &str, sent: usize) -> Option<&[f64]> {
        self.by_key.get(&(doc.to_string(), sent)).map(Vec::as_slice)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ClusteringError> {
        #[derive(Deserialize)]
        struct Line {
            doc: String,
            sent: usize,
            vec: Vec<f64>,
        }
        let text = std::fs::read_to_string(path)?;
        let mut out = ExternalEmbeddings::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with("{\"_meta\"") {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| {
                ClusteringError::BadEmbeddingLine { line: idx + 1, message: e.to_string() }
            })?;
            if parsed.vec.iter().any(|v| !v.is_finite()) {
                return Err(ClusteringError::BadEmbeddingLine {
                    line: idx + 1,
                    message: "non-finite component".into(),
                });
            }
            if out.by_key.is_empty() {
                out.dim = parsed.vec.len();
            } else if parsed.vec.len() != out.dim {
                return Err(ClusteringError::EmbeddingDimMismatch {
                    expected: out.dim,
                    found: parsed.vec.len(),
                    line: idx + 1,
                });
            }
            out.by_key.insert((parsed.doc, parsed.sent), parsed.vec);
        }
        Ok(out)
    }
}

/// Build one feature vector per sentence of `doc`.
///
/// Layout: `[tfidf over training vocab | trigger density | external block]`,
/// each block scaled by its weight, then optionally L2-normalized. Sentences
/// missing from `external` get zeros in that block.
pub fn sentence_features(
    doc: &Document,
    idf: &IdfStats,
    weights: &FeatureWeights,
    external: Option<&ExternalEmbeddings>,
) -> Result<Vec<FeatureVector>, ClusteringError> {
    let vocab = idf.vocab_size();
    let ext_dim = external.map_or(0, |e| e.dim());
    let dim = vocab + 1 + ext_dim;
    let mut out = Vec::with_capacity(doc.sentences.len());
    for sentence in &doc.sentences {
        let mut v = vec![0.0; dim];
        for token in &sentence.tokens {
            if let Some(idx) = idf.token_index(token) {
                v[idx] += 1.0; // raw term frequency
            }
        }
        for idx in 0..vocab {
            if v[idx] != 0.0 {
                v[idx] *= idf.idf(idx) * weights.tfidf;
            }
        }
        // Trigger density: trigger tokens in this sentence / sentence length.
        let triggers: usize = doc
            .events
            .iter()
            .flat_map(|e| &e.mentions)
            .filter(|m| m.sentence == sentence.index)
            .map(|m| m.end - m.start)
            .sum();
        if !sentence.is_empty() {
            v[vocab] = weights.trigger * triggers as f64 / sentence.len() as f64;
        }
        if let Some(ext) = external {
            if let Some(e) = ext.get(&doc.id, sentence.index) {
                for (slot, value) in v[vocab + 1..].iter_mut().zip(e) {
                    *slot = weights.external * value;
                }
            }
        }
        if weights.normalize {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut v {
                    *x /= norm;
                }
            }
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ClusteringError::NonFiniteFeature { sentence: sentence.index });
        }
        out.push(FeatureVector(v));
    }
    Ok(out)
}

/// Center initialization strategy. Both draw from content-keyed randomness:
/// identical configs give identical groupings regardless of input order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Spread seeding: subsequent centers drawn proportionally to squared
    /// distance from the nearest chosen center.
    Spread,
    /// Uniform seeding over the input points.
    Random,
}

/// K-means configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop when the objective improves by less than this amount.
    pub tol: f64,
    pub seed: u64,
    pub init: InitMethod,
    pub weights: FeatureWeights,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            k: 3,
            max_iter: 100,
            tol: 1e-9,
            seed: 0,
            init: InitMethod::Spread,
            weights: FeatureWeights::default(),
        }
    }
}

/// Result of clustering one document's sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster label per sentence, in `0..effective_k`.
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Objective value (sum of squared distances to assigned centers) after
    /// each assignment step. Non-increasing.
    pub objective_trace: Vec<f64>,
    /// `min(k, points)`; smaller than `k` when there are too few sentences.
    pub effective_k: usize,
}

/// Lloyd's algorithm with content-keyed initialization.
pub fn kmeans(
    features: &[FeatureVector],
    config: &ClusteringConfig,
) -> Result<ClusterAssignment, ClusteringError> {
    if features.is_empty() {
        return Err(ClusteringError::NoPoints);
    }
    if config.k == 0 {
        return Err(ClusteringError::BadK);
    }
    let dim = features[0].dim();
    if features.iter().any(|f| f.dim() != dim) {
        return Err(ClusteringError::DimMismatch);
    }
    let n = features.len();
    let k = config.k.min(n);
    if k < config.k {
        log::warn!("reducing k from {} to {k}: only {n} points", config.k);
    }
    // Content keys make every tie-break and random draw depend on the
    // vectors themselves, not their positions.
    let keys: Vec<f64> = features
        .iter()
        .map(|f| content_unit(config.seed, &f64_bytes(f.as_slice())))
        .collect();
    let mut centers = initial_centers(features, &keys, k, config.init);

    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..config.max_iter {
        // Assignment step; ties go to the lowest center index.
        let mut objective = 0.0;
        for (i, f) in features.iter().enumerate() {
            let mut best = (0usize, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = squared_distance(f.as_slice(), center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            labels[i] = best.0;
            objective += best.1;
        }
        trace.push(objective);
        if trace.len() >= 2 && trace[trace.len() - 2] - objective < config.tol {
            break;
        }
        // Update step: centers move to the mean of their members; an empty
        // cluster re-seeds from the point farthest from its current center.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, f) in features.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i]].iter_mut().zip(f.as_slice()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in &mut sums[c] {
                    *s /= counts[c] as f64;
                }
                centers[c] = std::mem::take(&mut sums[c]);
            } else {
                let far = farthest_point(features, &centers, &labels, &keys);
                centers[c] = features[far].as_slice().to_vec();
            }
        }
    }
    Ok(ClusterAssignment { labels, centers, objective_trace: trace, effective_k: k })
}

/// Index of the point farthest from its assigned center; ties break on the
/// content key so the choice is order-independent.
fn farthest_point(
    features: &[FeatureVector],
    centers: &[Vec<f64>],
    labels: &[usize],
    keys: &[f64],
) -> usize {
    let mut best = 0usize;
    let mut best_rank = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, f) in features.iter().enumerate() {
        let d = squared_distance(f.as_slice(), &centers[labels[i]]);
        if (d, keys[i]) > best_rank {
            best_rank = (d, keys[i]);
            best = i;
        }
    }
    best
}

fn initial_centers(
    features: &[FeatureVector],
    keys: &[f64],
    k: usize,
    init: InitMethod,
) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    match init {
        InitMethod::Random => {
            // The k smallest content keys win; equal keys mean equal vectors.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
            chosen.extend(order.into_iter().take(k));
        }
        InitMethod::Spread => {
            // Weighted sampling without replacement via exponential races:
            // the winner maximizes u^(1/w) for weight w. The first center
            // uses uniform weights; later ones use squared distance to the
            // nearest chosen center.
            for round in 0..k {
                let mut best: Option<(f64, usize)> = None;
                for i in 0..n {
                    if chosen.contains(&i) {
                        continue;
                    }
                    let w = if round == 0 {
                        1.0
                    } else {
                        chosen
                            .iter()
                            .map(|&c| squared_distance(features[i].as_slice(), features[c].as_slice()))
                            .fold(f64::INFINITY, f64::min)
                    };
                    if w <= 0.0 {
                        continue; // duplicate of a chosen center
                    }
                    let rank = keys[i].powf(1.0 / w);
                    if best.map_or(true, |(r, _)| rank > r) {
                        best = Some((rank, i));
                    }
                }
                match best {
                    Some((_, i)) => chosen.push(i),
                    None => {
                        // All remaining points duplicate chosen centers; fall
                        // back to the smallest unchosen content key.
                        let mut rest: Vec<usize> =
                            (0..n).filter(|i| !chosen.contains(i)).collect();
                        rest.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
                        if let Some(&i) = rest.first() {
                            chosen.push(i);
                        }
                    }
                }
            }
        }
    }
    chosen.iter().map(|&i| features[i].as_slice().to_vec()).collect()
}

/// A group of sentence indices from one k-means cluster, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntraCluster {
    pub id: usize,
    pub sentences: Vec<usize>,
}

/// The union of two intra-clusters, still in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterCluster {
    /// The two intra-cluster ids, ascending.
    pub source: (usize, usize),
    pub sentences: Vec<usize>,
}

/// Reference to a cluster within a [`ClusterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClusterRef {
    Intra(usize),
    Inter(usize, usize),
}

impl std::fmt::Display for ClusterRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClusterRef::Intra(id) => write!(f, "intra:{id}"),
            ClusterRef::Inter(a, b) => write!(f, "inter:{a}+{b}"),
        }
    }
}

/// All intra- and inter-clusters of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub intra: Vec<IntraCluster>,
    pub inter: Vec<InterCluster>,
}

impl ClusterSet {
    /// Group sentences by k-means label. Intra ids are the original labels;
    /// empty labels are dropped. Inter-clusters are all pairs of surviving
    /// intra ids, ascending.
    pub fn from_assignment(assignment: &ClusterAssignment) -> Self {
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (sentence, &label) in assignment.labels.iter().enumerate() {
            members.entry(label).or_default().push(sentence);
        }
        let intra: Vec<IntraCluster> = members
            .into_iter()
            .map(|(id, sentences)| IntraCluster { id, sentences })
            .collect();
        let mut inter = Vec::new();
        for i in 0..intra.len() {
            for j in i + 1..intra.len() {
                let mut sentences: Vec<usize> = intra[i]
                    .sentences
                    .iter()
                    .chain(&intra[j].sentences)
                    .copied()
                    .collect();
                sentences.sort_unstable();
                inter.push(InterCluster { source: (intra[i].id, intra[j].id), sentences });
            }
        }
        ClusterSet { intra, inter }
    }

    /// The whole document as one intra-cluster (no inter-clusters).
    pub fn whole_document(doc: &Document) -> Self {
        ClusterSet {
            intra: vec![IntraCluster { id: 0, sentences: (0..doc.sentences.len()).collect() }],
            inter: Vec::new(),
        }
    }

    /// `k` contiguous, evenly sized chunks as intra-clusters (no inters).
    /// A position-based baseline that ignores content.
    pub fn even_chunks(doc: &Document, k: usize) -> Self {
        let n = doc.sentences.len();
        let k = k.max(1).min(n.max(1));
        let base = n / k;
        let extra = n % k;
        let mut intra = Vec::with_capacity(k);
        let mut next = 0usize;
        for id in 0..k {
            let size = base + usize::from(id < extra);
            intra.push(IntraCluster { id, sentences: (next..next + size).collect() });
            next += size;
        }
        ClusterSet { intra, inter: Vec::new() }
    }

    pub fn sentences_of(&self, cref: ClusterRef) -> Option<&[usize]> {
        match cref {
            ClusterRef::Intra(id) => self
                .intra
                .iter()
                .find(|c| c.id == id)
                .map(|c| c.sentences.as_slice()),
            ClusterRef::Inter(a, b) => self
                .inter
                .iter()
                .find(|c| c.source == (a, b))
                .map(|c| c.sentences.as_slice()),
        }
    }

    /// Clusters whose sentences contain at least one mention of *each* event,
    /// inter-clusters first (ascending source pair), then intra (ascending id).
    pub fn clusters_containing_pair(
        &self,
        doc: &Document,
        head_idx: usize,
        tail_idx: usize,
    ) -> Vec<ClusterRef> {
        let sentences_of_event = |idx: usize| -> Vec<usize> {
            doc.events[idx].mentions.iter().map(|m| m.sentence).collect()
        };
        let head_sents = sentences_of_event(head_idx);
        let tail_sents = sentences_of_event(tail_idx);
        let covers = |members: &[usize]| {
            head_sents.iter().any(|s| members.contains(s))
                && tail_sents.iter().any(|s| members.contains(s))
        };
        let mut out = Vec::new();
        for c in &self.inter {
            if covers(&c.sentences) {
                out.push(ClusterRef::Inter(c.source.0, c.source.1));
            }
        }
        for c in &self.intra {
            if covers(&c.sentences) {
                out.push(ClusterRef::Intra(c.id));
            }
        }
        out
    }
}

/// Clustering errors.
#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot cluster zero points")]
    NoPoints,
    #[error("k must be positive")]
    BadK,
    #[error("feature vectors have mismatched dimensions")]
    DimMismatch,
    #[error("non-finite feature value in sentence {sentence}")]
    NonFiniteFeature { sentence: usize },
    #[error("embeddings line {line}: {message}")]
    BadEmbeddingLine { line: usize, message: String },
    #[error("embeddings line {line}: dimension {found} != expected {expected}")]
    EmbeddingDimMismatch { expected: usize, found: usize, line: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate, SynthConfig};
    use crate::corpus::{Event, Mention, Sentence};

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector(values.to_vec())
    }

    /// Minimum k-means objective over every assignment of points to `k`
    /// groups, with centers at group means. Exponential; oracle only.
    fn brute_force_objective(points: &[FeatureVector], k: usize) -> f64 {
        let n = points.len();
        let dim = points[0].dim();
        let mut best = f64::INFINITY;
        let mut assign = vec![0usize; n];
        loop {
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (i, p) in points.iter().enumerate() {
                counts[assign[i]] += 1;
                for (s, x) in sums[assign[i]].iter_mut().zip(p.as_slice()) {
                    *s += x;
                }
            }
            if counts.iter().all(|&c| c > 0) {
                let mut j = 0.0;
                for (i, p) in points.iter().enumerate() {
                    let mean: Vec<f64> =
                        sums[assign[i]].iter().map(|s| s / counts[assign[i]] as f64).collect();
                    j += squared_distance(p.as_slice(), &mean);
                }
                best = best.min(j);
            }
            // Next assignment in base-k counting order.
            let mut pos = 0;
            loop {
                if pos == n {
                    return best;
                }
                assign[pos] += 1;
                if assign[pos] < k {
                    break;
                }
                assign[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn separated_line_points_split_at_the_gap() {
        let points = vec![fv(&[0.0]), fv(&[0.1]), fv(&[10.0]), fv(&[10.1])];
        let config = ClusteringConfig { k: 2, ..ClusteringConfig::default() };
        let result = kmeans(&points, &config).unwrap();
        assert_eq!(result.labels[0], result.labels[1]);
        assert_eq!(result.labels[2], result.labels[3]);
        assert_ne!(result.labels[0], result.labels[2]);
        // The achieved objective matches exhaustive enumeration: 2 * 0.05^2 * 2.
        let oracle = brute_force_objective(&points, 2);
        let achieved = *result.objective_trace.last().unwrap();
        assert!((achieved - oracle).abs() < 1e-12, "achieved {achieved}, oracle {oracle}");
        assert!((oracle - 0.01).abs() < 1e-12);
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let corpus = generate(&SynthConfig { num_docs: 4, seed: 5, ..SynthConfig::default() })
            .unwrap();
        let idf = IdfStats::from_documents(corpus.documents.iter());
        for doc in &corpus.documents {
            let features =
                sentence_features(doc, &idf, &FeatureWeights::default(), None).unwrap();
            let result = kmeans(&features, &ClusteringConfig::default()).unwrap();
            for w in result.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "objective increased: {:?}", result.objective_trace);
            }
        }
    }

    #[test]
    fn permuting_points_permutes_labels_consistently() {
        // Shuffle the input; the grouping (which points share a cluster)
        // must be identical even though label ids may differ.
        let corpus = generate(&SynthConfig { num_docs: 2, seed: 9, ..SynthConfig::default() })
            .unwrap();
        let idf = IdfStats::from_documents(corpus.documents.iter());
        let doc = &corpus.documents[0];
        let features = sentence_features(doc, &idf, &FeatureWeights::default(), None).unwrap();
        let config = ClusteringConfig::default();
        let base = kmeans(&features, &config).unwrap();

        let perm: Vec<usize> = {
            let n = features.len();
            (0..n).map(|i| (i * 7 + 3) % n).collect() // a fixed permutation
        };
        assert_eq!(
            perm.iter().copied().collect::<std::collections::BTreeSet<_>>().len(),
            features.len(),
            "test permutation must be a bijection"
        );
        let shuffled: Vec<FeatureVector> =
            perm.iter().map(|&i| features[i].clone()).collect();
        let moved = kmeans(&shuffled, &config).unwrap();
        for a in 0..features.len() {
            for b in 0..features.len() {
                let together = base.labels[perm[a]] == base.labels[perm[b]];
                let together_moved = moved.labels[a] == moved.labels[b];
                assert_eq!(together, together_moved, "grouping changed under permutation");
            }
        }
    }

    #[test]
    fn k_larger_than_points_is_reduced() {
        let points = vec![fv(&[0.0]), fv(&[5.0])];
        let config = ClusteringConfig { k: 10, ..ClusteringConfig::default() };
        let result = kmeans(&points, &config).unwrap();
        assert_eq!(result.effective_k, 2);
        assert_eq!(result.centers.len(), 2);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(matches!(kmeans(&[], &ClusteringConfig::default()), Err(ClusteringError::NoPoints)));
        let config = ClusteringConfig { k: 0, ..ClusteringConfig::default() };
        assert!(matches!(kmeans(&[fv(&[1.0])], &config), Err(ClusteringError::BadK)));
        let config = ClusteringConfig::default();
        assert!(matches!(
            kmeans(&[fv(&[1.0]), fv(&[1.0, 2.0])], &config),
            Err(ClusteringError::DimMismatch)
        ));
    }

    #[test]
    fn random_init_also_converges() {
        let points = vec![fv(&[0.0]), fv(&[0.1]), fv(&[10.0]), fv(&[10.1])];
        let config = ClusteringConfig {
            k: 2,
            init: InitMethod::Random,
            ..ClusteringConfig::default()
        };
        let result = kmeans(&points, &config).unwrap();
        assert_eq!(result.labels[0], result.labels[1]);
        assert_ne!(result.labels[0], result.labels[2]);
    }

    #[test]
    fn idf_counts_documents_not_occurrences() {
        let corpus = generate(&SynthConfig { num_docs: 10, seed: 2, ..SynthConfig::default() })
            .unwrap();
        let idf = IdfStats::from_documents(corpus.documents.iter());
        assert_eq!(idf.num_docs(), 10);
        // A token appearing in every document has idf 0.
        let mut everywhere = None;
        'outer: for token in corpus.documents[0].sentences[0].tokens.iter() {
            if corpus.documents.iter().all(|d| {
                d.sentences.iter().any(|s| s.tokens.contains(token))
            }) {
                everywhere = Some(token.clone());
                break 'outer;
            }
        }
        if let Some(token) = everywhere {
            let idx = idf.token_index(&token).unwrap();
            assert_eq!(idf.idf(idx), 0.0);
        }
        // Every idf is in [0, ln N].
        for idx in 0..idf.vocab_size() {
            let value = idf.idf(idx);
            assert!((0.0..=(10f64).ln() + 1e-12).contains(&value));
        }
    }

    #[test]
    fn features_have_expected_layout() {
        let corpus = generate(&SynthConfig { num_docs: 3, seed: 4, ..SynthConfig::default() })
            .unwrap();
        let idf = IdfStats::from_documents(corpus.documents.iter());
        let doc = &corpus.documents[0];
        let weights = FeatureWeights { normalize: false, ..FeatureWeights::default() };
        let features = sentence_features(doc, &idf, &weights, None).unwrap();
        assert_eq!(features.len(), doc.sentences.len());
        for f in &features {
            assert_eq!(f.dim(), idf.vocab_size() + 1);
        }
        // Trigger component: sentences hosting a mention have 1/len there.
        let trig_slot = idf.vocab_size();
        let eventful = doc.events[0].mentions[0].sentence;
        let expect = 1.0 / doc.sentences[eventful].len() as f64;
        assert!((features[eventful].as_slice()[trig_slot] - expect).abs() < 1e-12);
        // Normalized variant has unit norm.
        let normed =
            sentence_features(doc, &idf, &FeatureWeights::default(), None).unwrap();
        for f in &normed {
            let norm = f.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9 || norm == 0.0);
        }
    }

    #[test]
    fn cluster_set_partitions_and_pairs() {
        let assignment = ClusterAssignment {
            labels: vec![0, 0, 1, 2, 1, 0],
            centers: vec![vec![0.0]; 3],
            objective_trace: vec![0.0],
            effective_k: 3,
        };
        let cs = ClusterSet::from_assignment(&assignment);
        assert_eq!(cs.intra.len(), 3);
        assert_eq!(cs.inter.len(), 3); // C(3,2)
        // Intra clusters partition the sentences.
        let mut all: Vec<usize> = cs.intra.iter().flat_map(|c| c.sentences.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4, 5]);
        // Inter = ordered union preserving document order.
        let inter01 = cs.sentences_of(ClusterRef::Inter(0, 1)).unwrap();
        assert_eq!(inter01, &[0, 1, 2, 4, 5]);
    }

    #[test]
    fn pair_lookup_prefers_inter_then_intra() {
        let doc = Document {
            id: "d".into(),
            sentences: (0..4)
                .map(|i| Sentence { index: i, tokens: vec!["x".into()] })
                .collect(),
            events: vec![
                Event { id: "a".into(), mentions: vec![Mention { sentence: 0, start: 0, end: 1 }] },
                Event { id: "b".into(), mentions: vec![Mention { sentence: 3, start: 0, end: 1 }] },
                Event { id: "c".into(), mentions: vec![Mention { sentence: 1, start: 0, end: 1 }] },
            ],
            relations: vec![],
        };
        let assignment = ClusterAssignment {
            labels: vec![0, 0, 1, 1],
            centers: vec![vec![0.0]; 2],
            objective_trace: vec![0.0],
            effective_k: 2,
        };
        let cs = ClusterSet::from_assignment(&assignment);
        // a (sent 0) and b (sent 3) sit in different intras: only the inter covers.
        assert_eq!(
            cs.clusters_containing_pair(&doc, 0, 1),
            vec![ClusterRef::Inter(0, 1)]
        );
        // a and c share intra 0; the inter also covers, and comes first.
        assert_eq!(
            cs.clusters_containing_pair(&doc, 0, 2),
            vec![ClusterRef::Inter(0, 1), ClusterRef::Intra(0)]
        );
    }

    #[test]
    fn whole_document_and_chunk_baselines() {
        let corpus = generate(&SynthConfig { num_docs: 1, seed: 1, ..SynthConfig::default() })
            .unwrap();
        let doc = &corpus.documents[0];
        let one = ClusterSet::whole_document(doc);
        assert_eq!(one.intra.len(), 1);
        assert!(one.inter.is_empty());
        assert_eq!(one.intra[0].sentences.len(), doc.sentences.len());

        let chunks = ClusterSet::even_chunks(doc, 3);
        assert_eq!(chunks.intra.len(), 3);
        let sizes: Vec<usize> = chunks.intra.iter().map(|c| c.sentences.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let total: usize = sizes.iter().sum();
        assert_eq!(total, doc.sentences.len());
    }

    #[test]
    fn external_embeddings_validate_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        std::fs::write(
            &path,
            "{\"doc\":\"d0\",\"sent\":0,\"vec\":[1.0,2.0]}\n{\"doc\":\"d0\",\"sent\":1,\"vec\":[3.0]}\n",
        )
        .unwrap();
        assert!(matches!(
            ExternalEmbeddings::load(&path),
            Err(ClusteringError::EmbeddingDimMismatch { expected: 2, found: 1, line: 2 })
        ));
        std::fs::write(&path, "{\"doc\":\"d0\",\"sent\":0,\"vec\":[1.0,2.0]}\n").unwrap();
        let emb = ExternalEmbeddings::load(&path).unwrap();
        assert_eq!(emb.dim(), 2);
        assert_eq!(emb.get("d0", 0), Some(&[1.0, 2.0][..]));
        assert_eq!(emb.get("d0", 1), None);
    }
}
