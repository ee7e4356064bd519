//! Training rewards: prediction accuracy and summary/event-chain quality.
//!
//! Two signals drive the summarization policy:
//!
//! * **Prediction reward** — per event pair, full credit when the predicted
//!   type set equals the gold set (including the "both empty" case), zero
//!   otherwise; averaged over the pairs in scope. An optional per-type mode
//!   grants partial credit per correctly decided type.
//! * **Coverage reward** — how much of each intra-cluster a summary retains,
//!   measured by longest-common-subsequence overlap with the cluster text
//!   plus a bonus per retained trigger token. The per-cluster retained
//!   counts are normalized both by document length ("P") and by total
//!   summary length ("R"), then combined as `(1 + s^2) * R * P / (R + s^2 * P)`,
//!   so `sigma` shifts emphasis between the two.
//!
//! The combined reward is `alpha * prediction + beta * coverage`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterRef, IntraCluster};
use crate::corpus::Document;
use crate::summarizer::ClusterSummary;

/// Reward weighting and coverage options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight of the prediction reward.
    pub alpha: f64,
    /// Weight of the coverage reward.
    pub beta: f64,
    /// Emphasis parameter of the coverage combination.
    pub sigma: f64,
    /// Bonus per retained trigger token occurrence.
    pub eta_weight: f64,
    /// Match candidates against the cluster text (true) or the cluster
    /// against the summary text (false).
    pub cluster_as_reference: bool,
    /// Per-type partial credit instead of exact-set credit.
    pub per_type_credit: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 1.0,
            beta: 0.1,
            sigma: 1.0,
            eta_weight: 1.0,
            cluster_as_reference: true,
            per_type_credit: false,
        }
    }
}

/// Length of the longest common subsequence of two token slices.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    suffix_table(a, b)[0][0]
}

/// `L[i][j]` = LCS length of `a[i..]` and `b[j..]`.
fn suffix_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    table
}

/// Positions in `a` matched by one canonical maximum-length common
/// subsequence of `a` and `b`: each `a` position pairs with the earliest
/// usable `b` position. Deterministic for fixed inputs.
pub fn lcs_positions(a: &[String], b: &[String]) -> Vec<usize> {
    let table = suffix_table(a, b);
    let mut out = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        if a[i] == b[j] && table[i][j] == table[i + 1][j + 1] + 1 {
            out.push(i);
            i += 1;
            j += 1;
        } else if table[i][j + 1] == table[i][j] {
            j += 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Number of distinct `reference` positions matched by any candidate's LCS
/// with the reference. Candidates may cover overlapping or disjoint parts;
/// the union counts each reference position once.
pub fn lcs_union(reference: &[String], candidates: &[&[String]]) -> usize {
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    for candidate in candidates {
        covered.extend(lcs_positions(reference, candidate));
    }
    covered.len()
}

/// Coverage reward over a document's intra-cluster summaries.
///
/// `summaries` must align one-to-one with `clusters` (same order, matching
/// sources). Returns 0 when nothing was retained.
pub fn coverage_reward(
    summaries: &[ClusterSummary],
    clusters: &[IntraCluster],
    doc: &Document,
    config: &RewardConfig,
) -> Result<f64, RewardError> {
    if summaries.len() != clusters.len() {
        return Err(RewardError::Misaligned {
            summaries: summaries.len(),
            clusters: clusters.len(),
        });
    }
    let triggers = doc.trigger_token_set();
    let mut retained_total = 0.0f64;
    let mut summary_tokens_total = 0usize;
    for (summary, cluster) in summaries.iter().zip(clusters) {
        if summary.source != ClusterRef::Intra(cluster.id) {
            return Err(RewardError::SourceMismatch {
                expected: ClusterRef::Intra(cluster.id),
                found: summary.source,
            });
        }
        let cluster_tokens: Vec<String> = cluster
            .sentences
            .iter()
            .flat_map(|&s| doc.sentences[s].tokens.iter().cloned())
            .collect();
        // Candidate units: the summary's sentences for extractive output,
        // the whole token list for abstractive output.
        let sentence_tokens: Vec<Vec<String>> = if summary.sentences.is_empty() {
            vec![summary.tokens.clone()]
        } else {
            summary
                .sentences
                .iter()
                .map(|&s| doc.sentences[s].tokens.clone())
                .collect()
        };
        let candidate_refs: Vec<&[String]> =
            sentence_tokens.iter().map(Vec::as_slice).collect();
        let matched = if config.cluster_as_reference {
            lcs_union(&cluster_tokens, &candidate_refs)
        } else {
            let cluster_sents: Vec<&[String]> = cluster
                .sentences
                .iter()
                .map(|&s| doc.sentences[s].tokens.as_slice())
                .collect();
            lcs_union(&summary.tokens, &cluster_sents)
        };
        let bonus: f64 = summary
            .tokens
            .iter()
            .filter(|t| triggers.contains(&t.to_ascii_lowercase()))
            .count() as f64
            * config.eta_weight;
        retained_total += matched as f64 + bonus;
        summary_tokens_total += summary.token_count();
    }
    if retained_total <= 0.0 || summary_tokens_total == 0 {
        return Ok(0.0);
    }
    let doc_tokens = doc.token_count();
    if doc_tokens == 0 {
        return Ok(0.0);
    }
    let p = retained_total / doc_tokens as f64;
    let r = retained_total / summary_tokens_total as f64;
    let s2 = config.sigma * config.sigma;
    let denom = r + s2 * p;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + s2) * r * p / denom)
}

/// Prediction reward over a scope of ordered event pairs.
///
/// `predicted` and `gold` map pair -> positive type indices; absent entries
/// in `gold` mean "no relation". Every scoped pair must be present in
/// `predicted` (an explicitly empty set counts as a NONE prediction).
/// `num_types` is only used by the per-type credit mode.
pub fn prediction_reward(
    predicted: &BTreeMap<(usize, usize), BTreeSet<usize>>,
    gold: &BTreeMap<(usize, usize), BTreeSet<usize>>,
    scope: &[(usize, usize)],
    num_types: usize,
    config: &RewardConfig,
) -> Result<f64, RewardError> {
    if scope.is_empty() {
        return Err(RewardError::EmptyScope);
    }
    static EMPTY: BTreeSet<usize> = BTreeSet::new();
    let mut total = 0.0f64;
    for pair in scope {
        let p = predicted
            .get(pair)
            .ok_or(RewardError::MissingPrediction { pair: *pair })?;
        let g = gold.get(pair).unwrap_or(&EMPTY);
        total += if config.per_type_credit {
            if num_types == 0 {
                return Err(RewardError::NoTypes);
            }
            (0..num_types)
                .filter(|t| p.contains(t) == g.contains(t))
                .count() as f64
                / num_types as f64
        } else {
            f64::from(u8::from(p == g))
        };
    }
    Ok(total / scope.len() as f64)
}

/// `alpha * prediction + beta * coverage`.
pub fn combined_reward(prediction: f64, coverage: f64, config: &RewardConfig) -> f64 {
    config.alpha * prediction + config.beta * coverage
}

/// Reward computation errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("summary list length {summaries} does not match cluster list length {clusters}")]
    Misaligned { summaries: usize, clusters: usize },
    #[error("summary source {found} does not match cluster {expected}")]
    SourceMismatch { expected: ClusterRef, found: ClusterRef },
    #[error("prediction reward over an empty pair scope")]
    EmptyScope,
    #[error("no prediction for scoped pair {pair:?}")]
    MissingPrediction { pair: (usize, usize) },
    #[error("per-type credit needs a non-empty taxonomy")]
    NoTypes,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Event, Mention, Sentence};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toks(text: &str) -> Vec<String> {
        text.split_whitespace().map(String::from).collect()
    }

    /// Exponential-time LCS for cross-checking: recurse over both slices.
    fn lcs_brute(a: &[String], b: &[String]) -> usize {
        if a.is_empty() || b.is_empty() {
            return 0;
        }
        if a[0] == b[0] {
            1 + lcs_brute(&a[1..], &b[1..])
        } else {
            lcs_brute(&a[1..], b).max(lcs_brute(a, &b[1..]))
        }
    }

    #[test]
    fn lcs_known_examples() {
        assert_eq!(lcs_length(&toks("A B C B D A B"), &toks("B D C A B A")), 4);
        assert_eq!(lcs_length(&toks("a b c"), &toks("a b c")), 3);
        assert_eq!(lcs_length(&toks("a b c"), &toks("x y z")), 0);
        assert_eq!(lcs_length(&toks("a"), &[]), 0);
    }

    #[test]
    fn lcs_matches_brute_force_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let alphabet = ["p", "q", "r"];
        for _ in 0..300 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
                let len = rng.gen_range(0..9);
                (0..len).map(|_| alphabet[rng.gen_range(0..3)].to_string()).collect()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            assert_eq!(lcs_length(&a, &b), lcs_brute(&a, &b), "a={a:?} b={b:?}");
        }
    }

    #[test]
    fn lcs_positions_form_a_valid_common_subsequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alphabet = ["x", "y", "z", "w"];
        for _ in 0..200 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
                let len = rng.gen_range(0..10);
                (0..len).map(|_| alphabet[rng.gen_range(0..4)].to_string()).collect()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let positions = lcs_positions(&a, &b);
            assert_eq!(positions.len(), lcs_length(&a, &b));
            assert!(positions.windows(2).all(|w| w[0] < w[1]), "not increasing");
            // The extracted tokens must embed into b as a subsequence.
            let mut bi = 0usize;
            for &pos in &positions {
                while bi < b.len() && b[bi] != a[pos] {
                    bi += 1;
                }
                assert!(bi < b.len(), "token {} not embeddable", a[pos]);
                bi += 1;
            }
        }
    }

    #[test]
    fn union_counts_each_reference_position_once() {
        let reference = toks("a b c d e f");
        let c1 = toks("a b c");
        let c2 = toks("c d e");
        // c1 covers {0,1,2}; c2 covers {2,3,4}; union has 5 positions.
        assert_eq!(lcs_union(&reference, &[&c1, &c2]), 5);
        // A candidate equal to the reference covers everything.
        assert_eq!(lcs_union(&reference, &[&reference]), 6);
        assert_eq!(lcs_union(&reference, &[]), 0);
    }

    #[test]
    fn union_bounds_hold() {
        let reference = toks("m n o p");
        let c1 = toks("p o n m"); // reversed; LCS length 1
        let c2 = toks("n p");
        let union = lcs_union(&reference, &[&c1, &c2]);
        assert!(union >= lcs_length(&reference, &c2));
        assert!(union <= reference.len());
    }

    /// 10-token document: one 6-token cluster sentence pair + 4 more tokens.
    fn coverage_doc() -> (Document, Vec<IntraCluster>) {
        let doc = Document {
            id: "c".into(),
            sentences: vec![
                Sentence { index: 0, tokens: toks("u v w") },
                Sentence { index: 1, tokens: toks("x y z") },
                Sentence { index: 2, tokens: toks("p q r s") },
            ],
            events: vec![],
            relations: vec![],
        };
        let clusters = vec![IntraCluster { id: 0, sentences: vec![0, 1] }];
        (doc, clusters)
    }

    fn identity_cluster_summary(doc: &Document, cluster: &IntraCluster) -> ClusterSummary {
        crate::summarizer::identity_summary(
            doc,
            ClusterRef::Intra(cluster.id),
            &cluster.sentences,
        )
    }

    #[test]
    fn coverage_of_perfect_summary_is_hand_checked() {
        // Cluster = summary = 6 tokens, document = 10 tokens, no triggers:
        // retained = 6, P = 0.6, R = 1, value = 2 * 0.6 / 1.6 = 0.75.
        let (doc, clusters) = coverage_doc();
        let summary = identity_cluster_summary(&doc, &clusters[0]);
        let value = coverage_reward(&[summary], &clusters, &doc, &RewardConfig::default()).unwrap();
        assert!((value - 0.75).abs() < 1e-12, "value {value}");
    }

    #[test]
    fn trigger_bonus_raises_coverage() {
        // Mark "v" and "y" as triggers with bonus 0.5 each:
        // retained = 6 + 2 * 0.5 = 7, P = 0.7, R = 7/6, value = 7/8.
        let (mut doc, clusters) = coverage_doc();
        doc.events = vec![
            Event { id: "e0".into(), mentions: vec![Mention { sentence: 0, start: 1, end: 2 }] },
            Event { id: "e1".into(), mentions: vec![Mention { sentence: 1, start: 1, end: 2 }] },
        ];
        let summary = identity_cluster_summary(&doc, &clusters[0]);
        let config = RewardConfig { eta_weight: 0.5, ..RewardConfig::default() };
        let value = coverage_reward(&[summary], &clusters, &doc, &config).unwrap();
        assert!((value - 0.875).abs() < 1e-12, "value {value}");
    }

    #[test]
    fn sigma_shifts_emphasis_toward_summary_side() {
        // With R > P, growing sigma must grow the combined value.
        let (doc, clusters) = coverage_doc();
        let summary = identity_cluster_summary(&doc, &clusters[0]);
        let at = |sigma: f64| {
            let config = RewardConfig { sigma, ..RewardConfig::default() };
            coverage_reward(std::slice::from_ref(&summary), &clusters, &doc, &config).unwrap()
        };
        // sigma = 2: (1+4) * 1 * 0.6 / (1 + 4 * 0.6) = 3 / 3.4.
        assert!((at(2.0) - 3.0 / 3.4).abs() < 1e-12);
        assert!(at(2.0) > at(1.0));
        assert!(at(1.0) > at(0.5));
    }

    #[test]
    fn empty_summary_scores_zero() {
        let (doc, clusters) = coverage_doc();
        let summary = ClusterSummary {
            source: ClusterRef::Intra(0),
            sentences: vec![],
            tokens: vec![],
            events: vec![],
            event_chain: vec![],
            log_prob: None,
            sampled_mask: None,
        };
        let value = coverage_reward(&[summary], &clusters, &doc, &RewardConfig::default()).unwrap();
        assert_eq!(value, 0.0);
    }

    #[test]
    fn misaligned_summaries_error() {
        let (doc, clusters) = coverage_doc();
        let err = coverage_reward(&[], &clusters, &doc, &RewardConfig::default()).unwrap_err();
        assert!(matches!(err, RewardError::Misaligned { .. }));
        let mut summary = identity_cluster_summary(&doc, &clusters[0]);
        summary.source = ClusterRef::Intra(7);
        let err = coverage_reward(&[summary], &clusters, &doc, &RewardConfig::default()).unwrap_err();
        assert!(matches!(err, RewardError::SourceMismatch { .. }));
    }

    #[test]
    fn abstractive_summary_uses_whole_token_list() {
        // Out-of-order abstractive tokens cannot beat their best ordering:
        // "x w" preserves only one of the cluster's ordered tokens... but
        // "w x" (in order) preserves both.
        let (doc, clusters) = coverage_doc();
        let abstractive = |tokens: &str| ClusterSummary {
            source: ClusterRef::Intra(0),
            sentences: vec![],
            tokens: toks(tokens),
            events: vec![],
            event_chain: vec![],
            log_prob: None,
            sampled_mask: None,
        };
        let config = RewardConfig::default();
        let ordered =
            coverage_reward(&[abstractive("w x")], &clusters, &doc, &config).unwrap();
        let reversed =
            coverage_reward(&[abstractive("x w")], &clusters, &doc, &config).unwrap();
        assert!(ordered > reversed);
    }

    #[test]
    fn exact_match_credit_including_none() {
        let mut predicted = BTreeMap::new();
        let mut gold = BTreeMap::new();
        // Pair (0,1): exact positive match. Pair (1,0): both NONE.
        // Pair (0,2): wrong. Pair (2,0): subset, no credit in exact mode.
        predicted.insert((0, 1), BTreeSet::from([0]));
        gold.insert((0, 1), BTreeSet::from([0]));
        predicted.insert((1, 0), BTreeSet::new());
        predicted.insert((0, 2), BTreeSet::from([1]));
        gold.insert((0, 2), BTreeSet::from([2]));
        predicted.insert((2, 0), BTreeSet::from([0]));
        gold.insert((2, 0), BTreeSet::from([0, 1]));
        let scope = vec![(0, 1), (1, 0), (0, 2), (2, 0)];
        let config = RewardConfig::default();
        let value = prediction_reward(&predicted, &gold, &scope, 3, &config).unwrap();
        assert!((value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn per_type_credit_is_fractional() {
        let mut predicted = BTreeMap::new();
        let mut gold = BTreeMap::new();
        predicted.insert((0, 1), BTreeSet::from([0]));
        gold.insert((0, 1), BTreeSet::from([0, 1]));
        let config = RewardConfig { per_type_credit: true, ..RewardConfig::default() };
        // Types: 0 agree-positive, 1 disagree, 2 agree-negative -> 2/3.
        let value = prediction_reward(&predicted, &gold, &[(0, 1)], 3, &config).unwrap();
        assert!((value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scope_errors_are_reported() {
        let predicted = BTreeMap::new();
        let gold = BTreeMap::new();
        let config = RewardConfig::default();
        assert_eq!(
            prediction_reward(&predicted, &gold, &[], 3, &config).unwrap_err(),
            RewardError::EmptyScope
        );
        assert_eq!(
            prediction_reward(&predicted, &gold, &[(0, 1)], 3, &config).unwrap_err(),
            RewardError::MissingPrediction { pair: (0, 1) }
        );
    }

    #[test]
    fn combined_reward_is_the_weighted_sum() {
        let config = RewardConfig { alpha: 1.0, beta: 0.1, ..RewardConfig::default() };
        let value = combined_reward(0.8, 0.5, &config);
        assert!((value - 0.85).abs() < 1e-12);
    }
}
