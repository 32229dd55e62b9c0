//! Ranking metrics over bag-level predictions and selection statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, RelationId};
use crate::error::{ReicError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub bag: usize,
    pub relation: RelationId,
    pub score: f64,
    pub is_correct: bool,
}

impl RankedPrediction {
    pub fn new(bag: usize, relation: RelationId, score: f64, is_correct: bool) -> Self {
        RankedPrediction {
            bag,
            relation,
            score,
            is_correct,
        }
    }
}

/// Indices sorted by descending score, ties kept in input order.
fn ranking(preds: &[RankedPrediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

fn count_positives(preds: &[RankedPrediction]) -> Result<usize> {
    let n = preds.iter().filter(|p| p.is_correct).count();
    if n == 0 {
        return Err(ReicError::UndefinedMetric("no correct predictions in the ranked list"));
    }
    Ok(n)
}

/// Average precision: sum of precision at each rank holding a correct
/// prediction, weighted by the recall increment.
pub fn pr_auc(preds: &[RankedPrediction]) -> Result<f64> {
    let total = count_positives(preds)? as f64;
    let mut hits = 0usize;
    let mut auc = 0.0;
    for (k, &i) in ranking(preds).iter().enumerate() {
        if preds[i].is_correct {
            hits += 1;
            auc += hits as f64 / (k + 1) as f64 / total;
        }
    }
    Ok(auc)
}

/// Maximum F1 over score thresholds; tied scores are never split.
pub fn best_f1(preds: &[RankedPrediction]) -> Result<f64> {
    let total = count_positives(preds)? as f64;
    let order = ranking(preds);
    let mut hits = 0usize;
    let mut best = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        if preds[i].is_correct {
            hits += 1;
        }
        let at_cut = order.get(k + 1).is_none_or(|&j| preds[j].score != preds[i].score);
        if at_cut && hits > 0 {
            let precision = hits as f64 / (k + 1) as f64;
            let recall = hits as f64 / total;
            best = best.max(2.0 * precision * recall / (precision + recall));
        }
    }
    Ok(best)
}

/// Fraction correct among the top `k` (clamped to the list length).
pub fn precision_at_k(preds: &[RankedPrediction], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(ReicError::Config("precision@k needs k >= 1".into()));
    }
    let k = k.min(preds.len());
    if k == 0 {
        return Ok(0.0);
    }
    let hits = ranking(preds).iter().take(k).filter(|&&i| preds[i].is_correct).count();
    Ok(hits as f64 / k as f64)
}

/// Sentences kept for each document of one path, target included.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSelection {
    pub bag: usize,
    pub path: usize,
    pub head: Vec<usize>,
    pub tail: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BridgeStats {
    /// Mean bridge mentions per path selection in positive bags.
    pub mean_positive_bags: Option<f64>,
    /// Mean bridge mentions per path selection in N/A bags.
    pub mean_na_bags: Option<f64>,
    /// Mention-count histograms keyed by count.
    pub positive_paths: BTreeMap<usize, usize>,
    pub na_paths_in_positive_bags: BTreeMap<usize, usize>,
    pub na_bag_paths: BTreeMap<usize, usize>,
}

impl BridgeStats {
    pub fn total_paths(&self) -> usize {
        [
            &self.positive_paths,
            &self.na_paths_in_positive_bags,
            &self.na_bag_paths,
        ]
        .iter()
        .flat_map(|h| h.values())
        .sum()
    }
}

/// Bridge-entity mentions across the selected sentences of both documents.
pub fn bridge_mentions(selection: &PathSelection, corpus: &Corpus) -> Result<usize> {
    let bag = bag_at(corpus, selection.bag)?;
    let path = bag
        .paths
        .get(selection.path)
        .ok_or_else(|| ReicError::NotFound(format!("path {} of bag {}", selection.path, selection.bag)))?;
    let mut total = 0;
    for (doc_id, picked) in [(path.head_doc, &selection.head), (path.tail_doc, &selection.tail)] {
        let doc = corpus.document(doc_id)?;
        for &i in picked {
            let sentence = doc
                .sentences
                .get(i)
                .ok_or_else(|| ReicError::NotFound(format!("sentence {i} of document {doc_id}")))?;
            total += sentence.count_mentions(&path.bridge_entities);
        }
    }
    Ok(total)
}

fn bag_at(corpus: &Corpus, index: usize) -> Result<&crate::corpus::Bag> {
    corpus
        .bags
        .get(index)
        .ok_or_else(|| ReicError::NotFound(format!("bag {index}")))
}

/// Paths of positive bags without oracle labels count as positive paths.
pub fn bridge_mention_stats(selections: &[PathSelection], corpus: &Corpus) -> Result<BridgeStats> {
    let mut stats = BridgeStats::default();
    let (mut pos_sum, mut pos_n, mut na_sum, mut na_n) = (0usize, 0usize, 0usize, 0usize);
    for sel in selections {
        let count = bridge_mentions(sel, corpus)?;
        let bag = bag_at(corpus, sel.bag)?;
        if bag.is_na() {
            na_sum += count;
            na_n += 1;
            *stats.na_bag_paths.entry(count).or_default() += 1;
        } else {
            pos_sum += count;
            pos_n += 1;
            let positive_path = bag
                .path_oracle_labels
                .as_ref()
                .and_then(|labels| labels.get(sel.path).copied())
                .unwrap_or(true);
            let hist = if positive_path {
                &mut stats.positive_paths
            } else {
                &mut stats.na_paths_in_positive_bags
            };
            *hist.entry(count).or_default() += 1;
        }
    }
    stats.mean_positive_bags = (pos_n > 0).then(|| pos_sum as f64 / pos_n as f64);
    stats.mean_na_bags = (na_n > 0).then(|| na_sum as f64 / na_n as f64);
    Ok(stats)
}

/// Share of oracle evidence sentences (both documents) kept by the
/// selection; `None` when the path has no oracle evidence.
pub fn evidence_recall(selection: &PathSelection, corpus: &Corpus) -> Result<Option<f64>> {
    let bag = bag_at(corpus, selection.bag)?;
    let path = bag
        .paths
        .get(selection.path)
        .ok_or_else(|| ReicError::NotFound(format!("path {} of bag {}", selection.path, selection.bag)))?;
    let (mut found, mut total) = (0usize, 0usize);
    for (doc_id, picked) in [(path.head_doc, &selection.head), (path.tail_doc, &selection.tail)] {
        let evidence = corpus.document(doc_id)?.evidence_indices();
        total += evidence.len();
        found += evidence.iter().filter(|i| picked.contains(i)).count();
    }
    Ok((total > 0).then(|| found as f64 / total as f64))
}

/// Mean of per-path evidence recall over paths that carry evidence.
pub fn mean_evidence_recall(selections: &[PathSelection], corpus: &Corpus) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for sel in selections {
        if let Some(r) = evidence_recall(sel, corpus)? {
            sum += r;
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}
