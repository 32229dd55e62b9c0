//! Heuristic input construction: a sentence window around the target
//! (snippet) and bridge-mention ranking.
//!
//! The bridge filter is a count-and-sort approximation of entity-based
//! filtering: it keeps the sentences with the most bridge or target
//! mentions under a sentence budget and the token cap.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntityId};
use crate::error::{ReicError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Maximum sentences on each side of the target; `None` expands until
    /// the token cap is hit.
    pub window: Option<usize>,
    pub token_cap: usize,
    pub filter_cap: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            window: None,
            token_cap: 512,
            filter_cap: 16,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_cap == 0 || self.filter_cap == 0 {
            return Err(ReicError::Config("token_cap and filter_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Grows a contiguous window around `target`, alternating after/before,
/// until the next sentence would overflow the token cap. Returns indices in
/// document order.
pub fn snippet_select(doc: &Document, target: usize, cfg: &BaselineConfig) -> Vec<usize> {
    let m = doc.len();
    let radius = cfg.window.unwrap_or(m);
    let tokens = |i: usize| doc.sentences[i].token_count as usize;
    let (mut lo, mut hi) = (target, target);
    let mut used = tokens(target);
    let mut after_turn = true;
    loop {
        let can_after = hi + 1 < m && hi + 1 - target <= radius;
        let can_before = lo > 0 && target - (lo - 1) <= radius;
        let next = match (after_turn, can_after, can_before) {
            (true, true, _) | (false, true, false) => hi + 1,
            (false, _, true) | (true, false, true) => lo - 1,
            _ => break,
        };
        if used + tokens(next) > cfg.token_cap {
            break;
        }
        used += tokens(next);
        if next > hi {
            hi = next;
        } else {
            lo = next;
        }
        after_turn = !after_turn;
    }
    (lo..=hi).collect()
}

/// Ranks sentences by mentions of `bridges` (plus `target_entity`), ties by
/// position, and keeps the top ones that fit both caps. Falls back to
/// [`snippet_select`] when no sentence mentions a bridge entity, and to the
/// target sentence alone when no ranked sentence fits the token cap.
pub fn bridge_filter_select(
    doc: &Document,
    target: usize,
    target_entity: EntityId,
    bridges: &[EntityId],
    cfg: &BaselineConfig,
) -> Vec<usize> {
    if !doc.sentences.iter().any(|s| s.count_mentions(bridges) > 0) {
        return snippet_select(doc, target, cfg);
    }
    let mut keys: Vec<EntityId> = bridges.to_vec();
    keys.push(target_entity);
    let scores: Vec<usize> = doc.sentences.iter().map(|s| s.count_mentions(&keys)).collect();
    let mut picked = rank_by_count(
        &scores,
        cfg.filter_cap,
        |i| doc.sentences[i].token_count as usize,
        cfg.token_cap,
    );
    if picked.is_empty() {
        // nothing fits the cap; keep the target sentence so paths stay non-empty
        return vec![target];
    }
    picked.sort_unstable();
    picked
}

/// Indices with positive score, best first (ties by index), truncated at
/// `max_items` or when the next one would overflow `token_cap`.
fn rank_by_count(scores: &[usize], max_items: usize, tokens: impl Fn(usize) -> usize, token_cap: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
    let mut out = Vec::new();
    let mut used = 0;
    for i in order {
        if out.len() == max_items || used + tokens(i) > token_cap {
            break;
        }
        used += tokens(i);
        out.push(i);
    }
    out
}
