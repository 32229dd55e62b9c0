//! Planted-evidence corpus generator.
//!
//! Every positive path gets one evidence sentence per document, placed at
//! least `evidence_offset_min` sentences after the target sentence. Evidence
//! rows carry a per-relation signature in the first `n_relations + 1`
//! coordinates: a relation-specific axis `r` plus an axis shared by every
//! relation at index `n_relations`. Everything else is isotropic noise.

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Bag, Corpus, DocId, Document, EmbeddingStore, Entity, EntityId, RelationId, Sentence, TextPath};
use crate::error::{ReicError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_bags: usize,
    pub n_relations: usize,
    pub sentences_per_doc: usize,
    pub paths_per_bag: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    /// Euclidean norm of the relation signature added to evidence rows.
    pub signature_norm: f64,
    /// Share of the signature's squared norm placed on the shared axis.
    pub shared_signature: f64,
    pub na_bag_fraction: f64,
    /// Probability that a non-first path of a positive bag expresses no relation.
    pub na_path_fraction: f64,
    pub evidence_offset_min: usize,
    pub tokens_per_sentence: u32,
    pub max_bridges_per_path: usize,
    pub n_distractor_entities: usize,
    pub max_distractors_per_sentence: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_bags: 200,
            n_relations: 4,
            sentences_per_doc: 60,
            paths_per_bag: 2,
            dim: 64,
            noise_sigma: 1.0,
            signature_norm: 10.0,
            shared_signature: 0.5,
            na_bag_fraction: 0.5,
            na_path_fraction: 0.25,
            evidence_offset_min: 20,
            tokens_per_sentence: 25,
            max_bridges_per_path: 2,
            n_distractor_entities: 40,
            max_distractors_per_sentence: 2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ReicError::Config(msg));
        if self.n_bags == 0 {
            return fail("n_bags must be at least 1".into());
        }
        if self.n_relations < 2 {
            return fail(format!("n_relations must be >= 2, got {}", self.n_relations));
        }
        if self.sentences_per_doc < 3 {
            return fail("sentences_per_doc must be >= 3".into());
        }
        if self.evidence_offset_min >= self.sentences_per_doc {
            return fail(format!(
                "evidence_offset_min ({}) must be < sentences_per_doc ({})",
                self.evidence_offset_min, self.sentences_per_doc
            ));
        }
        if self.paths_per_bag == 0 {
            return fail("paths_per_bag must be at least 1".into());
        }
        if self.dim <= self.n_relations {
            return fail(format!(
                "dim ({}) must leave room for {} signature coordinates",
                self.dim,
                self.n_relations + 1
            ));
        }
        if !(0.0..1.0).contains(&self.na_bag_fraction) {
            return fail(format!(
                "na_bag_fraction must be in [0, 1), got {}",
                self.na_bag_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.na_path_fraction) {
            return fail(format!(
                "na_path_fraction must be in [0, 1], got {}",
                self.na_path_fraction
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be finite and non-negative".into());
        }
        if !self.signature_norm.is_finite() {
            return fail("signature_norm must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.shared_signature) {
            return fail(format!(
                "shared_signature must be in [0, 1], got {}",
                self.shared_signature
            ));
        }
        if self.tokens_per_sentence == 0 {
            return fail("tokens_per_sentence must be positive".into());
        }
        if self.max_bridges_per_path == 0 {
            return fail("max_bridges_per_path must be positive".into());
        }
        if self.n_distractor_entities == 0 && self.max_distractors_per_sentence > 0 {
            return fail("distractor mentions need a non-empty distractor pool".into());
        }
        Ok(())
    }
}

struct Generator<'a> {
    cfg: &'a SyntheticConfig,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    entities: Vec<Entity>,
    documents: Vec<Document>,
    store: EmbeddingStore,
}

impl Generator<'_> {
    fn new_entity(&mut self, prefix: &str) -> EntityId {
        let id = self.entities.len() as EntityId;
        self.entities.push(Entity {
            id,
            name: format!("{prefix}{id}"),
        });
        id
    }

    /// Builds one document whose target sentence mentions `target`.
    /// `evidence` carries the relation to plant, if any.
    fn document(&mut self, target: EntityId, bridges: &[EntityId], evidence: Option<RelationId>) -> Result<DocId> {
        let cfg = self.cfg;
        let m_count = cfg.sentences_per_doc;
        let tgt = self.rng.random_range(0..m_count - cfg.evidence_offset_min);
        let evidence_idx = evidence.map(|_| self.rng.random_range(tgt + cfg.evidence_offset_min..m_count));

        let mut sentences: Vec<Sentence> = (0..m_count)
            .map(|_| {
                let k = self.rng.random_range(0..=cfg.max_distractors_per_sentence);
                let mentions = (0..k)
                    .map(|_| self.rng.random_range(0..cfg.n_distractor_entities as EntityId))
                    .collect();
                Sentence {
                    token_count: cfg.tokens_per_sentence,
                    mentions,
                    is_evidence_oracle: Some(false),
                }
            })
            .collect();

        sentences[tgt].mentions.push(target);
        if let Some(e) = evidence_idx {
            let s = &mut sentences[e];
            s.mentions.push(target);
            s.mentions.extend_from_slice(bridges);
            s.is_evidence_oracle = Some(true);
        }
        // One background mention per bridge, so every path shares its bridges
        // whether or not evidence was planted.
        let free: Vec<usize> = (0..m_count).filter(|&i| i != tgt && Some(i) != evidence_idx).collect();
        for &b in bridges {
            let &i = free.choose(&mut self.rng).expect("at least one free sentence");
            sentences[i].mentions.push(b);
        }

        let mut emb = Array2::from_shape_fn((m_count, cfg.dim), |_| self.noise.sample(&mut self.rng));
        if let (Some(e), Some(r)) = (evidence_idx, evidence) {
            emb[[e, r]] += cfg.signature_norm * (1.0 - cfg.shared_signature).sqrt();
            emb[[e, cfg.n_relations]] += cfg.signature_norm * cfg.shared_signature.sqrt();
        }

        let doc_id = self.documents.len() as DocId;
        self.store.insert(doc_id, target, emb.mapv(|v| v as f32))?;
        self.documents.push(Document { doc_id, sentences });
        Ok(doc_id)
    }
}

/// Generates a planted-evidence corpus and its embedding store. The output
/// is a pure function of `cfg`, seed included.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Corpus, EmbeddingStore)> {
    cfg.validate()?;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        noise: Normal::new(0.0, cfg.noise_sigma).map_err(|e| ReicError::Config(e.to_string()))?,
        entities: Vec::new(),
        documents: Vec::new(),
        store: EmbeddingStore::new(cfg.dim),
    };
    for _ in 0..cfg.n_distractor_entities {
        g.new_entity("distractor_");
    }

    let mut bags = Vec::with_capacity(cfg.n_bags);
    for _ in 0..cfg.n_bags {
        let head = g.new_entity("head_");
        let tail = g.new_entity("tail_");
        let relation = if g.rng.random::<f64>() < cfg.na_bag_fraction {
            None
        } else {
            Some(g.rng.random_range(0..cfg.n_relations))
        };

        let mut paths = Vec::with_capacity(cfg.paths_per_bag);
        let mut labels = Vec::with_capacity(cfg.paths_per_bag);
        for p in 0..cfg.paths_per_bag {
            let positive = relation.is_some() && (p == 0 || g.rng.random::<f64>() >= cfg.na_path_fraction);
            let n_bridges = g.rng.random_range(1..=cfg.max_bridges_per_path);
            let bridges: Vec<EntityId> = (0..n_bridges).map(|_| g.new_entity("bridge_")).collect();
            let planted = if positive { relation } else { None };
            let head_doc = g.document(head, &bridges, planted)?;
            let tail_doc = g.document(tail, &bridges, planted)?;
            paths.push(TextPath {
                head_doc,
                tail_doc,
                bridge_entities: bridges,
            });
            labels.push(positive);
        }
        bags.push(Bag {
            head,
            tail,
            relation,
            paths,
            path_oracle_labels: Some(labels),
        });
    }

    let relations = (0..cfg.n_relations).map(|r| format!("rel_{r}")).collect();
    Ok((Corpus::new(g.entities, relations, g.documents, bags), g.store))
}
