//! Bags of text paths, their documents, and the per-sentence embeddings the
//! selector consumes.

mod store;
mod synth;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ReicError, Result};

pub use store::{EmbeddingStore, STORE_MAGIC};
pub use synth::{generate_synthetic, SyntheticConfig};

pub type EntityId = u64;
pub type DocId = u64;
pub type RelationId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub token_count: u32,
    pub mentions: Vec<EntityId>,
    /// Planted-evidence flag; only synthetic corpora carry it and training
    /// never reads it.
    #[serde(rename = "evidence", default, skip_serializing_if = "Option::is_none")]
    pub is_evidence_oracle: Option<bool>,
}

impl Sentence {
    pub fn mentions_entity(&self, entity: EntityId) -> bool {
        self.mentions.contains(&entity)
    }

    /// Number of mentions (with multiplicity) of any entity in `entities`.
    pub fn count_mentions(&self, entities: &[EntityId]) -> usize {
        self.mentions.iter().filter(|m| entities.contains(m)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: DocId,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn entity_set(&self) -> BTreeSet<EntityId> {
        self.sentences.iter().flat_map(|s| s.mentions.iter().copied()).collect()
    }

    pub fn contains_entity(&self, entity: EntityId) -> bool {
        self.sentences.iter().any(|s| s.mentions_entity(entity))
    }

    pub fn evidence_indices(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_evidence_oracle == Some(true))
            .map(|(i, _)| i)
            .collect()
    }
}

/// First sentence (lowest index) that mentions `entity`.
pub fn target_sentence_index(doc: &Document, entity: EntityId) -> Result<usize> {
    doc.sentences
        .iter()
        .position(|s| s.mentions_entity(entity))
        .ok_or_else(|| ReicError::NotFound(format!("entity {entity} is not mentioned in document {}", doc.doc_id)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPath {
    pub head_doc: DocId,
    pub tail_doc: DocId,
    #[serde(rename = "bridges")]
    pub bridge_entities: Vec<EntityId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    pub head: EntityId,
    pub tail: EntityId,
    /// `None` is the no-relation (N/A) label.
    pub relation: Option<RelationId>,
    pub paths: Vec<TextPath>,
    #[serde(rename = "path_labels", default, skip_serializing_if = "Option::is_none")]
    pub path_oracle_labels: Option<Vec<bool>>,
}

impl Bag {
    pub fn is_na(&self) -> bool {
        self.relation.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoPaths,
    UnknownRelation(RelationId),
    PathLabelCount { expected: usize, actual: usize },
    MissingDocument { path: usize, doc: DocId },
    EmptyBridgeSet { path: usize },
    HeadEntityAbsent { path: usize },
    TailEntityAbsent { path: usize },
    BridgeAbsent { path: usize, entity: EntityId, doc: DocId },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NoPaths => write!(f, "bag has no text paths"),
            Violation::UnknownRelation(r) => write!(f, "relation id {r} is not in the vocabulary"),
            Violation::PathLabelCount { expected, actual } => {
                write!(f, "{actual} path labels for {expected} paths")
            }
            Violation::MissingDocument { path, doc } => {
                write!(f, "path {path}: unknown document {doc}")
            }
            Violation::EmptyBridgeSet { path } => write!(f, "path {path}: no bridge entities"),
            Violation::HeadEntityAbsent { path } => {
                write!(f, "path {path}: head entity absent from head document")
            }
            Violation::TailEntityAbsent { path } => {
                write!(f, "path {path}: tail entity absent from tail document")
            }
            Violation::BridgeAbsent { path, entity, doc } => {
                write!(f, "path {path}: bridge entity {entity} absent from document {doc}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub entities: Vec<Entity>,
    pub relations: Vec<String>,
    pub documents: Vec<Document>,
    pub bags: Vec<Bag>,
    #[serde(skip)]
    doc_index: HashMap<DocId, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.relations == other.relations
            && self.documents == other.documents
            && self.bags == other.bags
    }
}

impl Corpus {
    pub fn new(entities: Vec<Entity>, relations: Vec<String>, documents: Vec<Document>, bags: Vec<Bag>) -> Self {
        let mut corpus = Corpus {
            entities,
            relations,
            documents,
            bags,
            doc_index: HashMap::new(),
        };
        corpus.reindex();
        corpus
    }

    fn reindex(&mut self) {
        self.doc_index = self.documents.iter().enumerate().map(|(i, d)| (d.doc_id, i)).collect();
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn document(&self, id: DocId) -> Result<&Document> {
        self.doc_index
            .get(&id)
            .map(|&i| &self.documents[i])
            .ok_or_else(|| ReicError::NotFound(format!("document {id} is not in the corpus")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut corpus: Corpus = serde_json::from_str(text)?;
        corpus.reindex();
        Ok(corpus)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Corpus::from_json(&fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Splits off the first `n_first` bags; each half keeps only the
    /// documents its bags reference.
    pub fn split(&self, n_first: usize) -> (Corpus, Corpus) {
        let n_first = n_first.min(self.bags.len());
        let part = |bags: &[Bag]| {
            let used: BTreeSet<DocId> = bags
                .iter()
                .flat_map(|b| b.paths.iter().flat_map(|p| [p.head_doc, p.tail_doc]))
                .collect();
            let docs = self
                .documents
                .iter()
                .filter(|d| used.contains(&d.doc_id))
                .cloned()
                .collect();
            Corpus::new(self.entities.clone(), self.relations.clone(), docs, bags.to_vec())
        };
        (part(&self.bags[..n_first]), part(&self.bags[n_first..]))
    }

    /// Checks every bag and every sentence; returns `(bag index, violation)`.
    pub fn validate(&self) -> Vec<(usize, Violation)> {
        self.bags
            .iter()
            .enumerate()
            .flat_map(|(i, bag)| validate_bag(bag, self).into_iter().map(move |v| (i, v)))
            .collect()
    }

    /// Sentence-level invariants: positive token counts and known entity ids.
    pub fn validate_sentences(&self) -> Result<()> {
        let known: BTreeSet<EntityId> = self.entities.iter().map(|e| e.id).collect();
        for doc in &self.documents {
            if doc.is_empty() {
                return Err(ReicError::Data(format!("document {} has no sentences", doc.doc_id)));
            }
            for (m, s) in doc.sentences.iter().enumerate() {
                if s.token_count == 0 {
                    return Err(ReicError::Data(format!(
                        "document {} sentence {m} has zero tokens",
                        doc.doc_id
                    )));
                }
                if let Some(e) = s.mentions.iter().find(|e| !known.contains(e)) {
                    return Err(ReicError::Data(format!(
                        "document {} sentence {m} mentions unknown entity {e}",
                        doc.doc_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lists every way `bag` breaks the text-path conditions: the head entity
/// occurs in the head document, the tail entity in the tail document, and
/// each path has at least one bridge entity present in both documents.
pub fn validate_bag(bag: &Bag, corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    if bag.paths.is_empty() {
        out.push(Violation::NoPaths);
    }
    if let Some(r) = bag.relation {
        if r >= corpus.n_relations() {
            out.push(Violation::UnknownRelation(r));
        }
    }
    if let Some(labels) = &bag.path_oracle_labels {
        if labels.len() != bag.paths.len() {
            out.push(Violation::PathLabelCount {
                expected: bag.paths.len(),
                actual: labels.len(),
            });
        }
    }
    for (p, path) in bag.paths.iter().enumerate() {
        if path.bridge_entities.is_empty() {
            out.push(Violation::EmptyBridgeSet { path: p });
        }
        let head_doc = corpus.document(path.head_doc);
        let tail_doc = corpus.document(path.tail_doc);
        match &head_doc {
            Ok(d) if !d.contains_entity(bag.head) => out.push(Violation::HeadEntityAbsent { path: p }),
            Ok(_) => {}
            Err(_) => out.push(Violation::MissingDocument {
                path: p,
                doc: path.head_doc,
            }),
        }
        match &tail_doc {
            Ok(d) if !d.contains_entity(bag.tail) => out.push(Violation::TailEntityAbsent { path: p }),
            Ok(_) => {}
            Err(_) => out.push(Violation::MissingDocument {
                path: p,
                doc: path.tail_doc,
            }),
        }
        for &b in &path.bridge_entities {
            for doc in [&head_doc, &tail_doc].into_iter().flatten() {
                if !doc.contains_entity(b) {
                    out.push(Violation::BridgeAbsent {
                        path: p,
                        entity: b,
                        doc: doc.doc_id,
                    });
                }
            }
        }
    }
    out
}
