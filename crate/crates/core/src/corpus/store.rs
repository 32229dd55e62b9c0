//! Binary embedding store.
//!
//! Layout (little-endian):
//! - magic `REICEMB1` (8 bytes)
//! - dim: u32
//! - n_entries: u32
//! - per entry: doc_id u64, target_entity_id u64, rows u32, then rows * dim f32 (row-major)

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{Corpus, DocId, EntityId};
use crate::bytes::Reader;
use crate::error::{ReicError, Result};

pub const STORE_MAGIC: &[u8; 8] = b"REICEMB1";

/// Pair-encoded sentence embeddings keyed by `(document, target entity)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<(DocId, EntityId), Array2<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingStore {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, doc: DocId, entity: EntityId, matrix: Array2<f32>) -> Result<()> {
        if matrix.ncols() != self.dim {
            return Err(ReicError::shape("embedding row", self.dim, matrix.ncols()));
        }
        if matrix.nrows() == 0 {
            return Err(ReicError::Data(format!("empty embedding matrix for ({doc}, {entity})")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(ReicError::Data(format!("non-finite embedding for ({doc}, {entity})")));
        }
        self.entries.insert((doc, entity), matrix);
        Ok(())
    }

    pub fn get(&self, doc: DocId, entity: EntityId) -> Option<&Array2<f32>> {
        self.entries.get(&(doc, entity))
    }

    /// Widened copy for computation; errors name the missing key.
    pub fn matrix_f64(&self, doc: DocId, entity: EntityId) -> Result<Array2<f64>> {
        self.get(doc, entity)
            .map(|m| m.mapv(f64::from))
            .ok_or_else(|| ReicError::Data(format!("no embeddings for (doc {doc}, entity {entity})")))
    }

    pub fn keys(&self) -> impl Iterator<Item = (DocId, EntityId)> + '_ {
        self.entries.keys().copied()
    }

    /// Every store entry's row count must equal its document's sentence count.
    pub fn check_against(&self, corpus: &Corpus) -> Result<()> {
        for (&(doc_id, entity), matrix) in &self.entries {
            if let Ok(doc) = corpus.document(doc_id) {
                if doc.len() != matrix.nrows() {
                    return Err(ReicError::Data(format!(
                        "embeddings for (doc {doc_id}, entity {entity}) have {} rows, document has {} sentences",
                        matrix.nrows(),
                        doc.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let floats: usize = self.entries.values().map(|m| m.len()).sum();
        let mut out = Vec::with_capacity(16 + self.entries.len() * 20 + floats * 4);
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (&(doc, entity), m) in &self.entries {
            out.extend_from_slice(&doc.to_le_bytes());
            out.extend_from_slice(&entity.to_le_bytes());
            out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(8, "magic")?;
        if magic != STORE_MAGIC {
            return Err(ReicError::format(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(magic),
                    std::str::from_utf8(STORE_MAGIC).unwrap()
                ),
            ));
        }
        let dim_at = r.pos as u64;
        let dim = r.u32("dim")? as usize;
        if dim == 0 {
            return Err(ReicError::format(dim_at, "dimension must be positive"));
        }
        let n = r.u32("entry count")?;
        let mut store = EmbeddingStore::new(dim);
        for _ in 0..n {
            let entry_at = r.pos as u64;
            let doc = r.u64("doc id")?;
            let entity = r.u64("entity id")?;
            let rows = r.u32("row count")? as usize;
            if rows == 0 {
                return Err(ReicError::format(entry_at, "entry has zero rows"));
            }
            let data_at = r.pos as u64;
            let raw = r.take(rows * dim * 4, "embedding values")?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(ReicError::format(data_at, "non-finite embedding value"));
            }
            let matrix = Array2::from_shape_vec((rows, dim), values).expect("row-major shape");
            if store.entries.insert((doc, entity), matrix).is_some() {
                return Err(ReicError::format(
                    entry_at,
                    format!("duplicate entry ({doc}, {entity})"),
                ));
            }
        }
        if r.pos != bytes.len() {
            return Err(ReicError::format(
                r.pos as u64,
                format!("{} trailing bytes after last entry", bytes.len() - r.pos),
            ));
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        EmbeddingStore::from_bytes(&fs::read(path)?)
    }
}
