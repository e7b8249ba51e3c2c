//! Hybrid sparse + dense retrieval.
//!
//! Sparse BM25 and exact cosine search each produce a [`Ranking`]; the two
//! are combined with reciprocal rank fusion and the head of the fused list
//! is handed to a pluggable pair scorer for reranking. Every ranking in this
//! module is ordered by score descending, then doc id ascending.

mod dense;
mod embfile;
mod hybrid;
mod rerank;
mod rrf;
mod sparse;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dense::{search_dense, DenseIndex};
pub use embfile::{read_embeddings, write_embeddings, EmbeddingSet, EMB_MAGIC};
pub use hybrid::{HybridConfig, HybridResult, HybridSearcher, SearchFilter, SearchProvenance};
pub use rerank::{rerank, IdentityScorer, RemoteReranker, RerankError, RerankOutcome, RerankScorer};
pub use rrf::{rrf_fuse, RrfConfig};
pub use sparse::{build_sparse, build_sparse_with, search_sparse, Bm25Params, SparseIndex};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty store")]
    EmptyStore,
    #[error("vector dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector for {0:?} has zero or non-finite norm")]
    DegenerateVector(String),
    #[error("duplicate vector id {0:?}")]
    DuplicateId(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub doc_id: String,
    pub score: f64,
}

impl Scored {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        Scored {
            doc_id: doc_id.into(),
            score,
        }
    }
}

fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Ordered `(doc_id, score)` list with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<Scored>);

impl Ranking {
    /// Sorts into canonical order. If an id repeats, its best entry is kept.
    pub fn from_scores(mut items: Vec<Scored>) -> Self {
        items.sort_by(rank_order);
        let mut seen = HashSet::with_capacity(items.len());
        items.retain(|s| seen.insert(s.doc_id.clone()));
        Ranking(items)
    }

    /// Canonical top `k` of `items` without sorting the whole list.
    pub fn top_k(mut items: Vec<Scored>, k: usize) -> Self {
        if k < items.len() {
            items.select_nth_unstable_by(k, rank_order);
            items.truncate(k);
        }
        Ranking::from_scores(items)
    }

    pub fn entries(&self) -> &[Scored] {
        &self.0
    }

    pub fn ids(&self) -> Vec<&str> {
        self.0.iter().map(|s| s.doc_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn truncated(&self, k: usize) -> Ranking {
        Ranking(self.0.iter().take(k).cloned().collect())
    }

    /// 1-based rank of `doc_id`.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.0.iter().position(|s| s.doc_id == doc_id).map(|i| i + 1)
    }

    pub fn into_entries(self) -> Vec<Scored> {
        self.0
    }

    /// True when the list is in canonical order without duplicate ids.
    pub fn is_canonical(&self) -> bool {
        let ids: HashSet<&str> = self.0.iter().map(|s| s.doc_id.as_str()).collect();
        ids.len() == self.0.len() && self.0.windows(2).all(|w| rank_order(&w[0], &w[1]) == Ordering::Less)
    }
}

impl<'a> IntoIterator for &'a Ranking {
    type Item = &'a Scored;
    type IntoIter = std::slice::Iter<'a, Scored>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
