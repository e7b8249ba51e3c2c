use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{rerank, rrf_fuse, DenseIndex, IndexError, Ranking, RerankScorer, RrfConfig, SparseIndex};
use crate::corpus::{Document, DocumentStore, Source};
use crate::exec::Exec;
use crate::types::{TimeWindow, Zip};

/// Metadata constraints applied before any scoring. A `zip` constraint
/// requires the document to carry that exact ZIP.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchFilter {
    pub zip: Option<Zip>,
    pub sources: Option<BTreeSet<Source>>,
    pub window: Option<TimeWindow>,
}

impl SearchFilter {
    pub fn matches(&self, d: &Document) -> bool {
        self.zip.as_ref().is_none_or(|z| d.zip.as_ref() == Some(z))
            && self.sources.as_ref().is_none_or(|s| s.contains(&d.source))
            && self.window.as_ref().is_none_or(|w| w.contains(d.timestamp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    /// Candidates taken from each of the sparse and dense searches.
    pub candidates: usize,
    pub rrf: RrfConfig,
    pub rerank_limit: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            candidates: 50,
            rrf: RrfConfig::default(),
            rerank_limit: 20,
        }
    }
}

/// Per-stage candidate counts for one search.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SearchProvenance {
    pub filtered: usize,
    pub sparse: usize,
    pub dense: usize,
    pub fused: usize,
    pub reranked: usize,
    pub returned: usize,
    pub sparse_only: bool,
    pub rerank_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridResult {
    pub ranking: Ranking,
    pub provenance: SearchProvenance,
}

pub struct HybridSearcher<'a> {
    pub store: &'a DocumentStore,
    pub sparse: &'a SparseIndex,
    pub dense: Option<&'a DenseIndex>,
    pub scorer: &'a dyn RerankScorer,
    pub config: HybridConfig,
    pub exec: Exec,
}

impl HybridSearcher<'_> {
    /// Filter, then sparse and dense search, RRF fusion and rerank. Without
    /// a query vector (or dense index) the dense leg is skipped and
    /// `sparse_only` is set.
    pub fn search(
        &self,
        query: &str,
        query_vec: Option<&[f32]>,
        filter: &SearchFilter,
        top_k: usize,
    ) -> Result<HybridResult, IndexError> {
        let allowed: HashSet<&str> = self
            .store
            .iter()
            .filter(|d| filter.matches(d))
            .map(|d| d.doc_id.as_str())
            .collect();
        let allow = |id: &str| allowed.contains(id);
        let mut prov = SearchProvenance {
            filtered: allowed.len(),
            ..SearchProvenance::default()
        };

        let sparse = self.sparse.search_filtered(query, self.config.candidates, &allow);
        prov.sparse = sparse.len();
        let mut legs = vec![sparse];
        match (self.dense, query_vec) {
            (Some(dense), Some(v)) => {
                let r = dense.search_filtered(v, self.config.candidates, &allow, self.exec)?;
                prov.dense = r.len();
                legs.push(r);
            }
            _ => prov.sparse_only = true,
        }

        let fused = rrf_fuse(&legs, self.config.rrf, usize::MAX);
        prov.fused = fused.len();
        let out = rerank(query, &fused, self.scorer, self.config.rerank_limit, self.store);
        prov.reranked = out.ranking.len();
        prov.rerank_fallback = out.fell_back;
        let ranking = out.ranking.truncated(top_k);
        prov.returned = ranking.len();
        tracing::debug!(query, ?prov, "hybrid search");
        Ok(HybridResult {
            ranking,
            provenance: prov,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_sparse, IdentityScorer};
    use chrono::{TimeZone, Utc};

    fn doc(id: &str, text: &str, zip: Option<&str>, day: u32, source: Source) -> Document {
        Document {
            doc_id: id.into(),
            source,
            text: text.into(),
            zip: zip.map(|z| Zip::new(z).unwrap()),
            timestamp: Utc.with_ymd_and_hms(2017, 8, day, 12, 0, 0).unwrap(),
            geo: None,
        }
    }

    #[test]
    fn zip_and_keyword_doc_ranks_first() {
        let store = DocumentStore::from_documents(vec![
            doc("a", "street flooding near the park", Some("77002"), 27, Source::Call311),
            doc("b", "street flooding reported", Some("77096"), 27, Source::Call311),
            doc("c", "tree down on fence", Some("77096"), 27, Source::Call311),
        ])
        .unwrap();
        let sparse = build_sparse(&store).unwrap();
        let s = HybridSearcher {
            store: &store,
            sparse: &sparse,
            dense: None,
            scorer: &IdentityScorer,
            config: HybridConfig::default(),
            exec: Exec::Sequential,
        };
        let filter = SearchFilter {
            zip: Some(Zip::new("77096").unwrap()),
            ..Default::default()
        };
        let r = s.search("flooding", None, &filter, 5).unwrap();
        assert_eq!(r.ranking.ids(), ["b"]);
        assert!(r.provenance.sparse_only);
        assert_eq!(r.provenance.filtered, 2);
    }

    #[test]
    fn window_and_source_filters() {
        let store = DocumentStore::from_documents(vec![
            doc("early", "flood", None, 20, Source::Tweet),
            doc("in", "flood", None, 27, Source::Tweet),
            doc("call", "flood", None, 27, Source::Call311),
        ])
        .unwrap();
        let sparse = build_sparse(&store).unwrap();
        let s = HybridSearcher {
            store: &store,
            sparse: &sparse,
            dense: None,
            scorer: &IdentityScorer,
            config: HybridConfig::default(),
            exec: Exec::Sequential,
        };
        let filter = SearchFilter {
            sources: Some([Source::Tweet].into()),
            window: Some(
                TimeWindow::new(
                    Utc.with_ymd_and_hms(2017, 8, 25, 0, 0, 0).unwrap(),
                    Utc.with_ymd_and_hms(2017, 8, 31, 0, 0, 0).unwrap(),
                )
                .unwrap(),
            ),
            ..Default::default()
        };
        assert_eq!(s.search("flood", None, &filter, 5).unwrap().ranking.ids(), ["in"]);
    }
}
