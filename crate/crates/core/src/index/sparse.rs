use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexError, Ranking, Scored};
use crate::corpus::DocumentStore;
use crate::exec::Exec;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), IndexError> {
        if !self.k1.is_finite() || self.k1 <= 0.0 || !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::InvalidParam(format!(
                "bm25 requires k1 > 0 and 0 <= b <= 1, got k1={} b={}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// Inverted index over a [`DocumentStore`] scored with Okapi BM25.
#[derive(Debug, Clone)]
pub struct SparseIndex {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: HashMap<String, Vec<Posting>>,
}

pub fn build_sparse(store: &DocumentStore) -> Result<SparseIndex, IndexError> {
    build_sparse_with(store, Bm25Params::default(), Exec::default())
}

pub fn build_sparse_with(store: &DocumentStore, params: Bm25Params, exec: Exec) -> Result<SparseIndex, IndexError> {
    params.validate()?;
    if store.is_empty() {
        return Err(IndexError::EmptyStore);
    }
    let tokenized = exec.map(store.docs(), |d| text::tokens(&d.text));
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_lengths = Vec::with_capacity(tokenized.len());
    for (i, toks) in tokenized.into_iter().enumerate() {
        doc_lengths.push(toks.len() as u32);
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in toks {
            *tf.entry(t).or_default() += 1;
        }
        for (term, n) in tf {
            postings.entry(term).or_default().push(Posting { doc: i as u32, tf: n });
        }
    }
    let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    Ok(SparseIndex {
        params,
        doc_ids: store.iter().map(|d| d.doc_id.clone()).collect(),
        avg_doc_length: total as f64 / doc_lengths.len() as f64,
        doc_lengths,
        postings,
    })
}

impl SparseIndex {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == doc_id)
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc_index(doc_id).map(|i| self.doc_lengths[i])
    }

    /// Occurrences of `term` (already normalized) in `doc_id`; 0 if absent.
    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        let Some(i) = self.doc_index(doc_id) else { return 0 };
        self.postings
            .get(term)
            .and_then(|ps| ps.iter().find(|p| p.doc as usize == i))
            .map_or(0, |p| p.tf)
    }

    /// Number of documents containing `term`.
    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    /// `(doc_id, tf)` pairs for `term`, in store order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|ps| ps.iter().map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf)).collect())
            .unwrap_or_default()
    }

    fn idf(&self, n_containing: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = n_containing as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// BM25 over documents accepted by `allow`; only docs matching at least
    /// one query term are returned. Repeated query terms count once.
    pub fn search_filtered(&self, query: &str, top_k: usize, allow: &dyn Fn(&str) -> bool) -> Ranking {
        let mut terms = text::tokens(query);
        let mut seen = std::collections::HashSet::new();
        terms.retain(|t| seen.insert(t.clone()));
        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(ps) = self.postings.get(term) else { continue };
            let idf = self.idf(ps.len());
            for p in ps {
                if !allow(&self.doc_ids[p.doc as usize]) {
                    continue;
                }
                let tf = p.tf as f64;
                let dl = self.doc_lengths[p.doc as usize] as f64;
                let norm = k1 * (1.0 - b + b * dl / self.avg_doc_length);
                *scores.entry(p.doc).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let items = scores
            .into_iter()
            .map(|(d, s)| Scored::new(self.doc_ids[d as usize].clone(), s))
            .collect();
        Ranking::top_k(items, top_k)
    }

    pub fn search(&self, query: &str, top_k: usize) -> Ranking {
        self.search_filtered(query, top_k, &|_| true)
    }

    /// JSONL dump: a meta line, one line per document, then one per term
    /// in lexicographic order.
    pub fn write_postings_jsonl(&self, path: &Path) -> Result<(), IndexError> {
        let io = |e| IndexError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let line = |v: serde_json::Value| serde_json::to_string(&v).expect("json value");
        writeln!(
            out,
            "{}",
            line(serde_json::json!({
                "kind": "meta", "k1": self.params.k1, "b": self.params.b,
                "doc_count": self.doc_count(), "avg_doc_length": self.avg_doc_length
            }))
        )
        .map_err(io)?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            writeln!(out, "{}", line(serde_json::json!({"kind": "doc", "doc_id": id, "length": len}))).map_err(io)?;
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        for t in terms {
            let ps: Vec<(&str, u32)> = self.postings(t);
            writeln!(out, "{}", line(serde_json::json!({"kind": "term", "term": t, "postings": ps}))).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_postings_jsonl(path: &Path) -> Result<SparseIndex, IndexError> {
        #[derive(Deserialize)]
        #[serde(tag = "kind", rename_all = "lowercase")]
        enum Line {
            Meta { k1: f64, b: f64, doc_count: usize, avg_doc_length: f64 },
            Doc { doc_id: String, length: u32 },
            Term { term: String, postings: Vec<(String, u32)> },
        }
        let bad = |detail: String| IndexError::Malformed {
            what: "postings dump",
            detail,
        };
        let s = std::fs::read_to_string(path).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut params = None;
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut raw_terms = Vec::new();
        let mut declared = (0, 0.0);
        for (i, l) in s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<Line>(l).map_err(|e| bad(format!("line {}: {e}", i + 1)))? {
                Line::Meta { k1, b, doc_count, avg_doc_length } => {
                    params = Some(Bm25Params { k1, b });
                    declared = (doc_count, avg_doc_length);
                }
                Line::Doc { doc_id, length } => {
                    doc_ids.push(doc_id);
                    doc_lengths.push(length);
                }
                Line::Term { term, postings } => raw_terms.push((term, postings)),
            }
        }
        let params = params.ok_or_else(|| bad("missing meta line".into()))?;
        params.validate()?;
        if doc_ids.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        if declared.0 != doc_ids.len() {
            return Err(bad(format!("meta declares {} docs, found {}", declared.0, doc_ids.len())));
        }
        let index_of: HashMap<&str, u32> = doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i as u32)).collect();
        let mut postings = HashMap::new();
        for (term, ps) in raw_terms {
            let mut list = Vec::with_capacity(ps.len());
            for (id, tf) in ps {
                let doc = *index_of.get(id.as_str()).ok_or_else(|| bad(format!("unknown doc {id:?}")))?;
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        Ok(SparseIndex {
            params,
            avg_doc_length: total as f64 / doc_ids.len() as f64,
            doc_ids,
            doc_lengths,
            postings,
        })
    }
}

pub fn search_sparse(idx: &SparseIndex, query: &str, top_k: usize) -> Ranking {
    idx.search(query, top_k)
}
