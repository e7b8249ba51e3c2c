use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use super::{Ranking, Scored};
use crate::corpus::DocumentStore;
use crate::http::{ClientError, HttpClient, HttpConfig};

#[derive(Debug, Error)]
pub enum RerankError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("scorer returned {got} scores for {expected} candidates")]
    CountMismatch { expected: usize, got: usize },
    #[error("scorer failed: {0}")]
    Other(String),
}

/// Scores `(query, document)` pairs; higher is more relevant.
pub trait RerankScorer: Send + Sync {
    fn score(&self, query: &str, docs: &[&str]) -> Result<Vec<f64>, RerankError>;
}

/// Keeps the incoming order.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityScorer;

impl RerankScorer for IdentityScorer {
    fn score(&self, _query: &str, docs: &[&str]) -> Result<Vec<f64>, RerankError> {
        Ok((0..docs.len()).map(|i| -(i as f64)).collect())
    }
}

/// Cross-encoder served over HTTP. Sends `{"query", "texts"}` to
/// `{base_url}/rerank` and accepts either a bare `[{index, score}]` array
/// or `{"results": [{index, relevance_score}]}`.
#[derive(Debug)]
pub struct RemoteReranker {
    http: HttpClient,
}

impl RemoteReranker {
    pub fn new(config: HttpConfig) -> Result<Self, ClientError> {
        Ok(RemoteReranker {
            http: HttpClient::new(config)?,
        })
    }
}

fn parse_rerank_response(v: &Value, n: usize) -> Result<Vec<f64>, RerankError> {
    let items = v
        .as_array()
        .or_else(|| v.get("results").and_then(Value::as_array))
        .ok_or_else(|| RerankError::Other("response has no result array".into()))?;
    let mut scores = vec![None; n];
    for it in items {
        let idx = it.get("index").and_then(Value::as_u64).map(|i| i as usize);
        let score = it.get("score").or_else(|| it.get("relevance_score")).and_then(Value::as_f64);
        match (idx, score) {
            (Some(i), Some(s)) if i < n => scores[i] = Some(s),
            _ => return Err(RerankError::Other(format!("malformed result entry {it}"))),
        }
    }
    let got = scores.iter().filter(|s| s.is_some()).count();
    if got != n {
        return Err(RerankError::CountMismatch { expected: n, got });
    }
    Ok(scores.into_iter().flatten().collect())
}

impl RerankScorer for RemoteReranker {
    fn score(&self, query: &str, docs: &[&str]) -> Result<Vec<f64>, RerankError> {
        let mut body = json!({"query": query, "texts": docs});
        if !self.http.config().model.is_empty() {
            body["model"] = json!(self.http.config().model);
        }
        let v = self.http.post_json("rerank", &body)?;
        parse_rerank_response(&v, docs.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RerankOutcome {
    pub ranking: Ranking,
    pub fell_back: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Rescores the first `limit` candidates with `scorer`; the rest are dropped.
/// Scorer scores replace the incoming scores. On scorer failure the
/// truncated input is returned with `fell_back` set.
pub fn rerank(
    query: &str,
    candidates: &Ranking,
    scorer: &dyn RerankScorer,
    limit: usize,
    store: &DocumentStore,
) -> RerankOutcome {
    let head = candidates.truncated(limit);
    if head.is_empty() {
        return RerankOutcome {
            ranking: head,
            fell_back: false,
            error: None,
        };
    }
    let texts: Vec<&str> = head
        .entries()
        .iter()
        .map(|s| store.get(&s.doc_id).map_or("", |d| d.text.as_str()))
        .collect();
    let result = scorer.score(query, &texts).and_then(|scores| {
        if scores.len() != texts.len() {
            Err(RerankError::CountMismatch {
                expected: texts.len(),
                got: scores.len(),
            })
        } else if scores.iter().any(|s| !s.is_finite()) {
            Err(RerankError::Other("non-finite score".into()))
        } else {
            Ok(scores)
        }
    });
    match result {
        Ok(scores) => RerankOutcome {
            ranking: Ranking::from_scores(
                head.entries()
                    .iter()
                    .zip(scores)
                    .map(|(s, score)| Scored::new(s.doc_id.clone(), score))
                    .collect(),
            ),
            fell_back: false,
            error: None,
        },
        Err(e) => {
            tracing::warn!(error = %e, "rerank failed; keeping fused order");
            RerankOutcome {
                ranking: head,
                fell_back: true,
                error: Some(e.to_string()),
            }
        }
    }
}
