use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Ranking, Scored};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrfConfig {
    pub k: u32,
}

impl Default for RrfConfig {
    fn default() -> Self {
        RrfConfig { k: 60 }
    }
}

/// Reciprocal rank fusion: each document scores `Σ 1/(k + rank)` over the
/// rankings that contain it, with 1-based ranks.
pub fn rrf_fuse(rankings: &[Ranking], cfg: RrfConfig, top_k: usize) -> Ranking {
    let k = cfg.k.max(1) as f64;
    let mut fused: HashMap<&str, f64> = HashMap::new();
    for r in rankings {
        for (i, s) in r.entries().iter().enumerate() {
            *fused.entry(&s.doc_id).or_default() += 1.0 / (k + (i + 1) as f64);
        }
    }
    let items = fused.into_iter().map(|(id, s)| Scored::new(id, s)).collect();
    Ranking::top_k(items, top_k)
}
