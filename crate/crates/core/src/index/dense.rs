use std::collections::HashMap;

use super::{EmbeddingSet, IndexError, Ranking, Scored};
use crate::exec::Exec;

/// Exact cosine-similarity index over L2-normalized vectors.
#[derive(Debug, Clone)]
pub struct DenseIndex {
    dimension: usize,
    ids: Vec<String>,
    by_id: HashMap<String, usize>,
    data: Vec<f32>,
}

fn unit(v: &[f32]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    (norm.is_finite() && norm > 0.0).then(|| v.iter().map(|&x| x as f64 / norm).collect())
}

impl DenseIndex {
    pub const DEFAULT_DIMENSION: usize = 384;

    pub fn new(dimension: usize) -> Self {
        DenseIndex {
            dimension,
            ids: Vec::new(),
            by_id: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn from_embeddings(set: &EmbeddingSet) -> Result<Self, IndexError> {
        let mut idx = DenseIndex::new(set.dimension);
        for (id, v) in &set.entries {
            idx.insert(id, v)?;
        }
        Ok(idx)
    }

    pub fn insert(&mut self, id: &str, v: &[f32]) -> Result<(), IndexError> {
        if v.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: v.len(),
            });
        }
        if self.by_id.contains_key(id) {
            return Err(IndexError::DuplicateId(id.to_owned()));
        }
        let u = unit(v).ok_or_else(|| IndexError::DegenerateVector(id.to_owned()))?;
        self.by_id.insert(id.to_owned(), self.ids.len());
        self.ids.push(id.to_owned());
        self.data.extend(u.into_iter().map(|x| x as f32));
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Stored (normalized) vector for `id`.
    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.by_id
            .get(id)
            .map(|&i| &self.data[i * self.dimension..(i + 1) * self.dimension])
    }

    /// Exhaustive cosine top-k over ids accepted by `allow`.
    pub fn search_filtered(
        &self,
        query: &[f32],
        top_k: usize,
        allow: &(dyn Fn(&str) -> bool + Sync),
        exec: Exec,
    ) -> Result<Ranking, IndexError> {
        if query.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: query.len(),
            });
        }
        let Some(q) = unit(query) else {
            return Ok(Ranking::default());
        };
        let d = self.dimension;
        let scores = exec.map_range(self.ids.len(), |i| {
            if !allow(&self.ids[i]) {
                return None;
            }
            let row = &self.data[i * d..(i + 1) * d];
            Some(row.iter().zip(&q).map(|(&x, &y)| x as f64 * y).sum::<f64>())
        });
        let items = scores
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| Scored::new(self.ids[i].clone(), s)))
            .collect();
        Ok(Ranking::top_k(items, top_k))
    }

    pub fn search(&self, query: &[f32], top_k: usize) -> Result<Ranking, IndexError> {
        self.search_filtered(query, top_k, &|_| true, Exec::default())
    }
}

pub fn search_dense(idx: &DenseIndex, query_vec: &[f32], top_k: usize) -> Result<Ranking, IndexError> {
    idx.search(query_vec, top_k)
}
