//! Exact cosine search over an immutable, id-sorted embedding table.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::fusion::cosine_with_norms;
use crate::tensor::EmbeddingVector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<(String, EmbeddingVector)>,
}

impl RetrievalIndex {
    pub fn build(entries: impl IntoIterator<Item = (String, EmbeddingVector)>) -> Result<Self> {
        let mut entries: Vec<(String, EmbeddingVector)> = entries.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::DuplicateId(pair[0].0.clone()));
            }
        }
        if let Some(first) = entries.first() {
            let dim = first.1.dim();
            if let Some(bad) = entries.iter().find(|e| e.1.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: bad.1.dim(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.1.dim())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.0.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.entries
            .binary_search_by(|e| e.0.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    fn check_query(&self, query: &EmbeddingVector) -> Result<()> {
        let dim = self.dim().ok_or(Error::Empty("retrieval index"))?;
        if dim != query.dim() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: query.dim(),
            });
        }
        Ok(())
    }

    fn score(&self, i: usize, query: &EmbeddingVector) -> f64 {
        let e = &self.entries[i].1;
        cosine_with_norms(query.as_slice(), query.norm(), e.as_slice(), e.norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Descending score, ties by ascending id.
fn hit_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedResult {
    pub hits: Vec<Hit>,
}

impl RankedResult {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

/// The `k` best entries by cosine similarity (all entries when `k` exceeds the index).
/// Entry positions follow id order, so comparing positions breaks ties by id.
pub fn top_k(index: &RetrievalIndex, query: &EmbeddingVector, k: usize) -> Result<RankedResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    index.check_query(query)?;
    let mut scored: Vec<(usize, f64)> = (0..index.len()).map(|i| (i, index.score(i, query))).collect();
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, hit_order);
        scored.truncate(k);
    }
    scored.sort_by(hit_order);
    Ok(RankedResult {
        hits: scored
            .into_iter()
            .map(|(i, score)| Hit {
                id: index.entries[i].0.clone(),
                score,
            })
            .collect(),
    })
}

/// 1-based position of `target` in the full ranking for `query`.
pub fn rank_of(index: &RetrievalIndex, query: &EmbeddingVector, target: &str) -> Result<usize> {
    index.check_query(query)?;
    let pos = index
        .entries
        .binary_search_by(|e| e.0.as_str().cmp(target))
        .map_err(|_| Error::MissingId(target.into()))?;
    let target_score = index.score(pos, query);
    let ahead = (0..index.len())
        .filter(|&i| i != pos && hit_order(&(i, index.score(i, query)), &(pos, target_score)) == Ordering::Less)
        .count();
    Ok(ahead + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn e(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn index() -> RetrievalIndex {
        RetrievalIndex::build(vec![
            ("c".to_string(), e(&[1.0, 0.0])),
            ("a".to_string(), e(&[0.0, 1.0])),
            ("b".to_string(), e(&[1.0, 1.0])),
        ])
        .unwrap()
    }

    #[test]
    fn self_query_ranks_first() {
        let idx = index();
        let r = top_k(&idx, &e(&[1.0, 1.0]), 1).unwrap();
        assert_eq!(r.hits[0].id, "b");
        assert!((r.hits[0].score - 1.0).abs() < 1e-15);
        assert_eq!(rank_of(&idx, &e(&[1.0, 1.0]), "b").unwrap(), 1);
    }

    #[test]
    fn oversized_k_returns_everything() {
        let r = top_k(&index(), &e(&[1.0, 0.2]), 10).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn ties_break_by_id() {
        let idx = RetrievalIndex::build(vec![
            ("z".to_string(), e(&[2.0, 0.0])),
            ("m".to_string(), e(&[1.0, 0.0])),
            ("q".to_string(), e(&[0.0, 1.0])),
        ])
        .unwrap();
        let q = e(&[1.0, 0.0]);
        let r = top_k(&idx, &q, 3).unwrap();
        assert_eq!(r.hits.iter().map(|h| h.id.as_str()).collect::<Vec<_>>(), ["m", "z", "q"]);
        assert_eq!(rank_of(&idx, &q, "z").unwrap(), 2);
    }

    #[test]
    fn errors() {
        let idx = index();
        assert!(matches!(rank_of(&idx, &e(&[1.0, 0.0]), "nope"), Err(Error::MissingId(_))));
        assert!(top_k(&idx, &e(&[1.0]), 1).is_err());
        assert!(top_k(&idx, &e(&[1.0, 0.0]), 0).is_err());
        let empty = RetrievalIndex::build(vec![]).unwrap();
        assert_eq!(top_k(&empty, &e(&[1.0]), 1), Err(Error::Empty("retrieval index")));
        assert!(RetrievalIndex::build(vec![("a".to_string(), e(&[1.0])), ("a".to_string(), e(&[2.0]))]).is_err());
        assert!(RetrievalIndex::build(vec![("a".to_string(), e(&[1.0])), ("b".to_string(), e(&[2.0, 1.0]))]).is_err());
    }
}
