//! Recall@K / median rank / mean rank for paired retrieval, precision@K for
//! keyword retrieval, and the full evaluation report.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::embed_volume;
use crate::params::ModelParams;
use crate::retrieval::{rank_of, top_k, RankedResult, RetrievalIndex};
use crate::tensor::EmbeddingVector;
use crate::text::{SamplerMode, TokenSequence};
use crate::vision::Volume;
use crate::{Error, Result};

pub const RECALL_KS: [usize; 3] = [1, 5, 10];
pub const PRECISION_KS: [usize; 3] = [20, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    /// Lower of the two middle ranks for an even count.
    pub median_rank: usize,
    pub mean_rank: f64,
    pub queries: usize,
}

pub fn recall_at(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

pub fn recall_mdr_mnr(ranks: &[usize]) -> Result<RankSummary> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidParameter("ranks are 1-based".into()));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let mean = sorted.iter().map(|&r| r as f64).sum::<f64>() / sorted.len() as f64;
    Ok(RankSummary {
        r1: recall_at(ranks, 1),
        r5: recall_at(ranks, 5),
        r10: recall_at(ranks, 10),
        median_rank: sorted[(sorted.len() - 1) / 2],
        mean_rank: mean,
        queries: ranks.len(),
    })
}

/// Fraction of the first `k` hits whose label set contains `keyword`.
pub fn precision_at_k(
    result: &RankedResult,
    keyword: &str,
    labels: &BTreeMap<String, BTreeSet<String>>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > result.len() {
        return Err(Error::KExceedsResults { k, len: result.len() });
    }
    let relevant = result.hits[..k]
        .iter()
        .filter(|h| labels.get(&h.id).is_some_and(|set| set.contains(keyword)))
        .count();
    Ok(relevant as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAt {
    pub k: usize,
    /// `None` when the candidate pool holds fewer than `k` items.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordPrecision {
    pub keyword: String,
    pub pool_size: usize,
    pub precision: Vec<PrecisionAt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub pairs: usize,
    pub text_to_image: RankSummary,
    pub image_to_text: RankSummary,
    pub keywords: Vec<KeywordPrecision>,
}

/// Candidate pool for keyword queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordPool {
    /// Only pairs carrying at least one keyword label.
    #[default]
    Labeled,
    /// Every evaluated pair.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub id: String,
    pub text: EmbeddingVector,
    pub image: EmbeddingVector,
    pub keywords: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordQuery {
    pub keyword: String,
    pub embedding: EmbeddingVector,
}

/// Ranks of each pair's counterpart: `(text -> image, image -> text)`.
pub fn paired_ranks(pairs: &[EvalPair]) -> Result<(Vec<usize>, Vec<usize>)> {
    let images = RetrievalIndex::build(pairs.iter().map(|p| (p.id.clone(), p.image.clone())))?;
    let texts = RetrievalIndex::build(pairs.iter().map(|p| (p.id.clone(), p.text.clone())))?;
    let mut t2i = Vec::with_capacity(pairs.len());
    let mut i2t = Vec::with_capacity(pairs.len());
    for p in pairs {
        t2i.push(rank_of(&images, &p.text, &p.id)?);
        i2t.push(rank_of(&texts, &p.image, &p.id)?);
    }
    Ok((t2i, i2t))
}

pub fn evaluate(
    label: impl Into<String>,
    pairs: &[EvalPair],
    queries: &[KeywordQuery],
    pool: KeywordPool,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let (t2i, i2t) = paired_ranks(pairs)?;
    let labels: BTreeMap<String, BTreeSet<String>> =
        pairs.iter().map(|p| (p.id.clone(), p.keywords.clone())).collect();
    let candidates = pairs
        .iter()
        .filter(|p| pool == KeywordPool::All || !p.keywords.is_empty())
        .map(|p| (p.id.clone(), p.image.clone()));
    let pool_index = RetrievalIndex::build(candidates)?;
    let mut keywords = Vec::with_capacity(queries.len());
    if !queries.is_empty() && pool_index.is_empty() {
        return Err(Error::Empty("keyword candidate pool"));
    }
    for q in queries {
        let max_k = PRECISION_KS.iter().copied().max().unwrap_or(1);
        let ranked = top_k(&pool_index, &q.embedding, max_k)?;
        let precision = PRECISION_KS
            .iter()
            .map(|&k| {
                let value = if k <= ranked.len() {
                    Some(precision_at_k(&ranked, &q.keyword, &labels, k)?)
                } else {
                    None
                };
                Ok(PrecisionAt { k, value })
            })
            .collect::<Result<Vec<_>>>()?;
        keywords.push(KeywordPrecision {
            keyword: q.keyword.clone(),
            pool_size: pool_index.len(),
            precision,
        });
    }
    Ok(MetricsReport {
        label: label.into(),
        pairs: pairs.len(),
        text_to_image: recall_mdr_mnr(&t2i)?,
        image_to_text: recall_mdr_mnr(&i2t)?,
        keywords,
    })
}

/// One evaluation sample before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub tokens: TokenSequence,
    pub volume: Volume,
    pub keywords: BTreeSet<String>,
}

/// Deterministic embedding of one sample: the truncated text and the
/// unaugmented volume.
pub fn embed_pair(params: &ModelParams, sampler: SamplerMode, item: &EvalItem) -> Result<EvalPair> {
    Ok(EvalPair {
        id: item.id.clone(),
        text: params.text.encode(&sampler.truncate(&item.tokens))?,
        image: embed_volume(&params.vision, &item.volume)?,
        keywords: item.keywords.clone(),
    })
}
