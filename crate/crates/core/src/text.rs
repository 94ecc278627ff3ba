//! Report tokenization, segment sampling and the frozen toy text encoder.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::EmbeddingVector;
use crate::{rng, Error, Result};

pub const PAD_INDEX: u32 = 0;
pub const UNKNOWN_INDEX: u32 = 1;
pub const RESERVED: usize = 2;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Default contiguous window length.
pub const DEFAULT_WINDOW: usize = 100;
/// Default word count for the random-words sampler.
pub const DEFAULT_RANDOM_WORDS: usize = 64;

/// Case-folded words; whitespace and punctuation both separate.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Builds from real tokens in order; index of the i-th accepted token is `i + 2`.
    /// Duplicates and reserved names are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: vec![PAD_TOKEN.to_string(), UNKNOWN_TOKEN.to_string()],
            index: BTreeMap::new(),
        };
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() || tok == PAD_TOKEN || tok == UNKNOWN_TOKEN || vocab.index.contains_key(&tok) {
                continue;
            }
            vocab.index.insert(tok.clone(), vocab.tokens.len() as u32);
            vocab.tokens.push(tok);
        }
        vocab
    }

    /// Words seen at least `min_count` times, most frequent first, ties lexicographic.
    pub fn build<'a, I>(texts: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for w in split_words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        Self::from_tokens(ranked.into_iter().map(|(w, _)| w))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    /// Real tokens in index order, without the reserved entries.
    pub fn real_tokens(&self) -> &[String] {
        &self.tokens[RESERVED..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub indices: Vec<u32>,
    pub original_length: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenSequence {
    let indices: Vec<u32> = split_words(text)
        .map(|w| vocab.get(&w).unwrap_or(UNKNOWN_INDEX))
        .collect();
    TokenSequence {
        original_length: indices.len(),
        indices,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "length", rename_all = "snake_case")]
pub enum SamplerMode {
    /// Uniformly placed window of this many consecutive tokens.
    Contiguous(usize),
    /// This many distinct positions, kept in their original order.
    RandomWords(usize),
}

impl Default for SamplerMode {
    fn default() -> Self {
        SamplerMode::Contiguous(DEFAULT_WINDOW)
    }
}

impl SamplerMode {
    pub fn length(self) -> usize {
        match self {
            SamplerMode::Contiguous(l) | SamplerMode::RandomWords(l) => l,
        }
    }

    /// Deterministic view used at evaluation: the first `length` tokens.
    pub fn truncate(self, t: &TokenSequence) -> TokenSequence {
        let n = self.length().min(t.len());
        TokenSequence {
            indices: t.indices[..n].to_vec(),
            original_length: t.original_length,
        }
    }
}

pub fn sample_text(t: &TokenSequence, mode: SamplerMode, seed: u64) -> Result<TokenSequence> {
    if mode.length() == 0 {
        return Err(Error::InvalidParameter("sampler length must be at least 1".to_string()));
    }
    let len = t.len();
    let mut rng = rng::rng(seed);
    let indices = match mode {
        SamplerMode::Contiguous(l) => {
            if len <= l {
                t.indices.clone()
            } else {
                let start = rng.random_range(0..=len - l);
                t.indices[start..start + l].to_vec()
            }
        }
        SamplerMode::RandomWords(m) => {
            if len <= m {
                t.indices.clone()
            } else {
                let mut positions = rand::seq::index::sample(&mut rng, len, m).into_vec();
                positions.sort_unstable();
                positions.into_iter().map(|p| t.indices[p]).collect()
            }
        }
    };
    Ok(TokenSequence {
        indices,
        original_length: t.original_length,
    })
}

/// How token indices address the embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextEncoderVariant {
    /// One row per vocabulary entry.
    #[default]
    Domain,
    /// Real tokens share rows: index `i` reads row `2 + (i - 2) % buckets`
    /// with `buckets = max(1, (vocab - 2) / 4)`. Models an encoder whose
    /// vocabulary does not fit the report language.
    Generic,
}

/// Mean of embedding rows, then `tanh(weight * mean + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub vocab_size: usize,
    pub dim: usize,
    /// `vocab_size x dim`, row-major; the padding row is zero.
    pub embedding: Vec<f64>,
    /// `dim x dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub variant: TextEncoderVariant,
    pub frozen: bool,
}

impl TextEncoder {
    pub fn init(vocab_size: usize, dim: usize, variant: TextEncoderVariant, seed: u64) -> Result<Self> {
        if vocab_size <= RESERVED || dim == 0 {
            return Err(Error::InvalidParameter(alloc::format!(
                "text encoder needs vocab > {RESERVED} and dim >= 1, got {vocab_size} x {dim}"
            )));
        }
        let mut rng = rng::rng(seed);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let mut embedding: Vec<f64> = (0..vocab_size * dim).map(|_| unit.sample(&mut rng)).collect();
        embedding[..dim].fill(0.0);
        let scale = 1.0 / libm::sqrt(dim as f64);
        let weight = (0..dim * dim).map(|_| unit.sample(&mut rng) * scale).collect();
        let bias = (0..dim).map(|_| unit.sample(&mut rng) * 0.1).collect();
        Ok(Self {
            vocab_size,
            dim,
            embedding,
            weight,
            bias,
            variant,
            frozen: true,
        })
    }

    pub fn row_of(&self, index: u32) -> usize {
        let i = index as usize;
        match self.variant {
            TextEncoderVariant::Domain => i,
            TextEncoderVariant::Generic => {
                if i < RESERVED {
                    i
                } else {
                    let buckets = ((self.vocab_size - RESERVED) / 4).max(1);
                    RESERVED + (i - RESERVED) % buckets
                }
            }
        }
    }

    /// An empty sequence is read as a single padding token.
    pub fn encode(&self, t: &TokenSequence) -> Result<EmbeddingVector> {
        let mut mean = vec![0.0; self.dim];
        let mut counted = 0usize;
        for &idx in &t.indices {
            if idx as usize >= self.vocab_size {
                return Err(Error::DimensionMismatch {
                    expected: self.vocab_size,
                    found: idx as usize + 1,
                });
            }
            if idx == PAD_INDEX {
                continue;
            }
            let row = self.row_of(idx);
            for (m, e) in mean.iter_mut().zip(&self.embedding[row * self.dim..(row + 1) * self.dim]) {
                *m += e;
            }
            counted += 1;
        }
        if counted > 0 {
            mean.iter_mut().for_each(|m| *m /= counted as f64);
        }
        let out = (0..self.dim)
            .map(|r| {
                let pre: f64 = self.weight[r * self.dim..(r + 1) * self.dim]
                    .iter()
                    .zip(&mean)
                    .map(|(w, m)| w * m)
                    .sum::<f64>()
                    + self.bias[r];
                libm::tanh(pre)
            })
            .collect();
        EmbeddingVector::new(out)
    }
}
