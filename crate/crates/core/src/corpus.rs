//! Paired volume/report corpus: screening rules, splitting and summaries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::text::split_words;
use crate::{rng, Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Volumes with a larger fraction of missing voxels are dropped.
pub const MAX_MISSING_FRACTION: f64 = 0.30;
/// Volumes with any side shorter than this are dropped.
pub const MIN_VOLUME_SIDE: usize = 96;
/// Reports with fewer words are dropped.
pub const MIN_REPORT_WORDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub missing_fraction: f64,
    pub data_path: String,
}

impl VolumeRecord {
    pub fn voxel_count(&self) -> usize {
        self.width * self.height * self.depth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub text: String,
    pub word_count: usize,
}

impl ReportRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = word_count(&text);
        Self {
            id: id.into(),
            text,
            word_count,
        }
    }
}

/// Whitespace-delimited token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub id: String,
    pub volume: VolumeRecord,
    pub report: ReportRecord,
    pub keywords: BTreeSet<String>,
    pub split: Split,
}

/// Samples kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    samples: Vec<PairedSample>,
    pub schema_version: u32,
}

impl Manifest {
    pub fn new(mut samples: Vec<PairedSample>) -> Result<Self> {
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        let mut volume_ids = BTreeSet::new();
        let mut report_ids = BTreeSet::new();
        for (i, s) in samples.iter().enumerate() {
            if i > 0 && samples[i - 1].id == s.id {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            if !volume_ids.insert(s.volume.id.as_str()) {
                return Err(Error::DuplicateId(s.volume.id.clone()));
            }
            if !report_ids.insert(s.report.id.as_str()) {
                return Err(Error::DuplicateId(s.report.id.clone()));
            }
        }
        Ok(Self {
            samples,
            schema_version: MANIFEST_SCHEMA_VERSION,
        })
    }

    pub fn samples(&self) -> &[PairedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &PairedSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn into_samples(self) -> Vec<PairedSample> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rejection {
    MissingValues { fraction: f64 },
    Dimension { min_side: usize },
    ShortReport { words: usize },
    Unpaired,
}

impl Rejection {
    pub fn rule(&self) -> &'static str {
        match self {
            Rejection::MissingValues { .. } => "missing",
            Rejection::Dimension { .. } => "dimension",
            Rejection::ShortReport { .. } => "short_report",
            Rejection::Unpaired => "unpaired",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::MissingValues { fraction } => {
                write!(f, "missing: {fraction:.4} of voxels missing (limit {MAX_MISSING_FRACTION})")
            }
            Rejection::Dimension { min_side } => {
                write!(f, "dimension: smallest side {min_side} < {MIN_VOLUME_SIDE}")
            }
            Rejection::ShortReport { words } => {
                write!(f, "short_report: {words} words < {MIN_REPORT_WORDS}")
            }
            Rejection::Unpaired => f.write_str("unpaired: no matching volume/report"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Keep,
    Reject(Rejection),
}

impl Verdict {
    pub fn is_keep(&self) -> bool {
        matches!(self, Verdict::Keep)
    }
}

/// Missing-value screen is checked before the size screen.
pub fn filter_volume(v: &VolumeRecord) -> Verdict {
    if v.missing_fraction > MAX_MISSING_FRACTION {
        return Verdict::Reject(Rejection::MissingValues {
            fraction: v.missing_fraction,
        });
    }
    let min_side = v.width.min(v.height).min(v.depth);
    if min_side < MIN_VOLUME_SIDE {
        return Verdict::Reject(Rejection::Dimension { min_side });
    }
    Verdict::Keep
}

pub fn filter_report(r: &ReportRecord) -> Verdict {
    if r.word_count < MIN_REPORT_WORDS {
        Verdict::Reject(Rejection::ShortReport {
            words: r.word_count,
        })
    } else {
        Verdict::Keep
    }
}

/// Train/val/test sizes for `n` samples: `floor(0.7n)`, `floor(0.1n)`, remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let val = n / 10;
    (train, val, n - train - val)
}

/// Assigns every sample to train/val/test from a seeded shuffle.
pub fn split(manifest: &Manifest, seed: u64) -> Result<Manifest> {
    let n = manifest.len();
    if n == 0 {
        return Err(Error::Empty("manifest"));
    }
    if let Some(s) = manifest.samples.iter().find(|s| s.split != Split::Unassigned) {
        return Err(Error::InvalidParameter(alloc::format!(
            "sample {:?} is already assigned to {}",
            s.id,
            s.split
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let (train, val, _) = split_sizes(n);
    let mut samples = manifest.samples.clone();
    for (position, &idx) in order.iter().enumerate() {
        samples[idx].split = if position < train {
            Split::Train
        } else if position < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Manifest::new(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub average: f64,
    pub median: usize,
    pub min: usize,
    pub max: usize,
}

impl StatSummary {
    /// Median is the lower of the two middle values for even counts.
    pub fn of(values: &[usize]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("statistics input"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let total: f64 = sorted.iter().map(|&v| v as f64).sum();
        Ok(Self {
            average: total / sorted.len() as f64,
            median: sorted[(sorted.len() - 1) / 2],
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub image_width: StatSummary,
    pub image_height: StatSummary,
    pub slices: StatSummary,
    pub report_length: StatSummary,
}

pub fn stats(manifest: &Manifest) -> Result<CorpusStats> {
    if manifest.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    let column = |f: fn(&PairedSample) -> usize| -> Vec<usize> { manifest.samples.iter().map(f).collect() };
    Ok(CorpusStats {
        samples: manifest.len(),
        image_width: StatSummary::of(&column(|s| s.volume.width))?,
        image_height: StatSummary::of(&column(|s| s.volume.height))?,
        slices: StatSummary::of(&column(|s| s.volume.depth))?,
        report_length: StatSummary::of(&column(|s| s.report.word_count))?,
    })
}

/// Case-folded word counts with stopwords removed, most frequent first and
/// ties in lexicographic order.
pub fn word_frequency(manifest: &Manifest, stopwords: &BTreeSet<String>) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for sample in &manifest.samples {
        for word in split_words(&sample.report.text) {
            if !stopwords.contains(&word) {
                *counts.entry(word).or_default() += 1;
            }
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order already gives the lexicographic tie-break; the sort is stable.
    out.sort_by(|a, b| b.1.cmp(&a.1));
    out
}
