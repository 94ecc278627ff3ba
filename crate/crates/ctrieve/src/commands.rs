//! Command implementations. Each is a deterministic function of its inputs,
//! the run config and the seed; the binary only parses flags and prints.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ctrieve_core::corpus::{self, Manifest, PairedSample};
use ctrieve_core::metrics::{evaluate, EvalItem, EvalPair, KeywordQuery, MetricsReport};
use ctrieve_core::params::ModelParams;
use ctrieve_core::retrieval::{top_k, RankedResult, RetrievalIndex};
use ctrieve_core::rng;
use ctrieve_core::synth::{self, SynthConfig};
use ctrieve_core::text::{tokenize, TextEncoder, TextEncoderVariant, Vocabulary};
use ctrieve_core::train::{train_with, EpochLog, TrainItem, TrainOutcome};
use ctrieve_core::vision::{resize, VisionEncoder, Volume};
use ctrieve_core::EmbeddingVector;
use serde::Serialize;

use crate::anonymize::PatternTable;
use crate::config::{RunConfig, SplitSelection};
use crate::curate::{curate, manifest_path, CurateOutcome};
use crate::error::{CliError, CliResult};
use crate::formats::{self, Checkpoint, EmbeddingRecord};

const TEXT_INIT_STREAM: u64 = 0x7465_7874;
const VISION_INIT_STREAM: u64 = 0x7669_7369;

/// A manifest together with the directory its relative volume paths hang off.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: Manifest,
    pub base: PathBuf,
}

impl Corpus {
    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(Self {
            manifest: formats::read_manifest(path)?,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn select(&self, sel: SplitSelection) -> Vec<&PairedSample> {
        self.manifest.samples().iter().filter(|s| sel.admits(s.split)).collect()
    }

    /// Loads a sample's volume and resizes it to the standard cube.
    pub fn volume(&self, sample: &PairedSample, side: usize) -> CliResult<Volume> {
        let raw = formats::read_volume(&self.base.join(&sample.volume.data_path))?;
        Ok(resize(&raw.volume, [side, side, side])?)
    }
}

fn nonempty<'a>(samples: Vec<&'a PairedSample>, sel: SplitSelection) -> CliResult<Vec<&'a PairedSample>> {
    if samples.is_empty() {
        Err(CliError::data(format!("the {sel:?} selection of the manifest is empty")))
    } else {
        Ok(samples)
    }
}

/// Writes `<id>.vol`, `<id>.txt`, `<id>.labels` and `manifest.jsonl` into `out_dir`.
pub fn synth(out_dir: &Path, cfg: &SynthConfig) -> CliResult<Manifest> {
    let samples = synth::generate(cfg)?;
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let mut records = Vec::with_capacity(samples.len());
    for s in &samples {
        let vol_name = format!("{}.vol", s.id);
        formats::write_volume(&out_dir.join(&vol_name), &s.volume)?;
        formats::write_atomic(&out_dir.join(format!("{}.txt", s.id)), format!("{}\n", s.report).as_bytes())?;
        let labels: String = s.keywords.iter().map(|k| format!("{k}\n")).collect();
        formats::write_atomic(&out_dir.join(format!("{}.labels", s.id)), labels.as_bytes())?;
        let [width, height, depth] = s.volume.dims();
        records.push(PairedSample {
            id: s.id.clone(),
            volume: corpus::VolumeRecord {
                id: s.id.clone(),
                width,
                height,
                depth,
                missing_fraction: 0.0,
                data_path: vol_name,
            },
            report: corpus::ReportRecord::new(s.id.clone(), s.report.clone()),
            keywords: s.keywords.clone(),
            split: corpus::Split::Unassigned,
        });
    }
    let manifest = Manifest::new(records)?;
    formats::write_manifest(&out_dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}

/// Curates `raw_dir` into `out`, with the rejection log next to it unless
/// `rejections` is given.
pub fn curate_cmd(
    raw_dir: &Path,
    out: &Path,
    patterns: Option<&Path>,
    rejections: Option<&Path>,
) -> CliResult<CurateOutcome> {
    let table = match patterns {
        Some(p) => PatternTable::load(p)?,
        None => PatternTable::default(),
    };
    let out_dir = parent_dir(out);
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let outcome = curate(raw_dir, &table, out_dir)?;
    formats::write_manifest(out, &outcome.manifest)?;
    let log_path = match rejections {
        Some(p) => p.to_path_buf(),
        None => out.with_extension("rejections.tsv"),
    };
    formats::write_atomic(&log_path, outcome.rejection_log().as_bytes())?;
    Ok(outcome)
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

/// Assigns splits and writes the result; relative volume paths are rewritten
/// when the output lives in a different directory.
pub fn split_cmd(input: &Path, out: &Path, seed: u64) -> CliResult<Manifest> {
    let manifest = formats::read_manifest(input)?;
    let mut split = corpus::split(&manifest, seed)?;
    let (from, to) = (parent_dir(input), parent_dir(out));
    fs::create_dir_all(to).map_err(CliError::io(to))?;
    let same_dir = fs::canonicalize(from).ok() == fs::canonicalize(to).ok();
    if !same_dir {
        let mut samples = split.into_samples();
        for s in &mut samples {
            if Path::new(&s.volume.data_path).is_relative() {
                s.volume.data_path = manifest_path(&from.join(&s.volume.data_path), to)?;
            }
        }
        split = Manifest::new(samples)?;
    }
    formats::write_manifest(out, &split)?;
    Ok(split)
}

#[derive(Serialize)]
struct StatsOutput {
    stats: corpus::CorpusStats,
    word_frequency: Vec<(String, usize)>,
}

/// Corpus statistics and the `top` most frequent words as pretty JSON.
pub fn stats_cmd(input: &Path, stopwords: Option<&Path>, top: usize) -> CliResult<String> {
    let manifest = formats::read_manifest(input)?;
    let stop = match stopwords {
        Some(p) => formats::read_word_list(p)?,
        None => BTreeSet::new(),
    };
    let mut freq = corpus::word_frequency(&manifest, &stop);
    freq.truncate(top);
    let out = StatsOutput {
        stats: corpus::stats(&manifest)?,
        word_frequency: freq,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("stats serialize");
    s.push('\n');
    Ok(s)
}

pub fn build_vocab(corpus: &Corpus, sel: SplitSelection, min_count: usize) -> CliResult<Vocabulary> {
    let samples = nonempty(corpus.select(sel), sel)?;
    let vocab = Vocabulary::build(samples.iter().map(|s| s.report.text.as_str()), min_count);
    if vocab.is_empty() {
        return Err(CliError::data("no word reaches the minimum count"));
    }
    Ok(vocab)
}

/// Fresh encoders for `vocab`, seeded from the config seed.
pub fn init_model(vocab: &Vocabulary, cfg: &RunConfig) -> CliResult<ModelParams> {
    let text = TextEncoder::init(
        vocab.len(),
        cfg.dim,
        cfg.encoder_variant,
        rng::stream_seed(cfg.seed, TEXT_INIT_STREAM),
    )?;
    let vision = VisionEncoder::init(cfg.patch, cfg.dim, rng::stream_seed(cfg.seed, VISION_INIT_STREAM))?;
    Ok(ModelParams::new(text, vision)?)
}

pub fn load_model(path: &Path) -> CliResult<ModelParams> {
    let c = formats::read_checkpoint(path)?;
    Ok(ModelParams::from_encoder_params(&c.params, c.variant)?)
}

pub fn save_model(path: &Path, params: &ModelParams) -> CliResult<()> {
    formats::write_checkpoint(
        path,
        &Checkpoint {
            variant: params.text.variant,
            params: params.to_encoder_params(),
        },
    )
}

fn check_vocab(params: &ModelParams, vocab: &Vocabulary) -> CliResult<()> {
    if params.text.vocab_size != vocab.len() {
        return Err(CliError::data(format!(
            "checkpoint expects a vocabulary of {} entries, vocabulary file has {}",
            params.text.vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

/// Trains from `init` (or fresh encoders) on the configured training split.
pub fn train_cmd(
    cfg: &RunConfig,
    corpus: &Corpus,
    vocab: &Vocabulary,
    init: Option<ModelParams>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> CliResult<TrainOutcome> {
    cfg.validate()?;
    let init = match init {
        Some(p) => p,
        None => init_model(vocab, cfg)?,
    };
    check_vocab(&init, vocab)?;
    let samples = nonempty(corpus.select(cfg.train_split), cfg.train_split)?;
    let data = samples
        .iter()
        .map(|s| {
            Ok(TrainItem {
                tokens: tokenize(&s.report.text, vocab),
                volume: corpus.volume(s, cfg.standard_side)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(train_with(&data, init, &cfg.train_config(), &mut on_epoch)?)
}

pub fn history_jsonl(history: &[EpochLog]) -> String {
    history
        .iter()
        .map(|h| serde_json::to_string(h).expect("history serializes") + "\n")
        .collect()
}

/// Deterministic text and image embeddings of the configured evaluation split.
pub fn embed_cmd(
    cfg: &RunConfig,
    corpus: &Corpus,
    vocab: &Vocabulary,
    params: &ModelParams,
) -> CliResult<Vec<EmbeddingRecord>> {
    check_vocab(params, vocab)?;
    let samples = nonempty(corpus.select(cfg.eval_split), cfg.eval_split)?;
    samples
        .iter()
        .map(|s| {
            let item = EvalItem {
                id: s.id.clone(),
                tokens: tokenize(&s.report.text, vocab),
                volume: corpus.volume(s, cfg.standard_side)?,
                keywords: s.keywords.clone(),
            };
            let pair = ctrieve_core::metrics::embed_pair(params, cfg.sampler(), &item)?;
            Ok(EmbeddingRecord {
                id: pair.id,
                text: pair.text.into_vec(),
                image: pair.image.into_vec(),
                keywords: pair.keywords,
            })
        })
        .collect()
}

pub fn encode_query(params: &ModelParams, vocab: &Vocabulary, cfg: &RunConfig, text: &str) -> CliResult<EmbeddingVector> {
    Ok(params.text.encode(&cfg.sampler().truncate(&tokenize(text, vocab)))?)
}

/// One query per keyword label found in `records`, in sorted order.
pub fn keyword_queries(
    params: &ModelParams,
    vocab: &Vocabulary,
    cfg: &RunConfig,
    records: &[EmbeddingRecord],
) -> CliResult<Vec<KeywordQuery>> {
    let keywords: BTreeSet<&String> = records.iter().flat_map(|r| &r.keywords).collect();
    keywords
        .into_iter()
        .map(|k| {
            Ok(KeywordQuery {
                keyword: k.clone(),
                embedding: encode_query(params, vocab, cfg, k)?,
            })
        })
        .collect()
}

pub fn eval_records(
    label: &str,
    records: &[EmbeddingRecord],
    queries: &[KeywordQuery],
    cfg: &RunConfig,
) -> CliResult<MetricsReport> {
    let pairs = records
        .iter()
        .map(|r| {
            Ok(EvalPair {
                id: r.id.clone(),
                text: EmbeddingVector::new(r.text.clone())?,
                image: EmbeddingVector::new(r.image.clone())?,
                keywords: r.keywords.clone(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(evaluate(label, &pairs, queries, cfg.keyword_pool)?)
}

pub fn eval_cmd(
    label: &str,
    cfg: &RunConfig,
    corpus: &Corpus,
    vocab: &Vocabulary,
    params: &ModelParams,
) -> CliResult<MetricsReport> {
    let records = embed_cmd(cfg, corpus, vocab, params)?;
    let queries = keyword_queries(params, vocab, cfg, &records)?;
    eval_records(label, &records, &queries, cfg)
}

/// Top `k` images of the evaluation split for a free-text or keyword query.
pub fn query_cmd(
    cfg: &RunConfig,
    corpus: &Corpus,
    vocab: &Vocabulary,
    params: &ModelParams,
    text: &str,
    k: usize,
) -> CliResult<RankedResult> {
    let records = embed_cmd(cfg, corpus, vocab, params)?;
    let index = RetrievalIndex::build(
        records
            .into_iter()
            .map(|r| Ok((r.id, EmbeddingVector::new(r.image)?)))
            .collect::<CliResult<Vec<_>>>()?,
    )?;
    let q = encode_query(params, vocab, cfg, text)?;
    Ok(top_k(&index, &q, k)?)
}

/// The full configuration and its three single-switch ablations:
/// sampler off, consistency loss off, generic text encoder.
pub fn ablation_configs(cfg: &RunConfig) -> Vec<(&'static str, RunConfig)> {
    vec![
        ("full", cfg.clone()),
        (
            "no_sampler",
            RunConfig {
                sampler_enabled: false,
                ..cfg.clone()
            },
        ),
        (
            "no_mse",
            RunConfig {
                enable_mse: false,
                ..cfg.clone()
            },
        ),
        (
            "generic_encoder",
            RunConfig {
                encoder_variant: match cfg.encoder_variant {
                    TextEncoderVariant::Domain => TextEncoderVariant::Generic,
                    TextEncoderVariant::Generic => TextEncoderVariant::Domain,
                },
                ..cfg.clone()
            },
        ),
    ]
}

pub fn ablate_cmd(cfg: &RunConfig, corpus: &Corpus, vocab: &Vocabulary) -> CliResult<Vec<MetricsReport>> {
    ablation_configs(cfg)
        .into_iter()
        .map(|(label, c)| {
            log::info!("ablation {label}: training {} epochs", c.epochs);
            let out = train_cmd(&c, corpus, vocab, None, |_| {})?;
            eval_cmd(label, &c, corpus, vocab, &out.params)
        })
        .collect()
}
