use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctrieve::commands::{self, Corpus};
use ctrieve::config::{parse_named, RunConfig, SamplerKind, SplitSelection};
use ctrieve::error::{CliError, CliResult};
use ctrieve::{formats, report};
use ctrieve_core::loss::SimDirection;
use ctrieve_core::metrics::KeywordPool;
use ctrieve_core::synth::SynthConfig;
use ctrieve_core::text::TextEncoderVariant;

#[derive(Parser)]
#[command(name = "ctrieve", version, about = "Paired volume/report retrieval: curation, training and evaluation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// contiguous | random_words
    #[arg(long, value_parser = parse_named::<SamplerKind>)]
    sampler_mode: Option<SamplerKind>,
    #[arg(long)]
    sampler_length: Option<usize>,
    /// Train on the truncated text instead of sampled segments.
    #[arg(long)]
    no_sampler: bool,
    /// Drop the view-consistency loss.
    #[arg(long)]
    no_mse: bool,
    /// domain | generic
    #[arg(long, value_parser = parse_named::<TextEncoderVariant>)]
    encoder_variant: Option<TextEncoderVariant>,
    /// image_to_text | symmetric
    #[arg(long, value_parser = parse_named::<SimDirection>)]
    direction: Option<SimDirection>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    standard_side: Option<usize>,
    /// Noise sigma for both training views.
    #[arg(long)]
    noise: Option<f64>,
    /// labeled | all
    #[arg(long, value_parser = parse_named::<KeywordPool>)]
    keyword_pool: Option<KeywordPool>,
    /// train | val | test | all
    #[arg(long, value_parser = parse_named::<SplitSelection>)]
    train_split: Option<SplitSelection>,
    /// train | val | test | all
    #[arg(long, value_parser = parse_named::<SplitSelection>)]
    eval_split: Option<SplitSelection>,
}

#[derive(Args)]
struct ModelInputs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct ReportOutputs {
    /// JSON report; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text table.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired corpus with planted text/volume links.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().pairs)]
        pairs: usize,
        #[arg(long, default_value_t = SynthConfig::default().side)]
        side: usize,
        #[arg(long, default_value_t = SynthConfig::default().cell)]
        cell: usize,
        #[arg(long, default_value_t = SynthConfig::default().findings_per_report)]
        findings: usize,
        #[arg(long, default_value_t = SynthConfig::default().noise_sigma)]
        noise: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Screen and anonymize a raw directory into a manifest.
    Curate {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        rejections: Option<PathBuf>,
    },
    /// Assign train/val/test splits.
    Split {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Corpus statistics and word frequencies.
    Stats {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a vocabulary file from manifest reports.
    BuildVocab {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the vision encoder against the frozen text encoder.
    Train {
        #[command(flatten)]
        inputs: ModelInputs,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss log (JSON lines).
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write text and image embeddings of the evaluation split.
    Embed {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Retrieval metrics for a checkpoint or a precomputed embeddings file.
    Eval {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, conflicts_with_all = ["manifest", "checkpoint"])]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "model")]
        label: String,
        #[command(flatten)]
        outputs: ReportOutputs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Rank evaluation-split images for a free-text or keyword query.
    Query {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, required_unless_present = "keyword", conflicts_with = "keyword")]
        text: Option<String>,
        #[arg(long)]
        keyword: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train and evaluate the full config plus its three ablations.
    Ablate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[command(flatten)]
        outputs: ReportOutputs,
        #[command(flatten)]
        overrides: Overrides,
    },
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { cfg.$field = v; } )* };
        }
        set!(seed, alpha, tau, learning_rate, epochs, batch_size, sampler_mode, encoder_variant, direction, dim, patch,
            standard_side, keyword_pool, train_split, eval_split);
        if self.sampler_length.is_some() {
            cfg.sampler_length = self.sampler_length;
        }
        if self.no_sampler {
            cfg.sampler_enabled = false;
        }
        if self.no_mse {
            cfg.enable_mse = false;
        }
        if let Some(n) = self.noise {
            cfg.view_a.noise_sigma = n;
            cfg.view_b.noise_sigma = n;
        }
    }
}

fn required(flag: Option<&PathBuf>, configured: Option<&PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or(configured)
        .cloned()
        .ok_or_else(|| CliError::config(format!("--{name} is required (or set paths.{name} in the config)")))
}

fn announce(command: &str, cfg: &RunConfig) {
    eprintln!("# ctrieve {command}, seed {}", cfg.seed);
    for line in cfg.to_toml().lines() {
        eprintln!("#   {line}");
    }
}

fn write_reports(outputs: &ReportOutputs, reports: &[ctrieve_core::metrics::MetricsReport]) -> CliResult<()> {
    if let Some(t) = &outputs.table {
        formats::write_atomic(t, report::to_table(reports).as_bytes())?;
    }
    formats::emit(outputs.out.as_deref(), &report::to_json(reports))
}

struct Loaded {
    corpus: Corpus,
    vocab: ctrieve_core::text::Vocabulary,
}

fn load_inputs(manifest: Option<&PathBuf>, vocab: Option<&PathBuf>, cfg: &RunConfig) -> CliResult<Loaded> {
    let manifest = required(manifest, cfg.paths.manifest.as_ref(), "manifest")?;
    let vocab = required(vocab, cfg.paths.vocab.as_ref(), "vocab")?;
    Ok(Loaded {
        corpus: Corpus::load(&manifest)?,
        vocab: formats::read_vocab(&vocab)?,
    })
}

fn checkpoint(inputs: &ModelInputs, cfg: &RunConfig) -> CliResult<ctrieve_core::params::ModelParams> {
    commands::load_model(&required(inputs.checkpoint.as_ref(), cfg.paths.checkpoint.as_ref(), "checkpoint")?)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth { out, pairs, side, cell, findings, noise, seed } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            announce("synth", &cfg);
            let synth = SynthConfig { pairs, side, cell, findings_per_report: findings, noise_sigma: noise, seed: cfg.seed };
            let m = commands::synth(&out, &synth)?;
            log::info!("wrote {} synthetic pairs to {}", m.len(), out.display());
        }
        Command::Curate { raw, out, patterns, rejections } => {
            announce("curate", &cfg);
            let patterns = patterns.or(cfg.paths.patterns.clone());
            let outcome = commands::curate_cmd(&raw, &out, patterns.as_deref(), rejections.as_deref())?;
            log::info!("kept {}, rejected {}", outcome.manifest.len(), outcome.rejections.len());
        }
        Command::Split { manifest, out, seed } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            announce("split", &cfg);
            let input = required(manifest.as_ref(), cfg.paths.manifest.as_ref(), "manifest")?;
            let m = commands::split_cmd(&input, &out, cfg.seed)?;
            log::info!("split {} samples", m.len());
        }
        Command::Stats { manifest, stopwords, top, out } => {
            announce("stats", &cfg);
            let input = required(manifest.as_ref(), cfg.paths.manifest.as_ref(), "manifest")?;
            let stopwords = stopwords.or(cfg.paths.stopwords.clone());
            let text = commands::stats_cmd(&input, stopwords.as_deref(), top)?;
            formats::emit(out.as_deref(), &text)?;
        }
        Command::BuildVocab { manifest, out, overrides } => {
            overrides.apply(&mut cfg);
            announce("build-vocab", &cfg);
            let input = required(manifest.as_ref(), cfg.paths.manifest.as_ref(), "manifest")?;
            let vocab = commands::build_vocab(&Corpus::load(&input)?, cfg.train_split, cfg.vocab_min_count)?;
            formats::write_atomic(&out, formats::vocab_to_string(&vocab).as_bytes())?;
        }
        Command::Train { inputs, out, history, overrides } => {
            overrides.apply(&mut cfg);
            cfg.validate()?;
            announce("train", &cfg);
            let loaded = load_inputs(inputs.manifest.as_ref(), inputs.vocab.as_ref(), &cfg)?;
            let init = match inputs.checkpoint.as_ref() {
                Some(p) => Some(commands::load_model(p)?),
                None => None,
            };
            let outcome = commands::train_cmd(&cfg, &loaded.corpus, &loaded.vocab, init, |log| {
                log::info!(
                    "epoch {:>4}: l_total {:.6} l_mse {:.6} l_sim {:.6}",
                    log.epoch,
                    log.loss.l_total,
                    log.loss.l_mse,
                    log.loss.l_sim
                );
            })?;
            commands::save_model(&out, &outcome.params)?;
            if let Some(h) = history {
                formats::write_atomic(&h, commands::history_jsonl(&outcome.history).as_bytes())?;
            }
        }
        Command::Embed { inputs, out, overrides } => {
            overrides.apply(&mut cfg);
            cfg.validate()?;
            announce("embed", &cfg);
            let loaded = load_inputs(inputs.manifest.as_ref(), inputs.vocab.as_ref(), &cfg)?;
            let params = checkpoint(&inputs, &cfg)?;
            let records = commands::embed_cmd(&cfg, &loaded.corpus, &loaded.vocab, &params)?;
            formats::emit(out.as_deref(), &formats::embeddings_to_string(&records))?;
        }
        Command::Eval { inputs, embeddings, label, outputs, overrides } => {
            overrides.apply(&mut cfg);
            cfg.validate()?;
            announce("eval", &cfg);
            let report = match embeddings {
                Some(path) => {
                    let records = formats::read_embeddings(&path)?;
                    commands::eval_records(&label, &records, &[], &cfg)?
                }
                None => {
                    let loaded = load_inputs(inputs.manifest.as_ref(), inputs.vocab.as_ref(), &cfg)?;
                    let params = checkpoint(&inputs, &cfg)?;
                    commands::eval_cmd(&label, &cfg, &loaded.corpus, &loaded.vocab, &params)?
                }
            };
            write_reports(&outputs, &[report])?;
        }
        Command::Query { inputs, text, keyword, k, overrides } => {
            overrides.apply(&mut cfg);
            cfg.validate()?;
            announce("query", &cfg);
            let loaded = load_inputs(inputs.manifest.as_ref(), inputs.vocab.as_ref(), &cfg)?;
            let params = checkpoint(&inputs, &cfg)?;
            let q = text.or(keyword).unwrap_or_default();
            let ranked = commands::query_cmd(&cfg, &loaded.corpus, &loaded.vocab, &params, &q, k)?;
            let mut out = String::new();
            for (i, hit) in ranked.hits.iter().enumerate() {
                out.push_str(&format!("{}\t{}\t{:.6}\n", i + 1, hit.id, hit.score));
            }
            formats::emit(None, &out)?;
        }
        Command::Ablate { manifest, vocab, outputs, overrides } => {
            overrides.apply(&mut cfg);
            cfg.validate()?;
            announce("ablate", &cfg);
            let loaded = load_inputs(manifest.as_ref(), vocab.as_ref(), &cfg)?;
            let reports = commands::ablate_cmd(&cfg, &loaded.corpus, &loaded.vocab)?;
            write_reports(&outputs, &reports)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
