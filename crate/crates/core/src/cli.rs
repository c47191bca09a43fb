//! Command-line interface; the `clinicode` binary only calls [`main`].

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::corpus::{
    build_labeled_notes, build_top_k_subset, generate_synthetic_corpus, read_code_assignments, read_note_events,
    split_dataset, CodeKind, LabeledNote, NoteColumns, SyntheticConfig, DISCHARGE_SUMMARY,
};
use crate::metrics::{evaluate_run, EvalOptions, MacroScope};
use crate::model::{forward, Mode};
use crate::service::{serve, ServeConfig};
use crate::snomed::{codes_from_predictions, mapping_stats, ResolveOptions, SnomedMapper};
use crate::text::{
    label_space_of, structure_document, train_label_embeddings, train_skipgram, EmbeddingTable, LabelEmbeddings,
    SkipGramConfig, Vocabulary,
};
use crate::train::{
    encode_examples, grad_check, toy_problem, train_with_history, Checkpoint, GradCheckConfig, TrainConfig,
};
use crate::viz::{write_html, write_tsv, VizCode, VizDocument};

#[derive(Debug, Parser)]
#[command(name = "clinicode", version, about = "Explainable ICD-9 coding with hierarchical label attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, split and subset labeled-note tables.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train word or label embeddings.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Compare analytic gradients with central differences.
    GradCheck(GradCheckArgs),
    /// Score a checkpoint on a labeled-note table.
    Eval(EvalArgs),
    /// Resolve ICD-9 codes to SNOMED CT.
    #[command(subcommand)]
    Snomed(SnomedCommand),
    /// Render one letter's attention as HTML (and optionally TSV).
    Viz(VizArgs),
    /// Run the review HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Join NOTEEVENTS with DIAGNOSES_ICD and PROCEDURES_ICD.
    Build {
        #[arg(long)]
        notes: PathBuf,
        #[arg(long)]
        diag: PathBuf,
        #[arg(long)]
        proc: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Note category kept by the filter.
        #[arg(long, default_value = DISCHARGE_SUMMARY)]
        category: String,
        /// Column holding the note category.
        #[arg(long, default_value = "DESCRIPTION")]
        category_column: String,
    },
    /// Seeded admission-level train/test split.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        ratio: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Keep the k most frequent codes.
    TopK {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic MIMIC-shaped corpus.
    Synth {
        /// TOML file with synthetic corpus settings; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SkipGramArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub neg: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl SkipGramArgs {
    fn config(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.neg,
            epochs: self.epochs,
            learning_rate: self.lr,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum EmbedCommand {
    /// Word vectors from the training notes.
    Train {
        #[command(flatten)]
        sg: SkipGramArgs,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Label vectors from label co-occurrence.
    Labels {
        #[command(flatten)]
        sg: SkipGramArgs,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// TOML training configuration; defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Word vectors in the text embedding format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Label vectors, used when the config enables label-embedding init.
    #[arg(long)]
    pub label_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Only `toy` is supported.
    #[arg(long, default_value = "toy")]
    pub dims: String,
    #[arg(long, default_value_t = 500)]
    pub coords: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,8,15")]
    pub k: Vec<usize>,
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "all")]
    pub macro_over: MacroScope,
    /// Also write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SnomedCommand {
    /// Resolve one or more codes.
    Resolve {
        #[arg(long, required = true, num_args = 1..)]
        code: Vec<String>,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        parent_first: bool,
        /// Print JSON instead of text lines.
        #[arg(long)]
        json: bool,
    },
    /// Mapping-category statistics over predicted codes.
    Stats {
        /// JSON array of code lists, or an evaluation report.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Plain-text letter.
    #[arg(long)]
    pub letter: PathBuf,
    /// Code whose attention map is shown (per-label models only).
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tsv: Option<PathBuf>,
    #[arg(long)]
    pub maps: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub parent_first: bool,
}

pub fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    run(Cli::parse())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Corpus(c) => corpus(c),
        Command::Embed(c) => embed(c),
        Command::Train(a) => train_cmd(a),
        Command::GradCheck(a) => grad_check_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Snomed(c) => snomed_cmd(c),
        Command::Viz(a) => viz_cmd(a),
        Command::Serve(a) => {
            let cfg = ServeConfig {
                checkpoint: a.ckpt,
                maps_dir: a.maps_dir,
                data_dir: a.data_dir,
                port: a.port,
                threshold: a.threshold,
                parent_first: a.parent_first,
            };
            tokio::runtime::Runtime::new()?.block_on(serve(cfg))?;
            Ok(())
        }
    }
}

fn open(path: &Path) -> anyhow::Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn corpus(cmd: CorpusCommand) -> anyhow::Result<()> {
    match cmd {
        CorpusCommand::Build {
            notes,
            diag,
            proc,
            out,
            category,
            category_column,
        } => {
            let columns = NoteColumns {
                category: category_column,
            };
            let notes = read_note_events(open(&notes)?, &columns)?;
            let mut codes = read_code_assignments(open(&diag)?, CodeKind::Diagnosis)?;
            codes.extend(read_code_assignments(open(&proc)?, CodeKind::Procedure)?);
            let (labeled, report) = build_labeled_notes(&notes, &codes, &category);
            LabeledNote::save_csv(&out, &labeled)?;
            println!(
                "{} labeled notes; skipped {} other-category, {} without codes, {} empty after cleaning",
                labeled.len(),
                report.wrong_category,
                report.no_codes,
                report.empty_text.len()
            );
        }
        CorpusCommand::Split {
            data,
            ratio,
            seed,
            train_out,
            test_out,
        } => {
            let notes = LabeledNote::load_csv(&data)?;
            let split = split_dataset(&notes, ratio, seed)?;
            LabeledNote::save_csv(&train_out, &split.train)?;
            LabeledNote::save_csv(&test_out, &split.test)?;
            println!("train {} / test {}", split.train.len(), split.test.len());
        }
        CorpusCommand::TopK { data, k, out } => {
            let notes = LabeledNote::load_csv(&data)?;
            let (subset, codes) = build_top_k_subset(&notes, k)?;
            LabeledNote::save_csv(&out, &subset)?;
            println!("{} notes over {} codes: {}", subset.len(), codes.len(), codes.join(" "));
        }
        CorpusCommand::Synth { config, out } => {
            let cfg: SyntheticConfig = match config {
                Some(p) => toml::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => SyntheticConfig::default(),
            };
            let corpus = generate_synthetic_corpus(&cfg)?;
            corpus.write_tables(&out)?;
            println!("{} notes, {} labels written to {}", corpus.notes.len(), corpus.dictionary.len(), out.display());
        }
    }
    Ok(())
}

fn embed(cmd: EmbedCommand) -> anyhow::Result<()> {
    match cmd {
        EmbedCommand::Train { sg, min_count } => {
            let notes = LabeledNote::load_csv(&sg.data)?;
            let vocab = Vocabulary::build(&notes, min_count)?;
            let table = train_skipgram(&notes, &vocab, &sg.config())?;
            table.save(&sg.out, &vocab)?;
            println!("{} word vectors of dim {} written", vocab.len(), table.dim());
        }
        EmbedCommand::Labels { sg } => {
            let notes = LabeledNote::load_csv(&sg.data)?;
            let labels = label_space_of(&notes);
            let table = train_label_embeddings(&notes, &labels, &sg.config())?;
            table.save(&sg.out)?;
            println!("{} label vectors of dim {} written", labels.len(), table.dim());
        }
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    let notes = LabeledNote::load_csv(&a.data)?;
    let vocab = Vocabulary::build(&notes, cfg.min_count)?;
    let labels = label_space_of(&notes);
    let embeddings = match &a.embeddings {
        Some(p) => EmbeddingTable::load(p, &vocab, cfg.seed)?,
        None => EmbeddingTable::random(vocab.len(), cfg.embed_dim, cfg.seed),
    };
    let label_embeddings = a.label_embeddings.as_deref().map(LabelEmbeddings::load).transpose()?;
    let examples = encode_examples(&notes, &vocab, &labels, cfg.max_sentences, cfg.max_tokens);
    let outcome = train_with_history(&examples, &cfg, &vocab, &labels, &embeddings, label_embeddings.as_ref())?;
    outcome.checkpoint.save(&a.out)?;
    println!(
        "trained {:?} on {} notes, {} labels, {} epochs; final loss {:.5}",
        cfg.mode,
        notes.len(),
        labels.len(),
        outcome.epoch_losses.len(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn grad_check_cmd(a: GradCheckArgs) -> anyhow::Result<()> {
    if a.dims != "toy" {
        bail!("only --dims toy is supported");
    }
    let cfg = GradCheckConfig {
        n_coords: a.coords,
        seed: a.seed,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for mode in [Mode::Han, Mode::Hlan] {
        let (params, batch) = toy_problem(mode, a.seed)?;
        let report = grad_check(&params, &batch, &cfg)?;
        println!(
            "{mode:?}: {} coordinates, {} parameters, max relative error {:.3e}",
            report.n_checked,
            params.n_parameters(),
            report.max_rel_error
        );
        worst = worst.max(report.max_rel_error);
    }
    if worst >= 1e-4 {
        bail!("gradient check failed: {worst:.3e} ≥ 1e-4");
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let notes = LabeledNote::load_csv(&a.data)?;
    let opts = EvalOptions {
        threshold: a.threshold.unwrap_or(ckpt.config.threshold),
        ks: a.k,
        sample: a.sample,
        seed: a.seed,
        macro_over: a.macro_over,
    };
    let report = evaluate_run(&ckpt, &notes, &opts)?;
    print!("{}", report.to_table());
    if let Some(p) = a.json {
        fs::write(&p, report.to_json()?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn snomed_cmd(cmd: SnomedCommand) -> anyhow::Result<()> {
    match cmd {
        SnomedCommand::Resolve {
            code,
            maps,
            parent_first,
            json,
        } => {
            let mapper = SnomedMapper::load_dir(&maps)?;
            let resolutions = mapper.resolve_all(&code, ResolveOptions { parent_first });
            if json {
                println!("{}", serde_json::to_string_pretty(&resolutions)?);
            } else {
                for r in resolutions {
                    println!("{} {}", r.icd_code, r.summary());
                }
            }
        }
        SnomedCommand::Stats { input, maps, json } => {
            let mapper = SnomedMapper::load_dir(&maps)?;
            let value: serde_json::Value = serde_json::from_reader(open(&input)?)?;
            let codes: Vec<String> = codes_from_predictions(&value)?.into_iter().flatten().collect();
            let stats = mapping_stats(&mapper.resolve_all(&codes, ResolveOptions::default()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", stats.to_table());
            }
        }
    }
    Ok(())
}

fn viz_cmd(a: VizArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let raw = fs::read_to_string(&a.letter).with_context(|| format!("reading {}", a.letter.display()))?;
    let cleaned = crate::corpus::clean_text(&raw);
    let cfg = &ckpt.config;
    let doc = structure_document(&cleaned, &ckpt.vocab, cfg.max_sentences, cfg.max_tokens);
    let (pred, map) = forward(&doc, &ckpt.params)?;
    let mapper = match &a.maps {
        Some(d) => SnomedMapper::load_dir(d)?,
        None => SnomedMapper::empty(),
    };
    let threshold = a.threshold.unwrap_or(cfg.threshold);
    let codes: Vec<VizCode> = pred
        .ranked()
        .into_iter()
        .filter(|(_, p)| *p >= threshold)
        .map(|(code, probability)| VizCode {
            resolution: a.maps.as_ref().map(|_| mapper.resolve(&code, ResolveOptions::default())),
            code,
            probability,
        })
        .collect();
    let label = match ckpt.params.mode {
        Mode::Han => None,
        Mode::Hlan => Some(
            a.label
                .clone()
                .or_else(|| codes.first().map(|c| c.code.clone()))
                .or_else(|| ckpt.params.labels.first().cloned())
                .context("model has no labels")?,
        ),
    };
    let viz = VizDocument::build(&cleaned, &map, label.as_deref(), codes)?;
    write_html(&viz, &a.out)?;
    if let Some(t) = &a.tsv {
        write_tsv(&viz, t)?;
    }
    println!("{} tokens rendered to {}", viz.tokens.len(), a.out.display());
    Ok(())
}
