//! Run-level workflows over a [`RunConfig`]: corpus synthesis, preparation,
//! training, evaluation, the sanity check and attention export.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::corpus::{corpus_stats, generate_synthetic, load_manifest, write_corpus, Corpus, CorpusStats, Split, MANIFEST_FILE};
use crate::dataset::{build_examples, report_tokens, rhythm_classes, Example};
use crate::datasplit::{deduplicate, split_grouped, split_official, split_random, SplitAssignment, SplitMode};
use crate::encoder::{SignalNormalization, SignalStats};
use crate::error::{Error, Result};
use crate::evalgen::{self, export_attention, AttentionExport, Evaluation, SanityReport};
use crate::metrics::{MeteorConfig, MetricReport};
use crate::model::{ModelConfig, ReportModel};
use crate::textprep::{AbbreviationTable, IdentityTranslator, Translator, Vocabulary};
use crate::trainer::{self, EpochRecord, TrainHistory};

pub const SPLIT_FILE: &str = "split.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const CLASSES_FILE: &str = "classes.txt";
pub const STATS_FILE: &str = "corpus_stats.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CONFIG_SNAPSHOT: &str = "run.toml";

/// Corpus after deduplication, with its split, vocabulary and class list.
pub struct Prepared {
    pub corpus: Corpus,
    pub split: SplitAssignment,
    pub vocabulary: Vocabulary,
    pub classes: Vec<String>,
    pub stats: CorpusStats,
    pub abbreviations: Option<AbbreviationTable>,
}

impl Prepared {
    pub fn episodes(&self, split: Split) -> Corpus {
        self.split.subset(&self.corpus, split)
    }

    pub fn examples(&self, split: Split, max_report_len: usize) -> Result<Vec<Example>> {
        let subset = self.episodes(split);
        build_examples(subset.episodes(), self.abbreviations.as_ref(), &self.vocabulary, max_report_len, &self.classes)
    }
}

/// Writes the configured synthetic corpus next to the configured manifest.
pub fn synth(cfg: &RunConfig) -> Result<Corpus> {
    let source = cfg.data.synthetic.as_ref().ok_or_else(|| Error::config("data.synthetic is not set"))?;
    let spec = source.resolve()?;
    let manifest = cfg.manifest_path();
    if manifest.file_name().and_then(|n| n.to_str()) != Some(MANIFEST_FILE) {
        return Err(Error::config(format!("synthetic corpora are written as {MANIFEST_FILE}; set data.manifest accordingly")));
    }
    let corpus = generate_synthetic(&spec, cfg.seed)?;
    write_corpus(&corpus, manifest.parent().unwrap_or(Path::new(".")))
}

/// Deduplicates, splits and builds the training-split vocabulary for `corpus`.
pub fn prepare_corpus(corpus: Corpus, cfg: &RunConfig) -> Result<Prepared> {
    let corpus = if cfg.data.translate { translate_reports(corpus, &IdentityTranslator)? } else { corpus };
    let corpus = if cfg.data.deduplicate { deduplicate(&corpus, cfg.seed) } else { corpus };
    let stats = corpus_stats(&corpus)?;
    let split = match cfg.split.mode {
        SplitMode::Grouped => split_grouped(&corpus, cfg.split.ratios(), cfg.seed)?,
        SplitMode::Random => split_random(&corpus, cfg.split.ratios(), cfg.seed)?,
        SplitMode::Official => split_official(&corpus)?,
    };
    let abbreviations = cfg.data.unify_abbreviations.then(AbbreviationTable::bundled);
    let train = split.subset(&corpus, Split::Train);
    let token_lists: Vec<Vec<String>> = train.iter().map(|e| report_tokens(&e.report, abbreviations.as_ref())).collect();
    let vocabulary = Vocabulary::build(&token_lists, cfg.data.min_token_frequency, cfg.data.max_vocab)?;
    let classes = rhythm_classes(corpus.episodes());
    Ok(Prepared { corpus, split, vocabulary, classes, stats, abbreviations })
}

/// Replaces every report with its translation.
pub fn translate_reports(corpus: Corpus, translator: &dyn Translator) -> Result<Corpus> {
    let episodes = corpus.into_episodes().into_iter().map(|mut e| {
        e.report = translator.translate(&e.report);
        e
    });
    Corpus::new(episodes.collect())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let manifest = cfg.manifest_path();
    if !manifest.is_file() {
        return Err(Error::config(format!("manifest {} does not exist; run synth first for synthetic data", manifest.display())));
    }
    load_manifest(&manifest)
}

/// Copies the exact run file into the run directory and returns the directory.
pub fn init_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    let snapshot = match &cfg.source {
        Some(p) => fs::read_to_string(p)?,
        None => toml::to_string(cfg).map_err(|e| Error::config(e.to_string()))?,
    };
    fs::write(dir.join(CONFIG_SNAPSHOT), snapshot)?;
    Ok(dir)
}

/// Loads and prepares the corpus, then writes split, vocabulary, classes and statistics.
pub fn prep(cfg: &RunConfig) -> Result<Prepared> {
    let dir = init_run_dir(cfg)?;
    let prepared = prepare_corpus(load_corpus(cfg)?, cfg)?;
    prepared.split.save(&dir.join(SPLIT_FILE))?;
    prepared.vocabulary.save(&dir.join(VOCAB_FILE))?;
    fs::write(dir.join(CLASSES_FILE), prepared.classes.iter().map(|c| format!("{c}\n")).collect::<String>())?;
    fs::write(dir.join(STATS_FILE), serde_json::to_string_pretty(&prepared.stats)? + "\n")?;
    Ok(prepared)
}

/// Reuses split and vocabulary artifacts from an earlier `prep` when present.
pub fn load_prepared(cfg: &RunConfig) -> Result<Prepared> {
    let dir = cfg.run_dir();
    let (split_path, vocab_path) = (dir.join(SPLIT_FILE), dir.join(VOCAB_FILE));
    if !(split_path.is_file() && vocab_path.is_file()) {
        return prep(cfg);
    }
    let mut prepared = prepare_corpus(load_corpus(cfg)?, cfg)?;
    prepared.split = SplitAssignment::load(&split_path)?;
    prepared.vocabulary = Vocabulary::load(&vocab_path)?;
    let kept = prepared.split.lookup();
    if let Some(e) = prepared.corpus.iter().find(|e| !kept.contains_key(e.episode_id.as_str())) {
        return Err(Error::config(format!("episode {} is missing from {}; rerun prep", e.episode_id, split_path.display())));
    }
    Ok(prepared)
}

/// Model configuration for a prepared corpus, with training-set signal statistics
/// when the normalization mode needs them.
pub fn model_config(cfg: &RunConfig, prepared: &Prepared, train: &[Example]) -> ModelConfig {
    let signal_stats = match cfg.model.normalization {
        SignalNormalization::Dataset | SignalNormalization::Batch => SignalStats::of(train.iter().map(|e| &e.signal)),
        _ => None,
    };
    let mut encoder = cfg.model.encoder.clone();
    if cfg.pretrain.is_some() && encoder.pretrain_classes.is_none() {
        encoder.pretrain_classes = Some(prepared.classes.len());
    }
    ModelConfig {
        decoder: cfg.model.decoder.resolve(&encoder, prepared.vocabulary.len(), cfg.data.max_report_len),
        encoder,
        normalization: cfg.model.normalization,
        signal_stats,
        vocabulary: prepared.vocabulary.tokens()[..prepared.vocabulary.regular_len()].to_vec(),
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    run: &'a str,
    seed: u64,
    train: &'a trainer::TrainConfig,
    best_epoch: usize,
    best_val_meteor: f64,
}

/// Trains on the prepared splits; `on_epoch` sees each record after it is appended
/// to the history file. The best checkpoint is written to the run directory.
pub fn train_run(cfg: &RunConfig, on_epoch: &mut dyn FnMut(&EpochRecord)) -> Result<(ReportModel, TrainHistory)> {
    let prepared = load_prepared(cfg)?;
    let dir = init_run_dir(cfg)?;
    let train = prepared.examples(Split::Train, cfg.data.max_report_len)?;
    let val = prepared.examples(Split::Validation, cfg.data.max_report_len)?;
    let mut model = ReportModel::new(model_config(cfg, &prepared, &train), cfg.seed)?;
    if let Some(pre) = &cfg.pretrain {
        let losses = trainer::pretrain_encoder(&mut model, &train, pre)?;
        fs::write(dir.join("pretrain_loss.txt"), losses.iter().map(|l| format!("{l}\n")).collect::<String>())?;
    }
    let history_path = dir.join(HISTORY_FILE);
    fs::write(&history_path, "")?;
    let mut sink = |record: &EpochRecord, _: &ReportModel| -> Result<()> {
        use std::io::Write;
        let mut f = fs::OpenOptions::new().append(true).open(&history_path)?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
        on_epoch(record);
        Ok(())
    };
    let history = trainer::train(&mut model, &train, &val, &cfg.train, &mut sink)?;
    model.provenance = serde_json::to_value(Provenance {
        run: &cfg.name,
        seed: cfg.seed,
        train: &cfg.train,
        best_epoch: history.best_epoch,
        best_val_meteor: history.best_meteor,
    })?;
    model.save(&dir.join(CHECKPOINT_FILE))?;
    Ok((model, history))
}

pub fn meteor_config(cfg: &RunConfig) -> MeteorConfig {
    MeteorConfig { stem: cfg.evaluate.meteor_stem, ..MeteorConfig::default() }
}

/// Loads `checkpoint` and the examples of `split`.
pub fn load_for_eval(cfg: &RunConfig, checkpoint: &Path, split: Split) -> Result<(ReportModel, Vec<Example>)> {
    let model = ReportModel::load(checkpoint)?;
    let prepared = load_prepared(cfg)?;
    if prepared.vocabulary.tokens() != model.vocabulary.tokens() {
        return Err(Error::Checkpoint { path: checkpoint.to_path_buf(), message: "vocabulary differs from the prepared run".into() });
    }
    let examples = prepared.examples(split, cfg.data.max_report_len)?;
    crate::dataset::check_leads(&examples, model.config.encoder.input_leads)?;
    Ok((model, examples))
}

fn generations_tsv(examples: &[Example], eval: &Evaluation) -> String {
    let mut out = String::from("episode_id\tgenerated\treference\n");
    for (e, g) in examples.iter().zip(&eval.generations) {
        out.push_str(&format!("{}\t{}\t{}\n", e.episode_id, g.text(), e.reference.join(" ")));
    }
    out
}

/// Scores `split` and writes `metrics_<split>.tsv` and `generations_<split>.tsv`.
pub fn evaluate_run(cfg: &RunConfig, checkpoint: &Path, split: Split) -> Result<MetricReport> {
    let dir = init_run_dir(cfg)?;
    let (model, examples) = load_for_eval(cfg, checkpoint, split)?;
    let eval = evalgen::evaluate(&model, &examples, cfg.data.max_report_len, cfg.evaluate.top_k, cfg.seed, &meteor_config(cfg))?;
    fs::write(dir.join(format!("metrics_{}.tsv", split.as_str())), eval.report.to_table())?;
    fs::write(dir.join(format!("generations_{}.tsv", split.as_str())), generations_tsv(&examples, &eval))?;
    Ok(eval.report)
}

/// Real versus all-ones evaluation on `split`; writes `sanity_<split>.json`.
pub fn sanity_run(cfg: &RunConfig, checkpoint: &Path, split: Split) -> Result<SanityReport> {
    let dir = init_run_dir(cfg)?;
    let (model, examples) = load_for_eval(cfg, checkpoint, split)?;
    let report = evalgen::sanity_check(&model, &examples, cfg.data.max_report_len, &meteor_config(cfg))?;
    fs::write(dir.join(format!("sanity_{}.json", split.as_str())), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Exports attention for the first configured episodes of `split` under `attention/`.
pub fn attention_run(cfg: &RunConfig, checkpoint: &Path, split: Split) -> Result<Vec<AttentionExport>> {
    let dir = init_run_dir(cfg)?.join("attention");
    let (model, examples) = load_for_eval(cfg, checkpoint, split)?;
    let chosen = &examples[..cfg.evaluate.attention_episodes.min(examples.len())];
    chosen
        .iter()
        .map(|e| {
            let result = evalgen::generate(&model, &e.episode_id, &e.signal, cfg.data.max_report_len, 1, cfg.seed)?;
            export_attention(&model, &e.signal, &result, &dir, &cfg.evaluate.image_format)
        })
        .collect()
}
