//! Desk-scale fixtures: the shipped desk configs trained end to end in memory, plus
//! tiny models for schedule and determinism checks.

use std::path::PathBuf;
use std::time::Instant;

use ecg_report::config::RunConfig;
use ecg_report::corpus::{generate_synthetic, Split};
use ecg_report::dataset::Example;
use ecg_report::decoders::LstmConfig;
use ecg_report::encoder::{EncoderConfig, SignalNormalization};
use ecg_report::evalgen;
use ecg_report::metrics::MetricReport;
use ecg_report::model::{DecoderConfig, ModelConfig, ReportModel};
use ecg_report::nn::Matrix;
use ecg_report::pipeline::{self, model_config, prepare_corpus};
use ecg_report::trainer::{self, EpochRecord, TrainHistory};

pub struct DeskRun {
    pub family: String,
    pub model: ReportModel,
    pub history: TrainHistory,
    pub test: Vec<Example>,
    pub test_report: MetricReport,
    pub train_seconds: f64,
}

pub fn config_path(family: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/desk_{family}.toml"))
}

/// Trains the shipped `desk_{family}` config on its synthetic corpus and scores
/// the test split.
pub fn train_desk(family: &str) -> Result<DeskRun, String> {
    let run = || -> ecg_report::Result<DeskRun> {
        let cfg = RunConfig::load(&config_path(family))?;
        let spec = cfg.data.synthetic.as_ref().ok_or_else(|| ecg_report::Error::config("desk config needs data.synthetic"))?.resolve()?;
        let prepared = prepare_corpus(generate_synthetic(&spec, cfg.seed)?, &cfg)?;
        let train = prepared.examples(Split::Train, cfg.data.max_report_len)?;
        let val = prepared.examples(Split::Validation, cfg.data.max_report_len)?;
        let test = prepared.examples(Split::Test, cfg.data.max_report_len)?;
        let mut model = ReportModel::new(model_config(&cfg, &prepared, &train), cfg.seed)?;
        let started = Instant::now();
        if let Some(pre) = &cfg.pretrain {
            trainer::pretrain_encoder(&mut model, &train, pre)?;
        }
        let mut log = |r: &EpochRecord, _: &ReportModel| {
            eprintln!("  [{family}] epoch {:>3}  loss {:.4}  val METEOR {:.4}", r.epoch, r.train_loss, r.val_meteor);
            Ok(())
        };
        let history = trainer::train(&mut model, &train, &val, &cfg.train, &mut log)?;
        let train_seconds = started.elapsed().as_secs_f64();
        let eval = evalgen::evaluate(&model, &test, cfg.train.max_report_len, cfg.evaluate.top_k, cfg.seed, &pipeline::meteor_config(&cfg))?;
        Ok(DeskRun { family: family.to_string(), model, history, test, test_report: eval.report, train_seconds })
    };
    run().map_err(|e| e.to_string())
}

fn tiny_model(seed: u64) -> ReportModel {
    let config = ModelConfig {
        encoder: EncoderConfig {
            depth: 18,
            input_leads: 1,
            stem_kernel: 3,
            stage_kernels: [3, 3, 3, 3],
            stage_widths: [4, 4, 4, 4],
            output_positions: 2,
            pretrain_classes: None,
        },
        decoder: DecoderConfig::Lstm(LstmConfig { feature_dim: 4, embed_dim: 4, hidden_dim: 6, attention_dim: 5, vocab_size: 7, dropout: 0.0 }),
        normalization: SignalNormalization::None,
        signal_stats: None,
        vocabulary: vec!["a".into(), "b".into(), "c".into()],
    };
    ReportModel::new(config, seed).unwrap()
}

/// Two-class toy set over the vocabulary `a b c`; ids 3 and 4 are start and end.
fn toy_examples(n: usize, offset: usize) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let c = (i + offset) % 2;
            Example {
                episode_id: format!("e{}", i + offset),
                signal: Matrix::from_fn(1, 64, |_, s| ((s * (c + 1)) as f64 * 0.3 + i as f64).sin()),
                target: vec![3, c, 2, 4],
                reference: vec![["a", "b"][c].to_string(), "c".into()],
                class: Some(c),
            }
        })
        .collect()
}

/// Tiny model whose validation references use only out-of-vocabulary words, so
/// validation METEOR is 0 at every epoch.
pub fn pinned_metric_fixture() -> (ReportModel, Vec<Example>, Vec<Example>) {
    let mut val = toy_examples(2, 100);
    for e in &mut val {
        e.reference = vec!["zzz".into(), "qqq".into()];
    }
    (tiny_model(1), toy_examples(4, 0), val)
}

pub fn small_fixture() -> (ReportModel, Vec<Example>, Vec<Example>) {
    (tiny_model(2), toy_examples(24, 0), toy_examples(6, 50))
}
