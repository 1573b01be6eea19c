//! End-to-end optimization with plateau decay, early stopping on validation
//! METEOR and best-epoch selection.

mod schedule;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::encoder::{SignalNormalization, SignalStats};
use crate::error::{Error, Result};
use crate::evalgen;
use crate::metrics::{MeteorConfig, Rouge1};
use crate::model::ReportModel;
use crate::nn::{clip_global_norm, Adam, AdamConfig, Graph, Gradients, ParamGroup, Var};
use crate::textprep::MAX_REPORT_LEN;

pub use schedule::{EpochDecision, PlateauSchedule};

fn default_encoder_lr() -> f64 {
    4e-4
}
fn default_decoder_lr() -> f64 {
    4e-4
}
fn default_batch_size() -> usize {
    32
}
fn default_decay_factor() -> f64 {
    0.8
}
fn default_decay_patience() -> usize {
    8
}
fn default_stop_patience() -> usize {
    30
}
fn default_max_epochs() -> usize {
    500
}
fn default_one() -> f64 {
    1.0
}
fn default_clip() -> Option<f64> {
    Some(5.0)
}
fn default_max_len() -> usize {
    MAX_REPORT_LEN
}

/// Optimization settings. Validation always uses greedy decoding without teacher forcing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_encoder_lr")]
    pub encoder_lr: f64,
    #[serde(default = "default_decoder_lr")]
    pub decoder_lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
    #[serde(default = "default_decay_patience")]
    pub lr_decay_patience_epochs: usize,
    #[serde(default = "default_stop_patience")]
    pub early_stop_patience_epochs: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_one")]
    pub teacher_forcing_p: f64,
    #[serde(default = "default_one")]
    pub lambda_attention: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Bound on a generated report during validation, markers included.
    #[serde(default = "default_max_len")]
    pub max_report_len: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder_lr: default_encoder_lr(),
            decoder_lr: default_decoder_lr(),
            batch_size: default_batch_size(),
            lr_decay_factor: default_decay_factor(),
            lr_decay_patience_epochs: default_decay_patience(),
            early_stop_patience_epochs: default_stop_patience(),
            max_epochs: default_max_epochs(),
            teacher_forcing_p: 1.0,
            lambda_attention: 1.0,
            grad_clip: default_clip(),
            seed: 0,
            max_report_len: default_max_len(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults with the Transformer's lower decoder learning rate.
    pub fn transformer() -> Self {
        Self { decoder_lr: 1e-4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if !(self.encoder_lr > 0.0) {
            p.push("encoder_lr must be positive".to_string());
        }
        if !(self.decoder_lr > 0.0) {
            p.push("decoder_lr must be positive".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size must be at least 1".into());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            p.push("lr_decay_factor must lie in (0, 1)".into());
        }
        if self.lr_decay_patience_epochs == 0 {
            p.push("lr_decay_patience_epochs must be at least 1".into());
        }
        if self.early_stop_patience_epochs == 0 {
            p.push("early_stop_patience_epochs must be at least 1".into());
        }
        if self.max_epochs == 0 {
            p.push("max_epochs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_p) {
            p.push("teacher_forcing_p must lie in [0, 1]".into());
        }
        if !(self.lambda_attention >= 0.0) {
            p.push("lambda_attention must be nonnegative".into());
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            p.push("grad_clip must be positive when set".into());
        }
        if self.max_report_len < 3 {
            p.push("max_report_len must be at least 3".into());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over batches of the batch objective.
    pub train_loss: f64,
    /// Token-weighted mean cross-entropy.
    pub train_cross_entropy: f64,
    /// Mean attention penalty per episode.
    pub train_penalty: f64,
    pub val_meteor: f64,
    pub val_bleu: [f64; 4],
    pub val_rouge1: Rouge1,
    pub encoder_lr: f64,
    pub decoder_lr: f64,
    pub improved: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_meteor: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }
}

/// Batch objective for one sequence: mean token cross-entropy over non-pad targets
/// plus the attention penalty when `alphas` is given. `target` starts with the start
/// marker; logit row `t` predicts `target[t + 1]`.
pub fn sequence_loss(g: &mut Graph, logits: Var, target: &[usize], pad_id: usize, alphas: Option<Var>, lambda: f64) -> Result<Var> {
    if target.len() < 2 {
        return Err(Error::Shape("target must hold at least a start and an end token".into()));
    }
    let (ce, n) = crate::model::sequence_cross_entropy(g, logits, &target[1..], pad_id)?;
    let mean = g.scale(ce, 1.0 / n as f64);
    Ok(match alphas {
        Some(a) => {
            let pen = crate::decoders::doubly_stochastic_penalty(g, a, lambda);
            g.add(mean, pen)
        }
        None => mean,
    })
}

struct BatchOutcome {
    grads: Gradients,
    cross_entropy: f64,
    penalty: f64,
    tokens: usize,
}

/// Per-example dropout and sampling stream, independent of thread scheduling.
fn example_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

fn batch_stats(model: &ReportModel, batch: &[&Example]) -> Option<SignalStats> {
    (model.config.normalization == SignalNormalization::Batch).then(|| SignalStats::of(batch.iter().map(|e| &e.signal))).flatten()
}

/// Gradients of `Σ CE_i / N_tokens + Σ penalty_i / B` over one batch, reduced in batch order.
fn batch_gradients(model: &ReportModel, batch: &[(usize, &Example)], cfg: &TrainConfig, epoch: usize) -> Result<BatchOutcome> {
    let tokens: usize = batch.iter().map(|(_, e)| e.target.len() - 1).sum();
    let examples: Vec<&Example> = batch.iter().map(|(_, e)| *e).collect();
    let stats = batch_stats(model, &examples);
    let b = batch.len() as f64;
    let parts: Vec<Result<(Gradients, f64, f64)>> = batch
        .par_iter()
        .map(|&(index, e)| {
            let mut rng = example_rng(cfg.seed, epoch, index);
            let mut g = Graph::new(&model.store);
            let signal = model.prepare_signal(&e.signal, stats.as_ref());
            let loss = model.example_loss(&mut g, &signal, &e.target, cfg.teacher_forcing_p, cfg.lambda_attention, Some(&mut rng))?;
            let ce = g.value(loss.cross_entropy).get(0, 0);
            let mut root = g.scale(loss.cross_entropy, 1.0 / tokens as f64);
            let mut pen = 0.0;
            if let Some(p) = loss.penalty {
                pen = g.value(p).get(0, 0);
                let scaled = g.scale(p, 1.0 / b);
                root = g.add(root, scaled);
            }
            Ok((g.backward(root).params, ce, pen))
        })
        .collect();
    let mut grads = Gradients::new(model.store.len());
    let (mut cross_entropy, mut penalty) = (0.0, 0.0);
    for part in parts {
        let (g, ce, pen) = part?;
        grads.merge(&g);
        cross_entropy += ce;
        penalty += pen;
    }
    Ok(BatchOutcome { grads, cross_entropy, penalty, tokens })
}

/// Receives each finished epoch; returning an error aborts training.
pub trait EpochSink {
    fn epoch_done(&mut self, record: &EpochRecord, model: &ReportModel) -> Result<()>;
}

impl<F: FnMut(&EpochRecord, &ReportModel) -> Result<()>> EpochSink for F {
    fn epoch_done(&mut self, record: &EpochRecord, model: &ReportModel) -> Result<()> {
        self(record, model)
    }
}

/// Trains `model` in place and leaves it holding the parameters of the best
/// validation epoch.
pub fn train(model: &mut ReportModel, train_set: &[Example], val_set: &[Example], cfg: &TrainConfig, sink: &mut dyn EpochSink) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Unsupported("training needs nonempty training and validation sets".into()));
    }
    let vocab = model.vocabulary.len();
    if let Some(e) = train_set.iter().find(|e| e.target.len() < 2 || e.target.iter().any(|&t| t >= vocab)) {
        return Err(Error::Shape(format!("episode {} has a malformed target", e.episode_id)));
    }
    let meteor_cfg = MeteorConfig::default();
    let mut adam = Adam::new(cfg.adam, &model.store);
    let mut schedule = PlateauSchedule::new(cfg.lr_decay_factor, cfg.lr_decay_patience_epochs, cfg.early_stop_patience_epochs);
    let mut history = TrainHistory::default();
    let mut best_store = model.store.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let scale = schedule.lr_scale();
        let (enc_lr, dec_lr) = (cfg.encoder_lr * scale, cfg.decoder_lr * scale);
        order.shuffle(&mut example_rng(cfg.seed, epoch, usize::MAX >> 32));
        let (mut loss_sum, mut ce_sum, mut pen_sum, mut tok_sum) = (0.0, 0.0, 0.0, 0usize);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (bi, idx) in batches.iter().enumerate() {
            let batch: Vec<(usize, &Example)> = idx.iter().map(|&i| (i, &train_set[i])).collect();
            let mut out = batch_gradients(model, &batch, cfg, epoch)?;
            let loss = out.cross_entropy / out.tokens as f64 + out.penalty / batch.len() as f64;
            if !loss.is_finite() || !out.grads.all_finite() {
                return Err(Error::Divergence { epoch, batch: bi });
            }
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut out.grads, c);
            }
            adam.step(&mut model.store, &out.grads, |g| match g {
                ParamGroup::Encoder => enc_lr,
                ParamGroup::Decoder => dec_lr,
            });
            if !model.store.all_finite() {
                return Err(Error::Divergence { epoch, batch: bi });
            }
            loss_sum += loss;
            ce_sum += out.cross_entropy;
            pen_sum += out.penalty;
            tok_sum += out.tokens;
        }
        let val = evalgen::evaluate(model, val_set, cfg.max_report_len, 1, cfg.seed, &meteor_cfg)?.report;
        let decision = schedule.observe(val.meteor);
        if decision.improved {
            best_store = model.store.clone();
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            train_cross_entropy: ce_sum / tok_sum as f64,
            train_penalty: pen_sum / train_set.len() as f64,
            val_meteor: val.meteor,
            val_bleu: val.bleu,
            val_rouge1: val.rouge1,
            encoder_lr: enc_lr,
            decoder_lr: dec_lr,
            improved: decision.improved,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        sink.epoch_done(&record, model)?;
        history.records.push(record);
        if decision.stop {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = schedule.best_epoch();
    history.best_meteor = schedule.best().unwrap_or(0.0);
    model.store = best_store;
    Ok(history)
}

/// Settings for the optional rhythm-classification warm-up of the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    #[serde(default = "default_encoder_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Trains the encoder and its classification head on the examples' rhythm classes
/// with mean cross-entropy. Returns the mean loss of each epoch.
pub fn pretrain_encoder(model: &mut ReportModel, examples: &[Example], cfg: &PretrainConfig) -> Result<Vec<f64>> {
    if !model.encoder.has_head() {
        return Err(Error::Unsupported("encoder pretraining needs pretrain_classes in the encoder config".into()));
    }
    let labelled: Vec<&Example> = examples.iter().filter(|e| e.class.is_some()).collect();
    if labelled.is_empty() || cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Unsupported("encoder pretraining needs labelled episodes, epochs and a batch size".into()));
    }
    let classes = model.config.encoder.pretrain_classes.unwrap_or(0);
    if let Some(e) = labelled.iter().find(|e| e.class.is_some_and(|c| c >= classes)) {
        return Err(Error::Shape(format!("episode {} has a class outside the {classes}-way head", e.episode_id)));
    }
    let mut adam = Adam::new(AdamConfig::default(), &model.store);
    let mut order: Vec<usize> = (0..labelled.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut example_rng(cfg.seed, epoch, usize::MAX >> 32));
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| labelled[i]).collect();
            let stats = batch_stats(model, &batch);
            let n = batch.len() as f64;
            let parts: Vec<Result<(Gradients, f64)>> = batch
                .par_iter()
                .map(|e| {
                    let mut g = Graph::new(&model.store);
                    let x = g.input(model.prepare_signal(&e.signal, stats.as_ref()));
                    let features = model.encoder.forward(&mut g, x)?;
                    let scores = model.encoder.pretrain_forward(&mut g, features)?;
                    let ce = g.cross_entropy_sum(scores, &[e.class]);
                    let root = g.scale(ce, 1.0 / n);
                    Ok((g.backward(root).params, g.value(ce).get(0, 0)))
                })
                .collect();
            let mut grads = Gradients::new(model.store.len());
            let mut loss = 0.0;
            for p in parts {
                let (g, l) = p?;
                grads.merge(&g);
                loss += l / n;
            }
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence { epoch, batch: bi });
            }
            adam.step(&mut model.store, &grads, |g| if g == ParamGroup::Encoder { cfg.lr } else { 0.0 });
            total += loss * n;
        }
        losses.push(total / labelled.len() as f64);
    }
    Ok(losses)
}
