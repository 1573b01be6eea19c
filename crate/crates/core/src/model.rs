//! Encoder plus decoder, their shared parameter store, and self-contained checkpoints.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoders::{
    argmax_row, doubly_stochastic_penalty, LstmConfig, LstmDecoder, TransformerConfig, TransformerDecoder,
};
use crate::encoder::{normalize_signal, Encoder, EncoderConfig, SignalNormalization, SignalStats};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Graph, Matrix, ParamStore, Var};
use crate::textprep::Vocabulary;

const CHECKPOINT_KIND: &str = "ecg-report-model";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DecoderConfig {
    Lstm(LstmConfig),
    Transformer(TransformerConfig),
}

impl DecoderConfig {
    pub fn family(&self) -> &'static str {
        match self {
            DecoderConfig::Lstm(_) => "lstm",
            DecoderConfig::Transformer(_) => "transformer",
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            DecoderConfig::Lstm(c) => c.parameter_count(),
            DecoderConfig::Transformer(c) => c.parameter_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub normalization: SignalNormalization,
    /// Training-set statistics for dataset (and evaluation-time batch) normalization.
    #[serde(default)]
    pub signal_stats: Option<SignalStats>,
    /// Regular vocabulary tokens in id order; specials follow implicitly.
    pub vocabulary: Vec<String>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut collect = |r: Result<()>| {
            if let Err(Error::Config(p)) = r {
                problems.extend(p);
            }
        };
        collect(self.encoder.validate());
        let vocab = self.vocabulary.len() + 4;
        let c = self.encoder.output_channels();
        match &self.decoder {
            DecoderConfig::Lstm(d) => {
                collect(d.validate());
                if d.feature_dim != c {
                    problems.push(format!("lstm feature_dim {} differs from encoder width {c}", d.feature_dim));
                }
                if d.vocab_size != vocab {
                    problems.push(format!("lstm vocab_size {} differs from vocabulary size {vocab}", d.vocab_size));
                }
            }
            DecoderConfig::Transformer(d) => {
                collect(d.validate());
                if d.feature_dim != c {
                    problems.push(format!("transformer feature_dim {} differs from encoder width {c}", d.feature_dim));
                }
                if d.vocab_size != vocab {
                    problems.push(format!("transformer vocab_size {} differs from vocabulary size {vocab}", d.vocab_size));
                }
                if d.feature_positions != self.encoder.output_positions {
                    problems.push("transformer feature_positions must equal encoder output_positions".into());
                }
            }
        }
        if self.normalization == SignalNormalization::Dataset && self.signal_stats.is_none() {
            problems.push("dataset normalization needs signal_stats".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    #[serde(default)]
    provenance: serde_json::Value,
}

pub enum Decoder {
    Lstm(LstmDecoder),
    Transformer(TransformerDecoder),
}

/// Losses of one teacher-forced example.
pub struct ExampleLoss {
    /// Summed token cross-entropy.
    pub cross_entropy: Var,
    /// Attention penalty (LSTM only).
    pub penalty: Option<Var>,
    /// Predicted token count.
    pub tokens: usize,
}

/// Autoregressive decode of one signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// Emitted ids without the start marker, the end marker or anything after it.
    pub ids: Vec<usize>,
    /// One attention row per emitted step (over K for the LSTM, over K + t for the
    /// Transformer's last layer averaged across heads).
    pub alphas: Vec<Vec<f64>>,
}

pub struct ReportModel {
    pub config: ModelConfig,
    /// Free-form record of how the parameters were produced, stored in checkpoints.
    pub provenance: serde_json::Value,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub vocabulary: Vocabulary,
}

impl ReportModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(config.encoder.clone(), &mut store, &mut rng)?;
        let decoder = match &config.decoder {
            DecoderConfig::Lstm(c) => Decoder::Lstm(LstmDecoder::new(c.clone(), &mut store, &mut rng)?),
            DecoderConfig::Transformer(c) => Decoder::Transformer(TransformerDecoder::new(c.clone(), &mut store, &mut rng)?),
        };
        let vocabulary = Vocabulary::from_tokens(config.vocabulary.clone())?;
        Ok(Self { config, provenance: serde_json::Value::Null, store, encoder, decoder, vocabulary })
    }

    /// Rebuilds the model for `config` and adopts `store`, which must hold the same
    /// tensors in the same order.
    pub fn with_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        let same = model.store.len() == store.len()
            && model.store.iter().zip(store.iter()).all(|((_, a), (_, b))| a.name == b.name && a.value.shape() == b.value.shape());
        if !same {
            return Err(Error::Shape("parameters do not match the model configuration".into()));
        }
        model.store = store;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta { model: self.config.clone(), provenance: self.provenance.clone() };
        checkpoint::save(path, CHECKPOINT_KIND, &meta, &self.store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Checkpoint { path: path.to_path_buf(), message: "no such file".into() });
        }
        let (meta, store): (CheckpointMeta, ParamStore) = checkpoint::load(path, CHECKPOINT_KIND)?;
        let mut model = Self::with_store(meta.model, store).map_err(|e| Error::Checkpoint { path: path.to_path_buf(), message: e.to_string() })?;
        model.provenance = meta.provenance;
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Converts a raw signal to the encoder's input, applying the configured
    /// normalization. `batch` supplies statistics for batch normalization; without it
    /// the stored training-set statistics are used.
    pub fn prepare_signal(&self, raw: &Matrix, batch: Option<&SignalStats>) -> Matrix {
        let m = raw.clone();
        match self.config.normalization {
            SignalNormalization::None => m,
            SignalNormalization::Episode => {
                let stats = SignalStats::of([&m]).expect("signal has samples");
                normalize_signal(&m, &stats)
            }
            SignalNormalization::Dataset | SignalNormalization::Batch => match batch.or(self.config.signal_stats.as_ref()) {
                Some(stats) => normalize_signal(&m, stats),
                None => m,
            },
        }
    }

    /// Teacher-forced losses for one prepared signal and its encoded target.
    pub fn example_loss(
        &self,
        g: &mut Graph,
        signal: &Matrix,
        target: &[usize],
        teacher_forcing: f64,
        lambda: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ExampleLoss> {
        let x = g.input(signal.clone());
        let features = self.encoder.forward(g, x)?;
        let (logits, penalty) = match &self.decoder {
            Decoder::Lstm(d) => {
                let out = d.teacher_forced(g, features, target, teacher_forcing, rng.as_deref_mut())?;
                (out.logits, Some(doubly_stochastic_penalty(g, out.alphas, lambda)))
            }
            Decoder::Transformer(d) => (d.teacher_forced(g, features, target, rng)?.logits, None),
        };
        let (cross_entropy, tokens) = sequence_cross_entropy(g, logits, &target[1..], self.vocabulary.pad_id())?;
        Ok(ExampleLoss { cross_entropy, penalty, tokens })
    }

    /// Decodes from the start marker, choosing uniformly among the `top_k` best
    /// logits at each step, until the end marker or `max_len` emitted tokens.
    pub fn generate(&self, signal: &Matrix, max_len: usize, top_k: usize, rng: &mut impl Rng) -> Result<Generated> {
        let top_k = top_k.max(1);
        let mut g = Graph::new(&self.store);
        let x = g.input(signal.clone());
        let features = self.encoder.forward(&mut g, x)?;
        let (start, end) = (self.vocabulary.start_id(), self.vocabulary.end_id());
        let mut ids = Vec::new();
        let mut alphas = Vec::new();
        match &self.decoder {
            Decoder::Lstm(d) => {
                let mut state = d.init_state(&mut g, features)?;
                let mut token = start;
                while ids.len() < max_len {
                    let (logits, alpha, next) = d.step(&mut g, &state, token, None);
                    state = next;
                    token = pick(g.value(logits), top_k, rng);
                    if token == end {
                        break;
                    }
                    alphas.push(g.value(alpha).data().to_vec());
                    ids.push(token);
                }
            }
            Decoder::Transformer(d) => {
                let mut tokens = vec![start];
                while ids.len() < max_len && tokens.len() <= d.config().max_tokens {
                    let out = d.forward(&mut g, features, &tokens, None)?;
                    let logits = g.value(out.logits);
                    let token = pick(&Matrix::row_vector(logits.row(logits.rows() - 1).to_vec()), top_k, rng);
                    if token == end {
                        break;
                    }
                    let heads = out.last_attention.len() as f64;
                    let row = g.value(out.last_attention[0]).rows() - 1;
                    let mut avg = vec![0.0; g.value(out.last_attention[0]).cols()];
                    for a in &out.last_attention {
                        for (s, v) in avg.iter_mut().zip(g.value(*a).row(row)) {
                            *s += v / heads;
                        }
                    }
                    alphas.push(avg);
                    ids.push(token);
                    tokens.push(token);
                }
            }
        }
        Ok(Generated { ids, alphas })
    }
}

fn pick(logits: &Matrix, top_k: usize, rng: &mut impl Rng) -> usize {
    if top_k == 1 {
        return argmax_row(logits, 0);
    }
    let mut order: Vec<usize> = (0..logits.cols()).collect();
    order.sort_by(|&a, &b| logits.get(0, b).total_cmp(&logits.get(0, a)).then(a.cmp(&b)));
    order[rng.gen_range(0..top_k.min(order.len()))]
}

/// Summed cross-entropy of `logits` (`T × V`) against `targets`, skipping `pad_id`.
/// Returns the loss and the number of non-pad positions.
pub fn sequence_cross_entropy(g: &mut Graph, logits: Var, targets: &[usize], pad_id: usize) -> Result<(Var, usize)> {
    let (rows, _) = g.shape(logits);
    if rows != targets.len() {
        return Err(Error::Shape(format!("{rows} logit rows for {} targets", targets.len())));
    }
    let t: Vec<Option<usize>> = targets.iter().map(|&t| (t != pad_id).then_some(t)).collect();
    let n = t.iter().flatten().count();
    if n == 0 {
        return Err(Error::Shape("every target position is padding".into()));
    }
    Ok((g.cross_entropy_sum(logits, &t), n))
}
