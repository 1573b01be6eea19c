//! Decoder-only Transformer over `[f_1..f_K, e_1..e_T]`.
//!
//! Feature positions attend among themselves; token position `t` attends to every
//! feature and to tokens `<= t`. Layers are post-norm: `x = LN(x + MHA(x))`,
//! `x = LN(x + FFN(x))`. Logits are read at token positions only.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dropout;
use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, AttentionMask, Graph, Matrix, ParamGroup, ParamId, ParamStore, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub feature_dim: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    /// K, the number of feature columns.
    pub feature_positions: usize,
    /// Size of the learned token position table.
    pub max_tokens: usize,
    pub dropout: f64,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("model_dim", self.model_dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("vocab_size", self.vocab_size),
            ("feature_positions", self.feature_positions),
            ("max_tokens", self.max_tokens),
        ] {
            if v == 0 {
                problems.push(format!("transformer {name} must be positive"));
            }
        }
        if self.heads > 0 && self.model_dim % self.heads != 0 {
            problems.push(format!("transformer model_dim {} is not divisible by {} heads", self.model_dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("transformer dropout must lie in [0, 1), got {}", self.dropout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn projects_features(&self) -> bool {
        self.feature_dim != self.model_dim
    }

    pub fn parameter_count(&self) -> usize {
        let (d, f, v) = (self.model_dim, self.ff_dim, self.vocab_size);
        let mut n = v * d + self.max_tokens * d + d * v + v;
        if self.projects_features() {
            n += self.feature_dim * d + d;
        }
        if self.feature_positions > 1 {
            n += self.feature_positions * d;
        }
        n + self.layers * (4 * (d * d + d) + 2 * (2 * d) + d * f + f + f * d + d)
    }
}

/// Mask for `k` feature positions followed by `t` token positions.
pub fn prefix_causal_mask(k: usize, t: usize) -> AttentionMask {
    AttentionMask::from_fn(k + t, k + t, |i, j| if i < k { j < k } else { j < k || j <= i })
}

struct Layer {
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    o: (ParamId, ParamId),
    ln1: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
}

pub struct TransformerDecoder {
    config: TransformerConfig,
    projection: Option<(ParamId, ParamId)>,
    feature_pos: Option<ParamId>,
    token_embedding: ParamId,
    token_pos: ParamId,
    layers: Vec<Layer>,
    out: (ParamId, ParamId),
}

fn linear(store: &mut ParamStore, rng: &mut impl Rng, name: &str, rows: usize, cols: usize) -> (ParamId, ParamId) {
    let w = fan_in_uniform(rng, rows, cols, rows);
    let b = fan_in_uniform(rng, 1, cols, rows);
    (
        store.add(format!("transformer.{name}.weight"), ParamGroup::Decoder, w),
        store.add(format!("transformer.{name}.bias"), ParamGroup::Decoder, b),
    )
}

/// Row table initialized uniformly in `±1/sqrt(scale)`.
fn table(store: &mut ParamStore, rng: &mut impl Rng, name: &str, rows: usize, cols: usize, scale: usize) -> ParamId {
    store.add(format!("transformer.{name}"), ParamGroup::Decoder, fan_in_uniform(rng, rows, cols, scale))
}

pub struct TransformerOutput {
    /// `T × vocab`, one row per token position.
    pub logits: Var,
    /// Last-layer attention per head, each `(K + T) × (K + T)`.
    pub last_attention: Vec<Var>,
}

impl TransformerDecoder {
    pub fn new(config: TransformerConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (d, ff, v) = (config.model_dim, config.ff_dim, config.vocab_size);
        let projection = config.projects_features().then(|| linear(store, rng, "feature_projection", config.feature_dim, d));
        let feature_pos = (config.feature_positions > 1).then(|| table(store, rng, "feature_positions", config.feature_positions, d, 100));
        let token_embedding = table(store, rng, "token_embedding", v, d, 1);
        let token_pos = table(store, rng, "token_positions", config.max_tokens, d, 100);
        let norm = |store: &mut ParamStore, name: String| {
            (
                store.add(format!("transformer.{name}.gain"), ParamGroup::Decoder, Matrix::filled(1, d, 1.0)),
                store.add(format!("transformer.{name}.bias"), ParamGroup::Decoder, Matrix::zeros(1, d)),
            )
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("layer{l}");
            let q = linear(store, rng, &format!("{p}.attention.query"), d, d);
            let k = linear(store, rng, &format!("{p}.attention.key"), d, d);
            let vv = linear(store, rng, &format!("{p}.attention.value"), d, d);
            let o = linear(store, rng, &format!("{p}.attention.output"), d, d);
            let ln1 = norm(store, format!("{p}.norm1"));
            let ff1 = linear(store, rng, &format!("{p}.ff1"), d, ff);
            let ff2 = linear(store, rng, &format!("{p}.ff2"), ff, d);
            let ln2 = norm(store, format!("{p}.norm2"));
            layers.push(Layer { q, k, v: vv, o, ln1, ff1, ff2, ln2 });
        }
        let out = linear(store, rng, "output", d, v);
        Ok(Self { config, projection, feature_pos, token_embedding, token_pos, layers, out })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    fn affine(g: &mut Graph, x: Var, (w, b): (ParamId, ParamId)) -> Var {
        let w = g.param(w);
        let b = g.param(b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    /// Combined input sequence `(K + T) × model_dim`: projected features with their
    /// positions, then token embeddings with theirs.
    pub fn build_input(&self, g: &mut Graph, features: Var, tokens: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let (c, k) = g.shape(features);
        if c != self.config.feature_dim || k != self.config.feature_positions {
            return Err(Error::Shape(format!(
                "transformer expects {}x{} features, got {c}x{k}",
                self.config.feature_dim, self.config.feature_positions
            )));
        }
        if tokens.len() > self.config.max_tokens {
            return Err(Error::Shape(format!("{} tokens exceed the position table of {}", tokens.len(), self.config.max_tokens)));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Shape(format!("token id {bad} outside vocabulary of {}", self.config.vocab_size)));
        }
        let mut f = g.transpose(features);
        if let Some(p) = self.projection {
            f = Self::affine(g, f, p);
        }
        if let Some(id) = self.feature_pos {
            let pos = g.param(id);
            f = g.add(f, pos);
        }
        if tokens.is_empty() {
            return Ok(f);
        }
        let table = g.param(self.token_embedding);
        let e = g.gather_rows(table, tokens);
        let pos_table = g.param(self.token_pos);
        let pos = g.slice_rows(pos_table, 0, tokens.len());
        let e = g.add(e, pos);
        let x = g.concat_rows(&[f, e]);
        Ok(dropout(g, x, self.config.dropout, rng.as_deref_mut()))
    }

    /// One post-norm layer. Returns the output and the per-head attention matrices.
    pub fn layer(&self, g: &mut Graph, index: usize, x: Var, mask: &AttentionMask, mut rng: Option<&mut ChaCha8Rng>) -> (Var, Vec<Var>) {
        let layer = &self.layers[index];
        let d = self.config.model_dim;
        let dh = d / self.config.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = Self::affine(g, x, layer.q);
        let k = Self::affine(g, x, layer.k);
        let v = Self::affine(g, x, layer.v);
        let mut heads = Vec::with_capacity(self.config.heads);
        let mut attention = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let s = g.matmul_t(qh, kh);
            let s = g.scale(s, scale);
            let a = g.masked_softmax_rows(s, mask);
            attention.push(a);
            heads.push(g.matmul(a, vh));
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let attn = Self::affine(g, cat, layer.o);
        let attn = dropout(g, attn, self.config.dropout, rng.as_deref_mut());
        let r = g.add(x, attn);
        let (g1, b1) = (g.param(layer.ln1.0), g.param(layer.ln1.1));
        let x = g.layer_norm_rows(r, g1, b1, LN_EPS);
        let hdn = Self::affine(g, x, layer.ff1);
        let hdn = g.relu(hdn);
        let ff = Self::affine(g, hdn, layer.ff2);
        let ff = dropout(g, ff, self.config.dropout, rng.as_deref_mut());
        let r = g.add(x, ff);
        let (g2, b2) = (g.param(layer.ln2.0), g.param(layer.ln2.1));
        (g.layer_norm_rows(r, g2, b2, LN_EPS), attention)
    }

    /// Next-token logits at each of the `tokens.len()` token positions.
    pub fn forward(&self, g: &mut Graph, features: Var, tokens: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<TransformerOutput> {
        if tokens.is_empty() {
            return Err(Error::Shape("transformer needs at least one input token".into()));
        }
        let mut x = self.build_input(g, features, tokens, rng.as_deref_mut())?;
        let k = self.config.feature_positions;
        let mask = prefix_causal_mask(k, tokens.len());
        let mut last_attention = Vec::new();
        for l in 0..self.layers.len() {
            let (y, att) = self.layer(g, l, x, &mask, rng.as_deref_mut());
            x = y;
            last_attention = att;
        }
        let tok = g.slice_rows(x, k, tokens.len());
        let logits = Self::affine(g, tok, self.out);
        if !g.value(logits).is_finite() {
            return Err(Error::NonFinite("transformer logits".into()));
        }
        Ok(TransformerOutput { logits, last_attention })
    }

    /// Teacher-forced pass: inputs `target[..n-1]`, one logit row per predicted `target[1..]`.
    pub fn teacher_forced(&self, g: &mut Graph, features: Var, target: &[usize], rng: Option<&mut ChaCha8Rng>) -> Result<TransformerOutput> {
        if target.len() < 2 {
            return Err(Error::Shape("target must hold at least a start and an end token".into()));
        }
        self.forward(g, features, &target[..target.len() - 1], rng)
    }
}
