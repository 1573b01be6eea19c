//! LSTM decoder with additive soft attention over the K feature columns.
//!
//! All vectors are row vectors. For hidden state `h` and features `F` (`K × C`):
//!
//! ```text
//! score_k = w · relu(h W1 + b1 + f_k W2 + b2) + b
//! α       = softmax(score)
//! ctx     = α F
//! ```
//!
//! The cell input is `[embed(token); ctx]`, and the initial `(h, c)` are affine
//! maps of the mean feature vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_row, dropout};
use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, Graph, ParamGroup, ParamId, ParamStore, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                problems.push(format!("lstm {name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("lstm dropout must lie in [0, 1), got {}", self.dropout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn parameter_count(&self) -> usize {
        let (v, e, h, a, c) = (self.vocab_size, self.embed_dim, self.hidden_dim, self.attention_dim, self.feature_dim);
        v * e + (c * a + a) + (h * a + a) + (a + 1) + 2 * (c * h + h) + (e + c) * 4 * h + h * 4 * h + 4 * h + h * v + v
    }
}

/// Graph handles of the attention parameters.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    /// `hidden × attn`
    pub w1: Var,
    pub b1: Var,
    /// `feature × attn`
    pub w2: Var,
    pub b2: Var,
    /// `attn × 1`
    pub w: Var,
    pub b: Var,
}

/// Attention weights (`1 × K`) and context vector (`1 × C`) for hidden state `h`
/// (`1 × H`) over feature rows `feats` (`K × C`).
pub fn lstm_attend(g: &mut Graph, h: Var, feats: Var, p: &AttentionVars) -> (Var, Var) {
    let att1 = g.matmul(feats, p.w2);
    let att1 = g.add_row(att1, p.b2);
    attend_projected(g, att1, h, feats, p)
}

fn attend_projected(g: &mut Graph, att1: Var, h: Var, feats: Var, p: &AttentionVars) -> (Var, Var) {
    let att2 = g.matmul(h, p.w1);
    let att2 = g.add_row(att2, p.b1);
    let hidden = g.add_row(att1, att2);
    let hidden = g.relu(hidden);
    let scores = g.matmul(hidden, p.w);
    let scores = g.transpose(scores);
    let scores = g.add_col(scores, p.b);
    let alpha = g.softmax_rows(scores);
    let ctx = g.matmul(alpha, feats);
    (alpha, ctx)
}

struct Ids {
    embedding: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    w: ParamId,
    b: ParamId,
    init_h: ParamId,
    init_h_b: ParamId,
    init_c: ParamId,
    init_c_b: ParamId,
    w_x: ParamId,
    w_h: ParamId,
    b_gates: ParamId,
    out: ParamId,
    out_b: ParamId,
}

pub struct LstmDecoder {
    config: LstmConfig,
    ids: Ids,
}

/// Per-sequence decoding state.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
    feats: Var,
    att1: Var,
}

/// Teacher-forced decode of one sequence.
pub struct LstmOutput {
    /// `T × vocab`
    pub logits: Var,
    /// `T × K`
    pub alphas: Var,
}

impl LstmDecoder {
    pub fn new(config: LstmConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (v, e, h, a, c) = (config.vocab_size, config.embed_dim, config.hidden_dim, config.attention_dim, config.feature_dim);
        let mut add = |name: &str, rows: usize, cols: usize, fan_in: usize| {
            store.add(format!("lstm.{name}"), ParamGroup::Decoder, fan_in_uniform(rng, rows, cols, fan_in))
        };
        let ids = Ids {
            embedding: add("embedding", v, e, 1),
            w1: add("attention.hidden", h, a, h),
            b1: add("attention.hidden_bias", 1, a, h),
            w2: add("attention.feature", c, a, c),
            b2: add("attention.feature_bias", 1, a, c),
            w: add("attention.score", a, 1, a),
            b: add("attention.score_bias", 1, 1, a),
            init_h: add("init_h", c, h, c),
            init_h_b: add("init_h_bias", 1, h, c),
            init_c: add("init_c", c, h, c),
            init_c_b: add("init_c_bias", 1, h, c),
            w_x: add("cell.input", e + c, 4 * h, h),
            w_h: add("cell.hidden", h, 4 * h, h),
            b_gates: add("cell.bias", 1, 4 * h, h),
            out: add("output", h, v, h),
            out_b: add("output_bias", 1, v, h),
        };
        Ok(Self { config, ids })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    fn attention_vars(&self, g: &mut Graph) -> AttentionVars {
        AttentionVars {
            w1: g.param(self.ids.w1),
            b1: g.param(self.ids.b1),
            w2: g.param(self.ids.w2),
            b2: g.param(self.ids.b2),
            w: g.param(self.ids.w),
            b: g.param(self.ids.b),
        }
    }

    /// Initial state from a `C × K` feature map.
    pub fn init_state(&self, g: &mut Graph, features: Var) -> Result<LstmState> {
        let (c, k) = g.shape(features);
        if c != self.config.feature_dim || k == 0 {
            return Err(Error::Shape(format!("lstm expects {} feature channels, got {c}x{k}", self.config.feature_dim)));
        }
        let feats = g.transpose(features);
        let mean = g.mean_rows(feats);
        let affine = |g: &mut Graph, w: ParamId, b: ParamId| {
            let w = g.param(w);
            let b = g.param(b);
            let y = g.matmul(mean, w);
            g.add_row(y, b)
        };
        let h = affine(g, self.ids.init_h, self.ids.init_h_b);
        let c = affine(g, self.ids.init_c, self.ids.init_c_b);
        let w2 = g.param(self.ids.w2);
        let b2 = g.param(self.ids.b2);
        let att1 = g.matmul(feats, w2);
        let att1 = g.add_row(att1, b2);
        Ok(LstmState { h, c, feats, att1 })
    }

    /// One step: attend with the previous hidden state, advance the cell on
    /// `[embed(token); ctx]`, emit `1 × vocab` logits. Returns `(logits, alpha, next)`.
    pub fn step(&self, g: &mut Graph, state: &LstmState, token: usize, mut rng: Option<&mut ChaCha8Rng>) -> (Var, Var, LstmState) {
        let p = self.config.dropout;
        let hd = self.config.hidden_dim;
        let att = self.attention_vars(g);
        let (alpha, ctx) = attend_projected(g, state.att1, state.h, state.feats, &att);
        let table = g.param(self.ids.embedding);
        let emb = g.gather_rows(table, &[token]);
        let emb = dropout(g, emb, p, rng.as_deref_mut());
        let x = g.concat_cols(&[emb, ctx]);
        let w_x = g.param(self.ids.w_x);
        let w_h = g.param(self.ids.w_h);
        let b = g.param(self.ids.b_gates);
        let zx = g.matmul(x, w_x);
        let zh = g.matmul(state.h, w_h);
        let z = g.add(zx, zh);
        let z = g.add_row(z, b);
        let zi = g.slice_cols(z, 0, hd);
        let zf = g.slice_cols(z, hd, hd);
        let zg = g.slice_cols(z, 2 * hd, hd);
        let zo = g.slice_cols(z, 3 * hd, hd);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, state.c);
        let write = g.mul(i, cand);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        let hd_out = dropout(g, h, p, rng.as_deref_mut());
        let w_out = g.param(self.ids.out);
        let b_out = g.param(self.ids.out_b);
        let logits = g.matmul(hd_out, w_out);
        let logits = g.add_row(logits, b_out);
        (logits, alpha, LstmState { h, c, feats: state.feats, att1: state.att1 })
    }

    /// Decodes `target.len() - 1` steps. Step `t` is fed `target[t]` with probability
    /// `teacher_forcing`, otherwise the argmax of step `t - 1`; step 0 is always fed
    /// `target[0]`.
    pub fn teacher_forced(
        &self,
        g: &mut Graph,
        features: Var,
        target: &[usize],
        teacher_forcing: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<LstmOutput> {
        if target.len() < 2 {
            return Err(Error::Shape("target must hold at least a start and an end token".into()));
        }
        if let Some(&bad) = target.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Shape(format!("target id {bad} outside vocabulary of {}", self.config.vocab_size)));
        }
        let mut state = self.init_state(g, features)?;
        let mut logits = Vec::with_capacity(target.len() - 1);
        let mut alphas = Vec::with_capacity(target.len() - 1);
        for t in 0..target.len() - 1 {
            let token = if t == 0 || teacher_forcing >= 1.0 {
                target[t]
            } else {
                let forced = match rng.as_deref_mut() {
                    Some(r) => r.gen::<f64>() < teacher_forcing,
                    None => teacher_forcing > 0.0,
                };
                if forced {
                    target[t]
                } else {
                    argmax_row(g.value(*logits.last().expect("t > 0")), 0)
                }
            };
            let (l, a, next) = self.step(g, &state, token, rng.as_deref_mut());
            logits.push(l);
            alphas.push(a);
            state = next;
        }
        let logits = g.concat_rows(&logits);
        let alphas = g.concat_rows(&alphas);
        if !g.value(logits).is_finite() {
            return Err(Error::NonFinite("lstm logits".into()));
        }
        Ok(LstmOutput { logits, alphas })
    }
}
