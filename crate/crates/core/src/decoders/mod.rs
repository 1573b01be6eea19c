//! Report decoders: an LSTM with soft temporal attention and a Transformer over
//! the concatenated feature-and-token sequence.

pub mod lstm;
pub mod transformer;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Graph, Matrix, Var};

pub use lstm::{lstm_attend, AttentionVars, LstmConfig, LstmDecoder, LstmOutput, LstmState};
pub use transformer::{prefix_causal_mask, TransformerConfig, TransformerDecoder, TransformerOutput};

/// `λ · Σ_k (1 − Σ_t α_tk)²` for a `T × K` attention matrix.
pub fn doubly_stochastic_penalty(g: &mut Graph, alphas: Var, lambda: f64) -> Var {
    let coverage = g.sum_rows(alphas);
    let gap = g.scale(coverage, -1.0);
    let gap = g.add_scalar(gap, 1.0);
    let sq = g.square(gap);
    let total = g.sum(sq);
    g.scale(total, lambda)
}

/// Value-only form of [`doubly_stochastic_penalty`].
pub fn doubly_stochastic_penalty_value(alphas: &Matrix, lambda: f64) -> f64 {
    let (t, k) = alphas.shape();
    lambda * (0..k).map(|j| (1.0 - (0..t).map(|i| alphas.get(i, j)).sum::<f64>()).powi(2)).sum::<f64>()
}

/// Inverted dropout; identity when `rng` is `None` or `p == 0`.
pub(crate) fn dropout(g: &mut Graph, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Var {
    let Some(rng) = rng else { return x };
    if p <= 0.0 {
        return x;
    }
    let (r, c) = g.shape(x);
    let keep = 1.0 / (1.0 - p);
    let mask = Matrix::from_fn(r, c, |_, _| if rng.gen::<f64>() < p { 0.0 } else { keep });
    let m = g.input(mask);
    g.mul(x, m)
}

/// Index of the largest entry of row `r` (first one on ties).
pub(crate) fn argmax_row(m: &Matrix, r: usize) -> usize {
    m.row(r).iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) }).0
}
