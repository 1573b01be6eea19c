//! Decoder forward passes against loop-level reimplementations that read the same
//! parameters by name.

use approx::assert_abs_diff_eq;
use ecg_report::decoders::{lstm_attend, AttentionVars, TransformerConfig, TransformerDecoder};
use ecg_report::nn::{Graph, Matrix, ParamGroup, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn param<'a>(store: &'a ParamStore, name: &str) -> &'a Matrix {
    let (id, _) = store.iter().find(|(_, p)| p.name == name).unwrap_or_else(|| panic!("no parameter {name}"));
    store.get(id)
}

fn mm(a: &[Vec<f64>], b: &Matrix) -> Vec<Vec<f64>> {
    a.iter().map(|row| (0..b.cols()).map(|j| row.iter().enumerate().map(|(i, x)| x * b.get(i, j)).sum()).collect()).collect()
}

fn affine(a: &[Vec<f64>], w: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    mm(a, w).into_iter().map(|r| r.iter().enumerate().map(|(j, v)| v + b.get(0, j)).collect()).collect()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn lstm_attention_matches_loop_oracle_with_three_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (hd, c, k, a) = (4, 3, 3, 5);
    let mut store = ParamStore::new();
    let mats = [random(&mut rng, hd, a), random(&mut rng, 1, a), random(&mut rng, c, a), random(&mut rng, 1, a), random(&mut rng, a, 1), random(&mut rng, 1, 1)];
    let ids: Vec<_> = mats.iter().enumerate().map(|(i, m)| store.add(format!("p{i}"), ParamGroup::Decoder, m.clone())).collect();
    let h = random(&mut rng, 1, hd);
    let f = random(&mut rng, k, c);

    let mut g = Graph::new(&store);
    let p = AttentionVars { w1: g.param(ids[0]), b1: g.param(ids[1]), w2: g.param(ids[2]), b2: g.param(ids[3]), w: g.param(ids[4]), b: g.param(ids[5]) };
    let (hv, fv) = (g.input(h.clone()), g.input(f.clone()));
    let (alpha, ctx) = lstm_attend(&mut g, hv, fv, &p);

    let att2 = affine(&rows(&h), &mats[0], &mats[1])[0].clone();
    let att1 = affine(&rows(&f), &mats[2], &mats[3]);
    let scores: Vec<f64> = att1
        .iter()
        .map(|r| r.iter().zip(&att2).enumerate().map(|(j, (x, y))| (x + y).max(0.0) * mats[4].get(j, 0)).sum::<f64>() + mats[5].get(0, 0))
        .collect();
    let expected_alpha = softmax(&scores);
    let expected_ctx: Vec<f64> = (0..c).map(|j| (0..k).map(|i| expected_alpha[i] * f.get(i, j)).sum()).collect();
    assert_eq!(g.value(alpha).shape(), (1, k));
    for i in 0..k {
        assert_abs_diff_eq!(g.value(alpha).get(0, i), expected_alpha[i], epsilon = 1e-12);
    }
    for j in 0..c {
        assert_abs_diff_eq!(g.value(ctx).get(0, j), expected_ctx[j], epsilon = 1e-12);
    }
}

#[test]
fn constant_scores_give_uniform_attention_and_mean_context() {
    let mut store = ParamStore::new();
    let zeros = |r, c| Matrix::zeros(r, c);
    let ids: Vec<_> = [zeros(2, 3), zeros(1, 3), zeros(2, 3), Matrix::filled(1, 3, 0.5), Matrix::filled(3, 1, 1.0), zeros(1, 1)]
        .into_iter()
        .enumerate()
        .map(|(i, m)| store.add(format!("p{i}"), ParamGroup::Decoder, m))
        .collect();
    let mut g = Graph::new(&store);
    let p = AttentionVars { w1: g.param(ids[0]), b1: g.param(ids[1]), w2: g.param(ids[2]), b2: g.param(ids[3]), w: g.param(ids[4]), b: g.param(ids[5]) };
    let h = g.input(Matrix::row_vector(vec![0.3, -0.2]));
    let f = g.input(Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]));
    let (alpha, ctx) = lstm_attend(&mut g, h, f, &p);
    for i in 0..3 {
        assert_abs_diff_eq!(g.value(alpha).get(0, i), 1.0 / 3.0, epsilon = 1e-15);
    }
    assert_abs_diff_eq!(g.value(ctx).get(0, 0), 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(g.value(ctx).get(0, 1), 5.0, epsilon = 1e-12);
}

fn layer_norm(x: &[f64], gain: &Matrix, bias: &Matrix) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter().enumerate().map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * gain.get(0, j) + bias.get(0, j)).collect()
}

#[test]
fn one_layer_one_head_transformer_matches_loop_oracle() {
    let (d, ff, vocab) = (4, 6, 5);
    let cfg = TransformerConfig { feature_dim: d, model_dim: d, layers: 1, heads: 1, ff_dim: ff, vocab_size: vocab, feature_positions: 1, max_tokens: 4, dropout: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let dec = TransformerDecoder::new(cfg, &mut store, &mut rng).unwrap();
    // Move layer-norm parameters off their identity initialization.
    for (id, name) in store.iter().map(|(id, p)| (id, p.name.clone())).collect::<Vec<_>>() {
        if name.contains("norm") {
            let m = random(&mut rng, 1, d);
            store.get_mut(id).data_mut().iter_mut().zip(m.data()).for_each(|(v, n)| *v += 0.3 * n);
        }
    }
    let features = random(&mut rng, d, 1);
    let tokens = [2usize, 0];

    let mut g = Graph::new(&store);
    let fv = g.input(features.clone());
    let out = dec.forward(&mut g, fv, &tokens, None).unwrap();
    let logits = g.value(out.logits).clone();
    let attention = g.value(out.last_attention[0]).clone();

    let p = |n: &str| param(&store, &format!("transformer.{n}"));
    // Sequence: the feature column, then token embeddings plus positions.
    let mut x = vec![features.column(0)];
    for (t, &tok) in tokens.iter().enumerate() {
        x.push((0..d).map(|j| p("token_embedding").get(tok, j) + p("token_positions").get(t, j)).collect());
    }
    let q = affine(&x, p("layer0.attention.query.weight"), p("layer0.attention.query.bias"));
    let k = affine(&x, p("layer0.attention.key.weight"), p("layer0.attention.key.bias"));
    let v = affine(&x, p("layer0.attention.value.weight"), p("layer0.attention.value.bias"));
    // Row 0 (feature) sees only itself; token row i sees the feature and tokens up to i.
    let visible = |i: usize, j: usize| if i == 0 { j == 0 } else { j <= i };
    let mut att = vec![vec![0.0; 3]; 3];
    let mut mixed = vec![vec![0.0; d]; 3];
    for i in 0..3 {
        let allowed: Vec<usize> = (0..3).filter(|&j| visible(i, j)).collect();
        let scores: Vec<f64> = allowed.iter().map(|&j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt()).collect();
        for (w, &j) in softmax(&scores).iter().zip(&allowed) {
            att[i][j] = *w;
            for c in 0..d {
                mixed[i][c] += w * v[j][c];
            }
        }
    }
    let o = affine(&mixed, p("layer0.attention.output.weight"), p("layer0.attention.output.bias"));
    let h1: Vec<Vec<f64>> = (0..3)
        .map(|i| layer_norm(&(0..d).map(|c| x[i][c] + o[i][c]).collect::<Vec<_>>(), p("layer0.norm1.gain"), p("layer0.norm1.bias")))
        .collect();
    let hidden: Vec<Vec<f64>> = affine(&h1, p("layer0.ff1.weight"), p("layer0.ff1.bias")).into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
    let f2 = affine(&hidden, p("layer0.ff2.weight"), p("layer0.ff2.bias"));
    let h2: Vec<Vec<f64>> = (0..3)
        .map(|i| layer_norm(&(0..d).map(|c| h1[i][c] + f2[i][c]).collect::<Vec<_>>(), p("layer0.norm2.gain"), p("layer0.norm2.bias")))
        .collect();
    let expected = affine(&h2[1..], p("output.weight"), p("output.bias"));

    assert_eq!(logits.shape(), (2, vocab));
    for t in 0..2 {
        for j in 0..vocab {
            assert_abs_diff_eq!(logits.get(t, j), expected[t][j], epsilon = 1e-10);
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            assert_abs_diff_eq!(attention.get(i, j), att[i][j], epsilon = 1e-12);
        }
    }
    assert_eq!(attention.get(1, 2), 0.0, "first token must not see the second");
}
