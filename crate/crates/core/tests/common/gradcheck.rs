//! Central-difference gradient checking written independently of the library's own
//! checker: analytic gradients come from `Graph::backward`, numeric ones from
//! re-evaluating the forward pass with one scalar nudged at a time.

use ecg_report::nn::{Graph, Matrix, ParamId, ParamStore, Var};
use rand::Rng;

const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-3;

/// `Σ_ij x_ij · w_ij` as a scalar node, for turning any output into a loss.
pub fn weighted_sum(g: &mut Graph, x: Var, w: &Matrix) -> Var {
    let wv = g.input(w.clone());
    let prod = g.mul(x, wv);
    g.sum(prod)
}

/// Adds uniform noise in `±scale` to every parameter so no value sits at its
/// initialization symmetry (zero biases, identical rows).
pub fn jitter(store: &mut ParamStore, rng: &mut impl Rng, scale: f64) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

fn scalar(store: &ParamStore, build: &dyn Fn(&mut Graph) -> Var) -> f64 {
    let mut g = Graph::new(store);
    let root = build(&mut g);
    let v = g.value(root);
    assert_eq!(v.shape(), (1, 1), "loss must be a scalar");
    v.get(0, 0)
}

pub fn max_rel_error(store: &mut ParamStore, build: impl Fn(&mut Graph) -> Var) -> f64 {
    let ids: Vec<ParamId> = store.ids().collect();
    max_rel_error_selected(store, &ids, build)
}

/// Largest `|a − n| / max(|a|, |n|, FLOOR)` over every scalar of `ids`.
pub fn max_rel_error_selected(store: &mut ParamStore, ids: &[ParamId], build: impl Fn(&mut Graph) -> Var) -> f64 {
    let analytic: Vec<Matrix> = {
        let mut g = Graph::new(store);
        let root = build(&mut g);
        let grads = g.backward(root).params;
        ids.iter().map(|&id| grads.get(id).cloned().unwrap_or_else(|| Matrix::zeros(store.get(id).rows(), store.get(id).cols()))).collect()
    };
    let mut worst = 0.0f64;
    for (&id, a) in ids.iter().zip(&analytic) {
        for i in 0..a.len() {
            let x = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = x + STEP;
            let plus = scalar(store, &build);
            store.get_mut(id).data_mut()[i] = x - STEP;
            let minus = scalar(store, &build);
            store.get_mut(id).data_mut()[i] = x;
            let numeric = (plus - minus) / (2.0 * STEP);
            let an = a.data()[i];
            worst = worst.max((an - numeric).abs() / an.abs().max(numeric.abs()).max(FLOOR));
        }
    }
    worst
}
