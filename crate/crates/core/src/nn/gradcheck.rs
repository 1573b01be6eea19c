//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values; it never touches the
//! tape's backward rules.

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Lower bound on the denominator of the relative error.
    pub scale_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, scale_floor: 1e-5 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(tensor name, flat index, analytic, numeric)` at the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64, floor: f64) {
        self.checked += 1;
        let rel = relative_error(analytic, numeric, floor);
        if self.worst.is_none() || rel > self.max_rel_error {
            self.max_rel_error = rel;
            self.worst = Some((name.to_string(), index, analytic, numeric));
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks every scalar of every parameter in `store` for the scalar loss built by `build`.
pub fn check_params(store: &ParamStore, build: impl Fn(&mut Graph) -> Var, config: &GradCheckConfig) -> GradCheckReport {
    let ids: Vec<ParamId> = store.ids().collect();
    check_selected_params(store, &ids, build, config)
}

pub fn check_selected_params(
    store: &ParamStore,
    ids: &[ParamId],
    build: impl Fn(&mut Graph) -> Var,
    config: &GradCheckConfig,
) -> GradCheckReport {
    let analytic = {
        let mut g = Graph::new(store);
        let loss = build(&mut g);
        g.backward(loss).params
    };
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let loss = build(&mut g);
        g.value(loss).get(0, 0)
    };
    let mut work = store.clone();
    let mut report = GradCheckReport::default();
    for &id in ids {
        let name = store.param(id).name.clone();
        let n = store.get(id).len();
        for i in 0..n {
            let original = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = original + config.step;
            let plus = eval(&work);
            work.get_mut(id).data_mut()[i] = original - config.step;
            let minus = eval(&work);
            work.get_mut(id).data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * config.step);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            report.record(&name, i, a, numeric, config.scale_floor);
        }
    }
    report
}

/// Checks gradients with respect to constant inputs of a parameter-free graph.
pub fn check_inputs(inputs: &[Matrix], build: impl Fn(&mut Graph, &[Var]) -> Var, config: &GradCheckConfig) -> GradCheckReport {
    let store = ParamStore::new();
    let eval = |xs: &[Matrix]| {
        let mut g = Graph::new(&store);
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let loss = build(&mut g, &vars);
        (g, vars, loss)
    };
    let (g, vars, loss) = eval(inputs);
    let bp = g.backward(loss);
    let analytic: Vec<Option<Matrix>> = vars.iter().map(|&v| bp.wrt(v).cloned()).collect();
    drop(bp);
    drop(g);

    let mut work = inputs.to_vec();
    let mut report = GradCheckReport::default();
    for k in 0..work.len() {
        for i in 0..work[k].len() {
            let original = work[k].data()[i];
            work[k].data_mut()[i] = original + config.step;
            let plus = {
                let (g, _, l) = eval(&work);
                g.value(l).get(0, 0)
            };
            work[k].data_mut()[i] = original - config.step;
            let minus = {
                let (g, _, l) = eval(&work);
                g.value(l).get(0, 0)
            };
            work[k].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * config.step);
            let a = analytic[k].as_ref().map_or(0.0, |g| g.data()[i]);
            report.record(&format!("input{k}"), i, a, numeric, config.scale_floor);
        }
    }
    report
}
