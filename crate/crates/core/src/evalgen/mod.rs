//! Report generation, scoring, the all-ones sanity check and attention export.

mod attention;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::metrics::{corpus_evaluate, MeteorConfig, MetricReport};
use crate::model::ReportModel;
use crate::nn::Matrix;
use crate::textprep::decode_tokens;

pub use attention::{export_attention, read_attention_tsv, upsample_attention, AttentionExport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub episode_id: String,
    /// Generated tokens with special tokens removed.
    pub tokens: Vec<String>,
    /// One attention row per generated step.
    pub alphas: Vec<Vec<f64>>,
}

impl GenerationResult {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Generates a report for one raw `leads × samples` signal. At `top_k = 1` the
/// result does not depend on `seed`.
pub fn generate(model: &ReportModel, episode_id: &str, signal: &Matrix, max_len: usize, top_k: usize, seed: u64) -> Result<GenerationResult> {
    generate_indexed(model, episode_id, signal, max_len, top_k, seed, 0)
}

fn generate_indexed(
    model: &ReportModel,
    episode_id: &str,
    signal: &Matrix,
    max_len: usize,
    top_k: usize,
    seed: u64,
    index: u64,
) -> Result<GenerationResult> {
    let leads = model.config.encoder.input_leads;
    if signal.rows() != leads {
        return Err(Error::Shape(format!("episode {episode_id} has {} leads, model expects {leads}", signal.rows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let input = model.prepare_signal(signal, None);
    let out = model.generate(&input, max_len.saturating_sub(2), top_k, &mut rng)?;
    let tokens = decode_tokens(&out.ids, &model.vocabulary)?;
    Ok(GenerationResult { episode_id: episode_id.to_string(), tokens, alphas: out.alphas })
}

/// Generates for every example in parallel; output order follows `examples`.
pub fn generate_all(model: &ReportModel, examples: &[Example], max_len: usize, top_k: usize, seed: u64) -> Result<Vec<GenerationResult>> {
    examples
        .par_iter()
        .enumerate()
        .map(|(i, e)| generate_indexed(model, &e.episode_id, &e.signal, max_len, top_k, seed, i as u64))
        .collect()
}

/// Scores generated reports against the examples' references.
pub fn score(examples: &[Example], generated: &[GenerationResult], meteor: &MeteorConfig) -> Result<MetricReport> {
    if examples.len() != generated.len() {
        return Err(Error::Shape(format!("{} examples but {} generations", examples.len(), generated.len())));
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = generated.iter().zip(examples).map(|(g, e)| (g.tokens.clone(), e.reference.clone())).collect();
    corpus_evaluate(&pairs, meteor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricReport,
    pub generations: Vec<GenerationResult>,
}

pub fn evaluate(model: &ReportModel, examples: &[Example], max_len: usize, top_k: usize, seed: u64, meteor: &MeteorConfig) -> Result<Evaluation> {
    let generations = generate_all(model, examples, max_len, top_k, seed)?;
    let report = score(examples, &generations, meteor)?;
    Ok(Evaluation { report, generations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub real: MetricReport,
    pub ones: MetricReport,
    /// `(real − ones) / real` on METEOR; 0 when the real score is 0.
    pub meteor_drop: f64,
    /// `(real − ones) / real` on BLEU-4; 0 when the real score is 0.
    pub bleu4_drop: f64,
    /// Distinct generated strings on the all-ones inputs.
    pub distinct_ones_reports: Vec<String>,
}

/// Evaluates on the true signals and again with every signal replaced by ones.
pub fn sanity_check(model: &ReportModel, examples: &[Example], max_len: usize, meteor: &MeteorConfig) -> Result<SanityReport> {
    if examples.is_empty() {
        return Err(Error::Unsupported("sanity check needs at least one episode".into()));
    }
    let real = evaluate(model, examples, max_len, 1, 0, meteor)?;
    let ones: Vec<Example> = examples
        .iter()
        .map(|e| Example { signal: Matrix::filled(e.signal.rows(), e.signal.cols(), 1.0), ..e.clone() })
        .collect();
    let ones_eval = evaluate(model, &ones, max_len, 1, 0, meteor)?;
    let mut distinct: Vec<String> = ones_eval.generations.iter().map(GenerationResult::text).collect();
    distinct.sort();
    distinct.dedup();
    let drop = |a: f64, b: f64| if a > 0.0 { (a - b) / a } else { 0.0 };
    Ok(SanityReport {
        meteor_drop: drop(real.report.meteor, ones_eval.report.meteor),
        bleu4_drop: drop(real.report.bleu[3], ones_eval.report.bleu[3]),
        real: real.report,
        ones: ones_eval.report,
        distinct_ones_reports: distinct,
    })
}
