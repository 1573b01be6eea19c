//! BLEU-1..4, METEOR and ROUGE-1 over token sequences.

mod bleu;
mod meteor;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bleu::bleu;
pub use meteor::{align, chunks, crossings, meteor, score_alignment, Alignment, MeteorConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rouge1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Rouge1 {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1 }
    }
}

/// Unigram overlap `Σ min(count_cand, count_ref)` as precision, recall and F1.
pub fn rouge1<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Rouge1 {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for c in candidate {
        counts.entry(c.as_ref()).or_default().0 += 1;
    }
    for r in reference {
        counts.entry(r.as_ref()).or_default().1 += 1;
    }
    let overlap: usize = counts.values().map(|&(a, b)| a.min(b)).sum();
    let ratio = |n: usize| if n == 0 { 0.0 } else { overlap as f64 / n as f64 };
    Rouge1::from_pr(ratio(candidate.len()), ratio(reference.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub meteor: f64,
    /// BLEU-1..4.
    pub bleu: [f64; 4],
    /// Macro-averaged precision and recall; F1 from those two.
    pub rouge1: Rouge1,
    pub pair_count: usize,
    /// Matching stages used by METEOR.
    pub meteor_stages: String,
}

impl MetricReport {
    /// Tab-separated two-column table with scores in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::from("metric\tvalue_percent\n");
        out.push_str(&format!("METEOR\t{:.2}\n", 100.0 * self.meteor));
        for (i, b) in self.bleu.iter().enumerate() {
            out.push_str(&format!("BLEU-{}\t{:.2}\n", i + 1, 100.0 * b));
        }
        out.push_str(&format!("ROUGE-1-P\t{:.2}\n", 100.0 * self.rouge1.precision));
        out.push_str(&format!("ROUGE-1-R\t{:.2}\n", 100.0 * self.rouge1.recall));
        out.push_str(&format!("ROUGE-1-F\t{:.2}\n", 100.0 * self.rouge1.f1));
        out.push_str(&format!("pairs\t{}\n", self.pair_count));
        out.push_str(&format!("# METEOR stages: {}\n", self.meteor_stages));
        out
    }
}

/// Corpus BLEU plus macro-averaged METEOR and ROUGE-1 over `(candidate, reference)` pairs.
pub fn corpus_evaluate<S: AsRef<str> + Sync>(pairs: &[(Vec<S>, Vec<S>)], config: &MeteorConfig) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Unsupported("cannot evaluate an empty set of pairs".into()));
    }
    let n = pairs.len() as f64;
    let per_pair: Vec<(f64, Rouge1)> = {
        use rayon::prelude::*;
        pairs.par_iter().map(|(c, r)| (meteor(c, r, config), rouge1(c, r))).collect()
    };
    let meteor = per_pair.iter().map(|p| p.0).sum::<f64>() / n;
    let precision = per_pair.iter().map(|p| p.1.precision).sum::<f64>() / n;
    let recall = per_pair.iter().map(|p| p.1.recall).sum::<f64>() / n;
    let cands: Vec<Vec<&str>> = pairs.iter().map(|(c, _)| c.iter().map(AsRef::as_ref).collect()).collect();
    let refs: Vec<Vec<&str>> = pairs.iter().map(|(_, r)| r.iter().map(AsRef::as_ref).collect()).collect();
    let mut bleu_scores = [0.0; 4];
    for (i, b) in bleu_scores.iter_mut().enumerate() {
        *b = bleu(&cands, &refs, i + 1)?;
    }
    Ok(MetricReport {
        meteor,
        bleu: bleu_scores,
        rouge1: Rouge1::from_pr(precision, recall),
        pair_count: pairs.len(),
        meteor_stages: if config.stem { "exact, stem (synonym stage not implemented)" } else { "exact (stem and synonym stages disabled)" }.into(),
    })
}
