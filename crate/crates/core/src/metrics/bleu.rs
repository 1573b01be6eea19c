use std::collections::HashMap;

use crate::error::{Error, Result};

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram total for one pair.
pub(crate) fn clipped_counts<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let reference = ngram_counts(reference, n);
    let matched = cand.iter().map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0))).sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Corpus BLEU with uniform weights over orders `1..=max_n`, brevity penalty
/// `min(1, exp(1 - r/c))` and no smoothing.
pub fn bleu<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>], max_n: usize) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Unsupported("BLEU needs at least one candidate".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Shape(format!("{} candidates but {} references", candidates.len(), references.len())));
    }
    if !(1..=4).contains(&max_n) {
        return Err(Error::Unsupported(format!("BLEU order {max_n} outside 1..=4")));
    }
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = candidates
            .iter()
            .zip(references)
            .map(|(cand, reference)| clipped_counts(cand, reference, n))
            .fold((0, 0), |(m, t), (a, b)| (m + a, t + b));
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln() / max_n as f64;
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * log_sum.exp())
}
