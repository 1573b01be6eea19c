use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub episode_count: usize,
    pub unique_group_count: usize,
    /// Distinct reports after [`normalize_report`].
    pub unique_report_count: usize,
    pub unique_group_proportion: f64,
    pub unique_report_proportion: f64,
}

/// Lowercases, drops every character that is neither alphanumeric nor whitespace,
/// and collapses whitespace runs to one space.
pub fn normalize_report(report: &str) -> String {
    let stripped: String = report.chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).flat_map(char::to_lowercase).collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let groups: HashSet<&str> = corpus.iter().map(|e| e.group_id.as_str()).collect();
    let reports: HashSet<String> = corpus.iter().map(|e| normalize_report(&e.report)).collect();
    let n = corpus.len() as f64;
    Ok(CorpusStats {
        episode_count: corpus.len(),
        unique_group_count: groups.len(),
        unique_report_count: reports.len(),
        unique_group_proportion: groups.len() as f64 / n,
        unique_report_proportion: reports.len() as f64 / n,
    })
}
