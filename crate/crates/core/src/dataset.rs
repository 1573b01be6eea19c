//! Model-ready examples: raw signal matrix, encoded target and reference tokens.

use rayon::prelude::*;

use crate::corpus::{read_signal, EcgEpisode};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::textprep::{encode_truncated, prepare_report, tokenize, AbbreviationTable, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub episode_id: String,
    /// Raw `leads × samples` signal; normalization happens at model input.
    pub signal: Matrix,
    /// Start marker, token ids, end marker. No padding.
    pub target: Vec<usize>,
    /// Reference tokens for scoring (untruncated).
    pub reference: Vec<String>,
    /// Index into the rhythm class list, when the episode has a known class.
    pub class: Option<usize>,
}

/// Report tokens after optional abbreviation unification.
pub fn report_tokens(report: &str, table: Option<&AbbreviationTable>) -> Vec<String> {
    match table {
        Some(t) => prepare_report(report, t),
        None => tokenize(&report.to_lowercase()),
    }
}

/// Loads signals and encodes reports. Targets longer than `max_len` are truncated;
/// references keep every token.
pub fn build_examples(
    episodes: &[EcgEpisode],
    table: Option<&AbbreviationTable>,
    vocab: &Vocabulary,
    max_len: usize,
    classes: &[String],
) -> Result<Vec<Example>> {
    episodes
        .par_iter()
        .map(|e| {
            let signal = read_signal(e)?.to_matrix();
            let reference = report_tokens(&e.report, table);
            let target = encode_truncated(&reference, vocab, max_len)?.content().to_vec();
            let class = e.rhythm_class.as_ref().and_then(|c| classes.iter().position(|k| k == c));
            Ok(Example { episode_id: e.episode_id.clone(), signal, target, reference, class })
        })
        .collect()
}

/// Sorted distinct rhythm classes present in `episodes`.
pub fn rhythm_classes(episodes: &[EcgEpisode]) -> Vec<String> {
    let mut classes: Vec<String> = episodes.iter().filter_map(|e| e.rhythm_class.clone()).collect();
    classes.sort();
    classes.dedup();
    classes
}

/// Checks that every example has the expected lead count.
pub fn check_leads(examples: &[Example], leads: usize) -> Result<()> {
    match examples.iter().find(|e| e.signal.rows() != leads) {
        Some(e) => Err(Error::Shape(format!("episode {} has {} leads, model expects {leads}", e.episode_id, e.signal.rows()))),
        None => Ok(()),
    }
}
