//! Report normalization, tokenization and vocabulary.

mod abbreviations;
mod tokenize;
mod vocab;

pub use abbreviations::{unify_abbreviations, AbbreviationTable};
pub use tokenize::tokenize;
pub use vocab::{
    decode, decode_tokens, encode, encode_truncated, TokenSequence, Vocabulary, END_TOKEN, MAX_REPORT_LEN, PAD_TOKEN, START_TOKEN,
    UNKNOWN_TOKEN,
};

/// Abbreviation unification followed by tokenization.
pub fn prepare_report(report: &str, table: &AbbreviationTable) -> Vec<String> {
    tokenize(&table.unify(report))
}

/// Translation of report text into the working language, applied before
/// deduplication. Only the identity is bundled; corpora are assumed monolingual.
pub trait Translator: Sync {
    fn translate(&self, report: &str) -> String;
}

pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, report: &str) -> String {
        report.to_string()
    }
}
