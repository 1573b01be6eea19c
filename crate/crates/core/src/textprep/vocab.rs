use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const START_TOKEN: &str = "<start>";
pub const END_TOKEN: &str = "<end>";
pub const PAD_TOKEN: &str = "<pad>";
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Default bound on an encoded report, markers included.
pub const MAX_REPORT_LEN: usize = 300;

/// Dense token ↔ id map. Regular tokens occupy `0..n` in rank order; the four
/// special tokens follow.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    regular: usize,
}

impl Vocabulary {
    /// Counts tokens, keeps those seen at least `min_frequency` times, ranks them by
    /// descending count with lexicographic ties and keeps the first `max_size`.
    pub fn build<I, S>(token_lists: I, min_frequency: usize, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let lists: Vec<S> = token_lists.into_iter().collect();
        for list in &lists {
            for t in list.as_ref() {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::Vocabulary("empty token stream".into()));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_frequency.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Self::from_regular(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
    }

    /// Vocabulary over `tokens` in id order; the special tokens are appended.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        Self::from_regular(tokens)
    }

    fn from_regular(mut tokens: Vec<String>) -> Result<Self> {
        let regular = tokens.len();
        tokens.extend([START_TOKEN, END_TOKEN, PAD_TOKEN, UNKNOWN_TOKEN].map(String::from));
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("token {t:?} appears twice")));
            }
        }
        Ok(Self { tokens, ids, regular })
    }

    /// Total size including the special tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn regular_len(&self) -> usize {
        self.regular
    }

    pub fn start_id(&self) -> usize {
        self.regular
    }

    pub fn end_id(&self) -> usize {
        self.regular + 1
    }

    pub fn pad_id(&self) -> usize {
        self.regular + 2
    }

    pub fn unknown_id(&self) -> usize {
        self.regular + 3
    }

    pub fn is_special(&self, id: usize) -> bool {
        id >= self.regular
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `token<TAB>id` lines in id order.
    pub fn to_tsv(&self) -> String {
        self.tokens.iter().enumerate().map(|(i, t)| format!("{t}\t{i}\n")).collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Vocabulary(format!("line {}: expected token<TAB>id", line_no + 1));
            let (tok, id) = line.rsplit_once('\t').ok_or_else(bad)?;
            let id: usize = id.trim().parse().map_err(|_| bad())?;
            if id != tokens.len() {
                return Err(Error::Vocabulary(format!("line {}: id {id} breaks dense numbering", line_no + 1)));
            }
            tokens.push(tok.to_string());
        }
        let specials = [START_TOKEN, END_TOKEN, PAD_TOKEN, UNKNOWN_TOKEN];
        if tokens.len() < 4 || tokens[tokens.len() - 4..].iter().zip(specials).any(|(a, b)| a != b) {
            return Err(Error::Vocabulary("the last four entries must be the special tokens".into()));
        }
        tokens.truncate(tokens.len() - 4);
        Self::from_regular(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }
}

/// Encoded report: start marker, token ids, end marker, then padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// Unpadded length, markers included.
    pub len: usize,
}

impl TokenSequence {
    pub fn content(&self) -> &[usize] {
        &self.ids[..self.len]
    }
}

/// Maps tokens to ids (unknown id when absent), wraps them in start/end markers and
/// pads to `max_len`. Reports longer than `max_len - 2` tokens are rejected.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    let room = max_len.saturating_sub(2);
    if tokens.len() > room {
        return Err(Error::ReportTooLong { tokens: tokens.len(), max: room });
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(vocab.start_id());
    ids.extend(tokens.iter().map(|t| vocab.id(t).unwrap_or(vocab.unknown_id())));
    ids.push(vocab.end_id());
    let len = ids.len();
    ids.resize(max_len, vocab.pad_id());
    Ok(TokenSequence { ids, len })
}

/// Like [`encode`] but keeps only the first `max_len - 2` tokens.
pub fn encode_truncated(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    let room = max_len.saturating_sub(2);
    encode(&tokens[..tokens.len().min(room)], vocab, max_len)
}

/// Token strings of `ids` with special tokens removed.
pub fn decode_tokens(ids: &[usize], vocab: &Vocabulary) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let tok = vocab.token(id).ok_or_else(|| Error::Vocabulary(format!("id {id} out of range for {} tokens", vocab.len())))?;
        if !vocab.is_special(id) {
            out.push(tok.to_string());
        }
    }
    Ok(out)
}

/// Space-joined [`decode_tokens`].
pub fn decode(ids: &[usize], vocab: &Vocabulary) -> Result<String> {
    Ok(decode_tokens(ids, vocab)?.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lists(xs: &[&[&str]]) -> Vec<Vec<String>> {
        xs.iter().map(|l| l.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn min_frequency_filters() {
        let v = Vocabulary::build(lists(&[&["a", "a", "b"]]), 2, 1024).unwrap();
        assert!(v.id("a").is_some());
        assert!(v.id("b").is_none());
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(Vocabulary::build(Vec::<Vec<String>>::new(), 2, 10).is_err());
        assert!(Vocabulary::build(lists(&[&[]]), 2, 10).is_err());
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::build(lists(&[&["b", "a", "c", "c", "b", "a", "c"]]), 1, 2).unwrap();
        assert_eq!(&v.tokens()[..2], ["c", "a"]);
    }

    #[test]
    fn encode_wraps_and_pads() {
        let v = Vocabulary::build(lists(&[&["sinus", "rhythm", "sinus", "rhythm"]]), 2, 10).unwrap();
        let e = encode(&[], &v, 300).unwrap();
        assert_eq!(&e.ids[..3], [v.start_id(), v.end_id(), v.pad_id()]);
        assert_eq!(e.ids.len(), 300);
        let t = lists(&[&["sinus", "rhythm"]]).remove(0);
        let e = encode(&t, &v, 300).unwrap();
        assert_eq!(e.content(), [v.start_id(), v.id("sinus").unwrap(), v.id("rhythm").unwrap(), v.end_id()]);
        assert!(e.ids[4..].iter().all(|&i| i == v.pad_id()));
        let e = encode(&["zebra".to_string()], &v, 300).unwrap();
        assert_eq!(e.content(), [v.start_id(), v.unknown_id(), v.end_id()]);
    }

    #[test]
    fn overlong_reports_are_rejected_or_truncated() {
        let v = Vocabulary::build(lists(&[&["x", "x"]]), 1, 10).unwrap();
        let long = vec!["x".to_string(); 299];
        assert!(matches!(encode(&long, &v, 300), Err(Error::ReportTooLong { tokens: 299, max: 298 })));
        assert!(encode(&long[..298], &v, 300).is_ok());
        assert_eq!(encode_truncated(&long, &v, 300).unwrap().len, 300);
    }

    #[test]
    fn decode_strips_specials_and_checks_range() {
        let v = Vocabulary::build(lists(&[&["sinus", "rhythm", "sinus", "rhythm"]]), 1, 10).unwrap();
        let ids = [v.start_id(), v.id("sinus").unwrap(), v.id("rhythm").unwrap(), v.end_id(), v.pad_id()];
        assert_eq!(decode(&ids, &v).unwrap(), "sinus rhythm");
        assert_eq!(decode(&[v.start_id(), v.end_id()], &v).unwrap(), "");
        assert!(decode(&[v.len()], &v).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocabulary::build(lists(&[&["a", "b", "a", ","]]), 1, 10).unwrap();
        let text = v.to_tsv();
        assert!(text.starts_with("a\t0\n"));
        assert_eq!(Vocabulary::from_tsv(&text).unwrap(), v);
        assert!(Vocabulary::from_tsv("a\t1\n").is_err());
    }
}
