use std::collections::HashMap;

use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/abbreviations.tsv");

/// Ordered term → unified-form rules. Terms are stored lowercased and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct AbbreviationTable {
    entries: Vec<(String, String)>,
    words: HashMap<String, usize>,
    symbols: HashMap<char, usize>,
}

impl AbbreviationTable {
    /// The clinical abbreviation table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED).expect("bundled abbreviation table is valid")
    }

    /// Two tab-separated columns per line; blank lines and `#` comments are skipped.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (term, unified) = line
                .split_once('\t')
                .ok_or_else(|| Error::config(format!("abbreviation line {}: expected two tab-separated columns", i + 1)))?;
            pairs.push((term.trim().to_string(), unified.trim().to_string()));
        }
        Self::new(pairs)
    }

    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut entries = Vec::with_capacity(pairs.len());
        let mut words = HashMap::new();
        let mut symbols = HashMap::new();
        for (term, unified) in pairs {
            let term = term.to_lowercase();
            let unified = unified.to_lowercase();
            if term.is_empty() || term.chars().any(char::is_whitespace) {
                return Err(Error::config(format!("abbreviation term {term:?} must be a single non-empty word")));
            }
            if unified.trim().is_empty() {
                return Err(Error::config(format!("abbreviation {term:?} has an empty unified form")));
            }
            let idx = entries.len();
            let mut chars = term.chars();
            let duplicate = match (chars.next(), chars.next()) {
                (Some(c), None) if !c.is_alphanumeric() => symbols.insert(c, idx).is_some(),
                _ => words.insert(term.clone(), idx).is_some(),
            };
            if duplicate {
                return Err(Error::config(format!("abbreviation term {term:?} listed twice")));
            }
            entries.push((term, unified));
        }
        Ok(Self { entries, words, symbols })
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn word(&self, w: &str) -> Option<&str> {
        self.words.get(w).map(|&i| self.entries[i].1.as_str())
    }

    /// Replaces symbol terms wherever they occur and word terms wherever they form a
    /// whole whitespace-delimited word, optionally wrapped in punctuation. Whitespace
    /// is preserved; the result is lowercased.
    pub fn unify(&self, text: &str) -> String {
        let lowered = text.to_lowercase();
        let spaced = self.replace_symbols(&lowered);
        let mut out = String::with_capacity(spaced.len());
        let mut rest = spaced.as_str();
        while !rest.is_empty() {
            let ws = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
            out.push_str(&rest[..ws]);
            rest = &rest[ws..];
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            self.push_word(&rest[..end], &mut out);
            rest = &rest[end..];
        }
        out
    }

    fn replace_symbols(&self, text: &str) -> String {
        if self.symbols.is_empty() {
            return text.to_string();
        }
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::with_capacity(text.len());
        for (i, &c) in chars.iter().enumerate() {
            match self.symbols.get(&c) {
                Some(&idx) => {
                    if i > 0 && !chars[i - 1].is_whitespace() {
                        out.push(' ');
                    }
                    out.push_str(&self.entries[idx].1);
                    if chars.get(i + 1).is_some_and(|n| !n.is_whitespace()) {
                        out.push(' ');
                    }
                }
                None => out.push(c),
            }
        }
        out
    }

    fn push_word(&self, word: &str, out: &mut String) {
        if let Some(u) = self.word(word) {
            out.push_str(u);
            return;
        }
        let start = word.find(char::is_alphanumeric).unwrap_or(word.len());
        let end = word.rfind(char::is_alphanumeric).map_or(start, |i| i + word[i..].chars().next().map_or(1, char::len_utf8));
        let core = &word[start..end.max(start)];
        match self.word(core) {
            Some(u) if !core.is_empty() => {
                out.push_str(&word[..start]);
                out.push_str(u);
                out.push_str(&word[end..]);
            }
            _ => out.push_str(word),
        }
    }
}

/// [`AbbreviationTable::unify`] as a free function.
pub fn unify_abbreviations(text: &str, table: &AbbreviationTable) -> String {
    table.unify(text)
}
