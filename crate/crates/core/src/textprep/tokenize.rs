#[derive(Clone, Copy, PartialEq)]
enum Class {
    Letter,
    Digit,
    Space,
    Other,
}

fn class(c: char) -> Class {
    if c.is_alphabetic() {
        Class::Letter
    } else if c.is_numeric() {
        Class::Digit
    } else if c.is_whitespace() {
        Class::Space
    } else {
        Class::Other
    }
}

/// Splits a report into maximal letter runs, maximal digit runs and single
/// punctuation characters. Whitespace separates tokens and is never emitted.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_class = Class::Space;
    for c in text.chars() {
        let k = class(c);
        let continues = k == current_class && matches!(k, Class::Letter | Class::Digit);
        if !continues && !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        match k {
            Class::Space => {}
            Class::Other => tokens.push(c.to_string()),
            Class::Letter | Class::Digit => current.push(c),
        }
        current_class = k;
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}
