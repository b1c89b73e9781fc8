use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single word or punctuation mark.
///
/// `space_before` records whether whitespace separated this token from the
/// previous one in the source text, so that token sequences can be rendered
/// back to text and re-tokenized to the same sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub norm: String,
    pub space_before: bool,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let norm = surface.to_lowercase();
        Token {
            surface,
            norm,
            space_before: true,
        }
    }

    fn glued(surface: &str) -> Self {
        Token {
            space_before: false,
            ..Token::new(surface)
        }
    }

    /// True for tokens made only of punctuation/symbol characters.
    pub fn is_punctuation(&self) -> bool {
        !self.surface.chars().any(char::is_alphanumeric)
    }
}

const CLITICS: [&str; 6] = ["s", "re", "ve", "ll", "d", "m"];

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits one whitespace-delimited chunk into word, clitic and punctuation pieces.
fn split_chunk(chunk: &str) -> Vec<String> {
    let chars: Vec<char> = chunk.chars().collect();
    let mut pieces: Vec<String> = Vec::new();
    // whether the last piece is a word that an apostrophe-run may attach to
    let mut last_is_word = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            let mut word = String::new();
            while i < chars.len() {
                let ch = chars[i];
                let internal_hyphen = ch == '-'
                    && !word.is_empty()
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphanumeric();
                if ch.is_alphanumeric() || internal_hyphen {
                    word.push(ch);
                    i += 1;
                } else {
                    break;
                }
            }
            pieces.push(word);
            last_is_word = true;
        } else if is_apostrophe(c) && i + 1 < chars.len() && chars[i + 1].is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len()
                && (chars[j].is_alphanumeric()
                    || (chars[j] == '-' && j > i + 1 && j + 1 < chars.len() && chars[j + 1].is_alphanumeric()))
            {
                j += 1;
            }
            let run: String = chars[i + 1..j].iter().collect();
            let run_lower = run.to_lowercase();
            let prev_ends_n = last_is_word
                && pieces
                    .last()
                    .and_then(|p| p.chars().last())
                    .map(|ch| ch == 'n' || ch == 'N')
                    .unwrap_or(false);
            if run_lower == "t" && prev_ends_n {
                let prev = pieces.pop().unwrap_or_default();
                let mut stem: Vec<char> = prev.chars().collect();
                let n = stem.pop().unwrap_or('n');
                if !stem.is_empty() {
                    pieces.push(stem.into_iter().collect());
                }
                pieces.push(format!("{n}{c}{run}"));
                last_is_word = false;
            } else if CLITICS.contains(&run_lower.as_str()) {
                pieces.push(format!("{c}{run}"));
                last_is_word = false;
            } else if last_is_word {
                let prev = pieces.last_mut().expect("word piece");
                prev.push(c);
                prev.push_str(&run);
            } else {
                pieces.push(c.to_string());
                pieces.push(run);
                last_is_word = true;
            }
            i = j;
        } else {
            pieces.push(c.to_string());
            last_is_word = false;
            i += 1;
        }
    }
    pieces
}

/// Whitespace split followed by punctuation and clitic separation.
///
/// `"michel piccoli's moving performance"` yields
/// `[michel, piccoli, 's, moving, performance]`.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::EmptyInput("text is empty after trimming".into()));
    }
    let mut tokens = Vec::new();
    for chunk in trimmed.split_whitespace() {
        for (k, piece) in split_chunk(chunk).into_iter().enumerate() {
            tokens.push(if k == 0 {
                Token::new(piece)
            } else {
                Token::glued(&piece)
            });
        }
    }
    Ok(tokens)
}

/// Renders tokens back to text, honoring `space_before`.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 && t.space_before {
            out.push(' ');
        }
        out.push_str(&t.surface);
    }
    out
}

/// Copies `tokens` without the given positions. A token whose predecessor was
/// dropped is re-spaced so the rendered text re-tokenizes identically.
pub fn remove_positions(tokens: &[Token], removed: &[usize]) -> Vec<Token> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut dropped_prev = false;
    for (i, t) in tokens.iter().enumerate() {
        if removed.contains(&i) {
            dropped_prev = true;
            continue;
        }
        let mut t = t.clone();
        if dropped_prev {
            t.space_before = true;
        }
        dropped_prev = false;
        out.push(t);
    }
    out
}

pub fn norms(tokens: &[Token]) -> Vec<&str> {
    tokens.iter().map(|t| t.norm.as_str()).collect()
}
