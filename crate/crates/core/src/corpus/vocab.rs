use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::Dataset;
use crate::error::{Error, Result};
use crate::math::hex;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Dense word index. Index 0 is padding, index 1 is the unknown word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD_INDEX: usize = 0;
    pub const UNK_INDEX: usize = 1;

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![PAD.to_string(), UNK.to_string()];
        for w in words {
            let w = w.into();
            if w != PAD && w != UNK && !all.contains(&w) {
                all.push(w);
            }
        }
        let index = all
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words: all, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNK_INDEX)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Regular (non-special) words.
    pub fn content_words(&self) -> &[String] {
        &self.words[2..]
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    /// SHA-256 over the index-ordered word list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }

    /// One word per line, in index order.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn parse(content: &str) -> Result<Self> {
        let words: Vec<&str> = content.lines().collect();
        if words.len() < 2 || words[0] != PAD || words[1] != UNK {
            return Err(Error::Config(
                "vocabulary file must start with <pad> and <unk>".into(),
            ));
        }
        Ok(Self::from_words(words[2..].iter().copied()))
    }
}

/// Indexes every train token seen at least `min_freq` times, most frequent first
/// (ties in lexicographic order).
pub fn build_vocab(dataset: &Dataset, min_freq: usize) -> Result<Vocabulary> {
    if dataset.train.is_empty() {
        return Err(Error::EmptyInput("train split is empty".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for e in &dataset.train {
        for t in &e.tokens {
            *counts.entry(t.norm.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_freq.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(Vocabulary::from_words(kept.into_iter().map(|(w, _)| w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Example, Label, LabelSet};

    fn toy() -> Dataset {
        let mut ds = Dataset::empty(LabelSet::new(&["pos", "neg"]).unwrap());
        ds.train = vec![
            Example::original("train-0", "a b", Label::new("pos")).unwrap(),
            Example::original("train-1", "b c", Label::new("neg")).unwrap(),
        ];
        ds
    }

    #[test]
    fn min_freq_one_keeps_everything() {
        let v = build_vocab(&toy(), 1).unwrap();
        assert_eq!(v.words(), [PAD, UNK, "b", "a", "c"]);
        assert_eq!(v.id(PAD), 0);
    }

    #[test]
    fn min_freq_two_keeps_b() {
        let v = build_vocab(&toy(), 2).unwrap();
        assert_eq!(v.words(), [PAD, UNK, "b"]);
        assert_eq!(v.id("a"), Vocabulary::UNK_INDEX);
    }

    #[test]
    fn empty_train_is_an_error() {
        let ds = Dataset::empty(LabelSet::new(&["pos", "neg"]).unwrap());
        assert!(build_vocab(&ds, 1).is_err());
    }

    #[test]
    fn render_parse_and_hash_are_stable() {
        let v = build_vocab(&toy(), 1).unwrap();
        let back = Vocabulary::parse(&v.render()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert_ne!(build_vocab(&toy(), 2).unwrap().hash(), v.hash());
    }
}
