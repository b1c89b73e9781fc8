use std::collections::HashMap;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Scores how well `candidate` fits at `position` of `context` (higher is better).
pub trait LmScorer: Sync {
    fn score(&self, context: &[&str], position: usize, candidate: &str) -> f64;
}

/// Add-one smoothed bigram model over the training split.
#[derive(Debug, Clone)]
pub struct BigramLm {
    unigrams: HashMap<String, u64>,
    /// Count of `a` as the left side of a bigram.
    left: HashMap<String, u64>,
    bigrams: HashMap<(String, String), u64>,
    total: u64,
}

/// Fits a bigram model on the normalized tokens of the train split.
pub fn ngram_lm_fit(dataset: &Dataset) -> Result<BigramLm> {
    if dataset.train.is_empty() {
        return Err(Error::EmptyInput("train split is empty".into()));
    }
    BigramLm::fit(dataset.train.iter().map(|e| e.words()))
}

impl BigramLm {
    pub fn fit<'a, I>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<&'a str>>,
    {
        let mut lm = BigramLm {
            unigrams: HashMap::new(),
            left: HashMap::new(),
            bigrams: HashMap::new(),
            total: 0,
        };
        for words in sentences {
            for w in &words {
                *lm.unigrams.entry(w.to_string()).or_default() += 1;
                lm.total += 1;
            }
            for pair in words.windows(2) {
                *lm.left.entry(pair[0].to_string()).or_default() += 1;
                *lm.bigrams
                    .entry((pair[0].to_string(), pair[1].to_string()))
                    .or_default() += 1;
            }
        }
        if lm.total == 0 {
            return Err(Error::EmptyInput("language model corpus has no tokens".into()));
        }
        Ok(lm)
    }

    /// Number of distinct word types.
    pub fn vocab_size(&self) -> usize {
        self.unigrams.len()
    }

    /// `log P(word | prev) = log (c(prev, word) + 1) / (c(prev) + V)`.
    pub fn log_prob(&self, prev: &str, word: &str) -> f64 {
        let pair = self
            .bigrams
            .get(&(prev.to_string(), word.to_string()))
            .copied()
            .unwrap_or(0);
        let left = self.left.get(prev).copied().unwrap_or(0);
        ((pair + 1) as f64 / (left + self.vocab_size() as u64) as f64).ln()
    }

    pub fn log_prob_unigram(&self, word: &str) -> f64 {
        let c = self.unigrams.get(word).copied().unwrap_or(0);
        ((c + 1) as f64 / (self.total + self.vocab_size() as u64) as f64).ln()
    }
}

impl LmScorer for BigramLm {
    /// Log-likelihood of the ±1 window around the slot with `candidate` in it.
    fn score(&self, context: &[&str], position: usize, candidate: &str) -> f64 {
        let mut s = if position == 0 {
            self.log_prob_unigram(candidate)
        } else {
            self.log_prob(context[position - 1], candidate)
        };
        if let Some(next) = context.get(position + 1) {
            s += self.log_prob(candidate, next);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_bigram() {
        let lm = BigramLm::fit([vec!["a", "b", "a", "b"]]).unwrap();
        let v = lm.vocab_size() as f64;
        assert_eq!(v, 2.0);
        // c(a, b) = 2, c(a, .) = 2
        assert!((lm.log_prob("a", "b") - (3.0 / (2.0 + v)).ln()).abs() < 1e-12);
        assert!((lm.log_prob("a", "a") - (1.0 / (2.0 + v)).ln()).abs() < 1e-12);
    }

    #[test]
    fn unseen_bigrams_are_smoothed() {
        let lm = BigramLm::fit([vec!["x", "y"], vec!["y", "z"]]).unwrap();
        assert!(lm.log_prob("z", "x").is_finite());
        assert!(lm.log_prob("unseen", "x").is_finite());
    }

    #[test]
    fn conditional_distributions_normalize() {
        let lm = BigramLm::fit([
            vec!["the", "film", "is", "good"],
            vec!["the", "plot", "is", "bad", "the", "end"],
        ])
        .unwrap();
        let words: Vec<String> = lm.unigrams.keys().cloned().collect();
        for prev in words.iter().map(String::as_str).chain(["never-seen"]) {
            let total: f64 = words.iter().map(|w| lm.log_prob(prev, w).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "{prev}: {total}");
        }
        let uni: f64 = words.iter().map(|w| lm.log_prob_unigram(w).exp()).sum();
        assert!(uni < 1.0 + 1e-12);
    }

    #[test]
    fn window_score_prefers_attested_context() {
        let lm = BigramLm::fit([vec!["a", "good", "film"], vec!["a", "good", "plot"]]).unwrap();
        let ctx = ["a", "bad", "film"];
        assert!(lm.score(&ctx, 1, "good") > lm.score(&ctx, 1, "plot"));
    }
}
