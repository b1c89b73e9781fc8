//! SentiWordNet parsing and per-word sentiment scores.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::corpus::Token;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RawSynsetEntry {
    pub pos_tag: char,
    pub synset_id: u64,
    pub pos_score: f64,
    pub neg_score: f64,
    /// `(lemma, sense rank)` pairs from the SynsetTerms column.
    pub terms: Vec<(String, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentScore {
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
}

impl SentimentScore {
    pub fn new(positive: f64, negative: f64) -> Self {
        SentimentScore {
            positive,
            negative,
            neutral: 1.0 - positive - negative,
        }
    }

    pub fn polarity_strength(&self) -> f64 {
        self.positive.max(self.negative)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationPolicy {
    /// Unweighted mean over every synset containing the lemma, any part of speech.
    MeanAllSenses,
}

pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentLexicon {
    scores: BTreeMap<String, SentimentScore>,
    threshold: f64,
}

fn parse_score(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse("sentiwordnet", line, format!("bad score `{field}`")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::parse(
            "sentiwordnet",
            line,
            format!("score {v} outside [0, 1]"),
        ));
    }
    Ok(v)
}

/// Reads SentiWordNet 3.0 lines:
/// `POS<TAB>ID<TAB>PosScore<TAB>NegScore<TAB>SynsetTerms<TAB>Gloss`.
pub fn parse_sentiwordnet<R: BufRead>(reader: R) -> Result<Vec<RawSynsetEntry>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("sentiwordnet", e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 {
            return Err(Error::parse(
                "sentiwordnet",
                lineno,
                format!("expected at least 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let pos_tag = match fields[0].trim() {
            t @ ("a" | "n" | "v" | "r") => t.chars().next().unwrap_or('a'),
            other => {
                return Err(Error::parse(
                    "sentiwordnet",
                    lineno,
                    format!("unknown part of speech `{other}`"),
                ))
            }
        };
        let synset_id = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse("sentiwordnet", lineno, "bad synset id"))?;
        let pos_score = parse_score(fields[2], lineno)?;
        let neg_score = parse_score(fields[3], lineno)?;
        if pos_score + neg_score > 1.0 + 1e-9 {
            return Err(Error::parse(
                "sentiwordnet",
                lineno,
                "positive + negative score exceeds 1",
            ));
        }
        let mut terms = Vec::new();
        for term in fields[4].split_whitespace() {
            let (lemma, rank) = term.rsplit_once('#').ok_or_else(|| {
                Error::parse("sentiwordnet", lineno, format!("term `{term}` lacks #rank"))
            })?;
            let rank = rank
                .parse()
                .map_err(|_| Error::parse("sentiwordnet", lineno, format!("bad rank in `{term}`")))?;
            terms.push((lemma.to_lowercase(), rank));
        }
        out.push(RawSynsetEntry {
            pos_tag,
            synset_id,
            pos_score,
            neg_score,
            terms,
        });
    }
    Ok(out)
}

/// Reads the simplified `lemma<TAB>pos<TAB>neg` format, one synset per line.
pub fn parse_simple<R: BufRead>(reader: R) -> Result<Vec<RawSynsetEntry>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("lexicon", e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse("lexicon", lineno, "expected `lemma<TAB>pos<TAB>neg`"));
        }
        let pos_score = parse_score(fields[1], lineno)?;
        let neg_score = parse_score(fields[2], lineno)?;
        if pos_score + neg_score > 1.0 + 1e-9 {
            return Err(Error::parse("lexicon", lineno, "positive + negative exceeds 1"));
        }
        out.push(RawSynsetEntry {
            pos_tag: 'a',
            synset_id: out.len() as u64,
            pos_score,
            neg_score,
            terms: vec![(fields[0].trim().to_lowercase(), 1)],
        });
    }
    Ok(out)
}

/// Picks the parser from the first data line: six or more columns means SentiWordNet.
pub fn parse_any(content: &str) -> Result<Vec<RawSynsetEntry>> {
    let first = content
        .lines()
        .find(|l| !l.starts_with('#') && !l.trim().is_empty());
    match first {
        Some(l) if l.split('\t').count() >= 5 => parse_sentiwordnet(content.as_bytes()),
        _ => parse_simple(content.as_bytes()),
    }
}

pub fn aggregate(entries: &[RawSynsetEntry], policy: AggregationPolicy) -> Result<SentimentLexicon> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("no lexicon entries".into()));
    }
    let AggregationPolicy::MeanAllSenses = policy;
    // Sums are accumulated in a canonical order so the result does not depend
    // on entry order down to the last bit.
    let mut per_lemma: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for e in entries {
        for (lemma, _) in &e.terms {
            per_lemma
                .entry(lemma.as_str())
                .or_default()
                .push((e.pos_score, e.neg_score));
        }
    }
    let scores = per_lemma
        .into_iter()
        .map(|(lemma, mut pairs)| {
            pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
            let n = pairs.len() as f64;
            let pos = pairs.iter().map(|p| p.0).sum::<f64>() / n;
            let neg = pairs.iter().map(|p| p.1).sum::<f64>() / n;
            (lemma.to_string(), SentimentScore::new(pos, neg))
        })
        .collect();
    Ok(SentimentLexicon {
        scores,
        threshold: DEFAULT_THRESHOLD,
    })
}

impl SentimentLexicon {
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn lookup_word(&self, norm: &str) -> Option<SentimentScore> {
        self.scores.get(norm).copied()
    }

    pub fn lookup(&self, token: &Token) -> Option<SentimentScore> {
        self.lookup_word(&token.norm)
    }

    pub fn is_sentiment_norm(&self, norm: &str) -> bool {
        match self.lookup_word(norm) {
            Some(s) if self.threshold <= 0.0 => s.positive > 0.0 || s.negative > 0.0,
            Some(s) => s.polarity_strength() >= self.threshold,
            None => false,
        }
    }

    /// Present in the lexicon with `max(positive, negative) >= threshold`.
    /// A zero threshold admits any word with nonzero polarity.
    pub fn is_sentiment_word(&self, token: &Token) -> bool {
        self.is_sentiment_norm(&token.norm)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SentimentScore)> {
        self.scores.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "# SentiWordNet 3.0 excerpt\n\
a\t00001740\t0.125\t0\table#1\t(usually followed by `to') having the necessary means\n\
r\t00011093\t0.625\t0\ttruly#1 genuinely#1 really#2\tin accordance with truth or fact\n\
n\t02658079\t0\t0\ta#5 A#4\tthe 1st letter of the Roman alphabet\n";

    fn lexicon() -> SentimentLexicon {
        aggregate(
            &parse_sentiwordnet(FIXTURE.as_bytes()).unwrap(),
            AggregationPolicy::MeanAllSenses,
        )
        .unwrap()
    }

    #[test]
    fn comment_only_file_is_empty() {
        assert!(parse_sentiwordnet("# one\n# two\n".as_bytes())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn hand_parsed_line() {
        let entries = parse_sentiwordnet(FIXTURE.as_bytes()).unwrap();
        assert_eq!(entries.len(), 3);
        let able = &entries[0];
        assert_eq!(able.pos_tag, 'a');
        assert_eq!(able.synset_id, 1740);
        assert_eq!(able.pos_score, 0.125);
        assert_eq!(able.neg_score, 0.0);
        assert_eq!(able.terms, vec![("able".to_string(), 1)]);
        assert_eq!(entries[1].terms.len(), 3);
        assert_eq!(entries[1].terms[2], ("really".to_string(), 2));
    }

    #[test]
    fn out_of_range_score_is_an_error() {
        let err = parse_sentiwordnet("a\t1\t1.5\t0\tx#1\tgloss\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn truly_and_a_scores() {
        let lex = lexicon();
        let truly = lex.lookup(&Token::new("truly")).unwrap();
        assert_eq!((truly.positive, truly.negative), (0.625, 0.0));
        assert!((truly.neutral - 0.375).abs() < 1e-12);
        let a = lex.lookup(&Token::new("a")).unwrap();
        assert_eq!((a.positive, a.negative, a.neutral), (0.0, 0.0, 1.0));
        assert!(lex.lookup(&Token::new("zzzz")).is_none());
    }

    #[test]
    fn mean_over_senses() {
        let entries = vec![
            RawSynsetEntry {
                pos_tag: 'a',
                synset_id: 1,
                pos_score: 0.5,
                neg_score: 0.0,
                terms: vec![("odd".into(), 1)],
            },
            RawSynsetEntry {
                pos_tag: 'n',
                synset_id: 2,
                pos_score: 0.0,
                neg_score: 0.5,
                terms: vec![("odd".into(), 2)],
            },
        ];
        let lex = aggregate(&entries, AggregationPolicy::MeanAllSenses).unwrap();
        let s = lex.lookup_word("odd").unwrap();
        assert_eq!((s.positive, s.negative, s.neutral), (0.25, 0.25, 0.5));
    }

    #[test]
    fn membership_threshold() {
        let lex = lexicon().with_threshold(0.1);
        assert!(lex.is_sentiment_word(&Token::new("truly")));
        assert!(!lex.is_sentiment_word(&Token::new("a")));
        assert!(!lex.is_sentiment_word(&Token::new("zzzz")));
        let lex0 = lexicon().with_threshold(0.0);
        assert!(lex0.is_sentiment_word(&Token::new("able")));
        assert!(!lex0.is_sentiment_word(&Token::new("a")));
    }

    #[test]
    fn empty_entries_are_rejected() {
        assert!(aggregate(&[], AggregationPolicy::MeanAllSenses).is_err());
    }

    #[test]
    fn simple_format() {
        let lex = aggregate(
            &parse_any("# x\nlike\t0.5\t0\nbad\t0\t0.625\n").unwrap(),
            AggregationPolicy::MeanAllSenses,
        )
        .unwrap();
        assert_eq!(lex.lookup_word("bad").unwrap().negative, 0.625);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn entries() -> impl Strategy<Value = Vec<RawSynsetEntry>> {
            proptest::collection::vec(
                (0u8..8, 0u8..=8, 0u8..=8, 0usize..6),
                1..30,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (p, n, _, lemma))| {
                        let p = p as f64 / 8.0;
                        let n = (n as f64 / 8.0).min(1.0 - p);
                        RawSynsetEntry {
                            pos_tag: 'a',
                            synset_id: i as u64,
                            pos_score: p,
                            neg_score: n,
                            terms: vec![(format!("w{lemma}"), 1)],
                        }
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn scores_sum_to_one(es in entries()) {
                let lex = aggregate(&es, AggregationPolicy::MeanAllSenses).unwrap();
                for (_, s) in lex.iter() {
                    prop_assert!((s.positive + s.negative + s.neutral - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn order_independent(es in entries(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut shuffled = es.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let a = aggregate(&es, AggregationPolicy::MeanAllSenses).unwrap();
                let b = aggregate(&shuffled, AggregationPolicy::MeanAllSenses).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn raising_threshold_never_grows_membership(es in entries(), t1 in 0.0f64..1.0, dt in 0.0f64..0.5) {
                let lex = aggregate(&es, AggregationPolicy::MeanAllSenses).unwrap();
                let low = lex.clone().with_threshold(t1);
                let high = lex.clone().with_threshold(t1 + dt);
                for (w, _) in lex.iter() {
                    if high.is_sentiment_norm(w) {
                        prop_assert!(low.is_sentiment_norm(w));
                    }
                }
            }
        }
    }
}
