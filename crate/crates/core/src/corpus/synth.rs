//! Seeded synthetic sentiment corpus.
//!
//! Every sentence mixes neutral filler with planted positive/negative words;
//! the label is the polarity holding the majority of planted words. A set of
//! neutral "cue" words co-occurs with one label more often than the other,
//! giving classifiers a spurious shortcut that carries no lexicon polarity.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Example, Label, LabelSet, Origin, Split, Token};
use crate::config::KeyValues;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math::derived_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub n_pos_words: usize,
    pub n_neg_words: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub count: usize,
    pub seed: u64,
    /// Neutral words correlated with a label.
    pub n_confound: usize,
    /// Cue-word slots per sentence.
    pub confound_slots: usize,
    /// Probability that each slot is filled with a cue word.
    pub confound_rate: f64,
    /// Probability that the cue word leans toward the sentence's own label.
    pub confound_bias: f64,
    /// Most majority-polarity words in one sentence.
    pub max_sentiment: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    /// Explicit planted word lists; generated names are used when empty.
    pub pos_words: Vec<String>,
    pub neg_words: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 200,
            n_pos_words: 20,
            n_neg_words: 20,
            len_min: 8,
            len_max: 16,
            count: 2000,
            seed: 1,
            n_confound: 10,
            confound_slots: 3,
            confound_rate: 0.6,
            confound_bias: 0.95,
            max_sentiment: 2,
            train_fraction: 0.7,
            dev_fraction: 0.1,
            pos_words: Vec::new(),
            neg_words: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = SynthConfig::default();
        let list = |key: &str| -> Vec<String> {
            kv.get(key)
                .map(|v| {
                    v.split(',')
                        .map(|w| w.trim().to_lowercase())
                        .filter(|w| !w.is_empty())
                        .collect()
                })
                .unwrap_or_default()
        };
        let pos_words = list("pos_words");
        let neg_words = list("neg_words");
        let cfg = SynthConfig {
            vocab_size: kv.parse_or("vocab_size", d.vocab_size)?,
            n_pos_words: if pos_words.is_empty() {
                kv.parse_or("n_pos_words", d.n_pos_words)?
            } else {
                pos_words.len()
            },
            n_neg_words: if neg_words.is_empty() {
                kv.parse_or("n_neg_words", d.n_neg_words)?
            } else {
                neg_words.len()
            },
            len_min: kv.parse_or("len_min", d.len_min)?,
            len_max: kv.parse_or("len_max", d.len_max)?,
            count: kv.parse_or("count", d.count)?,
            seed: kv.parse_or("seed", d.seed)?,
            n_confound: kv.parse_or("n_confound", d.n_confound)?,
            confound_slots: kv.parse_or("confound_slots", d.confound_slots)?,
            confound_rate: kv.parse_or("confound_rate", d.confound_rate)?,
            confound_bias: kv.parse_or("confound_bias", d.confound_bias)?,
            max_sentiment: kv.parse_or("max_sentiment", d.max_sentiment)?,
            train_fraction: kv.parse_or("train_fraction", d.train_fraction)?,
            dev_fraction: kv.parse_or("dev_fraction", d.dev_fraction)?,
            pos_words,
            neg_words,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("vocab_size", self.vocab_size);
        kv.set("n_pos_words", self.n_pos_words);
        kv.set("n_neg_words", self.n_neg_words);
        kv.set("len_min", self.len_min);
        kv.set("len_max", self.len_max);
        kv.set("count", self.count);
        kv.set("seed", self.seed);
        kv.set("n_confound", self.n_confound);
        kv.set("confound_slots", self.confound_slots);
        kv.set("confound_rate", self.confound_rate);
        kv.set("confound_bias", self.confound_bias);
        kv.set("max_sentiment", self.max_sentiment);
        kv.set("train_fraction", self.train_fraction);
        kv.set("dev_fraction", self.dev_fraction);
        if !self.pos_words.is_empty() {
            kv.set("pos_words", self.pos_words.join(","));
        }
        if !self.neg_words.is_empty() {
            kv.set("neg_words", self.neg_words.join(","));
        }
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_pos_words == 0 || self.n_neg_words == 0 {
            return bad("need at least one positive and one negative planted word");
        }
        if self.len_min == 0 || self.len_min > self.len_max {
            return bad("require 1 <= len_min <= len_max");
        }
        if self.max_sentiment == 0 {
            return bad("max_sentiment must be at least 1");
        }
        if self.n_pos_words + self.n_neg_words + self.n_confound >= self.vocab_size {
            return bad("vocab_size must exceed planted + cue words (filler needed)");
        }
        for p in [self.confound_rate, self.confound_bias] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.train_fraction <= 0.0
            || self.dev_fraction < 0.0
            || self.train_fraction + self.dev_fraction > 1.0
        {
            return bad("invalid split fractions");
        }
        if let Some(w) = self.pos_words.iter().find(|w| self.neg_words.contains(w)) {
            return Err(Error::Config(format!(
                "word `{w}` is planted as both positive and negative"
            )));
        }
        for w in self.pos_words.iter().chain(&self.neg_words) {
            if w.is_empty() || !w.chars().all(char::is_alphanumeric) {
                return Err(Error::Config(format!("planted word `{w}` must be alphanumeric")));
            }
        }
        Ok(())
    }
}

/// Word lists behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedWords {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub cue_positive: Vec<String>,
    pub cue_negative: Vec<String>,
    pub filler: Vec<String>,
}

impl PlantedWords {
    fn new(cfg: &SynthConfig) -> Self {
        let named = |given: &[String], prefix: &str, n: usize| -> Vec<String> {
            if given.is_empty() {
                (0..n).map(|i| format!("{prefix}{i:02}")).collect()
            } else {
                given.to_vec()
            }
        };
        let positive = named(&cfg.pos_words, "pos", cfg.n_pos_words);
        let negative = named(&cfg.neg_words, "neg", cfg.n_neg_words);
        let cues: Vec<String> = (0..cfg.n_confound).map(|i| format!("cue{i:02}")).collect();
        let half = cues.len().div_ceil(2);
        let n_filler = cfg.vocab_size - cfg.n_pos_words - cfg.n_neg_words - cfg.n_confound;
        PlantedWords {
            positive,
            negative,
            cue_positive: cues[..half].to_vec(),
            cue_negative: cues[half..].to_vec(),
            filler: (0..n_filler).map(|i| format!("w{i:03}")).collect(),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.positive
            .iter()
            .chain(&self.negative)
            .chain(&self.cue_positive)
            .chain(&self.cue_negative)
            .chain(&self.filler)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub dataset: Dataset,
    pub planted: PlantedWords,
    pub seed: u64,
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &'a [String]) -> &'a str {
    &words[rng.gen_range(0..words.len())]
}

/// Generates a corpus that is a pure function of `(config, seed)`.
///
/// Labels follow an alternating schedule, so the two classes are balanced to
/// within one example.
pub fn synth_corpus(config: &SynthConfig, seed: u64) -> Result<SynthCorpus> {
    config.validate()?;
    let planted = PlantedWords::new(config);
    let labels = LabelSet::new(&["pos", "neg"])?;
    let mut rng = derived_rng(seed, "synth-corpus", 0);

    let mut examples: Vec<(Vec<String>, Label)> = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let positive = i % 2 == 0;
        let (major, minor) = if positive {
            (&planted.positive, &planted.negative)
        } else {
            (&planted.negative, &planted.positive)
        };
        let len = rng.gen_range(config.len_min..=config.len_max);
        let n_major = rng.gen_range(1..=len.min(config.max_sentiment));
        let n_minor = rng.gen_range(0..=(n_major - 1).min(len - n_major));
        let mut words: Vec<String> = Vec::with_capacity(len);
        for _ in 0..n_major {
            words.push(pick(&mut rng, major).to_string());
        }
        for _ in 0..n_minor {
            words.push(pick(&mut rng, minor).to_string());
        }
        for _ in 0..config.confound_slots {
            let cue_roll: f64 = rng.gen();
            if words.len() < len && cue_roll < config.confound_rate && config.n_confound > 0 {
                let own_side = rng.gen::<f64>() < config.confound_bias;
                let group = match (positive == own_side, planted.cue_negative.is_empty()) {
                    (true, _) | (false, true) => &planted.cue_positive,
                    (false, false) => &planted.cue_negative,
                };
                words.push(pick(&mut rng, group).to_string());
            }
        }
        while words.len() < len {
            words.push(pick(&mut rng, &planted.filler).to_string());
        }
        words.shuffle(&mut rng);
        let label = Label::new(if positive { "pos" } else { "neg" });
        examples.push((words, label));
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut derived_rng(seed, "synth-split", 0));
    let n_train = (config.train_fraction * config.count as f64).round() as usize;
    let n_dev = ((config.dev_fraction * config.count as f64).round() as usize)
        .min(config.count - n_train.min(config.count));
    let mut ds = Dataset::empty(labels);
    for (rank, &i) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        let (words, label) = &examples[i];
        let bucket = ds.split_mut(split);
        let id = format!("{}-{}", split.name(), bucket.len());
        bucket.push(Example {
            id,
            text: words.join(" "),
            tokens: words.iter().map(Token::new).collect(),
            label: label.clone(),
            origin: Origin::Original,
            source_id: None,
            removed_positions: Vec::new(),
        });
    }
    Ok(SynthCorpus {
        dataset: ds,
        planted,
        seed,
    })
}

impl SynthCorpus {
    /// Lexicon in the three-column `lemma<TAB>pos<TAB>neg` format. Planted words
    /// get polar scores on the 1/8 grid (always below 1), everything else is neutral.
    pub fn lexicon_tsv(&self) -> String {
        let mut rng = derived_rng(self.seed, "synth-lexicon", 0);
        let grid = [0.375, 0.5, 0.625, 0.75, 0.875];
        let mut out = String::from("# synthetic lexicon: lemma<TAB>positive<TAB>negative\n");
        for w in &self.planted.positive {
            let p = grid[rng.gen_range(0..grid.len())];
            let n = if rng.gen::<f64>() < 0.25 { 0.125 } else { 0.0 };
            out.push_str(&format!("{w}\t{p}\t{n}\n"));
        }
        for w in &self.planted.negative {
            let n = grid[rng.gen_range(0..grid.len())];
            let p = if rng.gen::<f64>() < 0.25 { 0.125 } else { 0.0 };
            out.push_str(&format!("{w}\t{p}\t{n}\n"));
        }
        for w in self
            .planted
            .cue_positive
            .iter()
            .chain(&self.planted.cue_negative)
            .chain(&self.planted.filler)
        {
            out.push_str(&format!("{w}\t0\t0\n"));
        }
        out
    }

    /// Word vectors mimicking distributional embeddings: each positive word shares a
    /// neighborhood with one negative word and a few filler words, with a weak
    /// global sentiment direction separating the two polarities.
    pub fn embeddings(&self, dim: usize) -> EmbeddingTable {
        let mut rng = derived_rng(self.seed, "synth-embeddings", 0);
        let p = &self.planted;
        let n_clusters = p.positive.len().max(p.negative.len());
        let centers: Vec<Vec<f64>> = (0..n_clusters)
            .map(|_| gaussian(&mut rng, dim, 1.0))
            .collect();
        let direction = {
            let v = gaussian(&mut rng, dim, 1.0);
            let n = crate::math::norm(&v).max(1e-12);
            v.into_iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let noisy = |rng: &mut ChaCha8Rng, center: &[f64], shift: f64| -> Vec<f64> {
            let noise = gaussian(rng, dim, 0.35);
            center
                .iter()
                .zip(&noise)
                .zip(&direction)
                .map(|((c, e), v)| 0.25 * (c + e + shift * v))
                .collect()
        };
        let mut table = EmbeddingTable::new(dim, self.seed);
        for (i, w) in p.positive.iter().enumerate() {
            let v = noisy(&mut rng, &centers[i % n_clusters], 0.5);
            table.insert(w, v).expect("dimension");
        }
        for (i, w) in p.negative.iter().enumerate() {
            let v = noisy(&mut rng, &centers[i % n_clusters], -0.5);
            table.insert(w, v).expect("dimension");
        }
        let per_cluster = 0;
        for (i, w) in p.filler.iter().enumerate() {
            let v = if i < per_cluster * n_clusters {
                noisy(&mut rng, &centers[i % n_clusters], 0.0)
            } else {
                gaussian(&mut rng, dim, 0.25)
            };
            table.insert(w, v).expect("dimension");
        }
        for w in p.cue_positive.iter().chain(&p.cue_negative) {
            let v = gaussian(&mut rng, dim, 0.25);
            table.insert(w, v).expect("dimension");
        }
        table
    }
}

/// Standard normal samples via Box-Muller, scaled by `scale`.
fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}
