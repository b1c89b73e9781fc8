//! Word-vector tables: text/binary loading, seeded OOV vectors and exact
//! cosine nearest neighbors.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use rand::Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::math::{cosine, derived_rng};

pub const OOV_RANGE: f64 = 0.25;
const BINARY_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    oov_seed: u64,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_seed: u64) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
            oov_seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Inserts or replaces a vector.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: vector.len(),
                context: format!("vector for `{word}`"),
            });
        }
        match self.index.get(word) {
            Some(&i) => self.vectors[i] = vector,
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.vectors.push(vector);
            }
        }
        Ok(())
    }

    /// Uniform sample in `[-0.25, 0.25]^d`, a pure function of `(oov_seed, word)`.
    pub fn oov_vector(&self, word: &str) -> Vec<f64> {
        oov_vector(self.oov_seed, word, self.dim)
    }

    /// Vector for `word`, falling back to its seeded OOV sample.
    pub fn vector_or_oov(&self, word: &str) -> Vec<f64> {
        self.get(word)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| self.oov_vector(word))
    }

    /// Top-`k` other words by cosine similarity; ties resolve lexicographically.
    pub fn nearest_neighbors(&self, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let query = self
            .get(word)
            .ok_or_else(|| Error::MissingWord(word.to_string()))?;
        let mut scored: Vec<(&str, f64)> = self
            .words
            .iter()
            .zip(&self.vectors)
            .filter(|(w, _)| w.as_str() != word)
            .map(|(w, v)| (w.as_str(), cosine(query, v)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(w, s)| (w.to_string(), s))
            .collect())
    }

    /// A copy restricted to vocabulary words; vocabulary words missing here get
    /// their seeded OOV vector. Special entries are skipped.
    pub fn restricted_to(&self, vocab: &Vocabulary) -> EmbeddingTable {
        let mut out = EmbeddingTable::new(self.dim, self.oov_seed);
        for w in vocab.content_words() {
            let v = self.vector_or_oov(w);
            out.insert(w, v).expect("dimension checked");
        }
        out
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (word, v) in self.words.iter().zip(&self.vectors) {
            write!(w, "{word}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// `EMB1`, little-endian u32 dimension, then records of
    /// (u32 byte length, UTF-8 word, `d` little-endian f64).
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for (word, v) in self.words.iter().zip(&self.vectors) {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, oov_seed: u64) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("embedding cache", e))?;
        let bad = |m: &str| Error::Config(format!("embedding cache: {m}"));
        if bytes.len() < 8 || &bytes[..4] != BINARY_MAGIC {
            return Err(bad("missing EMB1 magic"));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let mut table = EmbeddingTable::new(dim, oov_seed);
        let mut at = 8;
        while at < bytes.len() {
            let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
                let s = bytes.get(*at..*at + n).ok_or_else(|| bad("truncated record"))?;
                *at += n;
                Ok(s)
            };
            let len = u32::from_le_bytes(take(&mut at, 4)?.try_into().expect("4 bytes")) as usize;
            let word = std::str::from_utf8(take(&mut at, len)?)
                .map_err(|_| bad("word is not UTF-8"))?
                .to_string();
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().expect("8 bytes")));
            }
            table.insert(&word, v)?;
        }
        Ok(table)
    }
}

pub fn oov_vector(seed: u64, word: &str, dim: usize) -> Vec<f64> {
    let mut rng = derived_rng(seed, word, 0x00f0);
    (0..dim)
        .map(|_| rng.gen_range(-OOV_RANGE..=OOV_RANGE))
        .collect()
}

/// Parses the whitespace text format (optional `count dim` header) without
/// restricting to a vocabulary.
pub fn parse_text<R: BufRead>(reader: R, oov_seed: u64) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("embeddings", e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let dim = fields[1].parse().expect("checked");
            table = Some(EmbeddingTable::new(dim, oov_seed));
            continue;
        }
        let word = fields[0];
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::parse("embeddings", lineno, format!("non-numeric component `{f}`"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len(), oov_seed));
        if values.len() != t.dim {
            return Err(Error::parse(
                "embeddings",
                lineno,
                format!("expected {} components, found {}", t.dim, values.len()),
            ));
        }
        t.insert(word, values)?;
    }
    table.ok_or_else(|| Error::EmptyInput("embedding file has no vectors".into()))
}

/// Loads text-format vectors restricted to `vocab`; vocabulary words absent
/// from the file get seeded OOV vectors.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    oov_seed: u64,
) -> Result<EmbeddingTable> {
    Ok(parse_text(reader, oov_seed)?.restricted_to(vocab))
}
