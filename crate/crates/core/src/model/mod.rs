//! Convolutional and recurrent sentiment classifiers.
//!
//! A model maps a token sequence to a representation `f(x)` and scores each
//! label with a linear head, `h(x, y) = u_y · f(x)`. Gradients are derived by
//! hand; [`grad_check`] compares them to central differences.

mod checkpoint;
mod cnn;
mod gradcheck;
mod lstm;
mod train;

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::corpus::{Label, LabelSet, Vocabulary};
use crate::embeddings::{oov_vector, EmbeddingTable};
use crate::error::{Error, Result};
use crate::math::{argmax, dot, log_sum_exp, softmax};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, BlockSelection, GradCheckReport};
pub use train::{test_accuracy, train, Adam, EpochRecord, History, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cnn,
    Rnn,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Cnn => "cnn",
            Architecture::Rnn => "rnn",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cnn" => Ok(Architecture::Cnn),
            "rnn" | "lstm" => Ok(Architecture::Rnn),
            other => Err(format!("unknown architecture `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub embedding_dim: usize,
    /// CNN window sizes.
    pub windows: Vec<usize>,
    pub filters_per_window: usize,
    /// LSTM hidden size.
    pub hidden: usize,
    /// Inputs are truncated to this many tokens.
    pub max_len: usize,
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Architecture::Cnn,
            embedding_dim: 300,
            windows: vec![3, 4, 5],
            filters_per_window: 100,
            hidden: 150,
            max_len: 400,
            freeze_embeddings: false,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for desk-scale experiments on the synthetic corpus.
    pub fn desk(arch: Architecture) -> Self {
        ModelConfig {
            arch,
            embedding_dim: 16,
            windows: vec![3, 4, 5],
            filters_per_window: 8,
            hidden: 24,
            max_len: 400,
            freeze_embeddings: false,
        }
    }

    /// Overrides `base` from unprefixed keys (`arch`, `embedding_dim`, ...).
    pub fn from_key_values(kv: &KeyValues, base: &ModelConfig) -> Result<Self> {
        let windows = match kv.get("windows") {
            None => base.windows.clone(),
            Some(v) => v
                .split(',')
                .map(|w| w.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("key `windows`: {e}")))?,
        };
        let cfg = ModelConfig {
            arch: kv.parse_or("arch", base.arch)?,
            embedding_dim: kv.parse_or("embedding_dim", base.embedding_dim)?,
            windows,
            filters_per_window: kv.parse_or("filters_per_window", base.filters_per_window)?,
            hidden: kv.parse_or("hidden", base.hidden)?,
            max_len: kv.parse_or("max_len", base.max_len)?,
            freeze_embeddings: kv.parse_or("freeze_embeddings", base.freeze_embeddings)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("arch", self.arch.name());
        kv.set("embedding_dim", self.embedding_dim);
        let windows: Vec<String> = self.windows.iter().map(usize::to_string).collect();
        kv.set("windows", windows.join(","));
        kv.set("filters_per_window", self.filters_per_window);
        kv.set("hidden", self.hidden);
        kv.set("max_len", self.max_len);
        kv.set("freeze_embeddings", self.freeze_embeddings);
        kv
    }

    pub fn representation_dim(&self) -> usize {
        match self.arch {
            Architecture::Cnn => self.windows.len() * self.filters_per_window,
            Architecture::Rnn => self.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.embedding_dim == 0 || self.max_len == 0 {
            return bad("embedding_dim and max_len must be positive");
        }
        match self.arch {
            Architecture::Cnn if self.windows.is_empty() || self.windows.contains(&0) => {
                bad("CNN windows must be non-empty and positive")
            }
            Architecture::Cnn if self.filters_per_window == 0 => bad("filters_per_window must be positive"),
            Architecture::Rnn if self.hidden == 0 => bad("hidden must be positive"),
            _ => Ok(()),
        }
    }

    /// `(name, length, fan_in)` of every encoder block.
    fn block_layout(&self) -> Vec<(String, usize, usize)> {
        let d = self.embedding_dim;
        let mut blocks = Vec::new();
        match self.arch {
            Architecture::Cnn => {
                for &w in &self.windows {
                    blocks.push((format!("conv{w}.weight"), self.filters_per_window * w * d, w * d));
                    blocks.push((format!("conv{w}.bias"), self.filters_per_window, w * d));
                }
            }
            Architecture::Rnn => {
                let h = self.hidden;
                blocks.push(("lstm.input_weight".into(), 4 * h * d, h));
                blocks.push(("lstm.hidden_weight".into(), 4 * h * h, h));
                blocks.push(("lstm.bias".into(), 4 * h, h));
            }
        }
        blocks
    }
}

/// Read-only scoring interface shared by trained models and test doubles.
pub trait Classifier: Sync {
    fn labels(&self) -> &LabelSet;

    /// Text representation `f(x)`.
    fn represent(&self, words: &[&str]) -> Vec<f64>;

    /// Decision scores `h(x, y)` for every label in [`Classifier::labels`] order.
    fn decide(&self, repr: &[f64]) -> Vec<f64>;

    fn scores(&self, words: &[&str]) -> Vec<f64> {
        self.decide(&self.represent(words))
    }

    fn predict(&self, words: &[&str], suppress_aug: bool) -> Label {
        let idx = predict_index(&self.scores(words), self.labels(), suppress_aug);
        self.labels().all()[idx].clone()
    }

    /// Softmax over base labels only, as used at test time.
    fn base_probabilities(&self, words: &[&str]) -> Vec<f64> {
        let scores = self.scores(words);
        softmax(&scores[..self.labels().base().len()])
    }
}

/// Argmax over base labels when `suppress_aug`, else over all labels; the first
/// label in declared order wins ties.
pub fn predict_index(scores: &[f64], labels: &LabelSet, suppress_aug: bool) -> usize {
    if suppress_aug {
        argmax(&scores[..labels.base().len()])
    } else {
        argmax(scores)
    }
}

/// Embedding rows touched by one example and their gradients.
pub(crate) type SparseRows = Vec<(usize, Vec<f64>)>;

/// Gradient of the loss for one example (or a sum over several).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Sparse embedding-row gradients, sorted by row.
    pub embedding: std::collections::BTreeMap<usize, Vec<f64>>,
    /// Encoder blocks followed by the head block, in parameter order.
    pub dense: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Model) -> Self {
        Gradients {
            embedding: Default::default(),
            dense: model.blocks[1..].iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (row, g) in &other.embedding {
            let acc = self
                .embedding
                .entry(*row)
                .or_insert_with(|| vec![0.0; g.len()]);
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.embedding.values_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
        for b in &mut self.dense {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    labels: LabelSet,
    vocab: Vocabulary,
    /// Block 0 is the embedding matrix (row-major, vocab x dim); the last
    /// block holds the decision heads (labels x representation dim).
    blocks: Vec<Vec<f64>>,
    block_names: Vec<String>,
    projection: OnceLock<Option<Vec<f64>>>,
}

/// Entries above which the per-word projection cache is not built.
const PROJECTION_LIMIT: usize = 8_000_000;

impl Model {
    /// Initializes parameters: embeddings from `pretrained` (seeded uniform for
    /// words it lacks), encoder and heads uniform in `±1/sqrt(fan_in)`.
    pub fn new(
        config: ModelConfig,
        labels: LabelSet,
        vocab: Vocabulary,
        pretrained: Option<&EmbeddingTable>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let dim = config.embedding_dim;
        if let Some(t) = pretrained {
            if t.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: t.dim(),
                    context: "pretrained embeddings".into(),
                });
            }
        }
        let mut embedding = vec![0.0; vocab.len() * dim];
        for (id, word) in vocab.words().iter().enumerate().skip(1) {
            let v = match pretrained {
                Some(t) => t.vector_or_oov(word),
                None => oov_vector(seed, word, dim),
            };
            embedding[id * dim..(id + 1) * dim].copy_from_slice(&v);
        }
        let mut rng = crate::math::derived_rng(seed, "model-init", 0);
        let mut blocks = vec![embedding];
        let mut names = vec!["embedding".to_string()];
        let layout = config.block_layout();
        for (name, len, fan_in) in &layout {
            let bound = 1.0 / (*fan_in as f64).sqrt();
            blocks.push((0..*len).map(|_| rng.gen_range(-bound..=bound)).collect());
            names.push(name.clone());
        }
        let rep = config.representation_dim();
        let bound = 1.0 / (rep as f64).sqrt();
        blocks.push(
            (0..labels.len() * rep)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect(),
        );
        names.push("heads".into());
        Ok(Model {
            config,
            labels,
            vocab,
            blocks,
            block_names: names,
            projection: OnceLock::new(),
        })
    }

    /// Rebuilds a model from stored parameter blocks; shapes must match the layout.
    pub(crate) fn from_parts(
        config: ModelConfig,
        labels: LabelSet,
        vocab: Vocabulary,
        blocks: Vec<Vec<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut expected = vec![("embedding".to_string(), vocab.len() * config.embedding_dim)];
        expected.extend(config.block_layout().into_iter().map(|(n, len, _)| (n, len)));
        expected.push(("heads".into(), labels.len() * config.representation_dim()));
        if blocks.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                expected.len(),
                blocks.len()
            )));
        }
        for ((name, len), b) in expected.iter().zip(&blocks) {
            if b.len() != *len {
                return Err(Error::Dimension {
                    expected: *len,
                    found: b.len(),
                    context: format!("parameter block {name}"),
                });
            }
        }
        Ok(Model {
            config,
            labels,
            vocab,
            blocks,
            block_names: expected.into_iter().map(|(n, _)| n).collect(),
            projection: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn representation_dim(&self) -> usize {
        self.config.representation_dim()
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block_names(&self) -> &[String] {
        &self.block_names
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Mutable parameter access; invalidates inference caches.
    pub fn blocks_mut(&mut self) -> &mut [Vec<f64>] {
        self.projection = OnceLock::new();
        &mut self.blocks
    }

    pub fn heads(&self) -> &[f64] {
        self.blocks.last().expect("heads block")
    }

    pub fn embedding_row(&self, id: usize) -> &[f64] {
        let d = self.config.embedding_dim;
        &self.blocks[0][id * d..(id + 1) * d]
    }

    /// Replaces the label set, adding or dropping the AUG head as needed.
    pub fn with_labels(mut self, labels: LabelSet, seed: u64) -> Result<Self> {
        if labels.base() != self.labels.base() {
            return Err(Error::LabelMismatch("base labels differ".into()));
        }
        let rep = self.representation_dim();
        let heads = self.blocks.last_mut().expect("heads");
        heads.truncate(labels.base().len() * rep);
        if labels.has_aug() {
            let mut rng = crate::math::derived_rng(seed, "aug-head", 0);
            let bound = 1.0 / (rep as f64).sqrt();
            heads.extend((0..rep).map(|_| rng.gen_range(-bound..=bound)));
        }
        self.labels = labels;
        self.projection = OnceLock::new();
        Ok(self)
    }

    pub fn encode(&self, words: &[&str]) -> Vec<usize> {
        words
            .iter()
            .take(self.config.max_len)
            .map(|w| self.vocab.id(w))
            .collect()
    }

    pub fn represent_ids(&self, ids: &[usize]) -> Vec<f64> {
        if let Some(proj) = self.projection() {
            return match self.config.arch {
                Architecture::Cnn => cnn::forward_projected(self, proj, ids),
                Architecture::Rnn => lstm::forward_projected(self, proj, ids),
            };
        }
        self.represent_ids_direct(ids)
    }

    /// Representation computed straight from parameters, bypassing caches.
    pub fn represent_ids_direct(&self, ids: &[usize]) -> Vec<f64> {
        match self.config.arch {
            Architecture::Cnn => cnn::forward(self, ids).0,
            Architecture::Rnn => lstm::forward(self, ids).0,
        }
    }

    fn projection(&self) -> Option<&[f64]> {
        self.projection
            .get_or_init(|| {
                let per_word = match self.config.arch {
                    Architecture::Cnn => {
                        self.config.windows.iter().sum::<usize>() * self.config.filters_per_window
                    }
                    Architecture::Rnn => 4 * self.config.hidden,
                };
                if per_word * self.vocab.len() > PROJECTION_LIMIT {
                    return None;
                }
                Some(match self.config.arch {
                    Architecture::Cnn => cnn::build_projection(self),
                    Architecture::Rnn => lstm::build_projection(self),
                })
            })
            .as_deref()
    }

    pub fn decide_scores(&self, repr: &[f64]) -> Vec<f64> {
        let rep = self.representation_dim();
        self.heads().chunks(rep).map(|u| dot(u, repr)).collect()
    }

    /// Cross-entropy loss of softmax(scores) against `label`, with its gradient.
    pub fn loss_and_gradient(&self, ids: &[usize], label: usize, dropout: Option<&[f64]>) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let (loss, rows) = match self.config.arch {
            Architecture::Cnn => {
                let (repr, cache) = cnn::forward(self, ids);
                let (loss, g_rep) = self.head_loss(&repr, label, dropout, &mut grads);
                (loss, cnn::backward(self, &cache, &g_rep, &mut grads))
            }
            Architecture::Rnn => {
                let (repr, cache) = lstm::forward(self, ids);
                let (loss, g_rep) = self.head_loss(&repr, label, dropout, &mut grads);
                (loss, lstm::backward(self, &cache, &g_rep, &mut grads))
            }
        };
        (loss, self.finish(grads, rows))
    }

    fn finish(&self, mut grads: Gradients, rows: SparseRows) -> Gradients {
        if !self.config.freeze_embeddings {
            for (row, g) in rows {
                if row == Vocabulary::PAD_INDEX {
                    continue;
                }
                let acc = grads
                    .embedding
                    .entry(row)
                    .or_insert_with(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
        }
        grads
    }

    /// Loss on the (optionally dropped-out) representation; fills the head
    /// gradient and returns dL/d(repr).
    fn head_loss(&self, repr: &[f64], label: usize, dropout: Option<&[f64]>, grads: &mut Gradients) -> (f64, Vec<f64>) {
        let rep = self.representation_dim();
        let dropped: Vec<f64> = match dropout {
            Some(mask) => repr.iter().zip(mask).map(|(r, m)| r * m).collect(),
            None => repr.to_vec(),
        };
        let scores = self.decide_scores(&dropped);
        let lse = log_sum_exp(&scores);
        let loss = lse - scores[label];
        let mut g_scores: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
        g_scores[label] -= 1.0;
        let heads = self.heads();
        let g_heads = grads.dense.last_mut().expect("heads grad");
        let mut g_rep = vec![0.0; rep];
        for (y, gs) in g_scores.iter().enumerate() {
            let u = &heads[y * rep..(y + 1) * rep];
            let gu = &mut g_heads[y * rep..(y + 1) * rep];
            for k in 0..rep {
                gu[k] += gs * dropped[k];
                g_rep[k] += gs * u[k];
            }
        }
        if let Some(mask) = dropout {
            g_rep.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        (loss, g_rep)
    }

    pub fn loss(&self, ids: &[usize], label: usize) -> f64 {
        let scores = self.decide_scores(&self.represent_ids_direct(ids));
        log_sum_exp(&scores) - scores[label]
    }

    pub fn label_index(&self, label: &Label) -> Result<usize> {
        self.labels
            .index_of(label)
            .ok_or_else(|| Error::LabelMismatch(format!("model has no head for `{label}`")))
    }
}

impl Classifier for Model {
    fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn represent(&self, words: &[&str]) -> Vec<f64> {
        self.represent_ids(&self.encode(words))
    }

    fn decide(&self, repr: &[f64]) -> Vec<f64> {
        self.decide_scores(repr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(arch: Architecture, seed: u64) -> Model {
        let vocab = Vocabulary::from_words(["good", "bad", "film", "the", "plot"]);
        let config = ModelConfig {
            arch,
            embedding_dim: 4,
            windows: vec![2, 3],
            filters_per_window: 3,
            hidden: 5,
            max_len: 50,
            freeze_embeddings: false,
        };
        Model::new(config, LabelSet::new(&["pos", "neg"]).unwrap(), vocab, None, seed).unwrap()
    }

    #[test]
    fn cnn_representation_length_is_filter_total() {
        let m = tiny(Architecture::Cnn, 1);
        assert_eq!(m.represent(&["good", "film"]).len(), 6);
        assert_eq!(m.represent(&["good"]).len(), 6);
    }

    #[test]
    fn zero_parameters_give_zero_representation() {
        for arch in [Architecture::Cnn, Architecture::Rnn] {
            let mut m = tiny(arch, 1);
            let n = m.blocks().len();
            for b in &mut m.blocks_mut()[..n - 1] {
                b.iter_mut().for_each(|x| *x = 0.0);
            }
            assert!(m.represent(&["good", "the", "plot"]).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn decide_is_a_dot_product() {
        let mut m = tiny(Architecture::Cnn, 1);
        let rep = m.representation_dim();
        let heads = m.blocks_mut().last_mut().unwrap();
        heads.iter_mut().for_each(|x| *x = 0.0);
        heads[0] = 1.0;
        let mut r = vec![0.0; rep];
        r[0] = 2.0;
        assert_eq!(m.decide(&r), vec![2.0, 0.0]);
        assert_eq!(m.decide(&vec![0.0; rep]), vec![0.0, 0.0]);
        let r2: Vec<f64> = (0..rep).map(|i| i as f64 * 0.3 - 0.5).collect();
        let doubled: Vec<f64> = r2.iter().map(|x| 2.0 * x).collect();
        let (a, b) = (m.decide(&r2), m.decide(&doubled));
        assert!(a.iter().zip(&b).all(|(x, y)| (2.0 * x - y).abs() < 1e-12));
    }

    #[test]
    fn prediction_rules() {
        let labels = LabelSet::new(&["pos", "neg"]).unwrap().with_aug();
        let scores = [0.2, 0.1, 0.9];
        assert_eq!(predict_index(&scores, &labels, true), 0);
        assert_eq!(predict_index(&scores, &labels, false), 2);
        assert_eq!(predict_index(&[0.5, 0.5, 0.0], &labels, true), 0);
    }

    #[test]
    fn projection_cache_matches_direct_forward() {
        for arch in [Architecture::Cnn, Architecture::Rnn] {
            let m = tiny(arch, 3);
            for words in [&["good"][..], &["the", "film", "bad", "plot", "zzz"][..]] {
                let ids = m.encode(words);
                let a = m.represent_ids(&ids);
                let b = m.represent_ids_direct(&ids);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-12, "{arch:?}");
                }
            }
        }
    }

    #[test]
    fn adding_aug_head_keeps_base_heads() {
        let m = tiny(Architecture::Cnn, 1);
        let base = m.heads().to_vec();
        let labels = LabelSet::new(&["pos", "neg"]).unwrap().with_aug();
        let m2 = m.with_labels(labels, 5).unwrap();
        assert_eq!(m2.heads().len(), 3 * m2.representation_dim());
        assert_eq!(&m2.heads()[..base.len()], base.as_slice());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn softmax_sums_to_one(seed in any::<u64>(), n in 1usize..8) {
                let words = ["good", "bad", "film", "the", "plot", "x", "y", "z"];
                for arch in [Architecture::Cnn, Architecture::Rnn] {
                    let m = tiny(arch, seed);
                    let p = softmax(&m.scores(&words[..n]));
                    prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn suppressed_prediction_is_never_aug(scores in proptest::collection::vec(-100.0f64..100.0, 3)) {
                let labels = LabelSet::new(&["pos", "neg"]).unwrap().with_aug();
                prop_assert!(predict_index(&scores, &labels, true) < 2);
            }

            #[test]
            fn constant_shift_keeps_prediction(
                scores in proptest::collection::vec(-10.0f64..10.0, 3),
                c in -50.0f64..50.0,
            ) {
                let labels = LabelSet::new(&["pos", "neg"]).unwrap().with_aug();
                let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
                // exact ties can be broken differently by rounding; skip near-ties
                let mut sorted = scores.clone();
                sorted.sort_by(f64::total_cmp);
                prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
                for suppress in [true, false] {
                    prop_assert_eq!(
                        predict_index(&scores, &labels, suppress),
                        predict_index(&shifted, &labels, suppress)
                    );
                }
            }
        }
    }
}
