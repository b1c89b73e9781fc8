use proptest::prelude::*;
use sentiaug::corpus::{build_vocab, synth_corpus, LabelSet, SynthConfig};
use sentiaug::explain::explain_cossim;
use sentiaug::model::{Architecture, Classifier, Model, ModelConfig};

/// Wraps a classifier and rescales its representation by a positive constant.
struct Scaled<'a> {
    inner: &'a Model,
    factor: f64,
}

impl Classifier for Scaled<'_> {
    fn labels(&self) -> &LabelSet {
        self.inner.labels()
    }

    fn represent(&self, words: &[&str]) -> Vec<f64> {
        self.inner.represent(words).into_iter().map(|v| v * self.factor).collect()
    }

    fn decide(&self, repr: &[f64]) -> Vec<f64> {
        let unscaled: Vec<f64> = repr.iter().map(|v| v / self.factor).collect();
        self.inner.decide(&unscaled)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cossim_ranking_ignores_representation_scale(pick in 0usize..400, factor in 0.01f64..100.0, t in 1usize..6) {
        let corpus = synth_corpus(&SynthConfig { count: 400, ..SynthConfig::default() }, 5).unwrap();
        let vocab = build_vocab(&corpus.dataset, 1).unwrap();
        let model = Model::new(
            ModelConfig::desk(Architecture::Cnn),
            corpus.dataset.labels.clone(),
            vocab,
            Some(&corpus.embeddings(16)),
            5,
        )
        .unwrap();
        let all: Vec<_> = corpus.dataset.train.iter().chain(&corpus.dataset.test).collect();
        let ex = all[pick % all.len()];
        let words = ex.words();
        let plain = explain_cossim(&model, &words, t);
        let scaled = explain_cossim(&Scaled { inner: &model, factor }, &words, t);
        let pos = |k: &[sentiaug::explain::Keyword]| k.iter().map(|k| k.position).collect::<Vec<_>>();
        prop_assert_eq!(pos(&plain), pos(&scaled));
        for (a, b) in plain.iter().zip(&scaled) {
            prop_assert!((a.weight - b.weight).abs() < 1e-9);
        }
    }
}
