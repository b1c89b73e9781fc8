use std::collections::HashMap;

use sentiaug::corpus::{build_vocab, synth_corpus, Dataset, Example, Label, LabelSet, Split, SynthConfig, Vocabulary};
use sentiaug::model::{test_accuracy, train, Architecture, Model, ModelConfig, TrainConfig};
use sentiaug::pipeline::ReproduceConfig;

fn finite_difference(model: &Model, ids: &[usize], label: usize) -> Vec<Vec<f64>> {
    let eps = 1e-6;
    let mut probe = model.clone();
    let mut grads = Vec::new();
    for b in 0..model.blocks().len() {
        let mut g = vec![0.0; model.blocks()[b].len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let x = probe.blocks()[b][i];
            probe.blocks_mut()[b][i] = x + eps;
            let plus = probe.loss(ids, label);
            probe.blocks_mut()[b][i] = x - eps;
            let minus = probe.loss(ids, label);
            probe.blocks_mut()[b][i] = x;
            *gi = (plus - minus) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

/// Plain Adam driven by numerical gradients, written out from the update rule.
fn oracle(model: &Model, ids: &[usize], label: usize, lr: f64, steps: usize) -> Vec<Vec<f64>> {
    let mut m = model.clone();
    let shapes: Vec<usize> = m.blocks().iter().map(Vec::len).collect();
    let mut first: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
    let mut second = first.clone();
    for t in 1..=steps as i32 {
        let g = finite_difference(&m, ids, label);
        for b in 0..shapes.len() {
            for i in 0..shapes[b] {
                first[b][i] = 0.9 * first[b][i] + 0.1 * g[b][i];
                second[b][i] = 0.999 * second[b][i] + 0.001 * g[b][i] * g[b][i];
                let mh = first[b][i] / (1.0 - 0.9f64.powi(t));
                let vh = second[b][i] / (1.0 - 0.999f64.powi(t));
                m.blocks_mut()[b][i] -= lr * mh / (vh.sqrt() + 1e-8);
            }
        }
    }
    m.blocks().to_vec()
}

#[test]
fn single_example_training_matches_numerical_adam() {
    let vocab = Vocabulary::from_words(["good", "film", "bad", "plot"]);
    let labels = LabelSet::new(&["pos", "neg"]).unwrap();
    for arch in [Architecture::Cnn, Architecture::Rnn] {
        let config = ModelConfig {
            arch,
            embedding_dim: 4,
            windows: vec![2],
            filters_per_window: 3,
            hidden: 3,
            max_len: 20,
            freeze_embeddings: false,
        };
        let model = Model::new(config, labels.clone(), vocab.clone(), None, 3).unwrap();
        let mut ds = Dataset::empty(labels.clone());
        ds.train.push(Example::original("train-0", "good film plot", Label::new("neg")).unwrap());
        let lr = 1e-3;
        let cfg = TrainConfig {
            learning_rate: lr,
            batch_size: 1,
            epochs: 3,
            seed: 1,
            dropout: 0.0,
        };
        let ids = model.encode(&["good", "film", "plot"]);
        let expected = oracle(&model, &ids, 1, lr, 3);
        let (trained, history) = train(model, &ds, &cfg).unwrap();
        assert_eq!(history.best_epoch, 3);
        for (b, (got, want)) in trained.blocks().iter().zip(&expected).enumerate() {
            for (i, (g, w)) in got.iter().zip(want).enumerate() {
                // Adam normalizes each step to about `lr`, so compare on that scale
                assert!((g - w).abs() < 1e-3 * lr + 1e-9, "{arch:?} block {b}[{i}]: {g} vs {w}");
            }
        }
    }
}

/// Bag-of-words logistic regression fitted by full-batch gradient descent.
fn bow_accuracy(ds: &Dataset) -> f64 {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for e in &ds.train {
        for w in e.words() {
            let n = index.len();
            index.entry(w).or_insert(n);
        }
    }
    let featurize = |e: &Example| -> Vec<usize> { e.words().iter().filter_map(|w| index.get(w).copied()).collect() };
    let y = |e: &Example| if e.label.as_str() == "pos" { 1.0 } else { 0.0 };
    let train: Vec<(Vec<usize>, f64)> = ds.train.iter().map(|e| (featurize(e), y(e))).collect();
    let mut w = vec![0.0; index.len()];
    let mut b = 0.0;
    for _ in 0..300 {
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (x, t) in &train {
            let z: f64 = b + x.iter().map(|&i| w[i]).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - t;
            gb += err;
            for &i in x {
                gw[i] += err;
            }
        }
        let n = train.len() as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= 0.5 * g / n * 10.0;
        }
        b -= 0.5 * gb / n;
    }
    let correct = ds
        .test
        .iter()
        .filter(|e| {
            let z: f64 = b + featurize(e).iter().map(|&i| w[i]).sum::<f64>();
            (z > 0.0) == (y(e) == 1.0)
        })
        .count();
    correct as f64 / ds.test.len() as f64
}

#[test]
fn synthetic_corpus_is_separable_and_the_cnn_keeps_up() {
    let cfg = ReproduceConfig::desk(Architecture::Cnn, 1);
    let corpus = synth_corpus(&SynthConfig::default(), 1).unwrap();
    let ds = &corpus.dataset;
    let bow = bow_accuracy(ds);
    assert!(bow >= 0.9, "bag-of-words accuracy {bow}");

    let vocab = build_vocab(ds, 1).unwrap();
    let table = corpus.embeddings(cfg.model.embedding_dim);
    let model = Model::new(cfg.model.clone(), ds.labels.clone(), vocab, Some(&table), 1).unwrap();
    let (model, _) = train(model, ds, &cfg.train).unwrap();
    let cnn = test_accuracy(&model, ds.split(Split::Test));
    assert!(cnn >= bow - 0.03, "cnn {cnn} vs bag-of-words {bow}");
}
