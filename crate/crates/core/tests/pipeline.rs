use sentiaug::augment::augment_ek_dataset;
use sentiaug::config::KeyValues;
use sentiaug::corpus::{synth_corpus, SynthConfig};
use sentiaug::model::Architecture;
use sentiaug::pipeline::{synth_lexicon, ReproduceConfig};

#[test]
fn tau_one_removes_nothing_from_the_synthetic_corpus() {
    let corpus = synth_corpus(&SynthConfig::default(), 1).unwrap();
    let tsv = corpus.lexicon_tsv();
    assert!(augment_ek_dataset(&corpus.dataset, &synth_lexicon(&tsv, 1.0).unwrap()).is_empty());
    assert!(!augment_ek_dataset(&corpus.dataset, &synth_lexicon(&tsv, 0.1).unwrap()).is_empty());
}

#[test]
fn resolved_config_round_trips() {
    let cfg = ReproduceConfig::desk(Architecture::Rnn, 9);
    let kv = KeyValues::parse(&cfg.to_key_values().render()).unwrap();
    assert_eq!(ReproduceConfig::from_key_values(&kv).unwrap(), cfg);
}

#[test]
fn section_seeds_follow_the_global_seed_unless_set() {
    let kv = KeyValues::parse("seed = 4\nlime.seed = 11\nmodel.arch = rnn\n").unwrap();
    let cfg = ReproduceConfig::from_key_values(&kv).unwrap();
    assert_eq!(cfg.synth.seed, 4);
    assert_eq!(cfg.train.seed, 4);
    assert_eq!(cfg.attack.seed, 4);
    assert_eq!(cfg.lime.seed, 11);
    assert_eq!(cfg.model.arch, Architecture::Rnn);
}

#[test]
fn zero_keywords_is_rejected() {
    let kv = KeyValues::parse("keywords = 0\n").unwrap();
    assert!(ReproduceConfig::from_key_values(&kv).is_err());
}
