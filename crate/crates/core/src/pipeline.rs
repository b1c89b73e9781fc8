//! The fixed end-to-end experiment: synthesize, train base/EK/Adv models,
//! explain the test split and score coherence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::attack::{
    attack_examples, ngram_lm_fit, render_report, AttackConfig, AttackStatus, NeighborTable, ReportLine,
};
use crate::augment::{augment_adv, augment_ek_dataset, extend_dataset, AugmentationRecord};
use crate::config::KeyValues;
use crate::corpus::{build_vocab, synth_corpus, write_corpus, Dataset, Example, Split, SynthConfig, Vocabulary};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluate::{coherence_of, render_summary, PolarityMap, SummaryRow};
use crate::explain::{explain_examples, render_explanations, ExplainConfig, LimeConfig, Method};
use crate::lexicon::{aggregate, parse_any, AggregationPolicy, SentimentLexicon};
use crate::model::{save_checkpoint, test_accuracy, train, Architecture, History, Model, ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub lime: LimeConfig,
    /// Lexicon threshold for DA-EK.
    pub tau: f64,
    pub keywords: usize,
    /// Explain only the first `n` test examples; 0 means all.
    pub explain_limit: usize,
}

impl ReproduceConfig {
    /// Desk-scale defaults for `arch`, with every component seeded from `seed`.
    pub fn desk(arch: Architecture, seed: u64) -> Self {
        let synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        ReproduceConfig {
            seed,
            synth,
            model: ModelConfig::desk(arch),
            train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 50,
                epochs: 10,
                seed,
                dropout: 0.0,
            },
            attack: AttackConfig {
                seed,
                ..AttackConfig::default()
            },
            lime: LimeConfig {
                seed,
                ..LimeConfig::default()
            },
            tau: 0.1,
            keywords: 3,
            explain_limit: 0,
        }
    }

    /// Keys: `seed`, `tau`, `keywords`, `explain_limit` and the sections
    /// `synth.`, `model.`, `train.`, `attack.`, `lime.`. Section seeds default to `seed`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let seed = kv.parse_or("seed", 1u64)?;
        let model_kv = kv.section("model");
        let arch: Architecture = model_kv.parse_or("arch", Architecture::Cnn)?;
        let base = ReproduceConfig::desk(arch, seed);
        let seeded = |section: &str| {
            let mut s = KeyValues::default();
            s.set("seed", seed);
            s.merge(&kv.section(section));
            s
        };
        let cfg = ReproduceConfig {
            seed,
            synth: SynthConfig::from_key_values(&seeded("synth"))?,
            model: ModelConfig::from_key_values(&model_kv, &base.model)?,
            train: TrainConfig::from_key_values(&seeded("train"), &base.train)?,
            attack: AttackConfig::from_key_values(&seeded("attack"))?,
            lime: LimeConfig::from_key_values(&seeded("lime"))?,
            tau: kv.parse_or("tau", base.tau)?,
            keywords: kv.parse_or("keywords", base.keywords)?,
            explain_limit: kv.parse_or("explain_limit", base.explain_limit)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("seed", self.seed);
        kv.set("tau", self.tau);
        kv.set("keywords", self.keywords);
        kv.set("explain_limit", self.explain_limit);
        kv.merge(&self.synth.to_key_values().prefixed("synth"));
        kv.merge(&self.model.to_key_values().prefixed("model"));
        kv.merge(&self.train.to_key_values().prefixed("train"));
        kv.merge(&self.attack.to_key_values().prefixed("attack"));
        kv.merge(&self.lime.to_key_values().prefixed("lime"));
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.keywords == 0 {
            return Err(Error::Config("keywords must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.attack.validate()?;
        self.lime.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackStats {
    pub attempted: usize,
    pub succeeded: usize,
    pub skipped: usize,
}

impl AttackStats {
    pub fn from_lines(lines: &[ReportLine]) -> Self {
        let mut s = AttackStats::default();
        for l in lines {
            match l.status {
                AttackStatus::SkippedMisclassified => s.skipped += 1,
                AttackStatus::Success => {
                    s.attempted += 1;
                    s.succeeded += 1;
                }
                AttackStatus::FailedBudget => s.attempted += 1,
            }
        }
        s
    }

    /// Successes over correctly classified examples.
    pub fn success_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.succeeded as f64 / self.attempted as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOutcome {
    pub rows: Vec<SummaryRow>,
    pub attack: AttackStats,
    pub ek_records: usize,
    pub adv_records: usize,
    pub histories: Vec<(String, History)>,
}

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Lexicon recovered from the synthetic TSV, thresholded at `tau`.
pub fn synth_lexicon(tsv: &str, tau: f64) -> Result<SentimentLexicon> {
    Ok(aggregate(&parse_any(tsv)?, AggregationPolicy::MeanAllSenses)?.with_threshold(tau))
}

fn train_named(
    name: &str,
    cfg: &ReproduceConfig,
    dataset: &Dataset,
    vocab: &Vocabulary,
    embeddings: &EmbeddingTable,
    out: &Path,
) -> Result<(Model, History)> {
    let start = Instant::now();
    let model = Model::new(
        cfg.model.clone(),
        dataset.labels.clone(),
        vocab.clone(),
        Some(embeddings),
        cfg.train.seed,
    )?;
    let (model, history) = train(model, dataset, &cfg.train)?;
    save_checkpoint(&model, &out.join("models").join(format!("{name}.ckpt")))?;
    write(
        &out.join("models").join(format!("{name}.history.json")),
        serde_json::to_string_pretty(&history)?,
    )?;
    info!("trained {name} in {:.1}s, best epoch {}", start.elapsed().as_secs_f64(), history.best_epoch);
    Ok((model, history))
}

fn evaluate_named(
    name: &str,
    model: &Model,
    cfg: &ReproduceConfig,
    test: &[Example],
    explained: &[Example],
    lexicon: &SentimentLexicon,
    polarity: &PolarityMap,
    out: &Path,
) -> Result<SummaryRow> {
    let accuracy = test_accuracy(model, test);
    let mut scores = Vec::new();
    for method in [Method::Lime, Method::CosSim] {
        let ecfg = ExplainConfig {
            method,
            keywords: cfg.keywords,
            lime: cfg.lime.clone(),
        };
        let explanations = explain_examples(model, explained, &ecfg)?;
        let tag = method.name().to_lowercase();
        write(
            &out.join("explain").join(format!("{name}.{tag}.jsonl")),
            render_explanations(&explanations)?,
        )?;
        let report = coherence_of(&explanations, lexicon, polarity)?;
        write(
            &out.join("eval").join(format!("{name}.{tag}.coherence.jsonl")),
            report.render_records()?,
        )?;
        scores.push(report.score);
    }
    info!("{name}: accuracy {accuracy:.4}, coherence LIME {:.4}, CosSim {:.4}", scores[0], scores[1]);
    Ok(SummaryRow {
        model: name.to_string(),
        accuracy,
        coherence_lime: scores[0],
        coherence_cossim: scores[1],
    })
}

pub fn data_prefix(out: &Path, name: &str) -> PathBuf {
    out.join("data").join(name)
}

/// Runs the whole experiment, writing every artifact under `out`.
pub fn reproduce(cfg: &ReproduceConfig, out: &Path) -> Result<ReproduceOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("config.resolved"), cfg.to_key_values().render())?;

    let corpus = synth_corpus(&cfg.synth, cfg.synth.seed)?;
    let dataset = corpus.dataset.clone();
    write_corpus(&dataset, &data_prefix(out, "corpus"))?;
    let lexicon_tsv = corpus.lexicon_tsv();
    write(&out.join("data").join("lexicon.tsv"), &lexicon_tsv)?;
    let lexicon = synth_lexicon(&lexicon_tsv, cfg.tau)?;
    let embeddings = corpus.embeddings(cfg.model.embedding_dim);
    let mut buf = Vec::new();
    embeddings
        .write_text(&mut buf)
        .map_err(|e| Error::io(&out.join("data").join("embeddings.txt"), e))?;
    write(&out.join("data").join("embeddings.txt"), buf)?;
    let vocab = build_vocab(&dataset, 1)?;
    write(&out.join("data").join("vocab.txt"), vocab.render())?;
    info!("{}", dataset.summary());

    let (base, base_history) = train_named("base", cfg, &dataset, &vocab, &embeddings, out)?;

    let ek_records = augment_ek_dataset(&dataset, &lexicon);
    let ek_data = extend_dataset(&dataset, &ek_records)?;
    write_corpus(&ek_data, &data_prefix(out, "ek"))?;
    let (ek, ek_history) = train_named("ek", cfg, &ek_data, &vocab, &embeddings, out)?;

    let start = Instant::now();
    let lm = ngram_lm_fit(&dataset)?;
    let neighbors = NeighborTable::build(
        &embeddings,
        vocab.content_words().iter().map(String::as_str),
        cfg.attack.neighbors,
    );
    let sources: Vec<_> = dataset.train.iter().chain(&dataset.dev).cloned().collect();
    let results = attack_examples(&base, &sources, &neighbors, &lm, &cfg.attack);
    let lines: Vec<ReportLine> = results.iter().map(|(id, r)| ReportLine::from_result(id, r)).collect();
    write(&out.join("attack").join("report.tsv"), render_report(&lines))?;
    let stats = AttackStats::from_lines(&lines);
    info!(
        "attack: {}/{} succeeded in {:.1}s",
        stats.succeeded,
        stats.attempted,
        start.elapsed().as_secs_f64()
    );
    let mut adv_records: Vec<AugmentationRecord> = Vec::new();
    for (example, (_, result)) in sources.iter().zip(&results) {
        if let Some(c) = result.candidate.as_ref().filter(|_| result.status == AttackStatus::Success) {
            if let Some(r) = augment_adv(example, &c.substitutions)? {
                adv_records.push(r);
            }
        }
    }
    let adv_data = extend_dataset(&dataset, &adv_records)?;
    write_corpus(&adv_data, &data_prefix(out, "adv"))?;
    let (adv, adv_history) = train_named("adv", cfg, &adv_data, &vocab, &embeddings, out)?;

    let polarity = PolarityMap::from_label_names(&dataset.labels);
    let test: &[_] = dataset.split(Split::Test);
    let explained = if cfg.explain_limit > 0 {
        &test[..cfg.explain_limit.min(test.len())]
    } else {
        test
    };
    let mut rows = Vec::new();
    for (name, model) in [("base", &base), ("ek", &ek), ("adv", &adv)] {
        rows.push(evaluate_named(name, model, cfg, test, explained, &lexicon, &polarity, out)?);
    }
    write(&out.join("summary.tsv"), render_summary(&rows))?;

    Ok(ReproduceOutcome {
        rows,
        attack: stats,
        ek_records: ek_records.len(),
        adv_records: adv_records.len(),
        histories: vec![
            ("base".into(), base_history),
            ("ek".into(), ek_history),
            ("adv".into(), adv_history),
        ],
    })
}
