//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use sentiaug::attack::{genetic_attack, ngram_lm_fit, AttackConfig, AttackStatus, NeighborTable};
use sentiaug::augment::{augment_ek, augment_ek_dataset};
use sentiaug::corpus::{build_vocab, synth_corpus, Example, Label, LabelSet, SynthConfig, Vocabulary};
use sentiaug::evaluate::{is_coherent, score_explanation, Polarity};
use sentiaug::explain::{explain_lime, fit_surrogate, Keyword, LimeConfig, PerturbationSet, Solver};
use sentiaug::lexicon::{aggregate, parse_simple, AggregationPolicy, SentimentLexicon};
use sentiaug::math::derived_rng;
use sentiaug::model::{grad_check, train, Architecture, BlockSelection, Classifier, Model, ModelConfig};
use sentiaug::pipeline::{reproduce, synth_lexicon, ReproduceConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn lexicon(rows: &str, tau: f64) -> SentimentLexicon {
    aggregate(&parse_simple(rows.as_bytes()).unwrap(), AggregationPolicy::MeanAllSenses)
        .unwrap()
        .with_threshold(tau)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::from_words(words.clone());
    let labels = LabelSet::new(&["pos", "neg"]).unwrap();
    let mut worst: f64 = 0.0;
    let mut sizes = Vec::new();
    for arch in [Architecture::Cnn, Architecture::Rnn] {
        let config = ModelConfig {
            arch,
            embedding_dim: 8,
            windows: vec![2, 3],
            filters_per_window: 16,
            hidden: 12,
            max_len: 50,
            freeze_embeddings: false,
        };
        for seed in 0..20u64 {
            let model = Model::new(config.clone(), labels.clone(), vocab.clone(), None, seed).unwrap();
            let mut rng = derived_rng(seed, "acceptance-gradcheck", arch as u64);
            let len = rng.gen_range(3..=8);
            let sentence: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())].as_str()).collect();
            let ids = model.encode(&sentence);
            let report = grad_check(&model, &ids, rng.gen_range(0..2), 1e-5, BlockSelection::All);
            worst = worst.max(report.max_relative_error);
            if seed == 0 {
                sizes.push(format!("{} {}", arch.name(), model.parameter_count()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 1e-4, format!("max relative error {worst:.3e}"))?;
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "max relative error {worst:.2e} over 40 models ({} parameters), {secs:.1}s",
        sizes.join(", ")
    ))
}

/// Scores are linear in the keep-mask: the representation sums word vectors.
struct LinearToy {
    labels: LabelSet,
    vectors: BTreeMap<String, Vec<f64>>,
    heads: Vec<Vec<f64>>,
}

impl Classifier for LinearToy {
    fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn represent(&self, words: &[&str]) -> Vec<f64> {
        let mut r = vec![0.0; 3];
        for w in words {
            for (a, b) in r.iter_mut().zip(&self.vectors[*w]) {
                *a += b;
            }
        }
        r
    }

    fn decide(&self, repr: &[f64]) -> Vec<f64> {
        self.heads
            .iter()
            .map(|u| u.iter().zip(repr).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn ranking(k: &[Keyword]) -> Vec<usize> {
    k.iter().map(|k| k.position).collect()
}

fn lime_oracle() -> Outcome {
    let mut worst_loss: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for m in 0..50u64 {
        let mut rng = derived_rng(m, "acceptance-lime", 0);
        let n = rng.gen_range(2..=10usize);
        let words: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let toy = LinearToy {
            labels: LabelSet::new(&["pos", "neg"]).unwrap(),
            vectors: words
                .iter()
                .map(|w| (w.clone(), (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect(),
            heads: (0..2)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        };
        let masks: Vec<Vec<bool>> = (0..1u32 << n)
            .map(|bits| (0..n).map(|i| bits >> i & 1 == 1).collect())
            .collect();
        let perturbations = PerturbationSet { masks };
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let base = LimeConfig {
            ridge: 1e-10,
            epochs: 3000,
            ..LimeConfig::default()
        };
        let closed = fit_surrogate(&toy, &refs, &perturbations, &LimeConfig { solver: Solver::ClosedForm, ..base.clone() })
            .map_err(|e| e.to_string())?;
        let gd = fit_surrogate(&toy, &refs, &perturbations, &LimeConfig { solver: Solver::GradientDescent, ..base })
            .map_err(|e| e.to_string())?;
        for y in 0..2 {
            worst_loss = worst_loss.max(closed.fits[y].loss);
            for (a, b) in closed.weights(y).iter().zip(gd.weights(y)) {
                worst_gap = worst_gap.max((a - b).abs());
            }
            check(
                ranking(&explain_lime(&closed, y, n)) == ranking(&explain_lime(&gd, y, n)),
                format!("model {m} label {y}: keyword rankings differ"),
            )?;
        }
    }
    check(worst_loss < 1e-8, format!("closed-form residual loss {worst_loss:.3e}"))?;
    check(worst_gap < 1e-3, format!("solver weight gap {worst_gap:.3e}"))?;
    Ok(format!(
        "50 toy models, closed-form loss <= {worst_loss:.1e}, GD weight gap <= {worst_gap:.1e}, rankings identical"
    ))
}

fn coherence_goldens() -> Outcome {
    let lex = lexicon("truly\t0.625\t0\na\t0\t0\nbad\t0\t0.75\n", 0.1);
    let kw = |tokens: &[&str]| -> Vec<Keyword> {
        tokens
            .iter()
            .enumerate()
            .map(|(i, t)| Keyword {
                token: t.to_string(),
                position: i,
                weight: 1.0,
            })
            .collect()
    };
    let truly = score_explanation(&kw(&["truly"]), &lex);
    check(
        truly.positive_sum == 0.625 && truly.negative_sum == 0.0 && truly.indicated == Polarity::Pos,
        format!("`truly` scored {truly:?}"),
    )?;
    let a = score_explanation(&kw(&["a"]), &lex);
    check(a.indicated == Polarity::None, format!("`a` scored {a:?}"))?;
    let both = score_explanation(&kw(&["truly", "a"]), &lex);
    check(both.positive_sum == 0.625 && both.indicated == Polarity::Pos, format!("`truly a` scored {both:?}"))?;

    use Polarity::{Neg, None as Non, Pos};
    // (indicated, prediction, gold, coherent)
    let table = [
        (Pos, Pos, Pos, true),
        (Pos, Pos, Neg, true),
        (Pos, Neg, Pos, false),
        (Pos, Neg, Neg, false),
        (Pos, Non, Pos, false),
        (Pos, Non, Neg, false),
        (Neg, Pos, Pos, false),
        (Neg, Pos, Neg, false),
        (Neg, Neg, Pos, true),
        (Neg, Neg, Neg, true),
        (Neg, Non, Pos, false),
        (Neg, Non, Neg, false),
        (Non, Pos, Pos, false),
        (Non, Pos, Neg, true),
        (Non, Neg, Pos, true),
        (Non, Neg, Neg, false),
        (Non, Non, Pos, true),
        (Non, Non, Neg, true),
    ];
    for (i, p, g, want) in table {
        check(is_coherent(i, p, g) == want, format!("is_coherent({i:?}, {p:?}, {g:?}) != {want}"))?;
    }
    Ok("truly -> POS (0.625), a -> NONE, 18/18 truth-table rows".into())
}

fn ek_golden() -> Outcome {
    let lex = lexicon("like\t0.5\t0\nmovie\t0\t0\n", 0.1);
    let ex = Example::original("x", "I like this movie", Label::new("pos")).map_err(|e| e.to_string())?;
    let rec = augment_ek(&ex, &lex).ok_or("no augmentation produced")?;
    check(rec.example.text == "I this movie", format!("got `{}`", rec.example.text))?;

    let corpus = synth_corpus(&SynthConfig::default(), 1).map_err(|e| e.to_string())?;
    let lex = synth_lexicon(&corpus.lexicon_tsv(), 0.1).map_err(|e| e.to_string())?;
    let records = augment_ek_dataset(&corpus.dataset, &lex);
    for r in &records {
        check(
            !r.example.tokens.iter().any(|t| lex.is_sentiment_word(t)),
            format!("{} still holds a sentiment word", r.example.id),
        )?;
    }
    let sources = corpus.dataset.train.len() + corpus.dataset.dev.len();
    check(records.len() == sources, format!("{} records for {sources} sources", records.len()))?;
    Ok(format!("`I like this movie` -> `I this movie`; {} synthetic augmentations hold no sentiment word", records.len()))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    let mut lines = Vec::new();
    for seed in 1..=3u64 {
        let cfg = ReproduceConfig::desk(Architecture::Cnn, seed);
        let out = reproduce(&cfg, &dir.path().join(format!("seed{seed}"))).map_err(|e| e.to_string())?;
        let row = |name: &str| out.rows.iter().find(|r| r.model == name).cloned().unwrap();
        let (base, ek, adv) = (row("base"), row("ek"), row("adv"));
        check(base.accuracy >= 0.95, format!("seed {seed}: base accuracy {:.4}", base.accuracy))?;
        for r in [&ek, &adv] {
            check(
                (r.accuracy - base.accuracy).abs() <= 0.02 + 1e-9,
                format!("seed {seed}: {} accuracy {:.4} vs base {:.4}", r.model, r.accuracy, base.accuracy),
            )?;
        }
        for (key, r) in [("ek", &ek), ("adv", &adv)] {
            if r.coherence_lime >= base.coherence_lime {
                *wins.entry(if key == "ek" { "ek-lime" } else { "adv-lime" }).or_default() += 1;
            }
            if r.coherence_cossim >= base.coherence_cossim {
                *wins.entry(if key == "ek" { "ek-cossim" } else { "adv-cossim" }).or_default() += 1;
            }
        }
        lines.push(format!(
            "seed {seed}: acc {:.3}/{:.3}/{:.3}, LIME {:.3}/{:.3}/{:.3}, CosSim {:.3}/{:.3}/{:.3}",
            base.accuracy,
            ek.accuracy,
            adv.accuracy,
            base.coherence_lime,
            ek.coherence_lime,
            adv.coherence_lime,
            base.coherence_cossim,
            ek.coherence_cossim,
            adv.coherence_cossim
        ));
    }
    for key in ["ek-lime", "ek-cossim", "adv-lime", "adv-cossim"] {
        let w = wins.get(key).copied().unwrap_or(0);
        check(w >= 2, format!("{key}: coherence >= base on {w} of 3 seeds; {}", lines.join("; ")))?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 600.0, format!("took {secs:.0}s"))?;
    Ok(format!(
        "{} (base/ek/adv); wins {:?}; {secs:.0}s",
        lines.join("; "),
        wins
    ))
}

fn attack_contract() -> Outcome {
    let cfg = ReproduceConfig::desk(Architecture::Cnn, 1);
    let corpus = synth_corpus(&cfg.synth, cfg.synth.seed).map_err(|e| e.to_string())?;
    let ds = &corpus.dataset;
    let vocab = build_vocab(ds, 1).map_err(|e| e.to_string())?;
    let table = corpus.embeddings(cfg.model.embedding_dim);
    let model = Model::new(cfg.model.clone(), ds.labels.clone(), vocab.clone(), Some(&table), cfg.train.seed)
        .map_err(|e| e.to_string())?;
    let (model, _) = train(model, ds, &cfg.train).map_err(|e| e.to_string())?;
    let lm = ngram_lm_fit(ds).map_err(|e| e.to_string())?;
    let attack = AttackConfig::default();
    let neighbors = NeighborTable::build(&table, vocab.content_words().iter().map(String::as_str), attack.neighbors);

    let (mut attempted, mut succeeded) = (0, 0);
    for ex in &ds.test {
        let result = genetic_attack(&model, ex, &neighbors, &lm, &attack);
        if result.status == AttackStatus::SkippedMisclassified {
            continue;
        }
        attempted += 1;
        if result.status != AttackStatus::Success {
            continue;
        }
        succeeded += 1;
        let c = result.candidate.as_ref().ok_or("success without candidate")?;
        let words: Vec<&str> = c.tokens.iter().map(String::as_str).collect();
        check(model.predict(&words, true) != ex.label, format!("{}: prediction not flipped", ex.id))?;
        check(
            c.substitutions.len() <= attack.max_changes(ex.tokens.len()),
            format!("{}: {} substitutions over budget", ex.id, c.substitutions.len()),
        )?;
        let changed = ex
            .tokens
            .iter()
            .zip(&c.tokens)
            .filter(|(a, b)| a.norm != **b)
            .count();
        check(changed <= c.substitutions.len(), format!("{}: unrecorded changes", ex.id))?;
    }
    let rate = succeeded as f64 / attempted.max(1) as f64;
    check(rate >= 0.30, format!("success rate {:.1}% ({succeeded}/{attempted})", 100.0 * rate))?;
    Ok(format!(
        "{succeeded}/{attempted} correctly classified test sentences flipped ({:.1}%), all within budget",
        100.0 * rate
    ))
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                if rel != "reproduce.config.resolved" {
                    out.insert(rel, std::fs::read(&path).unwrap());
                }
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for (i, jobs) in [(0, "1"), (1, "4")] {
        let out = dir.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_sentiaug"))
            .args(["reproduce", "--seed", "7", "--jobs", jobs, "--out"])
            .arg(&out)
            .env("RUST_LOG", "error")
            .output()
            .map_err(|e| e.to_string())?;
        check(status.status.success(), String::from_utf8_lossy(&status.stderr).into_owned())?;
        runs.push(files(&out));
    }
    let (a, b) = (&runs[0], &runs[1]);
    check(a.keys().eq(b.keys()), "runs wrote different file sets")?;
    for (name, bytes) in a {
        check(&b[name] == bytes, format!("{name} differs"))?;
    }
    let kinds = ["models/base.ckpt", "explain/adv.lime.jsonl", "attack/report.tsv", "summary.tsv"];
    for k in kinds {
        check(a.contains_key(k), format!("{k} missing"))?;
    }
    Ok(format!("{} files bit-identical across two runs (1 and 4 workers)", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("gradient correctness", gradient_correctness),
        ("LIME oracle equivalence", lime_oracle),
        ("coherence goldens", coherence_goldens),
        ("DA-EK golden", ek_golden),
        ("end-to-end directional reproduction", end_to_end),
        ("attack contract", attack_contract),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
