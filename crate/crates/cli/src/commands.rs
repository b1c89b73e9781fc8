use std::collections::HashMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use sentiaug::attack::{attack_examples, ngram_lm_fit, render_report, AttackConfig, AttackStatus, NeighborTable, ReportLine};
use sentiaug::augment::{augment_adv, augment_ek_dataset, extend_dataset, AugmentMethod};
use sentiaug::corpus::{
    build_vocab, load_corpus, synth_corpus, write_corpus, CorpusFormat, Dataset, LabelSet, Split, SynthConfig, Vocabulary,
};
use sentiaug::embeddings::{load_embeddings, parse_text, EmbeddingTable};
use sentiaug::evaluate::{
    coherence_of, export_human_eval, ingest_human_eval, parse_assignment, parse_sheet, render_assignment, render_sheet,
    render_summary, HumanEvalPair, PolarityMap, SummaryRow,
};
use sentiaug::explain::{explain_examples, parse_explanations, render_explanations, ExplainConfig, LimeConfig, Method};
use sentiaug::lexicon::{aggregate, parse_any, AggregationPolicy, SentimentLexicon};
use sentiaug::model::{load_checkpoint, save_checkpoint, test_accuracy, train as fit, Architecture, Model, ModelConfig, TrainConfig};
use sentiaug::pipeline::{reproduce as run_pipeline, AttackStats, ReproduceConfig};

use crate::settings::Settings;
use crate::{AttackArgs, AugmentArgs, EvaluateArgs, ExplainArgs, HumanEvalArgs, PrepareArgs, ReproduceArgs, TrainArgs};

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {path}"))
}

fn parse_split(name: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| anyhow!("unknown split `{name}` (expected train, dev or test)"))
}

fn load_data(s: &mut Settings) -> Result<Dataset> {
    let prefix = s.require("data")?;
    let labels = s.labels()?;
    let ds = load_corpus(Path::new(&prefix), CorpusFormat::Tsv, &labels, s.seed)
        .with_context(|| format!("loading corpus {prefix}"))?;
    info!("{}", ds.summary());
    Ok(ds)
}

fn load_vocab(s: &Settings) -> Result<Vocabulary> {
    let path = s.require("vocab")?;
    Ok(Vocabulary::parse(&read(&path)?)?)
}

fn load_model(s: &Settings, vocab: Vocabulary) -> Result<Model> {
    let path = s.require("checkpoint")?;
    load_checkpoint(Path::new(&path), vocab).with_context(|| format!("loading checkpoint {path}"))
}

fn load_table(path: &str, seed: u64) -> Result<EmbeddingTable> {
    let f = fs::File::open(path).with_context(|| format!("opening {path}"))?;
    Ok(parse_text(BufReader::new(f), seed)?)
}

fn load_lexicon(path: &str, tau: f64) -> Result<SentimentLexicon> {
    let entries = parse_any(&read(path)?)?;
    Ok(aggregate(&entries, AggregationPolicy::MeanAllSenses)?.with_threshold(tau))
}

fn attack_config(s: &mut Settings) -> Result<AttackConfig> {
    let cfg = AttackConfig::from_key_values(&s.seeded("attack"))?;
    s.record("attack", &cfg.to_key_values());
    Ok(cfg)
}

fn run_attack(
    model: &Model,
    table: &EmbeddingTable,
    lm_data: &Dataset,
    examples: &[sentiaug::corpus::Example],
    cfg: &AttackConfig,
    report: &Path,
) -> Result<Vec<(String, sentiaug::attack::AttackResult)>> {
    let lm = ngram_lm_fit(lm_data)?;
    let neighbors = NeighborTable::build(
        table,
        model.vocab().content_words().iter().map(String::as_str),
        cfg.neighbors,
    );
    let results = attack_examples(model, examples, &neighbors, &lm, cfg);
    let lines: Vec<ReportLine> = results.iter().map(|(id, r)| ReportLine::from_result(id, r)).collect();
    write(report, render_report(&lines))?;
    let stats = AttackStats::from_lines(&lines);
    println!(
        "attack: {} of {} correctly classified examples flipped ({:.1}%), {} skipped; report {}",
        stats.succeeded,
        stats.attempted,
        100.0 * stats.success_rate(),
        stats.skipped,
        report.display()
    );
    Ok(results)
}

pub fn prepare(mut s: Settings, a: PrepareArgs) -> Result<()> {
    s.command("prepare");
    s.flag("corpus", &a.corpus);
    s.flag("labels", &a.labels);
    s.flag("min_freq", &a.min_freq);
    let min_freq = s.resolve("min_freq", 1usize)?;
    let data = s.out_path("data");
    let ds = match s.get("corpus") {
        Some(prefix) => {
            let labels = s.labels()?;
            load_corpus(Path::new(&prefix), CorpusFormat::Tsv, &labels, s.seed)
                .with_context(|| format!("loading corpus {prefix}"))?
        }
        None => {
            let cfg = SynthConfig::from_key_values(&s.seeded("synth"))?;
            s.record("synth", &cfg.to_key_values());
            let dim = s.resolve("embedding_dim", ModelConfig::desk(Architecture::Cnn).embedding_dim)?;
            let corpus = synth_corpus(&cfg, cfg.seed)?;
            write(&data.join("lexicon.tsv"), corpus.lexicon_tsv())?;
            let mut buf = Vec::new();
            corpus.embeddings(dim).write_text(&mut buf)?;
            write(&data.join("embeddings.txt"), buf)?;
            corpus.dataset
        }
    };
    write_corpus(&ds, &data.join("corpus"))?;
    let vocab = build_vocab(&ds, min_freq)?;
    write(&data.join("vocab.txt"), vocab.render())?;
    println!("{}; vocabulary {} words; written to {}", ds.summary(), vocab.len(), data.display());
    s.snapshot()?;
    Ok(())
}

pub fn augment(mut s: Settings, a: AugmentArgs) -> Result<()> {
    s.command("augment");
    s.flag("data", &a.data);
    s.flag("labels", &a.labels);
    s.flag("method", &a.method);
    s.flag("lexicon", &a.lexicon);
    s.flag("tau", &a.tau);
    s.flag("checkpoint", &a.checkpoint);
    s.flag("vocab", &a.vocab);
    s.flag("embeddings", &a.embeddings);
    let method: AugmentMethod = s
        .require("method")?
        .parse()
        .map_err(|e: String| anyhow!(e))?;
    s.tag(&method.name().to_lowercase());
    let ds = load_data(&mut s)?;
    let records = match method {
        AugmentMethod::Ek => {
            let tau = s.resolve("tau", 0.1f64)?;
            let lexicon = load_lexicon(&s.require("lexicon")?, tau)?;
            augment_ek_dataset(&ds, &lexicon)
        }
        AugmentMethod::Adv => {
            if s.get("checkpoint").is_none() {
                bail!("DA-Adv needs a trained victim model: pass --checkpoint");
            }
            let cfg = attack_config(&mut s)?;
            let model = load_model(&s, load_vocab(&s)?)?;
            let table = load_table(&s.require("embeddings")?, s.seed)?;
            let sources: Vec<_> = ds.train.iter().chain(&ds.dev).cloned().collect();
            let report = s.out_path("attack/adv.report.tsv");
            let results = run_attack(&model, &table, &ds, &sources, &cfg, &report)?;
            let mut records = Vec::new();
            for (example, (_, r)) in sources.iter().zip(&results) {
                if let (AttackStatus::Success, Some(c)) = (r.status, &r.candidate) {
                    records.extend(augment_adv(example, &c.substitutions)?);
                }
            }
            records
        }
    };
    let extended = extend_dataset(&ds, &records)?;
    let prefix = s.out_path("data").join(method.name().to_lowercase());
    write_corpus(&extended, &prefix)?;
    println!(
        "{}: {} augmented examples; {}; written to {}.*",
        method.name(),
        records.len(),
        extended.summary(),
        prefix.display()
    );
    s.snapshot()?;
    Ok(())
}

pub fn train(mut s: Settings, a: TrainArgs) -> Result<()> {
    s.command("train");
    s.flag("data", &a.data);
    s.flag("labels", &a.labels);
    s.flag("name", &a.name);
    s.flag("vocab", &a.vocab);
    s.flag("embeddings", &a.embeddings);
    s.flag("epochs", &a.epochs);
    s.flag("learning_rate", &a.learning_rate);
    if let Some(arch) = &a.arch {
        s.kv.set("model.arch", arch);
    }
    let name = s.resolve("name", "base".to_string())?;
    s.tag(&name);
    let ds = load_data(&mut s)?;
    let model_kv = s.kv.section("model");
    let arch: Architecture = model_kv.parse_or("arch", Architecture::Cnn)?;
    let model_cfg = ModelConfig::from_key_values(&model_kv, &ModelConfig::desk(arch))?;
    s.record("model", &model_cfg.to_key_values());
    let desk = ReproduceConfig::desk(arch, s.seed).train;
    let train_cfg = TrainConfig::from_key_values(&s.seeded("train"), &desk)?;
    s.record("train", &train_cfg.to_key_values());

    let vocab = match s.get("vocab") {
        Some(_) => load_vocab(&s)?,
        None => build_vocab(&ds, 1)?,
    };
    let embeddings = match s.get("embeddings") {
        Some(p) => {
            let f = fs::File::open(&p).with_context(|| format!("opening {p}"))?;
            Some(load_embeddings(BufReader::new(f), &vocab, s.seed)?)
        }
        None => None,
    };
    let models = s.out_path("models");
    write(&models.join(format!("{name}.vocab.txt")), vocab.render())?;
    let model = Model::new(model_cfg, ds.labels.clone(), vocab, embeddings.as_ref(), train_cfg.seed)?;
    let (model, history) = fit(model, &ds, &train_cfg)?;
    let ckpt = models.join(format!("{name}.ckpt"));
    save_checkpoint(&model, &ckpt)?;
    write(&models.join(format!("{name}.history.json")), serde_json::to_string_pretty(&history)?)?;
    let best = &history.epochs[history.best_epoch - 1];
    println!(
        "{name}: best epoch {} (dev accuracy {:.4}), test accuracy {:.4}; checkpoint {}",
        history.best_epoch,
        best.dev_accuracy,
        test_accuracy(&model, &ds.test),
        ckpt.display()
    );
    s.snapshot()?;
    Ok(())
}

pub fn attack(mut s: Settings, a: AttackArgs) -> Result<()> {
    s.command("attack");
    s.flag("data", &a.data);
    s.flag("labels", &a.labels);
    s.flag("split", &a.split);
    s.flag("checkpoint", &a.checkpoint);
    s.flag("vocab", &a.vocab);
    s.flag("embeddings", &a.embeddings);
    let split_name = s.resolve("split", "test".to_string())?;
    let split = parse_split(&split_name)?;
    s.tag(&split_name);
    let cfg = attack_config(&mut s)?;
    let ds = load_data(&mut s)?;
    let model = load_model(&s, load_vocab(&s)?)?;
    let table = load_table(&s.require("embeddings")?, s.seed)?;
    let report = s.out_path("attack/report.tsv");
    run_attack(&model, &table, &ds, ds.split(split), &cfg, &report)?;
    s.snapshot()?;
    Ok(())
}

pub fn explain(mut s: Settings, a: ExplainArgs) -> Result<()> {
    s.command("explain");
    s.flag("data", &a.data);
    s.flag("labels", &a.labels);
    s.flag("split", &a.split);
    s.flag("checkpoint", &a.checkpoint);
    s.flag("vocab", &a.vocab);
    s.flag("method", &a.method);
    s.flag("keywords", &a.keywords);
    s.flag("limit", &a.limit);
    let split = parse_split(&s.resolve("split", "test".to_string())?)?;
    let method: Method = s
        .resolve("method", "lime".to_string())?
        .parse()
        .map_err(|e: String| anyhow!(e))?;
    let keywords = s.resolve("keywords", 3usize)?;
    if keywords == 0 {
        bail!("keywords (t) must be at least 1");
    }
    let limit = s.resolve("limit", 0usize)?;
    let lime = LimeConfig::from_key_values(&s.seeded("lime"))?;
    s.record("lime", &lime.to_key_values());
    let ds = load_data(&mut s)?;
    let model = load_model(&s, load_vocab(&s)?)?;
    let examples = ds.split(split);
    let examples = if limit > 0 { &examples[..limit.min(examples.len())] } else { examples };
    let cfg = ExplainConfig { method, keywords, lime };
    let explanations = explain_examples(&model, examples, &cfg)?;
    let checkpoint = s.require("checkpoint")?;
    let stem = Path::new(&checkpoint)
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let tag = format!("{stem}.{}", method.name().to_lowercase());
    s.tag(&tag);
    let path = s.out_path("explain").join(format!("{tag}.jsonl"));
    write(&path, render_explanations(&explanations)?)?;
    println!("{} {} explanations written to {}", explanations.len(), method, path.display());
    s.snapshot()?;
    Ok(())
}

pub fn evaluate(mut s: Settings, a: EvaluateArgs) -> Result<()> {
    s.command("evaluate");
    s.flag("explanations", &a.explanations);
    s.flag("lexicon", &a.lexicon);
    s.flag("tau", &a.tau);
    s.flag("models", &a.models);
    s.flag("vocab", &a.vocab);
    s.flag("data", &a.data);
    s.flag("labels", &a.labels);
    let tau = s.resolve("tau", 0.1f64)?;
    let lexicon = load_lexicon(&s.require("lexicon")?, tau)?;
    let labels = LabelSet::new(&s.labels()?)?;
    let polarity = PolarityMap::from_label_names(&labels);
    let files: Vec<String> = s
        .require("explanations")?
        .split(',')
        .map(|f| f.trim().to_string())
        .filter(|f| !f.is_empty())
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, SummaryRow> = HashMap::new();
    for file in &files {
        let explanations = parse_explanations(&read(file)?).with_context(|| format!("parsing {file}"))?;
        let first = explanations
            .first()
            .ok_or_else(|| anyhow!("{file} contains no explanations"))?;
        let file_name = Path::new(file)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let model = file_name.split('.').next().unwrap_or_default().to_string();
        let report = coherence_of(&explanations, &lexicon, &polarity)?;
        let stem = file_name.trim_end_matches(".jsonl");
        write(
            &s.out_path("eval").join(format!("{stem}.coherence.jsonl")),
            report.render_records()?,
        )?;
        println!("{file}: coherence {:.4} ({} of {})", report.score, report.coherent_count, report.total);
        let row = rows.entry(model.clone()).or_insert_with(|| {
            order.push(model.clone());
            SummaryRow {
                model: model.clone(),
                accuracy: f64::NAN,
                coherence_lime: f64::NAN,
                coherence_cossim: f64::NAN,
            }
        });
        match first.method {
            Method::Lime => row.coherence_lime = report.score,
            Method::CosSim => row.coherence_cossim = report.score,
        }
        if row.accuracy.is_nan() {
            let correct = explanations.iter().filter(|e| e.gold.as_ref() == Some(&e.prediction)).count();
            row.accuracy = correct as f64 / explanations.len() as f64;
        }
    }

    if let Some(dir) = s.get("models") {
        let ds = load_data(&mut s)?;
        let vocab = load_vocab(&s)?;
        for name in &order {
            let path = PathBuf::from(&dir).join(format!("{name}.ckpt"));
            let model = load_checkpoint(&path, vocab.clone()).with_context(|| format!("loading {}", path.display()))?;
            rows.get_mut(name).expect("row exists").accuracy = test_accuracy(&model, &ds.test);
        }
    }
    let rows: Vec<SummaryRow> = order.iter().map(|n| rows[n].clone()).collect();
    let table = render_summary(&rows);
    write(&s.out_path("summary.tsv"), &table)?;
    print!("{table}");
    s.snapshot()?;
    Ok(())
}

pub fn human_eval(mut s: Settings, a: HumanEvalArgs) -> Result<()> {
    s.command("human_eval");
    s.flag("mode", &a.mode);
    s.flag("first", &a.first);
    s.flag("second", &a.second);
    s.flag("names", &a.names);
    s.flag("data", &a.data);
    s.flag("labels", &a.labels);
    s.flag("sheet", &a.sheet);
    s.flag("assignment", &a.assignment);
    let dir = s.out_path("human");
    let mode = s.resolve("mode", "export".to_string())?;
    s.tag(&mode);
    match mode.as_str() {
        "export" => {
            let first = parse_explanations(&read(&s.require("first")?)?)?;
            let second = parse_explanations(&read(&s.require("second")?)?)?;
            let names = s.require("names")?;
            let names: Vec<&str> = names.split(',').map(str::trim).collect();
            let [n1, n2] = names[..] else {
                bail!("--names needs exactly two comma-separated model names");
            };
            let ds = load_data(&mut s)?;
            let by_id: HashMap<&str, _> = second.iter().map(|e| (e.id.as_str(), e)).collect();
            let pairs = first
                .iter()
                .map(|e| {
                    let other = by_id
                        .get(e.id.as_str())
                        .ok_or_else(|| anyhow!("`{}` is missing from the second log", e.id))?;
                    let (_, example) = ds
                        .find(&e.id)
                        .ok_or_else(|| anyhow!("`{}` is not in the dataset", e.id))?;
                    Ok(HumanEvalPair {
                        text: example.text.clone(),
                        first: e,
                        second: other,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let sheet = export_human_eval(&pairs, [n1, n2], s.seed)?;
            write(&dir.join("sheet.csv"), render_sheet(&sheet.rows)?)?;
            write(&dir.join("assignment.csv"), render_assignment(&sheet)?)?;
            println!("{} pairs exported to {}", sheet.rows.len(), dir.display());
        }
        "ingest" => {
            let rows = parse_sheet(&read(&s.require("sheet")?)?)?;
            let assignment = parse_assignment(&read(&s.require("assignment")?)?)?;
            let scores = ingest_human_eval(&rows, &assignment)?;
            write(&dir.join("scores.json"), serde_json::to_string_pretty(&scores)?)?;
            println!("model\tscore\tpreferred\tpairs");
            for sc in &scores {
                println!("{}\t{:.4}\t{:.4}\t{}", sc.model, sc.score, sc.preference_rate, sc.pairs);
            }
        }
        other => bail!("unknown human-eval mode `{other}` (expected export or ingest)"),
    }
    s.snapshot()?;
    Ok(())
}

pub fn reproduce(mut s: Settings, a: ReproduceArgs) -> Result<()> {
    s.command("reproduce");
    if let Some(arch) = &a.arch {
        s.kv.set("model.arch", arch);
    }
    if let Some(n) = a.explain_limit {
        s.kv.set("explain_limit", n);
    }
    let cfg = ReproduceConfig::from_key_values(&s.kv)?;
    s.kv.merge(&cfg.to_key_values());
    s.snapshot()?;
    let outcome = run_pipeline(&cfg, &s.out)?;
    print!("{}", render_summary(&outcome.rows));
    println!(
        "EK augmented {}, Adv augmented {}; attack success {:.1}% ({} of {})",
        outcome.ek_records,
        outcome.adv_records,
        100.0 * outcome.attack.success_rate(),
        outcome.attack.succeeded,
        outcome.attack.attempted
    );
    Ok(())
}
