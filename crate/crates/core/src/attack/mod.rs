//! Genetic word-substitution attack with a pluggable language-model filter.

mod lm;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lm::{ngram_lm_fit, BigramLm, LmScorer};

use crate::config::KeyValues;
use crate::corpus::{Example, Origin};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math::derived_rng;
use crate::model::Classifier;

/// Position in the original sentence to `(old, new)` word.
pub type Substitutions = BTreeMap<usize, (String, String)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub max_generations: usize,
    pub population_size: usize,
    pub neighbors: usize,
    pub kept_candidates: usize,
    /// Largest fraction of the sentence that may be substituted.
    pub change_budget: f64,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            max_generations: 20,
            population_size: 20,
            neighbors: 8,
            kept_candidates: 4,
            change_budget: 0.2,
            seed: 1,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.change_budget) {
            return Err(Error::Config("change budget must lie in [0, 1]".into()));
        }
        if self.kept_candidates == 0 || self.kept_candidates > self.neighbors {
            return Err(Error::Config("kept candidates must be in 1..=neighbors".into()));
        }
        if self.max_generations == 0 || self.population_size == 0 {
            return Err(Error::Config("generations and population must be positive".into()));
        }
        Ok(())
    }

    /// Overrides defaults from unprefixed keys (`max_generations`, ...).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = AttackConfig::default();
        let cfg = AttackConfig {
            max_generations: kv.parse_or("max_generations", d.max_generations)?,
            population_size: kv.parse_or("population_size", d.population_size)?,
            neighbors: kv.parse_or("neighbors", d.neighbors)?,
            kept_candidates: kv.parse_or("kept_candidates", d.kept_candidates)?,
            change_budget: kv.parse_or("change_budget", d.change_budget)?,
            seed: kv.parse_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("max_generations", self.max_generations);
        kv.set("population_size", self.population_size);
        kv.set("neighbors", self.neighbors);
        kv.set("kept_candidates", self.kept_candidates);
        kv.set("change_budget", self.change_budget);
        kv.set("seed", self.seed);
        kv
    }

    /// Most substitutions allowed in a sentence of `len` tokens.
    pub fn max_changes(&self, len: usize) -> usize {
        (self.change_budget * len as f64 + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub substitutions: Substitutions,
    /// Probability mass the model puts on labels other than its original prediction.
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackStatus {
    Success,
    FailedBudget,
    SkippedMisclassified,
}

impl AttackStatus {
    pub fn name(self) -> &'static str {
        match self {
            AttackStatus::Success => "SUCCESS",
            AttackStatus::FailedBudget => "FAILED_BUDGET",
            AttackStatus::SkippedMisclassified => "SKIPPED_MISCLASSIFIED",
        }
    }
}

impl fmt::Display for AttackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AttackStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "SUCCESS" => Ok(AttackStatus::Success),
            "FAILED_BUDGET" => Ok(AttackStatus::FailedBudget),
            "SKIPPED_MISCLASSIFIED" => Ok(AttackStatus::SkippedMisclassified),
            _ => Err(format!("unknown attack status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub status: AttackStatus,
    /// The adversarial candidate, on success.
    pub candidate: Option<Candidate>,
    pub generations: usize,
    /// Best population fitness at each evaluated generation.
    pub best_fitness: Vec<f64>,
}

/// Precomputed nearest neighbors for the words an attack may touch.
#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    map: HashMap<String, Vec<String>>,
}

impl NeighborTable {
    /// The `k` nearest table words for every word of `words` present in `table`.
    pub fn build<'a, I>(table: &EmbeddingTable, words: I, k: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let unique: BTreeSet<&str> = words.into_iter().filter(|w| table.contains(w)).collect();
        let unique: Vec<&str> = unique.into_iter().collect();
        let map = unique
            .par_iter()
            .map(|w| {
                let near = table
                    .nearest_neighbors(w, k)
                    .expect("word present in table")
                    .into_iter()
                    .map(|(n, _)| n)
                    .collect();
                (w.to_string(), near)
            })
            .collect();
        NeighborTable { map }
    }

    pub fn from_map(map: HashMap<String, Vec<String>>) -> Self {
        NeighborTable { map }
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.map.get(word).map(Vec::as_slice).filter(|n| !n.is_empty())
    }
}

fn fitness<C: Classifier>(model: &C, tokens: &[String], original: usize) -> f64 {
    let words: Vec<&str> = tokens.iter().map(String::as_str).collect();
    1.0 - model.base_probabilities(&words)[original]
}

fn prediction<C: Classifier>(model: &C, tokens: &[String]) -> usize {
    let words: Vec<&str> = tokens.iter().map(String::as_str).collect();
    crate::math::argmax(&model.scores(&words)[..model.labels().base().len()])
}

/// Shared state of one attack on one sentence.
pub struct AttackContext<'a, C: Classifier> {
    pub model: &'a C,
    pub original: &'a [String],
    /// Base-label index of the model's prediction on the original.
    pub original_prediction: usize,
    pub neighbors: &'a NeighborTable,
    pub lm: &'a dyn LmScorer,
    pub config: &'a AttackConfig,
}

impl<C: Classifier> AttackContext<'_, C> {
    fn max_changes(&self) -> usize {
        self.config.max_changes(self.original.len())
    }

    fn fitness(&self, tokens: &[String]) -> f64 {
        fitness(self.model, tokens, self.original_prediction)
    }

    fn with_substitutions(&self, substitutions: Substitutions) -> Candidate {
        let mut tokens = self.original.to_vec();
        for (&p, (_, new)) in &substitutions {
            tokens[p] = new.clone();
        }
        Candidate {
            fitness: self.fitness(&tokens),
            tokens,
            substitutions,
        }
    }

    /// One mutation step; see [`perturb`].
    pub fn perturb(&self, candidate: &Candidate, rng: &mut ChaCha8Rng) -> Candidate {
        if candidate.substitutions.len() >= self.max_changes() {
            return candidate.clone();
        }
        let eligible: Vec<usize> = (0..self.original.len())
            .filter(|p| !candidate.substitutions.contains_key(p))
            .filter(|&p| self.neighbors.get(&self.original[p]).is_some())
            .collect();
        let Some(&position) = eligible.choose(rng) else {
            return candidate.clone();
        };
        let old = &self.original[position];
        let near = self.neighbors.get(old).expect("eligible");
        let near = &near[..near.len().min(self.config.neighbors)];
        let context: Vec<&str> = candidate.tokens.iter().map(String::as_str).collect();
        let mut ranked: Vec<(f64, &String)> = near
            .iter()
            .map(|w| (self.lm.score(&context, position, w), w))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        ranked.truncate(self.config.kept_candidates);

        let mut best: Option<(f64, &String)> = None;
        for (_, w) in ranked {
            let mut tokens = candidate.tokens.clone();
            tokens[position] = w.clone();
            let f = self.fitness(&tokens);
            if best.map_or(true, |(bf, _)| f > bf) {
                best = Some((f, w));
            }
        }
        match best {
            Some((f, w)) if f > candidate.fitness => {
                let mut next = candidate.clone();
                next.tokens[position] = w.clone();
                next.substitutions.insert(position, (old.clone(), w.clone()));
                next.fitness = f;
                next
            }
            _ => candidate.clone(),
        }
    }

    fn crossover(&self, a: &Candidate, b: &Candidate, rng: &mut ChaCha8Rng) -> Candidate {
        let cut = rng.gen_range(0..=self.original.len());
        let mut subs: Substitutions = a.substitutions.range(..cut).map(|(k, v)| (*k, v.clone())).collect();
        subs.extend(b.substitutions.range(cut..).map(|(k, v)| (*k, v.clone())));
        while subs.len() > self.max_changes() {
            let keys: Vec<usize> = subs.keys().copied().collect();
            subs.remove(keys.choose(rng).expect("non-empty"));
        }
        self.with_substitutions(subs)
    }

    fn flips(&self, candidate: &Candidate) -> bool {
        prediction(self.model, &candidate.tokens) != self.original_prediction
    }
}

/// Samples an eligible position (unsubstituted, present in the neighbor table,
/// budget not exhausted), ranks the original word's neighbors by the language
/// model in context, and applies the kept candidate with the highest fitness
/// if it beats the current one. Otherwise returns the candidate unchanged.
pub fn perturb<C: Classifier>(context: &AttackContext<'_, C>, candidate: &Candidate, rng: &mut ChaCha8Rng) -> Candidate {
    context.perturb(candidate, rng)
}

fn stream(config: &AttackConfig, id: &str, generation: usize, member: usize) -> ChaCha8Rng {
    derived_rng(
        config.seed,
        &format!("attack/{id}"),
        ((generation as u64) << 32) | member as u64,
    )
}

/// Evolves substitution maps until the prediction flips or generations run out.
/// Examples the model already gets wrong are skipped.
pub fn genetic_attack<C: Classifier>(
    model: &C,
    example: &Example,
    neighbors: &NeighborTable,
    lm: &dyn LmScorer,
    config: &AttackConfig,
) -> AttackResult {
    let original: Vec<String> = example.tokens.iter().map(|t| t.norm.clone()).collect();
    let words: Vec<&str> = original.iter().map(String::as_str).collect();
    if model.predict(&words, true) != example.label {
        return AttackResult {
            status: AttackStatus::SkippedMisclassified,
            candidate: None,
            generations: 0,
            best_fitness: Vec::new(),
        };
    }
    let ctx = AttackContext {
        model,
        original: &original,
        original_prediction: prediction(model, &original),
        neighbors,
        lm,
        config,
    };
    let failed = |generations, best_fitness| AttackResult {
        status: AttackStatus::FailedBudget,
        candidate: None,
        generations,
        best_fitness,
    };
    if ctx.max_changes() == 0 {
        return failed(1, Vec::new());
    }
    let seed = ctx.with_substitutions(Substitutions::new());
    let mut population: Vec<Candidate> = (0..config.population_size)
        .into_par_iter()
        .map(|i| ctx.perturb(&seed, &mut stream(config, &example.id, 0, i)))
        .collect();

    let mut trace = Vec::new();
    for generation in 1..=config.max_generations {
        let best = population
            .iter()
            .enumerate()
            .fold(0, |b, (i, c)| if c.fitness > population[b].fitness { i } else { b });
        trace.push(population[best].fitness);
        if ctx.flips(&population[best]) {
            return AttackResult {
                status: AttackStatus::Success,
                candidate: Some(population.swap_remove(best)),
                generations: generation,
                best_fitness: trace,
            };
        }
        if generation == config.max_generations {
            break;
        }
        let weights: Vec<f64> = population.iter().map(|c| c.fitness + 1e-12).collect();
        let sampler = WeightedIndex::new(&weights).expect("positive weights");
        let elite = population[best].clone();
        let mut next = vec![elite];
        next.extend(
            (1..config.population_size)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(config, &example.id, generation, i);
                    let a = &population[sampler.sample(&mut rng)];
                    let b = &population[sampler.sample(&mut rng)];
                    let child = ctx.crossover(a, b, &mut rng);
                    ctx.perturb(&child, &mut rng)
                })
                .collect::<Vec<_>>(),
        );
        population = next;
    }
    failed(config.max_generations, trace)
}

/// Attacks every original example, in order.
pub fn attack_examples<C: Classifier>(
    model: &C,
    examples: &[Example],
    neighbors: &NeighborTable,
    lm: &dyn LmScorer,
    config: &AttackConfig,
) -> Vec<(String, AttackResult)> {
    examples
        .par_iter()
        .filter(|e| e.origin == Origin::Original)
        .map(|e| (e.id.clone(), genetic_attack(model, e, neighbors, lm, config)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub id: String,
    pub status: AttackStatus,
    pub generations: usize,
    pub substitutions: Substitutions,
}

impl ReportLine {
    pub fn from_result(id: &str, result: &AttackResult) -> Self {
        ReportLine {
            id: id.to_string(),
            status: result.status,
            generations: result.generations,
            substitutions: result
                .candidate
                .as_ref()
                .map(|c| c.substitutions.clone())
                .unwrap_or_default(),
        }
    }
}

/// `id<TAB>status<TAB>generations<TAB>pos:old>new,...`
pub fn render_report(lines: &[ReportLine]) -> String {
    let mut out = String::new();
    for l in lines {
        let subs: Vec<String> = l
            .substitutions
            .iter()
            .map(|(p, (o, n))| format!("{p}:{o}>{n}"))
            .collect();
        out.push_str(&format!("{}\t{}\t{}\t{}\n", l.id, l.status, l.generations, subs.join(",")));
    }
    out
}

pub fn parse_report(content: &str) -> Result<Vec<ReportLine>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse("attack report", i + 1, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 tab-separated fields"));
        }
        let status = fields[1].parse().map_err(|e: String| bad(&e))?;
        let generations = fields[2].parse().map_err(|_| bad("bad generation count"))?;
        let mut substitutions = Substitutions::new();
        for item in fields[3].split(',').filter(|s| !s.is_empty()) {
            let (pos, rest) = item.split_once(':').ok_or_else(|| bad("bad substitution"))?;
            let (old, new) = rest.split_once('>').ok_or_else(|| bad("bad substitution"))?;
            let pos = pos.parse().map_err(|_| bad("bad substitution position"))?;
            substitutions.insert(pos, (old.to_string(), new.to_string()));
        }
        out.push(ReportLine {
            id: fields[0].to_string(),
            status,
            generations,
            substitutions,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, LabelSet};

    /// Bag-of-words linear scorer: positive-label score is the summed word weights.
    struct Linear {
        labels: LabelSet,
        weights: HashMap<String, f64>,
    }

    impl Linear {
        fn new(pairs: &[(&str, f64)]) -> Self {
            Linear {
                labels: LabelSet::new(&["pos", "neg"]).unwrap(),
                weights: pairs.iter().map(|(w, v)| (w.to_string(), *v)).collect(),
            }
        }
    }

    impl Classifier for Linear {
        fn labels(&self) -> &LabelSet {
            &self.labels
        }

        fn represent(&self, words: &[&str]) -> Vec<f64> {
            vec![words.iter().map(|w| self.weights.get(*w).copied().unwrap_or(0.0)).sum()]
        }

        fn decide(&self, repr: &[f64]) -> Vec<f64> {
            vec![repr[0], -repr[0]]
        }
    }

    struct Flat;

    impl LmScorer for Flat {
        fn score(&self, _: &[&str], _: usize, _: &str) -> f64 {
            0.0
        }
    }

    fn neighbors(pairs: &[(&str, &[&str])]) -> NeighborTable {
        NeighborTable::from_map(
            pairs
                .iter()
                .map(|(w, n)| (w.to_string(), n.iter().map(|s| s.to_string()).collect()))
                .collect(),
        )
    }

    fn example(text: &str, label: &str) -> Example {
        Example::original("test-0", text, Label::new(label)).unwrap()
    }

    fn cfg() -> AttackConfig {
        AttackConfig {
            neighbors: 3,
            kept_candidates: 3,
            change_budget: 0.5,
            ..AttackConfig::default()
        }
    }

    #[test]
    fn perturb_picks_the_most_damaging_neighbor() {
        let model = Linear::new(&[("good", 2.0), ("fine", 1.0), ("poor", -1.0), ("okay", 0.5)]);
        let table = neighbors(&[("good", &["fine", "poor", "okay"])]);
        let original: Vec<String> = ["good", "film"].map(String::from).to_vec();
        let config = cfg();
        let ctx = AttackContext {
            model: &model,
            original: &original,
            original_prediction: 0,
            neighbors: &table,
            lm: &Flat,
            config: &config,
        };
        let start = ctx.with_substitutions(Substitutions::new());
        let next = perturb(&ctx, &start, &mut derived_rng(0, "t", 0));
        // exhaustive oracle over the three neighbors
        let best = ["fine", "poor", "okay"]
            .into_iter()
            .max_by(|a, b| {
                let fa = fitness(&model, &[a.to_string(), "film".into()], 0);
                let fb = fitness(&model, &[b.to_string(), "film".into()], 0);
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert_eq!(next.tokens[0], best);
        assert_eq!(next.substitutions[&0], ("good".to_string(), best.to_string()));
        assert!(next.fitness > start.fitness);
    }

    #[test]
    fn perturb_without_eligible_positions_is_identity() {
        let model = Linear::new(&[("good", 1.0)]);
        let table = neighbors(&[]);
        let original: Vec<String> = ["good", "film"].map(String::from).to_vec();
        let config = cfg();
        let ctx = AttackContext {
            model: &model,
            original: &original,
            original_prediction: 0,
            neighbors: &table,
            lm: &Flat,
            config: &config,
        };
        let start = ctx.with_substitutions(Substitutions::new());
        assert_eq!(perturb(&ctx, &start, &mut derived_rng(0, "t", 0)), start);
    }

    #[test]
    fn zero_budget_fails_in_first_generation() {
        let model = Linear::new(&[("good", 1.0)]);
        let table = neighbors(&[("good", &["bad"])]);
        let config = AttackConfig {
            change_budget: 0.0,
            ..cfg()
        };
        let r = genetic_attack(&model, &example("good film", "pos"), &table, &Flat, &config);
        assert_eq!(r.status, AttackStatus::FailedBudget);
        assert_eq!(r.generations, 1);
    }

    #[test]
    fn misclassified_examples_are_skipped() {
        let model = Linear::new(&[("good", 1.0)]);
        let r = genetic_attack(&model, &example("good film", "neg"), &neighbors(&[]), &Flat, &cfg());
        assert_eq!(r.status, AttackStatus::SkippedMisclassified);
    }

    #[test]
    fn antonym_substitution_flips_within_budget() {
        let model = Linear::new(&[("good", 1.0), ("great", 1.0), ("bad", -3.0), ("film", 0.2)]);
        let table = neighbors(&[("good", &["great", "bad"]), ("film", &["movie"])]);
        let ex = example("a good film", "pos");
        let r = genetic_attack(&model, &ex, &table, &Flat, &AttackConfig { neighbors: 2, kept_candidates: 2, change_budget: 0.34, ..cfg() });
        assert_eq!(r.status, AttackStatus::Success);
        let c = r.candidate.unwrap();
        assert_eq!(c.tokens, vec!["a", "bad", "film"]);
        assert!(c.substitutions.len() as f64 <= 0.34 * 3.0);
        let again = genetic_attack(&model, &ex, &table, &Flat, &AttackConfig { neighbors: 2, kept_candidates: 2, change_budget: 0.34, ..cfg() });
        assert_eq!(again.candidate.unwrap(), c);
    }

    #[test]
    fn report_round_trip() {
        let mut subs = Substitutions::new();
        subs.insert(2, ("problem".into(), "difficulty".into()));
        subs.insert(14, ("film".into(), "movie".into()));
        let lines = vec![
            ReportLine {
                id: "train-1".into(),
                status: AttackStatus::Success,
                generations: 3,
                substitutions: subs,
            },
            ReportLine {
                id: "train-2".into(),
                status: AttackStatus::FailedBudget,
                generations: 20,
                substitutions: Substitutions::new(),
            },
        ];
        let text = render_report(&lines);
        assert!(text.starts_with("train-1\tSUCCESS\t3\t2:problem>difficulty,14:film>movie\n"));
        assert_eq!(parse_report(&text).unwrap(), lines);
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::default().validate().is_ok());
        assert!(AttackConfig { kept_candidates: 9, ..AttackConfig::default() }.validate().is_err());
        assert!(AttackConfig { change_budget: 1.5, ..AttackConfig::default() }.validate().is_err());
        assert_eq!(AttackConfig::default().max_changes(10), 2);
        assert_eq!(AttackConfig::default().max_changes(4), 0);
    }
}
