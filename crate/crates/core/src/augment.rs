//! Augmented examples built by deleting sentiment-bearing words, and the
//! extension of a dataset with the AUG label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{detokenize, remove_positions, Dataset, Example, Label, Origin, Split};
use crate::error::{Error, Result};
use crate::lexicon::SentimentLexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AugmentMethod {
    Ek,
    Adv,
}

impl AugmentMethod {
    pub fn name(self) -> &'static str {
        match self {
            AugmentMethod::Ek => "EK",
            AugmentMethod::Adv => "ADV",
        }
    }

    pub fn origin(self) -> Origin {
        match self {
            AugmentMethod::Ek => Origin::AugEk,
            AugmentMethod::Adv => Origin::AugAdv,
        }
    }
}

impl fmt::Display for AugmentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "EK" => Ok(AugmentMethod::Ek),
            "ADV" => Ok(AugmentMethod::Adv),
            _ => Err(format!("unknown augmentation method `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub source_id: String,
    pub removed_positions: Vec<usize>,
    pub method: AugmentMethod,
    pub example: Example,
}

/// Id of the augmented copy of `source_id`; keeps the split prefix.
pub fn augmented_id(source_id: &str, method: AugmentMethod) -> String {
    format!("{source_id}+{}", method.name().to_lowercase())
}

fn build(source: &Example, removed: Vec<usize>, method: AugmentMethod) -> Option<AugmentationRecord> {
    if removed.is_empty() || removed.len() >= source.tokens.len() {
        return None;
    }
    let tokens = remove_positions(&source.tokens, &removed);
    let example = Example {
        id: augmented_id(&source.id, method),
        text: detokenize(&tokens),
        tokens,
        label: Label::aug(),
        origin: method.origin(),
        source_id: Some(source.id.clone()),
        removed_positions: removed.clone(),
    };
    Some(AugmentationRecord {
        source_id: source.id.clone(),
        removed_positions: removed,
        method,
        example,
    })
}

/// Deletes every lexicon sentiment word. `None` when nothing would be removed
/// or nothing would remain. Punctuation never counts as a sentiment word.
pub fn augment_ek(example: &Example, lexicon: &SentimentLexicon) -> Option<AugmentationRecord> {
    let removed = example
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_punctuation() && lexicon.is_sentiment_word(t))
        .map(|(i, _)| i)
        .collect();
    build(example, removed, AugmentMethod::Ek)
}

/// Deletes the positions an adversarial attack substituted.
pub fn augment_adv(
    example: &Example,
    substitutions: &BTreeMap<usize, (String, String)>,
) -> Result<Option<AugmentationRecord>> {
    if let Some((&position, _)) = substitutions.range(example.tokens.len()..).next() {
        return Err(Error::PositionOutOfRange {
            position,
            len: example.tokens.len(),
        });
    }
    Ok(build(
        example,
        substitutions.keys().copied().collect(),
        AugmentMethod::Adv,
    ))
}

/// Runs DA-EK over the original train and dev examples.
pub fn augment_ek_dataset(dataset: &Dataset, lexicon: &SentimentLexicon) -> Vec<AugmentationRecord> {
    [Split::Train, Split::Dev]
        .into_iter()
        .flat_map(|s| dataset.split(s))
        .filter(|e| e.origin == Origin::Original)
        .collect::<Vec<_>>()
        .par_iter()
        .filter_map(|e| augment_ek(e, lexicon))
        .collect()
}

/// Appends each record's example to its source's split and adds AUG to the
/// label set. An empty record list leaves the dataset unchanged.
pub fn extend_dataset(dataset: &Dataset, records: &[AugmentationRecord]) -> Result<Dataset> {
    let mut out = dataset.clone();
    if records.is_empty() {
        return Ok(out);
    }
    let mut seen: BTreeSet<&str> = dataset
        .train
        .iter()
        .chain(&dataset.dev)
        .filter_map(|e| e.source_id.as_deref())
        .collect();
    for r in records {
        let split = match dataset.find(&r.source_id) {
            Some((Split::Test, _)) => return Err(Error::TestSplitSource(r.source_id.clone())),
            Some((s, e)) if e.origin == Origin::Original => s,
            _ => {
                return Err(Error::Config(format!(
                    "augmentation source `{}` is not an original example",
                    r.source_id
                )))
            }
        };
        if !seen.insert(&r.source_id) {
            return Err(Error::Config(format!(
                "source `{}` already has an augmented example",
                r.source_id
            )));
        }
        out.split_mut(split).push(r.example.clone());
    }
    if !out.labels.has_aug() {
        out.labels = out.labels.with_aug();
    }
    log::info!(
        "augmented: {} train, {} dev",
        out.count_augmented(Split::Train),
        out.count_augmented(Split::Dev)
    );
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub source_id: String,
    pub method: AugmentMethod,
    pub removed_positions: Vec<usize>,
}

/// Entries for every augmented example, train first, in dataset order.
pub fn log_entries(dataset: &Dataset) -> Vec<LogEntry> {
    dataset
        .train
        .iter()
        .chain(&dataset.dev)
        .filter_map(|e| {
            let method = match e.origin {
                Origin::Original => return None,
                Origin::AugEk => AugmentMethod::Ek,
                Origin::AugAdv => AugmentMethod::Adv,
            };
            Some(LogEntry {
                source_id: e.source_id.clone()?,
                method,
                removed_positions: e.removed_positions.clone(),
            })
        })
        .collect()
}

pub fn render_log(entries: &[LogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let positions: Vec<String> = e.removed_positions.iter().map(usize::to_string).collect();
        out.push_str(&format!("{}\t{}\t{}\n", e.source_id, e.method, positions.join(",")));
    }
    out
}

pub fn parse_log(content: &str) -> Result<Vec<LogEntry>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse("augmentation log", i + 1, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad("expected `source_id<TAB>method<TAB>positions`"));
        }
        let method = fields[1].parse().map_err(|e: String| bad(&e))?;
        let removed_positions = fields[2]
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad position list"))?;
        if removed_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("positions must be strictly increasing"));
        }
        out.push(LogEntry {
            source_id: fields[0].to_string(),
            method,
            removed_positions,
        });
    }
    Ok(out)
}
