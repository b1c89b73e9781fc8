//! Explanation polarity, the coherence score, and summary reporting.

mod human;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use human::{
    export_human_eval, ingest_human_eval, parse_assignment, parse_sheet, render_assignment, render_sheet,
    Assignment, HumanEvalPair, HumanEvalSheet, HumanScore, SheetRow,
};

use crate::corpus::{Label, LabelSet};
use crate::error::{Error, Result};
use crate::explain::{Explanation, Keyword};
use crate::lexicon::SentimentLexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "NONE")]
    None,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Pos, Polarity::Neg, Polarity::None];
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Pos => "POS",
            Polarity::Neg => "NEG",
            Polarity::None => "NONE",
        })
    }
}

/// Which base labels count as positive or negative; unmapped labels are NONE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityMap {
    map: BTreeMap<Label, Polarity>,
}

impl PolarityMap {
    pub fn new(pairs: impl IntoIterator<Item = (Label, Polarity)>) -> Self {
        PolarityMap {
            map: pairs.into_iter().collect(),
        }
    }

    /// Guesses from label names: `pos`, `positive`, `1` are positive and
    /// `neg`, `negative`, `0` negative.
    pub fn from_label_names(labels: &LabelSet) -> Self {
        PolarityMap::new(labels.base().iter().map(|l| {
            let p = match l.as_str().to_lowercase().as_str() {
                "pos" | "positive" | "1" => Polarity::Pos,
                "neg" | "negative" | "0" => Polarity::Neg,
                _ => Polarity::None,
            };
            (l.clone(), p)
        }))
    }

    pub fn polarity(&self, label: &Label) -> Polarity {
        self.map.get(label).copied().unwrap_or(Polarity::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolaritySummary {
    pub positive_sum: f64,
    pub negative_sum: f64,
    pub indicated: Polarity,
}

impl PolaritySummary {
    pub fn from_sums(positive_sum: f64, negative_sum: f64) -> Self {
        let indicated = if positive_sum > negative_sum {
            Polarity::Pos
        } else if negative_sum > positive_sum {
            Polarity::Neg
        } else {
            Polarity::None
        };
        PolaritySummary {
            positive_sum,
            negative_sum,
            indicated,
        }
    }
}

/// Accumulates the lexicon scores of the keywords; unknown words add nothing.
pub fn score_explanation(keywords: &[Keyword], lexicon: &SentimentLexicon) -> PolaritySummary {
    let (p, n) = keywords
        .iter()
        .filter_map(|k| lexicon.lookup_word(&k.token.to_lowercase()))
        .fold((0.0, 0.0), |(p, n), s| (p + s.positive, n + s.negative));
    PolaritySummary::from_sums(p, n)
}

/// Consistent with the prediction, or polarity-free while the prediction is wrong.
pub fn is_coherent(indicated: Polarity, prediction: Polarity, gold: Polarity) -> bool {
    match indicated {
        Polarity::None => prediction != gold,
        p => p == prediction,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRecord {
    pub id: String,
    pub prediction: Label,
    pub gold: Label,
    pub positive_sum: f64,
    pub negative_sum: f64,
    pub indicated: Polarity,
    pub coherent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub records: Vec<CoherenceRecord>,
    pub coherent_count: usize,
    pub total: usize,
    pub score: f64,
}

impl CoherenceReport {
    /// One JSON record per line.
    pub fn render_records(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Coherence of aligned explanations, predictions and gold labels.
pub fn coherence(
    explanations: &[Explanation],
    predictions: &[Label],
    golds: &[Label],
    lexicon: &SentimentLexicon,
    polarity: &PolarityMap,
) -> Result<CoherenceReport> {
    if explanations.len() != predictions.len() || explanations.len() != golds.len() {
        return Err(Error::LengthMismatch(format!(
            "{} explanations, {} predictions, {} gold labels",
            explanations.len(),
            predictions.len(),
            golds.len()
        )));
    }
    if explanations.is_empty() {
        return Err(Error::EmptyInput("no explanations to evaluate".into()));
    }
    let records: Vec<CoherenceRecord> = explanations
        .iter()
        .zip(predictions.iter().zip(golds))
        .map(|(e, (pred, gold))| {
            let s = score_explanation(&e.keywords, lexicon);
            CoherenceRecord {
                id: e.id.clone(),
                prediction: pred.clone(),
                gold: gold.clone(),
                positive_sum: s.positive_sum,
                negative_sum: s.negative_sum,
                indicated: s.indicated,
                coherent: is_coherent(s.indicated, polarity.polarity(pred), polarity.polarity(gold)),
            }
        })
        .collect();
    let coherent_count = records.iter().filter(|r| r.coherent).count();
    let total = records.len();
    Ok(CoherenceReport {
        records,
        coherent_count,
        total,
        score: coherent_count as f64 / total as f64,
    })
}

/// Coherence using the prediction and gold label stored in each explanation.
pub fn coherence_of(
    explanations: &[Explanation],
    lexicon: &SentimentLexicon,
    polarity: &PolarityMap,
) -> Result<CoherenceReport> {
    let predictions: Vec<Label> = explanations.iter().map(|e| e.prediction.clone()).collect();
    let golds = explanations
        .iter()
        .map(|e| {
            e.gold
                .clone()
                .ok_or_else(|| Error::Config(format!("explanation `{}` has no gold label", e.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    coherence(explanations, &predictions, &golds, lexicon, polarity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub accuracy: f64,
    pub coherence_lime: f64,
    pub coherence_cossim: f64,
}

/// Tab-separated table: model, accuracy, coherence-LIME, coherence-CosSim.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from("model\taccuracy\tcoherence-LIME\tcoherence-CosSim\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\n",
            r.model, r.accuracy, r.coherence_lime, r.coherence_cossim
        ));
    }
    out
}
