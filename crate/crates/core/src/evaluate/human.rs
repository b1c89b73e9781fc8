//! Blinded pairwise human-evaluation sheets.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::math::derived_rng;

const SHEET_HEADER: [&str; 8] = [
    "pair_id",
    "text",
    "prediction",
    "keywords_A",
    "keywords_B",
    "score_A",
    "score_B",
    "preferred",
];

/// Two explanations of the same text by two models.
#[derive(Debug, Clone)]
pub struct HumanEvalPair<'a> {
    pub text: String,
    pub first: &'a Explanation,
    pub second: &'a Explanation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetRow {
    pub pair_id: String,
    pub text: String,
    pub prediction: String,
    pub keywords_a: Vec<String>,
    pub keywords_b: Vec<String>,
    pub score_a: Option<u8>,
    pub score_b: Option<u8>,
    pub preferred: Option<char>,
}

/// Which model sits in which slot; kept apart from the sheet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub pair_id: String,
    pub model_a: String,
    pub model_b: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanEvalSheet {
    pub rows: Vec<SheetRow>,
    pub assignment: Vec<Assignment>,
    pub seed: u64,
}

fn keywords(e: &Explanation) -> Vec<String> {
    e.keywords.iter().map(|k| k.token.clone()).collect()
}

/// A seeded fair coin per pair decides which model goes in slot A.
pub fn export_human_eval(pairs: &[HumanEvalPair<'_>], models: [&str; 2], seed: u64) -> Result<HumanEvalSheet> {
    let mut rows = Vec::with_capacity(pairs.len());
    let mut assignment = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        if p.first.id != p.second.id {
            return Err(Error::Config(format!(
                "pair {i} explains different examples `{}` and `{}`",
                p.first.id, p.second.id
            )));
        }
        let swap = derived_rng(seed, "human-eval", i as u64).gen_bool(0.5);
        let (a, b, model_a, model_b) = if swap {
            (p.second, p.first, models[1], models[0])
        } else {
            (p.first, p.second, models[0], models[1])
        };
        let prediction = if a.prediction == b.prediction {
            a.prediction.to_string()
        } else {
            format!("A:{}|B:{}", a.prediction, b.prediction)
        };
        let pair_id = format!("pair-{i}");
        rows.push(SheetRow {
            pair_id: pair_id.clone(),
            text: p.text.clone(),
            prediction,
            keywords_a: keywords(a),
            keywords_b: keywords(b),
            score_a: None,
            score_b: None,
            preferred: None,
        });
        assignment.push(Assignment {
            pair_id,
            model_a: model_a.to_string(),
            model_b: model_b.to_string(),
        });
    }
    Ok(HumanEvalSheet {
        rows,
        assignment,
        seed,
    })
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

pub fn render_sheet(rows: &[SheetRow]) -> Result<String> {
    csv_string(|w| {
        w.write_record(SHEET_HEADER)?;
        for r in rows {
            let opt = |v: Option<u8>| v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.pair_id.clone(),
                r.text.clone(),
                r.prediction.clone(),
                r.keywords_a.join("|"),
                r.keywords_b.join("|"),
                opt(r.score_a),
                opt(r.score_b),
                r.preferred.map(String::from).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

pub fn render_assignment(sheet: &HumanEvalSheet) -> Result<String> {
    csv_string(|w| {
        w.write_record(["pair_id", "model_A", "model_B", "seed"])?;
        for a in &sheet.assignment {
            w.write_record([&a.pair_id, &a.model_a, &a.model_b, &sheet.seed.to_string()])?;
        }
        Ok(())
    })
}

fn split_keywords(cell: &str) -> Vec<String> {
    cell.split('|').filter(|s| !s.is_empty()).map(String::from).collect()
}

/// Reads a sheet; response cells may be blank.
pub fn parse_sheet(content: &str) -> Result<Vec<SheetRow>> {
    let mut reader = csv::Reader::from_reader(content.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != SHEET_HEADER {
        return Err(Error::SheetRow {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let bad = |message: String| Error::SheetRow { row, message };
        let score = |cell: &str, name: &str| -> Result<Option<u8>> {
            match cell.trim() {
                "" => Ok(None),
                "0" => Ok(Some(0)),
                "1" => Ok(Some(1)),
                other => Err(bad(format!("{name} must be 0 or 1, found `{other}`"))),
            }
        };
        let preferred = match rec[7].trim() {
            "" => None,
            "A" | "a" => Some('A'),
            "B" | "b" => Some('B'),
            other => return Err(bad(format!("preferred must be A or B, found `{other}`"))),
        };
        rows.push(SheetRow {
            pair_id: rec[0].to_string(),
            text: rec[1].to_string(),
            prediction: rec[2].to_string(),
            keywords_a: split_keywords(&rec[3]),
            keywords_b: split_keywords(&rec[4]),
            score_a: score(&rec[5], "score_A")?,
            score_b: score(&rec[6], "score_B")?,
            preferred,
        });
    }
    Ok(rows)
}

pub fn parse_assignment(content: &str) -> Result<Vec<Assignment>> {
    let mut reader = csv::Reader::from_reader(content.as_bytes());
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(Assignment {
                pair_id: rec[0].to_string(),
                model_a: rec[1].to_string(),
                model_b: rec[2].to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScore {
    pub model: String,
    /// Mean of the 0/1 marks the model's explanations received.
    pub score: f64,
    /// Fraction of pairs where this model's explanation was preferred.
    pub preference_rate: f64,
    pub pairs: usize,
}

/// Unblinds a completed sheet; every row needs both scores and a preference.
pub fn ingest_human_eval(rows: &[SheetRow], assignment: &[Assignment]) -> Result<Vec<HumanScore>> {
    let slots: BTreeMap<&str, &Assignment> = assignment.iter().map(|a| (a.pair_id.as_str(), a)).collect();
    // model -> (mark sum, preferred count, pairs)
    let mut totals: BTreeMap<String, (u32, u32, usize)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        let missing = |what: &str| Error::SheetRow {
            row,
            message: format!("missing {what}"),
        };
        let a = slots.get(r.pair_id.as_str()).ok_or_else(|| Error::SheetRow {
            row,
            message: format!("pair `{}` not in assignment", r.pair_id),
        })?;
        let (sa, sb) = (r.score_a.ok_or_else(|| missing("score_A"))?, r.score_b.ok_or_else(|| missing("score_B"))?);
        let pref = r.preferred.ok_or_else(|| missing("preferred"))?;
        for (model, mark, won) in [(&a.model_a, sa, pref == 'A'), (&a.model_b, sb, pref == 'B')] {
            let t = totals.entry(model.clone()).or_default();
            t.0 += mark as u32;
            t.1 += won as u32;
            t.2 += 1;
        }
    }
    Ok(totals
        .into_iter()
        .map(|(model, (marks, wins, pairs))| HumanScore {
            model,
            score: marks as f64 / pairs as f64,
            preference_rate: wins as f64 / pairs as f64,
            pairs,
        })
        .collect())
}
