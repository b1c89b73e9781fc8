//! Local explanations: a LIME surrogate over word-deletion perturbations and
//! cosine similarity between sentence and single-word representations.

mod lime;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lime::{
    fit_lime, fit_surrogate, proximity, ridge_closed_form, ridge_gradient_descent, sample_perturbations,
    LimeConfig, LimeSurrogate, PerturbationSet, RidgeFit, Solver,
};

use crate::corpus::{Example, Label};
use crate::error::{Error, Result};
use crate::math::{cosine, derived_rng};
use crate::model::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LIME")]
    Lime,
    #[serde(rename = "COSSIM")]
    CosSim,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lime => "LIME",
            Method::CosSim => "COSSIM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lime" => Ok(Method::Lime),
            "cossim" | "cos" => Ok(Method::CosSim),
            _ => Err(format!("unknown explanation method `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub token: String,
    pub position: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub id: String,
    pub method: Method,
    pub prediction: Label,
    pub gold: Option<Label>,
    pub keywords: Vec<Keyword>,
}

/// Positions sorted by descending score, ties by position; first `t` kept.
fn top_t(words: &[String], scores: &[f64], t: usize) -> Vec<Keyword> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(t)
        .map(|p| Keyword {
            token: words[p].clone(),
            position: p,
            weight: scores[p],
        })
        .collect()
}

/// Top `t` words by the surrogate weight of `label`.
pub fn explain_lime(surrogate: &LimeSurrogate, label: usize, t: usize) -> Vec<Keyword> {
    top_t(&surrogate.words, surrogate.weights(label), t)
}

/// Top `t` words by cosine similarity between `f(x)` and `f([x_i])`.
pub fn explain_cossim<C: Classifier>(model: &C, words: &[&str], t: usize) -> Vec<Keyword> {
    let full = model.represent(words);
    let mut single: HashMap<&str, f64> = HashMap::new();
    let scores: Vec<f64> = words
        .iter()
        .map(|w| *single.entry(w).or_insert_with(|| cosine(&full, &model.represent(&[w]))))
        .collect();
    let owned: Vec<String> = words.iter().map(|w| w.to_string()).collect();
    top_t(&owned, &scores, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub method: Method,
    pub keywords: usize,
    pub lime: LimeConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            method: Method::Lime,
            keywords: 3,
            lime: LimeConfig::default(),
        }
    }
}

/// Explains the test-time prediction (AUG suppressed) on one example.
pub fn explain_example<C: Classifier>(model: &C, example: &Example, config: &ExplainConfig) -> Result<Explanation> {
    let words = example.words();
    let base = model.labels().base().len();
    let scores = model.scores(&words);
    let predicted = crate::math::argmax(&scores[..base]);
    let keywords = match config.method {
        Method::Lime => {
            let mut rng = derived_rng(config.lime.seed, &format!("lime/{}", example.id), 0);
            let surrogate = fit_lime(model, &words, &config.lime, &mut rng)?;
            explain_lime(&surrogate, predicted, config.keywords)
        }
        Method::CosSim => explain_cossim(model, &words, config.keywords),
    };
    Ok(Explanation {
        id: example.id.clone(),
        method: config.method,
        prediction: model.labels().base()[predicted].clone(),
        gold: Some(example.label.clone()),
        keywords,
    })
}

pub fn explain_examples<C: Classifier>(model: &C, examples: &[Example], config: &ExplainConfig) -> Result<Vec<Explanation>> {
    config.lime.validate()?;
    examples
        .par_iter()
        .map(|e| explain_example(model, e, config))
        .collect()
}

/// One JSON object per line.
pub fn render_explanations(explanations: &[Explanation]) -> Result<String> {
    let mut out = String::new();
    for e in explanations {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_explanations(content: &str) -> Result<Vec<Explanation>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse("explanation log", i + 1, &e.to_string()))
        })
        .collect()
}
