//! Sentiment classifiers, explanation-oriented data augmentation, local
//! explanations and the coherence score.

pub mod attack;
pub mod augment;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod lexicon;
pub mod math;
pub mod model;
pub mod pipeline;

pub use error::{Error, Result};
