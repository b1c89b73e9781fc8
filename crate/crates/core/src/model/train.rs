use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_index, Classifier, Gradients, Model};
use crate::config::KeyValues;
use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::math::derived_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Dropout on the representation during training; 0 disables it.
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 50,
            epochs: 10,
            seed: 1,
            dropout: 0.0,
        }
    }
}

impl TrainConfig {
    /// Overrides `base` from unprefixed keys (`learning_rate`, `epochs`, ...).
    pub fn from_key_values(kv: &KeyValues, base: &TrainConfig) -> Result<Self> {
        let cfg = TrainConfig {
            learning_rate: kv.parse_or("learning_rate", base.learning_rate)?,
            batch_size: kv.parse_or("batch_size", base.batch_size)?,
            epochs: kv.parse_or("epochs", base.epochs)?,
            seed: kv.parse_or("seed", base.seed)?,
            dropout: kv.parse_or("dropout", base.dropout)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("learning_rate", self.learning_rate);
        kv.set("batch_size", self.batch_size);
        kv.set("epochs", self.epochs);
        kv.set("seed", self.seed);
        kv.set("dropout", self.dropout);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "learning rate, batch size and epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Adam with bias correction over every parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, shapes: &[Vec<f64>]) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: shapes.iter().map(|b| vec![0.0; b.len()]).collect(),
            v: shapes.iter().map(|b| vec![0.0; b.len()]).collect(),
            t: 0,
        }
    }

    /// Applies one update; `grads[i]` pairs with `params[i]`. `None` skips a block.
    pub fn step(&mut self, params: &mut [Vec<f64>], grads: &[Option<&[f64]>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v, p) = (&mut self.m[i], &mut self.v[i], &mut params[i]);
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

fn accuracy(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let labels = model.labels().clone();
    let correct: Vec<bool> = examples
        .par_iter()
        .map(|e| -> Result<bool> {
            let ids = model.encode(&e.words());
            let scores = model.decide_scores(&model.represent_ids_direct(&ids));
            // the AUG head competes here: augmented dev data carries AUG labels
            Ok(predict_index(&scores, &labels, false) == model.label_index(&e.label)?)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / examples.len() as f64)
}

/// Mini-batch Adam on mean cross-entropy. Keeps the parameters of the epoch
/// with the best dev accuracy (earliest on ties); the last epoch when dev is empty.
pub fn train(mut model: Model, dataset: &Dataset, config: &TrainConfig) -> Result<(Model, History)> {
    config.validate()?;
    if dataset.labels != *model.labels() {
        return Err(Error::LabelMismatch(format!(
            "dataset labels {:?} vs model heads {:?}",
            dataset.labels.all(),
            model.labels().all()
        )));
    }
    if dataset.train.is_empty() {
        return Err(Error::EmptyInput("train split is empty".into()));
    }
    let encoded: Vec<(Vec<usize>, usize)> = dataset
        .train
        .iter()
        .map(|e| Ok((model.encode(&e.words()), model.label_index(&e.label)?)))
        .collect::<Result<_>>()?;
    let freeze = model.config().freeze_embeddings;
    let mut adam = Adam::new(config.learning_rate, model.blocks());
    let rep = model.representation_dim();
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut order: Vec<usize> = (0..encoded.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut derived_rng(config.seed, "shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let snapshot = &model;
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let mask = (config.dropout > 0.0).then(|| {
                        let mut rng = derived_rng(
                            config.seed,
                            "dropout",
                            ((epoch as u64) << 40) ^ ((b as u64) << 20) ^ k as u64,
                        );
                        let keep = 1.0 - config.dropout;
                        (0..rep)
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect::<Vec<f64>>()
                    });
                    let (ids, label) = &encoded[i];
                    snapshot.loss_and_gradient(ids, *label, mask.as_deref())
                })
                .collect();
            // fixed reduction order keeps runs bit-identical
            let mut total = results[0].1.clone();
            let mut batch_loss = results[0].0;
            for (l, g) in &results[1..] {
                total.add(g);
                batch_loss += l;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            total.scale(1.0 / batch.len() as f64);

            let mut dense_embedding = None;
            if !freeze {
                let d = model.config().embedding_dim;
                let mut e = vec![0.0; model.blocks()[0].len()];
                for (row, g) in &total.embedding {
                    e[row * d..(row + 1) * d].copy_from_slice(g);
                }
                dense_embedding = Some(e);
            }
            let mut grads: Vec<Option<&[f64]>> = vec![dense_embedding.as_deref()];
            grads.extend(total.dense.iter().map(|g| Some(g.as_slice())));
            adam.step(model.blocks_mut(), &grads);
        }
        let dev_accuracy = accuracy(&model, &dataset.dev)?;
        let train_loss = loss_sum / encoded.len() as f64;
        log::debug!("epoch {epoch}: loss {train_loss:.5}, dev acc {dev_accuracy:.4}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_accuracy,
        });
        let improved = match &best {
            None => true,
            Some((acc, _)) => dataset.dev.is_empty() || dev_accuracy > *acc,
        };
        if improved {
            best = Some((dev_accuracy, model.blocks().to_vec()));
            history.best_epoch = epoch;
        }
    }
    if let Some((_, blocks)) = best {
        for (dst, src) in model.blocks_mut().iter_mut().zip(blocks) {
            *dst = src;
        }
    }
    Ok((model, history))
}

/// Fraction of examples whose test-time prediction (AUG suppressed) matches the label.
pub fn test_accuracy<C: Classifier>(model: &C, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let correct = examples
        .par_iter()
        .filter(|e| model.predict(&e.words(), true) == e.label)
        .count();
    correct as f64 / examples.len() as f64
}
