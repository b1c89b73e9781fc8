use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::math::cosine;
use crate::model::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    GradientDescent,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub samples: usize,
    pub sigma2: f64,
    pub epochs: usize,
    /// Step size as a fraction of `1/L`, `L` the largest curvature.
    pub learning_rate: f64,
    pub ridge: f64,
    pub intercept: bool,
    pub solver: Solver,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            samples: 600,
            sigma2: 10.0,
            epochs: 50,
            learning_rate: 1.0,
            ridge: 1e-4,
            intercept: true,
            solver: Solver::GradientDescent,
            seed: 1,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.epochs == 0 {
            return Err(Error::Config("LIME samples and epochs must be positive".into()));
        }
        if !(self.sigma2 > 0.0) || self.ridge < 0.0 {
            return Err(Error::Config("LIME needs sigma2 > 0 and ridge >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 2.0) {
            return Err(Error::Config("LIME learning rate must lie in (0, 2)".into()));
        }
        Ok(())
    }

    /// Overrides defaults from unprefixed keys (`samples`, `sigma2`, ...).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = LimeConfig::default();
        let solver = match kv.get("solver") {
            None | Some("gd") => Solver::GradientDescent,
            Some("closed") => Solver::ClosedForm,
            Some(other) => return Err(Error::Config(format!("unknown LIME solver `{other}`"))),
        };
        let cfg = LimeConfig {
            samples: kv.parse_or("samples", d.samples)?,
            sigma2: kv.parse_or("sigma2", d.sigma2)?,
            epochs: kv.parse_or("epochs", d.epochs)?,
            learning_rate: kv.parse_or("learning_rate", d.learning_rate)?,
            ridge: kv.parse_or("ridge", d.ridge)?,
            intercept: kv.parse_or("intercept", d.intercept)?,
            solver,
            seed: kv.parse_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl LimeConfig {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("samples", self.samples);
        kv.set("sigma2", self.sigma2);
        kv.set("epochs", self.epochs);
        kv.set("learning_rate", self.learning_rate);
        kv.set("ridge", self.ridge);
        kv.set("intercept", self.intercept);
        kv.set(
            "solver",
            match self.solver {
                Solver::GradientDescent => "gd",
                Solver::ClosedForm => "closed",
            },
        );
        kv.set("seed", self.seed);
        kv
    }
}

/// Binary keep-masks over token positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    pub masks: Vec<Vec<bool>>,
}

impl PerturbationSet {
    pub fn apply<'a>(&self, sample: usize, words: &[&'a str]) -> Vec<&'a str> {
        words
            .iter()
            .zip(&self.masks[sample])
            .filter(|(_, &keep)| keep)
            .map(|(w, _)| *w)
            .collect()
    }
}

/// Per sample, deletes a uniformly drawn number of tokens in `0..n` chosen as
/// a uniform subset, so at least one token always survives.
pub fn sample_perturbations(n: usize, q: usize, rng: &mut ChaCha8Rng) -> PerturbationSet {
    let masks = (0..q)
        .map(|_| {
            let mut mask = vec![true; n];
            let deleted = rng.gen_range(0..n.max(1));
            for i in sample(rng, n, deleted).into_iter() {
                mask[i] = false;
            }
            mask
        })
        .collect();
    PerturbationSet { masks }
}

/// `exp(-(1 - cos)^2 / sigma2)`; a zero `repr_z` is at distance 1.
pub fn proximity(repr_x: &[f64], repr_z: &[f64], sigma2: f64) -> f64 {
    let dist = if repr_z.iter().all(|&v| v == 0.0) {
        1.0
    } else {
        1.0 - cosine(repr_x, repr_z)
    };
    (-dist * dist / sigma2).exp()
}

/// A weighted ridge fit `y ≈ b + wᵀz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// `Σ D (y - b - wᵀz)² + λ‖w‖²` at the solution.
    pub loss: f64,
}

fn design(masks: &[Vec<bool>]) -> DMatrix<f64> {
    let n = masks.first().map_or(0, Vec::len);
    DMatrix::from_fn(masks.len(), n, |r, c| if masks[r][c] { 1.0 } else { 0.0 })
}

fn objective(x: &DMatrix<f64>, y: &[f64], d: &[f64], w: &DVector<f64>, b: f64, ridge: f64) -> f64 {
    let pred = x * w;
    let resid: f64 = (0..y.len()).map(|l| d[l] * (y[l] - b - pred[l]).powi(2)).sum();
    resid + ridge * w.norm_squared()
}

/// Weighted means used to absorb the intercept.
fn centering(x: &DMatrix<f64>, y: &[f64], d: &[f64], intercept: bool) -> (DVector<f64>, f64) {
    let n = x.ncols();
    if !intercept {
        return (DVector::zeros(n), 0.0);
    }
    let total: f64 = d.iter().sum();
    let mx = DVector::from_fn(n, |c, _| (0..y.len()).map(|l| d[l] * x[(l, c)]).sum::<f64>() / total);
    let my = (0..y.len()).map(|l| d[l] * y[l]).sum::<f64>() / total;
    (mx, my)
}

/// Normal equations `(XᵀDX + λI) w = XᵀDy` on centered data, solved directly.
pub fn ridge_closed_form(masks: &[Vec<bool>], y: &[f64], d: &[f64], ridge: f64, intercept: bool) -> Result<RidgeFit> {
    let x = design(masks);
    let (mx, my) = centering(&x, y, d, intercept);
    let n = x.ncols();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for l in 0..y.len() {
        let row = x.row(l).transpose() - &mx;
        a += d[l] * &row * row.transpose();
        rhs += d[l] * (y[l] - my) * &row;
    }
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    let w = a
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| a.pseudo_inverse(1e-12).ok().map(|p| p * &rhs))
        .ok_or_else(|| Error::Divergence("singular LIME system".into()))?;
    let b = my - mx.dot(&w);
    Ok(RidgeFit {
        loss: objective(&x, y, d, &w, b, ridge),
        intercept: b,
        weights: w.iter().copied().collect(),
    })
}

fn largest_eigenvalue(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let hv = h * &v;
        let norm = hv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&hv);
        v = hv / norm;
    }
    // Rayleigh quotient undershoots slightly before convergence
    lambda.max((h * &v).norm())
}

/// Accelerated full-batch gradient descent with adaptive restart. Features are
/// centered and rescaled to unit weighted variance; step `learning_rate / L`.
pub fn ridge_gradient_descent(
    masks: &[Vec<bool>],
    y: &[f64],
    d: &[f64],
    ridge: f64,
    intercept: bool,
    epochs: usize,
    learning_rate: f64,
) -> Result<RidgeFit> {
    let x = design(masks);
    let (mx, my) = centering(&x, y, d, intercept);
    let n = x.ncols();
    let q = y.len();
    let mut xc = x.clone();
    for l in 0..q {
        for c in 0..n {
            xc[(l, c)] -= mx[c];
        }
    }
    let scale = DVector::from_fn(n, |c, _| {
        let s = (0..q).map(|l| d[l] * xc[(l, c)].powi(2)).sum::<f64>().sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    let xs = DMatrix::from_fn(q, n, |l, c| xc[(l, c)] / scale[c]);
    let yc = DVector::from_fn(q, |l, _| y[l] - my);
    // objective in scaled coordinates v = scale ∘ w:
    //   (yc - Xs v)ᵀ D (yc - Xs v) + λ Σ v²/s²
    let xtd = DMatrix::from_fn(q, n, |l, c| d[l] * xs[(l, c)]).transpose();
    let mut h = &xtd * &xs;
    for c in 0..n {
        h[(c, c)] += ridge / (scale[c] * scale[c]);
    }
    let g0 = &xtd * &yc;
    let l_max = largest_eigenvalue(&h);
    let step = if l_max > 0.0 { learning_rate / l_max } else { 0.0 };

    let grad = |v: &DVector<f64>| &h * v - &g0;
    let mut v = DVector::<f64>::zeros(n);
    let mut z = v.clone();
    let mut t = 1.0f64;
    for epoch in 0..epochs {
        let g = grad(&z);
        let next = &z - step * &g;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if g.dot(&(&next - &v)) > 0.0 {
            t = 1.0;
            z = next.clone();
        } else {
            z = &next + ((t - 1.0) / t_next) * (&next - &v);
            t = t_next;
        }
        v = next;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence(format!("LIME weights non-finite at epoch {}", epoch + 1)));
        }
    }
    let w = v.component_div(&scale);
    let b = my - mx.dot(&w);
    let loss = objective(&x, y, d, &w, b, ridge);
    if !loss.is_finite() {
        return Err(Error::Divergence("LIME loss is not finite".into()));
    }
    Ok(RidgeFit {
        loss,
        intercept: b,
        weights: w.iter().copied().collect(),
    })
}

/// Per-label linear surrogate over the binary keep-mask of one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeSurrogate {
    pub words: Vec<String>,
    /// One fit per label, in the model's label order.
    pub fits: Vec<RidgeFit>,
    pub sigma2: f64,
}

impl LimeSurrogate {
    pub fn weights(&self, label: usize) -> &[f64] {
        &self.fits[label].weights
    }
}

/// Fits a surrogate for every label from the given perturbations.
pub fn fit_surrogate<C: Classifier>(
    model: &C,
    words: &[&str],
    perturbations: &PerturbationSet,
    config: &LimeConfig,
) -> Result<LimeSurrogate> {
    let repr_x = model.represent(words);
    let scored: Vec<(f64, Vec<f64>)> = (0..perturbations.masks.len())
        .into_par_iter()
        .map(|s| {
            let z = perturbations.apply(s, words);
            let repr_z = model.represent(&z);
            (proximity(&repr_x, &repr_z, config.sigma2), model.decide(&repr_z))
        })
        .collect();
    let d: Vec<f64> = scored.iter().map(|(p, _)| *p).collect();
    let fits = (0..model.labels().len())
        .map(|y| {
            let target: Vec<f64> = scored.iter().map(|(_, h)| h[y]).collect();
            match config.solver {
                Solver::ClosedForm => ridge_closed_form(&perturbations.masks, &target, &d, config.ridge, config.intercept),
                Solver::GradientDescent => ridge_gradient_descent(
                    &perturbations.masks,
                    &target,
                    &d,
                    config.ridge,
                    config.intercept,
                    config.epochs,
                    config.learning_rate,
                ),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LimeSurrogate {
        words: words.iter().map(|w| w.to_string()).collect(),
        fits,
        sigma2: config.sigma2,
    })
}

/// Samples `config.samples` perturbations from `rng` and fits the surrogate.
pub fn fit_lime<C: Classifier>(model: &C, words: &[&str], config: &LimeConfig, rng: &mut ChaCha8Rng) -> Result<LimeSurrogate> {
    if words.is_empty() {
        return Err(Error::EmptyInput("cannot explain an empty sentence".into()));
    }
    let perturbations = sample_perturbations(words.len(), config.samples, rng);
    fit_surrogate(model, words, &perturbations, config)
}
