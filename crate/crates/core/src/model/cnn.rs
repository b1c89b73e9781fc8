//! Single-layer CNN encoder: convolution per window size, tanh, max-over-time
//! pooling, concatenated across windows.

use super::{Gradients, Model, SparseRows};
use crate::math::dot;

pub(crate) struct CnnCache {
    /// Input ids, right-padded with the padding index.
    ids: Vec<usize>,
    /// Flattened (padded length x dim) input matrix.
    x: Vec<f64>,
    /// Winning position per (window, filter).
    argmax: Vec<usize>,
    /// Pooled activations, i.e. the representation.
    act: Vec<f64>,
}

fn padded(model: &Model, ids: &[usize]) -> Vec<usize> {
    let largest = model.config.windows.iter().copied().max().unwrap_or(1);
    let mut ids = ids.to_vec();
    while ids.len() < largest {
        ids.push(crate::corpus::Vocabulary::PAD_INDEX);
    }
    ids
}

pub(crate) fn forward(model: &Model, ids: &[usize]) -> (Vec<f64>, CnnCache) {
    let d = model.config.embedding_dim;
    let f_count = model.config.filters_per_window;
    let ids = padded(model, ids);
    let mut x = Vec::with_capacity(ids.len() * d);
    for &id in &ids {
        x.extend_from_slice(model.embedding_row(id));
    }
    let mut act = Vec::with_capacity(model.representation_dim());
    let mut argmax = Vec::with_capacity(model.representation_dim());
    for (j, &w) in model.config.windows.iter().enumerate() {
        let weights = &model.blocks[1 + 2 * j];
        let bias = &model.blocks[2 + 2 * j];
        let span = w * d;
        let positions = ids.len() - w + 1;
        for f in 0..f_count {
            let wf = &weights[f * span..(f + 1) * span];
            let mut best = f64::NEG_INFINITY;
            let mut best_p = 0;
            for p in 0..positions {
                let pre = bias[f] + dot(wf, &x[p * d..p * d + span]);
                if pre > best {
                    best = pre;
                    best_p = p;
                }
            }
            // tanh is monotone, so pooling the pre-activation picks the same position
            act.push(best.tanh());
            argmax.push(best_p);
        }
    }
    let cache = CnnCache {
        ids,
        x,
        argmax,
        act: act.clone(),
    };
    (act, cache)
}

pub(crate) fn backward(model: &Model, cache: &CnnCache, g_rep: &[f64], grads: &mut Gradients) -> SparseRows {
    let d = model.config.embedding_dim;
    let f_count = model.config.filters_per_window;
    let mut g_x = vec![0.0; cache.x.len()];
    for (j, &w) in model.config.windows.iter().enumerate() {
        let weights = &model.blocks[1 + 2 * j];
        let span = w * d;
        for f in 0..f_count {
            let k = j * f_count + f;
            let a = cache.act[k];
            let g_pre = g_rep[k] * (1.0 - a * a);
            if g_pre == 0.0 {
                continue;
            }
            let p = cache.argmax[k];
            let window = &cache.x[p * d..p * d + span];
            let g_w = &mut grads.dense[2 * j][f * span..(f + 1) * span];
            g_w.iter_mut().zip(window).for_each(|(g, xv)| *g += g_pre * xv);
            grads.dense[2 * j + 1][f] += g_pre;
            let wf = &weights[f * span..(f + 1) * span];
            g_x[p * d..p * d + span]
                .iter_mut()
                .zip(wf)
                .for_each(|(g, wv)| *g += g_pre * wv);
        }
    }
    cache
        .ids
        .iter()
        .enumerate()
        .map(|(p, &id)| (id, g_x[p * d..(p + 1) * d].to_vec()))
        .collect()
}

/// Per-word filter responses: for each vocabulary word, window `j`, offset `o`
/// and filter `f`, the dot product of the filter slice with the word vector.
pub(crate) fn build_projection(model: &Model) -> Vec<f64> {
    let d = model.config.embedding_dim;
    let f_count = model.config.filters_per_window;
    let per_word: usize = model.config.windows.iter().sum::<usize>() * f_count;
    let mut proj = Vec::with_capacity(per_word * model.vocab.len());
    for id in 0..model.vocab.len() {
        let e = model.embedding_row(id);
        for (j, &w) in model.config.windows.iter().enumerate() {
            let weights = &model.blocks[1 + 2 * j];
            let span = w * d;
            for o in 0..w {
                for f in 0..f_count {
                    proj.push(dot(&weights[f * span + o * d..f * span + (o + 1) * d], e));
                }
            }
        }
    }
    proj
}

pub(crate) fn forward_projected(model: &Model, proj: &[f64], ids: &[usize]) -> Vec<f64> {
    let f_count = model.config.filters_per_window;
    let per_word: usize = model.config.windows.iter().sum::<usize>() * f_count;
    let ids = padded(model, ids);
    let mut act = Vec::with_capacity(model.representation_dim());
    let mut offset = 0;
    let mut pre = vec![0.0; f_count];
    let mut best = vec![0.0; f_count];
    for (j, &w) in model.config.windows.iter().enumerate() {
        let bias = &model.blocks[2 + 2 * j];
        best.iter_mut().for_each(|b| *b = f64::NEG_INFINITY);
        for p in 0..ids.len() - w + 1 {
            pre.copy_from_slice(bias);
            for o in 0..w {
                let base = ids[p + o] * per_word + offset + o * f_count;
                pre.iter_mut()
                    .zip(&proj[base..base + f_count])
                    .for_each(|(a, b)| *a += b);
            }
            best.iter_mut().zip(&pre).for_each(|(b, v)| {
                if *v > *b {
                    *b = *v
                }
            });
        }
        act.extend(best.iter().map(|b| b.tanh()));
        offset += w * f_count;
    }
    act
}
