//! Unidirectional single-layer LSTM encoder; the representation is the last
//! hidden state. Gate rows are ordered input, forget, cell, output.

use super::{Gradients, Model, SparseRows};
use crate::math::dot;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) struct LstmCache {
    ids: Vec<usize>,
    /// Per step: gate activations (4h), cell state, hidden state.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

/// One step from the precomputed input contribution `z` (4h, already holding W_x x_t).
fn step(model: &Model, mut z: Vec<f64>, h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = model.config.hidden;
    let w_h = &model.blocks[2];
    let bias = &model.blocks[3];
    for (r, zr) in z.iter_mut().enumerate() {
        *zr += bias[r] + dot(&w_h[r * h..(r + 1) * h], h_prev);
    }
    for r in 0..4 * h {
        z[r] = if (2 * h..3 * h).contains(&r) {
            z[r].tanh()
        } else {
            sigmoid(z[r])
        };
    }
    let mut c = vec![0.0; h];
    let mut hid = vec![0.0; h];
    for k in 0..h {
        c[k] = z[h + k] * c_prev[k] + z[k] * z[2 * h + k];
        hid[k] = z[3 * h + k] * c[k].tanh();
    }
    (z, c, hid)
}

fn input_part(model: &Model, id: usize) -> Vec<f64> {
    let d = model.config.embedding_dim;
    let w_x = &model.blocks[1];
    let x = model.embedding_row(id);
    (0..4 * model.config.hidden)
        .map(|r| dot(&w_x[r * d..(r + 1) * d], x))
        .collect()
}

pub(crate) fn forward(model: &Model, ids: &[usize]) -> (Vec<f64>, LstmCache) {
    let h = model.config.hidden;
    let mut cache = LstmCache {
        ids: ids.to_vec(),
        gates: Vec::with_capacity(ids.len()),
        cells: Vec::with_capacity(ids.len()),
        hiddens: Vec::with_capacity(ids.len()),
    };
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for &id in ids {
        let (g, c, hid) = step(model, input_part(model, id), &h_prev, &c_prev);
        cache.gates.push(g);
        cache.cells.push(c.clone());
        cache.hiddens.push(hid.clone());
        h_prev = hid;
        c_prev = c;
    }
    (h_prev, cache)
}

pub(crate) fn backward(model: &Model, cache: &LstmCache, g_rep: &[f64], grads: &mut Gradients) -> SparseRows {
    let h = model.config.hidden;
    let d = model.config.embedding_dim;
    let w_x = &model.blocks[1];
    let w_h = &model.blocks[2];
    let zeros = vec![0.0; h];
    let mut g_h = g_rep.to_vec();
    let mut g_c = vec![0.0; h];
    let mut rows = Vec::with_capacity(cache.ids.len());
    for t in (0..cache.ids.len()).rev() {
        let gates = &cache.gates[t];
        let c = &cache.cells[t];
        let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zeros };
        let h_prev = if t > 0 { &cache.hiddens[t - 1] } else { &zeros };
        let mut g_z = vec![0.0; 4 * h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = c[k].tanh();
            let gc = g_c[k] + g_h[k] * o * (1.0 - tc * tc);
            g_z[k] = gc * g * i * (1.0 - i);
            g_z[h + k] = gc * c_prev[k] * f * (1.0 - f);
            g_z[2 * h + k] = gc * i * (1.0 - g * g);
            g_z[3 * h + k] = g_h[k] * tc * o * (1.0 - o);
            g_c[k] = gc * f;
        }
        let x = model.embedding_row(cache.ids[t]);
        let mut g_x = vec![0.0; d];
        let mut g_h_prev = vec![0.0; h];
        for (r, &gz) in g_z.iter().enumerate() {
            if gz == 0.0 {
                continue;
            }
            grads.dense[0][r * d..(r + 1) * d]
                .iter_mut()
                .zip(x)
                .for_each(|(a, b)| *a += gz * b);
            grads.dense[1][r * h..(r + 1) * h]
                .iter_mut()
                .zip(h_prev)
                .for_each(|(a, b)| *a += gz * b);
            grads.dense[2][r] += gz;
            g_x.iter_mut()
                .zip(&w_x[r * d..(r + 1) * d])
                .for_each(|(a, b)| *a += gz * b);
            g_h_prev
                .iter_mut()
                .zip(&w_h[r * h..(r + 1) * h])
                .for_each(|(a, b)| *a += gz * b);
        }
        rows.push((cache.ids[t], g_x));
        g_h = g_h_prev;
    }
    rows
}

/// `W_x e` for every vocabulary word.
pub(crate) fn build_projection(model: &Model) -> Vec<f64> {
    (0..model.vocab.len())
        .flat_map(|id| input_part(model, id))
        .collect()
}

pub(crate) fn forward_projected(model: &Model, proj: &[f64], ids: &[usize]) -> Vec<f64> {
    let h = model.config.hidden;
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for &id in ids {
        let z = proj[id * 4 * h..(id + 1) * 4 * h].to_vec();
        let (_, c, hid) = step(model, z, &h_prev, &c_prev);
        h_prev = hid;
        c_prev = c;
    }
    h_prev
}
