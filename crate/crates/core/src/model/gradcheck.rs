use serde::Serialize;

use super::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSelection {
    All,
    HeadsOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Per parameter block: `(name, max relative error, parameters checked)`.
    pub blocks: Vec<(String, f64, usize)>,
}

/// Gradients smaller than this are compared on an absolute scale; central
/// differences at ε = 1e-5 carry rounding noise near 1e-11.
const MAGNITUDE_FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Compares analytic gradients with central differences of step `epsilon`.
///
/// Embedding rows are checked only for ids present in the example (other rows
/// have exactly zero gradient both ways); the padding row is never a parameter.
pub fn grad_check(model: &Model, ids: &[usize], label: usize, epsilon: f64, selection: BlockSelection) -> GradCheckReport {
    let (_, grads) = model.loss_and_gradient(ids, label, None);
    let mut probe = model.clone();
    let d = model.config().embedding_dim;
    let n_blocks = model.blocks().len();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        blocks: Vec::new(),
    };

    for b in 0..n_blocks {
        if selection == BlockSelection::HeadsOnly && b != n_blocks - 1 {
            continue;
        }
        let (indices, analytic): (Vec<usize>, Vec<f64>) = if b == 0 {
            if model.config().freeze_embeddings {
                continue;
            }
            let mut rows: Vec<usize> = ids.iter().copied().filter(|&i| i != 0).collect();
            rows.sort_unstable();
            rows.dedup();
            rows.iter()
                .flat_map(|&r| {
                    let g = grads.embedding.get(&r);
                    (0..d).map(move |k| (r * d + k, g.map_or(0.0, |g| g[k])))
                })
                .unzip()
        } else {
            (0..model.blocks()[b].len())
                .map(|i| (i, grads.dense[b - 1][i]))
                .unzip()
        };

        let mut worst = 0.0f64;
        for (&i, &g_a) in indices.iter().zip(&analytic) {
            let original = probe.blocks()[b][i];
            probe.blocks_mut()[b][i] = original + epsilon;
            let plus = probe.loss(ids, label);
            probe.blocks_mut()[b][i] = original - epsilon;
            let minus = probe.loss(ids, label);
            probe.blocks_mut()[b][i] = original;
            let g_n = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(g_a, g_n));
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report
            .blocks
            .push((model.block_names()[b].clone(), worst, indices.len()));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny;
    use crate::model::Architecture;

    #[test]
    fn heads_match_to_rounding() {
        for arch in [Architecture::Cnn, Architecture::Rnn] {
            let m = tiny(arch, 4);
            let ids = m.encode(&["good", "film", "the"]);
            let r = grad_check(&m, &ids, 1, 1e-5, BlockSelection::HeadsOnly);
            assert!(r.max_relative_error < 1e-8, "{arch:?}: {r:?}");
        }
    }

    #[test]
    fn full_models_match_finite_differences() {
        for arch in [Architecture::Cnn, Architecture::Rnn] {
            for seed in 0..5 {
                let m = tiny(arch, seed);
                let ids = m.encode(&["good", "film", "the", "bad", "plot", "good"]);
                let r = grad_check(&m, &ids, (seed % 2) as usize, 1e-5, BlockSelection::All);
                assert!(r.max_relative_error < 1e-4, "{arch:?} seed {seed}: {r:?}");
            }
        }
    }

    #[test]
    fn short_input_through_padding() {
        let m = tiny(Architecture::Cnn, 9);
        let ids = m.encode(&["good"]);
        let r = grad_check(&m, &ids, 0, 1e-5, BlockSelection::All);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}
