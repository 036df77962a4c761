use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ModelParams, Result};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// `(tensor name, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares analytic gradients of `-log p_target` against central finite
/// differences on up to `n_coords` randomly chosen parameter coordinates
/// (all of them when the model is smaller).
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check(
    params: &ModelParams,
    input: &[f64],
    target: usize,
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, analytic) = params.loss_and_grad(input, target)?;
    let total = params.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, total, n_coords.min(total)).into_vec();
    picks.sort_unstable();

    // flat index -> (tensor, offset)
    let mut bounds = Vec::with_capacity(params.tensors.len());
    let mut acc = 0;
    for t in &params.tensors {
        bounds.push(acc);
        acc += t.data.len();
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: picks.len(),
        worst: None,
    };
    for flat in picks {
        let ti = bounds.partition_point(|&b| b <= flat) - 1;
        let off = flat - bounds[ti];
        let original = probe.tensors[ti].data[off];
        probe.tensors[ti].data[off] = original + eps;
        let plus = probe.loss(input, target)?;
        probe.tensors[ti].data[off] = original - eps;
        let minus = probe.loss(input, target)?;
        probe.tensors[ti].data[off] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[ti][off];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        if rel > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(rel);
            report.worst = Some((params.tensors[ti].name.clone(), off, a, numeric));
        }
    }
    Ok(report)
}
