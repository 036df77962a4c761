//! Bidirectional GRU encoder with backpropagation through time.
//!
//! Per direction and step, with gate rows ordered `z, r, n` in `w`, `u`, `b`:
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + U_n (r * h) + b_n)
//! h' = (1 - z) * n + z * h
//! ```
//!
//! The final states of both directions are concatenated (forward first) and
//! fed to the dense head.

use super::dense::{self, MlpCache};
use super::Tensor;

#[derive(Debug, Clone)]
pub struct BiRnnCache {
    steps: Vec<Vec<f64>>,
    directions: [DirectionCache; 2],
    pub head: MlpCache,
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// States `h_0 ..= h_T` in processing order.
    states: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Splits the beat into `ceil(len / stride)` consecutive chunks; the last one
/// is padded by repeating the final sample.
pub(crate) fn chunk_input(input: &[f64], stride: usize) -> Vec<Vec<f64>> {
    let last = *input.last().unwrap_or(&0.0);
    input
        .chunks(stride)
        .map(|c| {
            let mut v = c.to_vec();
            v.resize(stride, last);
            v
        })
        .collect()
}

fn matvec_acc(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn run_direction(w: &[f64], u: &[f64], b: &[f64], steps: &[&Vec<f64>], hidden: usize) -> DirectionCache {
    let h3 = 3 * hidden;
    let mut cache = DirectionCache {
        states: vec![vec![0.0; hidden]],
        z: Vec::with_capacity(steps.len()),
        r: Vec::with_capacity(steps.len()),
        n: Vec::with_capacity(steps.len()),
    };
    for x in steps {
        let h = cache.states.last().unwrap();
        let mut a = b.to_vec();
        matvec_acc(&mut a, w, x);
        // recurrent part for z and r uses h directly
        matvec_acc(&mut a[..2 * hidden], &u[..2 * hidden * hidden], h);
        let z: Vec<f64> = a[..hidden].iter().map(|&v| sigmoid(v)).collect();
        let r: Vec<f64> = a[hidden..2 * hidden].iter().map(|&v| sigmoid(v)).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        matvec_acc(&mut a[2 * hidden..h3], &u[2 * hidden * hidden..], &rh);
        let n: Vec<f64> = a[2 * hidden..].iter().map(|v| v.tanh()).collect();
        let next = (0..hidden).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
        cache.z.push(z);
        cache.r.push(r);
        cache.n.push(n);
        cache.states.push(next);
    }
    cache
}

pub(crate) fn forward(tensors: &[Tensor], input: &[f64], stride: usize, hidden: usize) -> BiRnnCache {
    let steps = chunk_input(input, stride);
    let fwd_order: Vec<&Vec<f64>> = steps.iter().collect();
    let bwd_order: Vec<&Vec<f64>> = steps.iter().rev().collect();
    let fwd = run_direction(&tensors[0].data, &tensors[1].data, &tensors[2].data, &fwd_order, hidden);
    let bwd = run_direction(&tensors[3].data, &tensors[4].data, &tensors[5].data, &bwd_order, hidden);
    let mut encoded = fwd.states.last().unwrap().clone();
    encoded.extend_from_slice(bwd.states.last().unwrap());
    let head = dense::forward(&tensors[6..], &encoded);
    BiRnnCache {
        steps,
        directions: [fwd, bwd],
        head,
    }
}

/// BPTT for both directions given the gradient at the concatenated final
/// states. Accumulates into `grads[0..6]`.
pub(crate) fn backward(
    tensors: &[Tensor],
    cache: &BiRnnCache,
    hidden: usize,
    d_encoded: &[f64],
    grads: &mut [Vec<f64>],
) {
    let t_len = cache.steps.len();
    for (d, dir) in cache.directions.iter().enumerate() {
        let u = &tensors[3 * d + 1].data;
        let (gw, rest) = grads[3 * d..3 * d + 3].split_at_mut(1);
        let (gu, gb) = rest.split_at_mut(1);
        let (gw, gu, gb) = (&mut gw[0], &mut gu[0], &mut gb[0]);
        let stride = cache.steps[0].len();

        let mut dh = d_encoded[d * hidden..(d + 1) * hidden].to_vec();
        for k in (0..t_len).rev() {
            let x = if d == 0 {
                &cache.steps[k]
            } else {
                &cache.steps[t_len - 1 - k]
            };
            let hp = &dir.states[k];
            let (z, r, n) = (&dir.z[k], &dir.r[k], &dir.n[k]);

            let mut da = vec![0.0; 3 * hidden];
            let mut dhp = vec![0.0; hidden];
            for i in 0..hidden {
                dhp[i] = dh[i] * z[i];
                let dz = dh[i] * (hp[i] - n[i]);
                da[i] = dz * z[i] * (1.0 - z[i]);
                da[2 * hidden + i] = dh[i] * (1.0 - z[i]) * (1.0 - n[i] * n[i]);
            }
            // n gate: a_n depends on r * h through U_n
            let un = &u[2 * hidden * hidden..];
            let mut drh = vec![0.0; hidden];
            for i in 0..hidden {
                let dan = da[2 * hidden + i];
                if dan != 0.0 {
                    for (j, v) in drh.iter_mut().enumerate() {
                        *v += un[i * hidden + j] * dan;
                    }
                }
            }
            for j in 0..hidden {
                dhp[j] += drh[j] * r[j];
                let dr = drh[j] * hp[j];
                da[hidden + j] = dr * r[j] * (1.0 - r[j]);
            }

            for (row, &g) in da.iter().enumerate() {
                gb[row] += g;
                if g == 0.0 {
                    continue;
                }
                for (o, &v) in gw[row * stride..(row + 1) * stride].iter_mut().zip(x) {
                    *o += g * v;
                }
                let gu_row = &mut gu[row * hidden..(row + 1) * hidden];
                if row < 2 * hidden {
                    for (o, &v) in gu_row.iter_mut().zip(hp) {
                        *o += g * v;
                    }
                    let u_row = &u[row * hidden..(row + 1) * hidden];
                    for (o, &a) in dhp.iter_mut().zip(u_row) {
                        *o += g * a;
                    }
                } else {
                    for (j, o) in gu_row.iter_mut().enumerate() {
                        *o += g * r[j] * hp[j];
                    }
                }
            }
            dh = dhp;
        }
    }
}
