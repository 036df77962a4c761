//! Stack of fully connected layers: ReLU on every layer but the last, whose
//! output is the logit vector. Tensors come in `[weight, bias]` pairs with
//! weights stored row-major as `[out, in]`.

use super::{softmax, Tensor};

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer; `layer_inputs[0]` is the stack input.
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer; the last one holds the logits.
    pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("dense stack has an output layer")
    }

    /// Input to the output layer.
    pub fn penultimate(&self) -> &[f64] {
        self.layer_inputs.last().expect("dense stack has an output layer")
    }
}

pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            bias + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
        })
        .collect()
}

pub(crate) fn forward(tensors: &[Tensor], input: &[f64]) -> MlpCache {
    let n_layers = tensors.len() / 2;
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers);
    let mut x = input.to_vec();
    for l in 0..n_layers {
        let z = affine(&tensors[2 * l].data, &tensors[2 * l + 1].data, &x);
        let next = if l + 1 < n_layers {
            z.iter().map(|v| v.max(0.0)).collect()
        } else {
            Vec::new()
        };
        layer_inputs.push(std::mem::replace(&mut x, next));
        pre.push(z);
    }
    MlpCache { layer_inputs, pre }
}

/// Accumulates cross-entropy gradients into `grads` and returns the gradient
/// with respect to the stack input.
pub(crate) fn backward(tensors: &[Tensor], cache: &MlpCache, target: usize, grads: &mut [Vec<f64>]) -> Vec<f64> {
    let n_layers = tensors.len() / 2;
    let mut delta = softmax(cache.logits());
    delta[target] -= 1.0;

    for l in (0..n_layers).rev() {
        let x = &cache.layer_inputs[l];
        let cols = x.len();
        let w = &tensors[2 * l].data;
        {
            let (gw, rest) = grads[2 * l..].split_at_mut(1);
            let gw = &mut gw[0];
            let gb = &mut rest[0];
            for (r, &d) in delta.iter().enumerate() {
                gb[r] += d;
                if d != 0.0 {
                    for (g, &v) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                        *g += d * v;
                    }
                }
            }
        }
        let mut dx = vec![0.0; cols];
        for (r, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                for (o, &a) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                    *o += d * a;
                }
            }
        }
        if l > 0 {
            // through the ReLU of the previous layer
            for (o, &z) in dx.iter_mut().zip(&cache.pre[l - 1]) {
                if z <= 0.0 {
                    *o = 0.0;
                }
            }
        }
        delta = dx;
    }
    delta
}
