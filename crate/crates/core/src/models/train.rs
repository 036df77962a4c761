use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, fnv1a, Architecture, Gradients, ModelError, ModelParams, Result, ViewKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping; `None`
    /// trains for `max_epochs`.
    pub patience: Option<usize>,
    /// Share of the training samples held out for early stopping.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            max_epochs: 30,
            patience: Some(5),
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ModelError::BadConfig(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(ModelError::BadConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(ModelError::BadConfig(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ModelError::BadConfig("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        format!("{:016x}", fnv1a(json.as_bytes()))
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        Self {
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            step: 0,
            m: params.zero_grads(),
            v: params.zero_grads(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (ti, t) in params.tensors.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[ti], &mut self.v[ti], &grads[ti]);
            for i in 0..t.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                t.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch (each measured before its update).
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation loss (or the last epoch's, without
    /// a validation set).
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn write_history_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_history_csv(&self.history, out)
    }
}

/// `epoch,train_loss,val_loss,val_acc`; empty cells when no validation set.
pub fn write_history_csv<W: Write>(history: &[EpochStats], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,val_acc")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    for h in history {
        writeln!(
            out,
            "{},{:.9},{},{}",
            h.epoch,
            h.train_loss,
            opt(h.val_loss),
            opt(h.val_accuracy)
        )?;
    }
    out.flush()
}

/// Loss and summed gradient of a batch. Samples are evaluated in parallel and
/// reduced in index order, so the result does not depend on thread count.
fn batch_gradient(params: &ModelParams, inputs: &[Vec<f64>], labels: &[usize], batch: &[usize]) -> Result<(f64, usize, Gradients)> {
    let per_sample: Vec<(f64, usize, Gradients)> = batch
        .par_iter()
        .map(|&i| {
            let (logits, cache) = params.forward_logits(&inputs[i])?;
            let loss = super::cross_entropy(&logits, labels[i]);
            let correct = usize::from(argmax(&logits) == labels[i]);
            Ok((loss, correct, params.backward(&cache, labels[i])?))
        })
        .collect::<Result<_>>()?;

    let mut total = params.zero_grads();
    let mut loss = 0.0;
    let mut correct = 0;
    for (l, c, g) in per_sample {
        loss += l;
        correct += c;
        for (acc, part) in total.iter_mut().zip(&g) {
            for (a, v) in acc.iter_mut().zip(part) {
                *a += v;
            }
        }
    }
    Ok((loss, correct, total))
}

/// Mean loss and accuracy over `indices`.
pub(crate) fn evaluate(params: &ModelParams, inputs: &[Vec<f64>], labels: &[usize], indices: &[usize]) -> Result<(f64, f64)> {
    let rows: Vec<(f64, bool)> = indices
        .par_iter()
        .map(|&i| {
            let (logits, _) = params.forward_logits(&inputs[i])?;
            Ok((super::cross_entropy(&logits, labels[i]), argmax(&logits) == labels[i]))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let loss = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = rows.iter().filter(|r| r.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Mini-batch Adam on cross-entropy.
///
/// With `val_fraction > 0` a seeded share of the samples is held out; when
/// `patience` is set, training stops after that many epochs without a lower
/// validation loss and the best parameters are returned. Initialization,
/// hold-out and every epoch's shuffle derive from `config.seed`.
pub fn train(
    arch: Architecture,
    view: ViewKind,
    inputs: &[Vec<f64>],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if inputs.len() != labels.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= arch.classes()) {
        return Err(ModelError::ShapeMismatch(format!(
            "label {bad} outside {} classes",
            arch.classes()
        )));
    }

    let mut params = ModelParams::init(arch, view, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (config.val_fraction * inputs.len() as f64).floor() as usize;
    let n_val = n_val.min(inputs.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::new(&params, config);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in train_idx.chunks(config.batch_size) {
            let (loss, c, mut grads) = batch_gradient(&params, inputs, labels, batch)?;
            let scale = 1.0 / batch.len() as f64;
            for g in grads.iter_mut().flatten() {
                *g *= scale;
            }
            loss_sum += loss;
            correct += c;
            adam.step(&mut params, &grads);
        }
        if !loss_sum.is_finite() || !params.is_finite() {
            return Err(ModelError::NonFinite(format!("training diverged in epoch {epoch}")));
        }
        let n = train_idx.len() as f64;
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&params, inputs, labels, &val_idx)?;
            (Some(l), Some(a))
        };
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy: val_acc,
        });

        if let Some(vl) = val_loss {
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if config.patience.is_some_and(|p| stale >= p) {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let last_epoch = history.len().saturating_sub(1);
    let (params, best_epoch) = match best {
        Some((_, epoch, p)) if config.patience.is_some() => (p, epoch),
        _ => (params, last_epoch),
    };
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<usize>) {
        let inputs: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let c = i % 3;
                (0..6).map(|j| ((i * 13 + j * 7) % 10) as f64 / 20.0 + if j == c { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        let labels = (0..40).map(|i| i % 3).collect();
        (inputs, labels)
    }

    fn arch() -> Architecture {
        Architecture::Mlp {
            inputs: 6,
            hidden: vec![8],
            classes: 3,
        }
    }

    #[test]
    fn zero_lr_leaves_params() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            lr: 0.0,
            max_epochs: 3,
            ..Default::default()
        };
        let out = train(arch(), ViewKind::Image, &x, &y, &cfg).unwrap();
        assert_eq!(out.params, ModelParams::init(arch(), ViewKind::Image, cfg.seed));
        let losses: Vec<f64> = out.history.iter().map(|h| h.val_loss.unwrap()).collect();
        assert!(losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn loss_falls_over_first_epochs() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            batch_size: 64,
            max_epochs: 5,
            patience: None,
            val_fraction: 0.0,
            ..Default::default()
        };
        let out = train(arch(), ViewKind::Image, &x, &y, &cfg).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|h| h.train_loss).collect();
        assert_eq!(losses.len(), 5);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn deterministic() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            max_epochs: 5,
            batch_size: 8,
            seed: 3,
            ..Default::default()
        };
        let a = train(arch(), ViewKind::Image, &x, &y, &cfg).unwrap();
        let b = train(arch(), ViewKind::Image, &x, &y, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn early_stopping_restores_best() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            lr: 0.5,
            max_epochs: 60,
            patience: Some(2),
            val_fraction: 0.25,
            ..Default::default()
        };
        let out = train(arch(), ViewKind::Image, &x, &y, &cfg).unwrap();
        let best = out
            .history
            .iter()
            .map(|h| h.val_loss.unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.history[out.best_epoch].val_loss.unwrap(), best);
        if out.stopped_early {
            assert_eq!(out.history.len(), out.best_epoch + 3);
        }
    }

    #[test]
    fn errors() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(arch(), ViewKind::Image, &[], &[], &cfg),
            Err(ModelError::EmptyDataset)
        ));
        let (x, mut y) = toy();
        y[0] = 7;
        assert!(matches!(
            train(arch(), ViewKind::Image, &x, &y, &cfg),
            Err(ModelError::ShapeMismatch(_))
        ));
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(ModelError::BadConfig(_))));
    }

    #[test]
    fn history_csv() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            max_epochs: 2,
            ..Default::default()
        };
        let out = train(arch(), ViewKind::Image, &x, &y, &cfg).unwrap();
        let mut buf = Vec::new();
        out.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss,val_acc");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
    }
}
