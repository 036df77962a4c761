//! View classifiers with hand-written gradients.
//!
//! Parameters live in a flat list of named [`Tensor`]s so the optimizer,
//! the gradient checker and checkpointing can treat every architecture the
//! same way. Gradients use the same layout ([`Gradients`]).

mod birnn;
mod dense;
mod gradcheck;
mod train;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use birnn::BiRnnCache;
pub use dense::MlpCache;
pub use gradcheck::{grad_check, GradCheckReport};
pub use train::{train, write_history_csv, Adam, EpochStats, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no training samples")]
    EmptyDataset,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Which input representation a classifier consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    /// Raw normalized beat.
    TimeSeries,
    /// Flattened, downsampled GAF.
    Image,
    /// Concatenated penultimate features of both views.
    Features,
}

/// A class-probability vector emitted by one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    pub p: Vec<f64>,
    pub view: ViewKind,
}

impl ClassProbs {
    pub fn argmax(&self) -> usize {
        argmax(&self.p)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log p_target` computed from logits.
pub(crate) fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Architecture {
    /// Bidirectional GRU over the beat, cut into `ceil(input_len / stride)`
    /// steps of `stride` samples, followed by ReLU dense layers.
    BiRnn {
        input_len: usize,
        stride: usize,
        hidden: usize,
        dense: Vec<usize>,
        classes: usize,
    },
    /// ReLU MLP; with no hidden layers this is softmax regression.
    Mlp {
        inputs: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
}

impl Architecture {
    pub fn classes(&self) -> usize {
        match self {
            Architecture::BiRnn { classes, .. } | Architecture::Mlp { classes, .. } => *classes,
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Architecture::BiRnn { input_len, .. } => *input_len,
            Architecture::Mlp { inputs, .. } => *inputs,
        }
    }

    /// Width of [`ModelParams::penultimate`].
    pub fn feature_len(&self) -> usize {
        match self {
            Architecture::BiRnn { hidden, dense, .. } => dense.last().copied().unwrap_or(2 * hidden),
            Architecture::Mlp { inputs, hidden, .. } => hidden.last().copied().unwrap_or(*inputs),
        }
    }

    /// Input width and sizes of the dense stack (hidden layers then output).
    fn dense_stack(&self) -> (usize, Vec<usize>) {
        let (input, hidden, classes) = match self {
            Architecture::BiRnn {
                hidden, dense, classes, ..
            } => (2 * hidden, dense, classes),
            Architecture::Mlp {
                inputs,
                hidden,
                classes,
            } => (*inputs, hidden, classes),
        };
        let mut sizes = hidden.clone();
        sizes.push(*classes);
        (input, sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }

    fn uniform(name: impl Into<String>, shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut t = Self::zeros(name, shape);
        for v in &mut t.data {
            *v = rng.gen_range(-bound..bound);
        }
        t
    }
}

/// Per-tensor gradients, index-aligned with [`ModelParams::tensors`].
pub type Gradients = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub view: ViewKind,
    pub tensors: Vec<Tensor>,
}

/// Activations kept by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Mlp(MlpCache),
    BiRnn(BiRnnCache),
}

impl Cache {
    pub fn penultimate(&self) -> &[f64] {
        match self {
            Cache::Mlp(c) => c.penultimate(),
            Cache::BiRnn(c) => c.head.penultimate(),
        }
    }
}

impl ModelParams {
    /// Randomly initialized parameters. GRU weights are uniform in
    /// `±1/sqrt(hidden)`, ReLU layers use He-uniform and the output layer
    /// Glorot-uniform bounds. Biases start at zero.
    pub fn init(arch: Architecture, view: ViewKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        if let Architecture::BiRnn { stride, hidden, .. } = &arch {
            let bound = 1.0 / (*hidden as f64).sqrt();
            for dir in ["fwd", "bwd"] {
                tensors.push(Tensor::uniform(format!("{dir}.w"), vec![3 * hidden, *stride], bound, &mut rng));
                tensors.push(Tensor::uniform(format!("{dir}.u"), vec![3 * hidden, *hidden], bound, &mut rng));
                tensors.push(Tensor::zeros(format!("{dir}.b"), vec![3 * hidden]));
            }
        }
        let (mut fan_in, sizes) = arch.dense_stack();
        let last = sizes.len() - 1;
        for (l, &out) in sizes.iter().enumerate() {
            let (name, bound) = if l == last {
                ("out".to_string(), (6.0 / (fan_in + out) as f64).sqrt())
            } else {
                (format!("dense{l}"), (6.0 / fan_in as f64).sqrt())
            };
            tensors.push(Tensor::uniform(format!("{name}.weight"), vec![out, fan_in], bound, &mut rng));
            tensors.push(Tensor::zeros(format!("{name}.bias"), vec![out]));
            fan_in = out;
        }
        Self { arch, view, tensors }
    }

    /// All-zero parameters with the layout of `arch`.
    pub fn zeros(arch: Architecture, view: ViewKind) -> Self {
        let mut p = Self::init(arch, view, 0);
        for t in &mut p.tensors {
            t.data.fill(0.0);
        }
        p
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_index(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    /// Index of the first dense-stack tensor.
    fn dense_offset(&self) -> usize {
        match self.arch {
            Architecture::BiRnn { .. } => 6,
            Architecture::Mlp { .. } => 0,
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        let want = self.arch.input_len();
        if input.len() != want {
            return Err(ModelError::ShapeMismatch(format!(
                "input has {} values, model expects {want}",
                input.len()
            )));
        }
        Ok(())
    }

    /// Logits plus the activations needed by [`ModelParams::backward`].
    pub fn forward_logits(&self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        self.check_input(input)?;
        match &self.arch {
            Architecture::Mlp { .. } => {
                let cache = dense::forward(&self.tensors, input);
                Ok((cache.logits().to_vec(), Cache::Mlp(cache)))
            }
            Architecture::BiRnn { stride, hidden, .. } => {
                let cache = birnn::forward(&self.tensors, input, *stride, *hidden);
                Ok((cache.head.logits().to_vec(), Cache::BiRnn(cache)))
            }
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(ClassProbs, Cache)> {
        let (logits, cache) = self.forward_logits(input)?;
        Ok((
            ClassProbs {
                p: softmax(&logits),
                view: self.view,
            },
            cache,
        ))
    }

    pub fn predict(&self, input: &[f64]) -> Result<ClassProbs> {
        Ok(self.forward(input)?.0)
    }

    pub fn loss(&self, input: &[f64], target: usize) -> Result<f64> {
        let (logits, _) = self.forward_logits(input)?;
        Ok(cross_entropy(&logits, target))
    }

    /// Exact gradient of `-log p_target` for the forward pass in `cache`.
    pub fn backward(&self, cache: &Cache, target: usize) -> Result<Gradients> {
        if target >= self.arch.classes() {
            return Err(ModelError::ShapeMismatch(format!(
                "target {target} outside {} classes",
                self.arch.classes()
            )));
        }
        let mut grads = self.zero_grads();
        let offset = self.dense_offset();
        match (&self.arch, cache) {
            (Architecture::Mlp { .. }, Cache::Mlp(c)) => {
                dense::backward(&self.tensors, c, target, &mut grads);
            }
            (Architecture::BiRnn { hidden, .. }, Cache::BiRnn(c)) => {
                let d_head_input =
                    dense::backward(&self.tensors[offset..], &c.head, target, &mut grads[offset..]);
                birnn::backward(&self.tensors, c, *hidden, &d_head_input, &mut grads);
            }
            _ => {
                return Err(ModelError::ShapeMismatch(
                    "cache does not come from this architecture".into(),
                ))
            }
        }
        Ok(grads)
    }

    /// Loss and gradient for one sample.
    pub fn loss_and_grad(&self, input: &[f64], target: usize) -> Result<(f64, Gradients)> {
        let (logits, cache) = self.forward_logits(input)?;
        let loss = cross_entropy(&logits, target);
        Ok((loss, self.backward(&cache, target)?))
    }

    /// Activations of the last hidden layer (the softmax layer's input).
    pub fn penultimate(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (_, cache) = self.forward_logits(input)?;
        Ok(cache.penultimate().to_vec())
    }

    /// Class probabilities and penultimate activations from one forward pass.
    pub fn predict_with_features(&self, input: &[f64]) -> Result<(ClassProbs, Vec<f64>)> {
        let (probs, cache) = self.forward(input)?;
        Ok((probs, cache.penultimate().to_vec()))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn save(&self, path: &Path, seed: u64, config: &TrainConfig) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, &Checkpoint::new(self.clone(), seed, config))
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.validate()?;
        Ok(ckpt)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON tensor dump of trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: ModelParams,
    pub seed: u64,
    /// FNV-1a of the serialized training config.
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(params: ModelParams, seed: u64, config: &TrainConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            params,
            seed,
            config_hash: config.fingerprint(),
        }
    }

    fn validate(&self) -> Result<()> {
        let reference = ModelParams::zeros(self.params.arch.clone(), self.params.view);
        let ok = reference.tensors.len() == self.params.tensors.len()
            && reference
                .tensors
                .iter()
                .zip(&self.params.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape && a.data.len() == b.data.len());
        if !ok {
            return Err(ModelError::Checkpoint(
                "tensor layout does not match the architecture".into(),
            ));
        }
        if !self.params.is_finite() {
            return Err(ModelError::NonFinite("checkpoint parameters".into()));
        }
        Ok(())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
