//! Beat segmentation, normalization, train/test splitting and SMOTE.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wfdb::{map_to_aami, AamiClass, Annotation, BeatLabel, ClassSet};

#[derive(Debug, Error, PartialEq)]
pub enum BeatError {
    #[error("record has no samples")]
    EmptyRecord,
    #[error("no beats to split")]
    EmptyDataset,
    #[error("split ratio {0} leaves an empty train or test split")]
    BadRatio(f64),
    #[error("beats have inconsistent lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("window parameters must be positive")]
    BadWindow,
}

pub type Result<T> = std::result::Result<T, BeatError>;

/// A fixed-length single-lead heartbeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub samples: Vec<f64>,
    pub label: AamiClass,
    pub record_id: String,
    pub r_peak: usize,
    /// Created by oversampling rather than cut from a record.
    #[serde(default)]
    pub synthetic: bool,
}

impl Beat {
    pub fn new(samples: Vec<f64>, label: AamiClass) -> Self {
        Self {
            samples,
            label,
            record_id: String::new(),
            r_peak: 0,
            synthetic: false,
        }
    }

    pub fn normalized(&self) -> Beat {
        Beat {
            samples: minmax_normalize(&self.samples),
            ..self.clone()
        }
    }
}

/// Extraction window around each R peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatWindow {
    pub pre_ms: f64,
    pub post_ms: f64,
    /// Output length after resampling.
    pub len: usize,
}

impl Default for BeatWindow {
    fn default() -> Self {
        Self {
            pre_ms: 250.0,
            post_ms: 400.0,
            len: 187,
        }
    }
}

/// Linear interpolation onto `n_out` points with both endpoints preserved.
pub fn linear_resample(x: &[f64], n_out: usize) -> Vec<f64> {
    match (x.len(), n_out) {
        (_, 0) => Vec::new(),
        (0, _) => Vec::new(),
        (1, _) => vec![x[0]; n_out],
        (_, 1) => vec![x[0]],
        (n_in, _) => {
            let scale = (n_in - 1) as f64 / (n_out - 1) as f64;
            (0..n_out)
                .map(|j| {
                    let pos = j as f64 * scale;
                    let i = (pos.floor() as usize).min(n_in - 2);
                    let frac = pos - i as f64;
                    x[i] + frac * (x[i + 1] - x[i])
                })
                .collect()
        }
    }
}

/// Cuts one beat per beat annotation. Windows that cross the record bounds,
/// non-beat annotations and classes outside `classes` are skipped.
pub fn segment_beats(
    signal: &[f64],
    rate: f64,
    annotations: &[Annotation],
    window: &BeatWindow,
    classes: ClassSet,
    record_id: &str,
) -> Result<Vec<Beat>> {
    if signal.is_empty() {
        return Err(BeatError::EmptyRecord);
    }
    if !(window.pre_ms > 0.0 && window.post_ms > 0.0 && window.len >= 2) {
        return Err(BeatError::BadWindow);
    }
    let pre = (window.pre_ms * rate / 1000.0).round() as usize;
    let post = (window.post_ms * rate / 1000.0).round() as usize;

    let beats = annotations
        .iter()
        .filter_map(|a| match map_to_aami(a.symbol) {
            BeatLabel::Beat(c) if classes.contains(c) => Some((a.sample as usize, c)),
            _ => None,
        })
        .filter_map(|(r, label)| {
            let start = r.checked_sub(pre)?;
            let end = r + post;
            if end > signal.len() {
                return None;
            }
            Some(Beat {
                samples: linear_resample(&signal[start..end], window.len),
                label,
                record_id: record_id.to_string(),
                r_peak: r,
                synthetic: false,
            })
        })
        .collect();
    Ok(beats)
}

/// Min-max scaling to [0, 1]; a constant vector maps to 0.5.
pub fn minmax_normalize(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.5; v.len()];
    }
    v.iter()
        .map(|&x| ((x - lo) / span).clamp(0.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Per-class 80/20 over pooled beats (intra-patient).
    #[default]
    Stratified,
    /// Whole records go to one side.
    Record,
}

/// Train/test beats. Both splits hold beats exactly as segmented (mV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<Beat>,
    pub test: Vec<Beat>,
    pub n_classes: usize,
    pub seed: u64,
}

fn group_by_class(beats: Vec<Beat>) -> BTreeMap<AamiClass, Vec<Beat>> {
    let mut groups: BTreeMap<AamiClass, Vec<Beat>> = BTreeMap::new();
    for b in beats {
        groups.entry(b.label).or_default().push(b);
    }
    groups
}

fn check_lengths(beats: &[Beat]) -> Result<()> {
    if let Some(first) = beats.first() {
        if let Some(b) = beats.iter().find(|b| b.samples.len() != first.samples.len()) {
            return Err(BeatError::LengthMismatch(first.samples.len(), b.samples.len()));
        }
    }
    Ok(())
}

/// Per-class split: the first `floor(ratio * count)` beats of each shuffled
/// class go to train. Class `c` is shuffled with seed `seed + c`.
pub fn stratified_split(beats: Vec<Beat>, ratio: f64, seed: u64, n_classes: usize) -> Result<Dataset> {
    if beats.is_empty() {
        return Err(BeatError::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(BeatError::BadRatio(ratio));
    }
    check_lengths(&beats)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut group) in group_by_class(beats) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(class.index() as u64));
        group.shuffle(&mut rng);
        let n_train = (ratio * group.len() as f64).floor() as usize;
        test.extend(group.split_off(n_train));
        train.extend(group);
    }
    if train.is_empty() || test.is_empty() {
        return Err(BeatError::BadRatio(ratio));
    }
    Ok(Dataset {
        train,
        test,
        n_classes,
        seed,
    })
}

/// Record-wise split: records are shuffled and the first `floor(ratio * n)`
/// (at least one, at most n - 1) go to train.
pub fn record_split(beats: Vec<Beat>, ratio: f64, seed: u64, n_classes: usize) -> Result<Dataset> {
    if beats.is_empty() {
        return Err(BeatError::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(BeatError::BadRatio(ratio));
    }
    check_lengths(&beats)?;
    let mut records: Vec<String> = beats
        .iter()
        .map(|b| b.record_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if records.len() < 2 {
        return Err(BeatError::BadRatio(ratio));
    }
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * records.len() as f64).floor() as usize).clamp(1, records.len() - 1);
    let train_records: BTreeSet<&String> = records[..n_train].iter().collect();
    let (train, test) = beats
        .into_iter()
        .partition(|b| train_records.contains(&b.record_id));
    Ok(Dataset {
        train,
        test,
        n_classes,
        seed,
    })
}

pub fn split(
    beats: Vec<Beat>,
    mode: SplitMode,
    ratio: f64,
    seed: u64,
    n_classes: usize,
) -> Result<Dataset> {
    match mode {
        SplitMode::Stratified => stratified_split(beats, ratio, seed, n_classes),
        SplitMode::Record => record_split(beats, ratio, seed, n_classes),
    }
}

pub fn class_counts(beats: &[Beat]) -> BTreeMap<AamiClass, usize> {
    let mut counts = BTreeMap::new();
    for b in beats {
        *counts.entry(b.label).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoteReport {
    /// Classes with a single member, which could only be duplicated.
    pub singleton_classes: Vec<AamiClass>,
    pub synthetic_per_class: BTreeMap<AamiClass, usize>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest members of `group` to `group[i]`, excluding `i`.
/// Ties resolve to the lower index.
fn nearest_neighbours(group: &[&Beat], i: usize, k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = group
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, b)| (squared_distance(&group[i].samples, &b.samples), j))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.truncate(k);
    dist.into_iter().map(|(_, j)| j).collect()
}

/// Oversamples every class up to the majority count.
///
/// The input beats are returned first and unchanged; synthetic beats follow,
/// class by class. Each one is `x + u * (x_nn - x)` for a base member `x`
/// (taken round-robin), one of its `k` nearest same-class neighbours `x_nn`
/// (Euclidean) and `u ~ U[0, 1)`. Class `c` draws from seed `seed + c`.
pub fn smote(train: &[Beat], k: usize, seed: u64) -> (Vec<Beat>, SmoteReport) {
    let mut out = train.to_vec();
    let mut report = SmoteReport::default();
    let mut groups: BTreeMap<AamiClass, Vec<&Beat>> = BTreeMap::new();
    for b in train {
        groups.entry(b.label).or_default().push(b);
    }
    let Some(target) = groups.values().map(Vec::len).max() else {
        return (out, report);
    };

    for (&class, group) in &groups {
        let missing = target - group.len();
        if missing == 0 {
            continue;
        }
        report.synthetic_per_class.insert(class, missing);
        if group.len() == 1 {
            log::warn!("class {class} has a single training beat; duplicating it {missing} times");
            report.singleton_classes.push(class);
            out.extend((0..missing).map(|_| Beat {
                synthetic: true,
                ..group[0].clone()
            }));
            continue;
        }

        let k = k.clamp(1, group.len() - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(class.index() as u64));
        let mut neighbour_cache: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for n in 0..missing {
            let i = n % group.len();
            let neighbours = neighbour_cache
                .entry(i)
                .or_insert_with(|| nearest_neighbours(group, i, k));
            let j = neighbours[rng.gen_range(0..neighbours.len())];
            let u: f64 = rng.gen();
            out.push(Beat {
                samples: interpolate(&group[i].samples, &group[j].samples, u),
                label: class,
                record_id: group[i].record_id.clone(),
                r_peak: group[i].r_peak,
                synthetic: true,
            });
        }
    }
    (out, report)
}

/// `x + u * (y - x)`.
pub fn interpolate(x: &[f64], y: &[f64], u: f64) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a + u * (b - a)).collect()
}

/// Summary written next to prepared datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<String>,
    #[serde(rename = "L")]
    pub beat_len: usize,
    pub seed: u64,
    pub split_mode: SplitMode,
    /// split name -> class letter -> count
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl DatasetManifest {
    pub fn describe(dataset: &Dataset, split_mode: SplitMode, balanced_train: Option<&[Beat]>) -> Self {
        let records = dataset
            .train
            .iter()
            .chain(&dataset.test)
            .map(|b| b.record_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let count = |beats: &[Beat]| {
            class_counts(beats)
                .into_iter()
                .map(|(c, n)| (c.to_string(), n))
                .collect::<BTreeMap<_, _>>()
        };
        let mut counts = BTreeMap::new();
        counts.insert("train".to_string(), count(&dataset.train));
        counts.insert("test".to_string(), count(&dataset.test));
        if let Some(b) = balanced_train {
            counts.insert("train_balanced".to_string(), count(b));
        }
        Self {
            records,
            beat_len: dataset.train.first().map_or(0, |b| b.samples.len()),
            seed: dataset.seed,
            split_mode,
            counts,
        }
    }
}
