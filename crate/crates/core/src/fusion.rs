//! Two-view decision fusion: Dempster's rule over per-class evidence, plus
//! score-mean and feature-level baselines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{self, argmax, Architecture, ClassProbs, ModelError, ModelParams, TrainConfig, ViewKind};

/// Tolerance on the unit mass of an input probability vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("views disagree on class count: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("not a probability vector (sum {sum}, min {min})")]
    BadSimplex { sum: f64, min: f64 },
    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, FusionError>;

/// How the conflict set `{p_j | j != y}` is reduced to a scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictReduction {
    /// `1 - p_y`; keeps evidence and conflict complementary.
    #[default]
    Sum,
    Product,
    Max,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub conflict_reduction: ConflictReduction,
    pub renormalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvidencePair {
    pub evidence: f64,
    pub conflict: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMethod {
    #[serde(rename = "DST")]
    Dst,
    ScoreMean,
    FeatureLevel,
}

impl FusionMethod {
    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::Dst => "DST",
            FusionMethod::ScoreMean => "ScoreMean",
            FusionMethod::FeatureLevel => "FeatureLevel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedDecision {
    pub p: Vec<f64>,
    pub chosen: usize,
    pub method: FusionMethod,
    pub renormalized: bool,
}

pub fn check_simplex(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if p.is_empty() || !sum.is_finite() || (sum - 1.0).abs() > SIMPLEX_TOLERANCE || min < 0.0 || max > 1.0 {
        return Err(FusionError::BadSimplex { sum, min });
    }
    Ok(())
}

fn check_pair(p1: &[f64], p2: &[f64]) -> Result<()> {
    if p1.len() != p2.len() {
        return Err(FusionError::LengthMismatch {
            left: p1.len(),
            right: p2.len(),
        });
    }
    check_simplex(p1)?;
    check_simplex(p2)
}

pub fn evidence_conflict(p: &ClassProbs, y: usize) -> Result<EvidencePair> {
    check_simplex(&p.p)?;
    if y >= p.p.len() {
        return Err(FusionError::LengthMismatch {
            left: p.p.len(),
            right: y + 1,
        });
    }
    Ok(evidence_conflict_with(&p.p, y, ConflictReduction::Sum))
}

pub fn evidence_conflict_with(p: &[f64], y: usize, reduction: ConflictReduction) -> EvidencePair {
    let others = p.iter().enumerate().filter(|&(j, _)| j != y).map(|(_, &v)| v);
    let conflict = match reduction {
        ConflictReduction::Sum => 1.0 - p[y],
        ConflictReduction::Product => others.product(),
        ConflictReduction::Max => others.fold(0.0, f64::max),
    };
    EvidencePair {
        evidence: p[y],
        conflict,
    }
}

/// `E1 E2 / (1 - C1 C2)`, with `0/0` taken as 0.
fn combine(a: EvidencePair, b: EvidencePair) -> f64 {
    let num = a.evidence * b.evidence;
    let den = 1.0 - a.conflict * b.conflict;
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn finish(mut p: Vec<f64>, method: FusionMethod, renormalize: bool) -> FusedDecision {
    let chosen = argmax(&p);
    let mut renormalized = false;
    if renormalize {
        let sum: f64 = p.iter().sum();
        if sum > 0.0 {
            p.iter_mut().for_each(|v| *v /= sum);
            renormalized = true;
        }
    }
    FusedDecision {
        p,
        chosen,
        method,
        renormalized,
    }
}

pub fn dst_fuse(p1: &ClassProbs, p2: &ClassProbs, renormalize: bool) -> Result<FusedDecision> {
    dst_fuse_with(
        &p1.p,
        &p2.p,
        FusionConfig {
            conflict_reduction: ConflictReduction::Sum,
            renormalize,
        },
    )
}

pub fn dst_fuse_with(p1: &[f64], p2: &[f64], config: FusionConfig) -> Result<FusedDecision> {
    check_pair(p1, p2)?;
    let fused = (0..p1.len())
        .map(|y| {
            combine(
                evidence_conflict_with(p1, y, config.conflict_reduction),
                evidence_conflict_with(p2, y, config.conflict_reduction),
            )
        })
        .collect();
    Ok(finish(fused, FusionMethod::Dst, config.renormalize))
}

pub fn score_fuse(p1: &ClassProbs, p2: &ClassProbs) -> Result<FusedDecision> {
    score_fuse_slices(&p1.p, &p2.p)
}

pub fn score_fuse_slices(p1: &[f64], p2: &[f64]) -> Result<FusedDecision> {
    if p1.len() != p2.len() {
        return Err(FusionError::LengthMismatch {
            left: p1.len(),
            right: p2.len(),
        });
    }
    let fused = p1.iter().zip(p2).map(|(a, b)| (a + b) / 2.0).collect();
    Ok(finish(fused, FusionMethod::ScoreMean, false))
}

/// Softmax regression over the concatenated penultimate features of both
/// view models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFusionHead {
    pub dim1: usize,
    pub dim2: usize,
    pub params: ModelParams,
}

impl FeatureFusionHead {
    fn arch(dim1: usize, dim2: usize, classes: usize) -> Architecture {
        Architecture::Mlp {
            inputs: dim1 + dim2,
            hidden: vec![],
            classes,
        }
    }

    pub fn zeros(dim1: usize, dim2: usize, classes: usize) -> Self {
        Self {
            dim1,
            dim2,
            params: ModelParams::zeros(Self::arch(dim1, dim2, classes), ViewKind::Features),
        }
    }

    pub fn train(features1: &[Vec<f64>], features2: &[Vec<f64>], labels: &[usize], classes: usize, config: &TrainConfig) -> Result<Self> {
        if features1.len() != features2.len() {
            return Err(FusionError::DimMismatch {
                expected: features1.len(),
                found: features2.len(),
            });
        }
        let dim1 = features1.first().map_or(0, Vec::len);
        let dim2 = features2.first().map_or(0, Vec::len);
        let mut inputs = Vec::with_capacity(features1.len());
        for (f1, f2) in features1.iter().zip(features2) {
            inputs.push(concat(dim1, dim2, f1, f2)?);
        }
        let outcome = models::train(Self::arch(dim1, dim2, classes), ViewKind::Features, &inputs, labels, config)?;
        Ok(Self {
            dim1,
            dim2,
            params: outcome.params,
        })
    }

    pub fn predict(&self, f1: &[f64], f2: &[f64]) -> Result<FusedDecision> {
        let x = concat(self.dim1, self.dim2, f1, f2)?;
        let probs = self.params.predict(&x)?;
        Ok(finish(probs.p, FusionMethod::FeatureLevel, false))
    }
}

fn concat(dim1: usize, dim2: usize, f1: &[f64], f2: &[f64]) -> Result<Vec<f64>> {
    for (expected, found) in [(dim1, f1.len()), (dim2, f2.len())] {
        if expected != found {
            return Err(FusionError::DimMismatch { expected, found });
        }
    }
    let mut x = f1.to_vec();
    x.extend_from_slice(f2);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn probs(p: &[f64]) -> ClassProbs {
        ClassProbs {
            p: p.to_vec(),
            view: ViewKind::TimeSeries,
        }
    }

    #[test]
    fn evidence_examples() {
        let e = evidence_conflict(&probs(&[1.0, 0.0, 0.0]), 0).unwrap();
        assert_eq!((e.evidence, e.conflict), (1.0, 0.0));
        let e = evidence_conflict(&probs(&[0.25; 4]), 2).unwrap();
        assert_eq!((e.evidence, e.conflict), (0.25, 0.75));
        assert!(matches!(
            evidence_conflict(&probs(&[0.5, 0.6]), 0),
            Err(FusionError::BadSimplex { .. })
        ));
    }

    #[test]
    fn dst_examples() {
        let d = dst_fuse(&probs(&[0.5, 0.5]), &probs(&[0.5, 0.5]), false).unwrap();
        assert_abs_diff_eq!(d.p[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.p[1], 1.0 / 3.0, epsilon = 1e-15);

        let d = dst_fuse(&probs(&[1.0, 0.0]), &probs(&[1.0, 0.0]), false).unwrap();
        assert_eq!(d.p, vec![1.0, 0.0]);
        assert_eq!(d.chosen, 0);

        let d = dst_fuse(&probs(&[0.8, 0.2]), &probs(&[0.6, 0.4]), false).unwrap();
        assert_abs_diff_eq!(d.p[0], 0.48 / 0.92, epsilon = 1e-12);
        assert_abs_diff_eq!(d.p[1], 0.08 / 0.52, epsilon = 1e-12);
        assert_eq!(d.chosen, 0);
        assert!(!d.renormalized);
    }

    #[test]
    fn both_certain_against_class_is_zero() {
        let d = dst_fuse(&probs(&[0.0, 1.0]), &probs(&[0.0, 1.0]), false).unwrap();
        assert_eq!(d.p, vec![0.0, 1.0]);
        for r in [ConflictReduction::Product, ConflictReduction::Max] {
            let cfg = FusionConfig {
                conflict_reduction: r,
                renormalize: false,
            };
            let d = dst_fuse_with(&[0.0, 1.0], &[0.0, 1.0], cfg).unwrap();
            assert!(d.p.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn renormalize_reports_unit_mass() {
        let d = dst_fuse(&probs(&[0.8, 0.2]), &probs(&[0.6, 0.4]), true).unwrap();
        assert!(d.renormalized);
        assert_abs_diff_eq!(d.p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(d.chosen, 0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            dst_fuse(&probs(&[0.5, 0.5]), &probs(&[0.2, 0.3, 0.5]), false),
            Err(FusionError::LengthMismatch { left: 2, right: 3 })
        ));
        assert!(matches!(
            dst_fuse(&probs(&[1.5, -0.5]), &probs(&[0.5, 0.5]), false),
            Err(FusionError::BadSimplex { .. })
        ));
    }

    #[test]
    fn score_examples() {
        let d = score_fuse(&probs(&[1.0, 0.0]), &probs(&[0.0, 1.0])).unwrap();
        assert_eq!(d.p, vec![0.5, 0.5]);
        assert_eq!(d.chosen, 0);
        let d = score_fuse(&probs(&[0.2, 0.8]), &probs(&[0.2, 0.8])).unwrap();
        assert_eq!(d.p, vec![0.2, 0.8]);
        assert_eq!(d.method, FusionMethod::ScoreMean);
    }

    #[test]
    fn zero_head_is_uniform() {
        let head = FeatureFusionHead::zeros(3, 2, 4);
        let d = head.predict(&[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap();
        for v in &d.p {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
        assert!(matches!(
            head.predict(&[1.0, 2.0], &[4.0, 5.0]),
            Err(FusionError::DimMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn head_overfits_separable_features() {
        let mut f1 = Vec::new();
        let mut f2 = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let c = i % 3;
            let jitter = (i as f64 * 0.7).sin() * 0.1;
            let mut a = vec![0.0; 3];
            a[c] = 1.0 + jitter;
            f1.push(a);
            f2.push(vec![jitter, c as f64 * 0.5]);
            labels.push(c);
        }
        let cfg = TrainConfig {
            lr: 0.05,
            max_epochs: 200,
            patience: None,
            val_fraction: 0.0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let head = FeatureFusionHead::train(&f1, &f2, &labels, 3, &cfg).unwrap();
        let correct = (0..30)
            .filter(|&i| head.predict(&f1[i], &f2[i]).unwrap().chosen == labels[i])
            .count();
        assert_eq!(correct, 30);
        let again = FeatureFusionHead::train(&f1, &f2, &labels, 3, &cfg).unwrap();
        assert_eq!(head, again);
    }

    fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, m).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect()
        })
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop_oneof![Just(2usize), Just(3), Just(5)].prop_flat_map(|m| (simplex(m), simplex(m)))
    }

    proptest! {
        #[test]
        fn commutative_and_bounded((a, b) in pair()) {
            let ab = dst_fuse(&probs(&a), &probs(&b), false).unwrap();
            let ba = dst_fuse(&probs(&b), &probs(&a), false).unwrap();
            prop_assert_eq!(&ab.p, &ba.p);
            for v in &ab.p {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn renormalization_keeps_argmax((a, b) in pair()) {
            let raw = dst_fuse(&probs(&a), &probs(&b), false).unwrap();
            let norm = dst_fuse(&probs(&a), &probs(&b), true).unwrap();
            prop_assert_eq!(raw.chosen, norm.chosen);
            prop_assert_eq!(argmax(&norm.p), norm.chosen);
        }
    }
}
