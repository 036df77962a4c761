//! Noise injection at an exact target SNR.
//!
//! Power is the population variance (mean removed), so
//! `SNR_dB = 10 log10(var(signal) / var(noise))`. Random draws come from
//! ChaCha8 seeded with a `u64`; Gaussian samples use the ziggurat sampler of
//! `rand_distr::StandardNormal`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beats::{linear_resample, minmax_normalize};
use crate::wfdb::{EcgRecord, WfdbError};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("signal has zero power")]
    ZeroPowerSignal,
    #[error("noise has zero power")]
    ZeroPowerNoise,
    #[error("no {0:?} noise record loaded")]
    NoiseRecordMissing(NoiseKind),
    #[error("noise record of {available} samples is shorter than the {needed}-sample excerpt")]
    NoiseRecordTooShort { needed: usize, available: usize },
    #[error(transparent)]
    Wfdb(#[from] WfdbError),
}

pub type Result<T> = std::result::Result<T, NoiseError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Awgn,
    BaselineWander,
    MuscleArtifact,
    ElectrodeMotion,
    NstdbBw,
    NstdbEm,
    NstdbMa,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 7] = [
        NoiseKind::Awgn,
        NoiseKind::BaselineWander,
        NoiseKind::MuscleArtifact,
        NoiseKind::ElectrodeMotion,
        NoiseKind::NstdbBw,
        NoiseKind::NstdbEm,
        NoiseKind::NstdbMa,
    ];

    /// Kinds that need no recorded noise.
    pub const SYNTHETIC: [NoiseKind; 4] = [
        NoiseKind::Awgn,
        NoiseKind::BaselineWander,
        NoiseKind::MuscleArtifact,
        NoiseKind::ElectrodeMotion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Awgn => "awgn",
            NoiseKind::BaselineWander => "baseline_wander",
            NoiseKind::MuscleArtifact => "muscle_artifact",
            NoiseKind::ElectrodeMotion => "electrode_motion",
            NoiseKind::NstdbBw => "nstdb_bw",
            NoiseKind::NstdbEm => "nstdb_em",
            NoiseKind::NstdbMa => "nstdb_ma",
        }
    }

    pub fn is_recorded(self) -> bool {
        matches!(self, NoiseKind::NstdbBw | NoiseKind::NstdbEm | NoiseKind::NstdbMa)
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// `f64::INFINITY` means clean.
    pub snr_db: f64,
    pub seed: u64,
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of squared mean-removed samples.
pub fn signal_power(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Returns `alpha * noise` with `alpha = sqrt(P_s / (P_n 10^(snr/10)))`.
pub fn scale_to_snr(signal: &[f64], noise: &[f64], snr_db: f64) -> Result<Vec<f64>> {
    let ps = signal_power(signal);
    if !(ps > 0.0) {
        return Err(NoiseError::ZeroPowerSignal);
    }
    let pn = signal_power(noise);
    if !(pn > 0.0) {
        return Err(NoiseError::ZeroPowerNoise);
    }
    let alpha = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(noise.iter().map(|x| alpha * x).collect())
}

/// SNR of `noisy` relative to `clean`, with the noise taken as their difference.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let diff: Vec<f64> = noisy.iter().zip(clean).map(|(n, c)| n - c).collect();
    10.0 * (signal_power(clean) / signal_power(&diff)).log10()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gen_awgn(len: usize, seed: u64) -> Vec<f64> {
    rng(seed).sample_iter(StandardNormal).take(len).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    /// Cycles over the whole window.
    pub cycles: f64,
    pub phase: f64,
    pub amplitude: f64,
}

pub fn sum_of_sinusoids(len: usize, parts: &[Sinusoid]) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let t = i as f64 / len as f64;
            parts
                .iter()
                .map(|s| s.amplitude * (2.0 * PI * s.cycles * t + s.phase).sin())
                .sum()
        })
        .collect()
}

/// Baseline wander: two sinusoids with 0.5 to 2 cycles over the window.
pub fn gen_bw(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let parts: Vec<Sinusoid> = (0..2)
        .map(|_| Sinusoid {
            cycles: r.gen_range(0.5..=2.0),
            phase: r.gen_range(0.0..2.0 * PI),
            amplitude: r.gen_range(0.2..1.0),
        })
        .collect();
    sum_of_sinusoids(len, &parts)
}

/// First difference of a white sequence; output is one shorter than the input.
pub fn first_difference(white: &[f64]) -> Vec<f64> {
    white.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Muscle artifact: high-passed (first-differenced) white noise.
pub fn gen_ma(len: usize, seed: u64) -> Vec<f64> {
    first_difference(&gen_awgn(len + 1, seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub onset: usize,
    pub amplitude: f64,
}

/// Sum of steps that jump at `onset` and decay with time constant `len / 8`.
pub fn decaying_steps(len: usize, steps: &[Step]) -> Vec<f64> {
    let tau = len as f64 / 8.0;
    (0..len)
        .map(|i| {
            steps
                .iter()
                .filter(|s| i >= s.onset)
                .map(|s| s.amplitude * (-((i - s.onset) as f64) / tau).exp())
                .sum()
        })
        .collect()
}

/// Electrode motion: one to three decaying steps of random onset and sign.
pub fn gen_em(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let count = r.gen_range(1..=3);
    let steps: Vec<Step> = (0..count)
        .map(|_| {
            let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            Step {
                // keep at least two samples after the onset so the step has power
                onset: r.gen_range(0..len.saturating_sub(2).max(1)),
                amplitude: sign * r.gen_range(0.5..1.0),
            }
        })
        .collect();
    decaying_steps(len, &steps)
}

/// Recorded noise (e.g. the NSTDB `bw`, `em`, `ma` records) in mV.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    pub bw: Option<Vec<f64>>,
    pub em: Option<Vec<f64>>,
    pub ma: Option<Vec<f64>>,
    /// Record samples per excerpt; the excerpt is resampled to the beat length.
    pub excerpt_len: Option<usize>,
    pub sources: Vec<String>,
}

impl NoiseBank {
    /// Loads whichever of `bw`, `em`, `ma` exist in `dir` (channel 0).
    pub fn load(dir: &Path, excerpt_len: Option<usize>) -> Result<Self> {
        let mut bank = NoiseBank {
            excerpt_len,
            ..Default::default()
        };
        for name in ["bw", "em", "ma"] {
            if !dir.join(format!("{name}.hea")).exists() {
                continue;
            }
            let rec = EcgRecord::read(dir, name, "atr")?;
            let mv = rec.physical(0);
            bank.sources.push(name.to_string());
            match name {
                "bw" => bank.bw = Some(mv),
                "em" => bank.em = Some(mv),
                _ => bank.ma = Some(mv),
            }
        }
        Ok(bank)
    }

    fn record(&self, kind: NoiseKind) -> Option<&[f64]> {
        match kind {
            NoiseKind::NstdbBw => self.bw.as_deref(),
            NoiseKind::NstdbEm => self.em.as_deref(),
            NoiseKind::NstdbMa => self.ma.as_deref(),
            _ => None,
        }
    }

    pub fn has(&self, kind: NoiseKind) -> bool {
        self.record(kind).is_some()
    }

    /// Excerpt at a seed-determined offset, resampled to `len`.
    pub fn excerpt(&self, kind: NoiseKind, len: usize, seed: u64) -> Result<Vec<f64>> {
        let record = self.record(kind).ok_or(NoiseError::NoiseRecordMissing(kind))?;
        let span = self.excerpt_len.unwrap_or(len);
        if record.len() < span {
            return Err(NoiseError::NoiseRecordTooShort {
                needed: span,
                available: record.len(),
            });
        }
        let offset = rng(seed).gen_range(0..=record.len() - span);
        Ok(linear_resample(&record[offset..offset + span], len))
    }
}

/// Raw noise of the requested kind, before SNR scaling.
pub fn generate(kind: NoiseKind, len: usize, seed: u64, bank: Option<&NoiseBank>) -> Result<Vec<f64>> {
    Ok(match kind {
        NoiseKind::Awgn => gen_awgn(len, seed),
        NoiseKind::BaselineWander => gen_bw(len, seed),
        NoiseKind::MuscleArtifact => gen_ma(len, seed),
        NoiseKind::ElectrodeMotion => gen_em(len, seed),
        recorded => bank
            .ok_or(NoiseError::NoiseRecordMissing(recorded))?
            .excerpt(recorded, len, seed)?,
    })
}

/// Adds scaled noise to a beat in physical units. Returns the noisy beat in
/// the same units; an infinite SNR returns the beat unchanged.
pub fn corrupt(beat_mv: &[f64], spec: &NoiseSpec, bank: Option<&NoiseBank>) -> Result<Vec<f64>> {
    if spec.snr_db == f64::INFINITY {
        return Ok(beat_mv.to_vec());
    }
    if !(signal_power(beat_mv) > 0.0) {
        return Err(NoiseError::ZeroPowerSignal);
    }
    let raw = generate(spec.kind, beat_mv.len(), spec.seed, bank)?;
    let scaled = scale_to_snr(beat_mv, &raw, spec.snr_db)?;
    Ok(beat_mv.iter().zip(&scaled).map(|(b, n)| b + n).collect())
}

/// [`corrupt`] followed by min-max normalization, i.e. what the classifiers see.
pub fn apply_noise(beat_mv: &[f64], spec: &NoiseSpec, bank: Option<&NoiseBank>) -> Result<Vec<f64>> {
    Ok(minmax_normalize(&corrupt(beat_mv, spec, bank)?))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-(beat, kind, SNR) seed: `root` XOR a stable hash of the cell.
pub fn cell_seed(root: u64, beat_index: usize, kind: NoiseKind, snr_db: f64) -> u64 {
    let h = splitmix64(beat_index as u64);
    let h = splitmix64(h ^ kind as u64);
    let h = splitmix64(h ^ snr_db.to_bits());
    root ^ h
}

/// Written alongside noisy evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseManifest {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub seed: u64,
    pub source_records: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn beat() -> Vec<f64> {
        (0..187)
            .map(|i| {
                let t = i as f64 / 186.0;
                1.2 * (-((t - 0.38) / 0.02).powi(2)).exp() + 0.3 * (-((t - 0.7) / 0.06).powi(2)).exp()
            })
            .collect()
    }

    #[test]
    fn power_examples() {
        assert_eq!(signal_power(&[1.0, -1.0, 1.0, -1.0]), 1.0);
        assert_eq!(signal_power(&[3.0; 5]), 0.0);
        assert_eq!(signal_power(&[0.0, 2.0]), 1.0);
    }

    #[test]
    fn scale_examples() {
        let unit = [1.0, -1.0, 1.0, -1.0];
        let two = [2.0, -2.0, 2.0, -2.0];
        assert_eq!(scale_to_snr(&unit, &unit, 0.0).unwrap(), unit.to_vec());
        let s = scale_to_snr(&unit, &unit, 10.0).unwrap();
        assert_abs_diff_eq!(s[0], 10f64.powf(-0.5), epsilon = 1e-15);
        let s = scale_to_snr(&two, &unit, 0.0).unwrap();
        assert_abs_diff_eq!(s[0], 2.0, epsilon = 1e-15);
        assert!(matches!(scale_to_snr(&[1.0; 4], &unit, 0.0), Err(NoiseError::ZeroPowerSignal)));
        assert!(matches!(scale_to_snr(&unit, &[0.0; 4], 0.0), Err(NoiseError::ZeroPowerNoise)));
    }

    #[test]
    fn awgn_is_deterministic() {
        assert_eq!(gen_awgn(100, 5), gen_awgn(100, 5));
        assert_ne!(gen_awgn(100, 5), gen_awgn(100, 6));
    }

    #[test]
    fn awgn_moments() {
        let n = 1_000_000;
        let v = gen_awgn(n, 42);
        let m = mean(&v);
        assert!(m.abs() < 4.0 / (n as f64).sqrt(), "mean {m}");
        let var = signal_power(&v);
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn synthetic_generator_constructions() {
        let zero = sum_of_sinusoids(
            50,
            &[Sinusoid {
                cycles: 1.0,
                phase: 0.3,
                amplitude: 0.0,
            }; 2],
        );
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(first_difference(&[0.7; 20]).iter().all(|&v| v == 0.0));
        let em = decaying_steps(
            64,
            &[Step {
                onset: 10,
                amplitude: -2.0,
            }],
        );
        assert!(em[..10].iter().all(|&v| v == 0.0));
        assert!(em[10..].windows(2).all(|w| w[1].abs() <= w[0].abs()));
        assert_eq!(em[10], -2.0);
    }

    #[test]
    fn generators_have_power() {
        for seed in 0..50 {
            assert!(signal_power(&gen_bw(187, seed)) > 0.0);
            assert!(signal_power(&gen_ma(187, seed)) > 0.0);
            assert!(signal_power(&gen_em(187, seed)) > 0.0);
            assert_eq!(gen_ma(187, seed).len(), 187);
        }
    }

    #[test]
    fn clean_is_identity() {
        let b = beat();
        let spec = NoiseSpec {
            kind: NoiseKind::Awgn,
            snr_db: f64::INFINITY,
            seed: 1,
        };
        assert_eq!(corrupt(&b, &spec, None).unwrap(), b);
    }

    #[test]
    fn awgn_zero_db_exact() {
        let b = beat();
        let spec = NoiseSpec {
            kind: NoiseKind::Awgn,
            snr_db: 0.0,
            seed: 9,
        };
        let noisy = corrupt(&b, &spec, None).unwrap();
        assert!(measured_snr_db(&b, &noisy).abs() < 1e-9);
    }

    #[test]
    fn recorded_noise_excerpt() {
        let record: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.01).sin() + 0.001 * i as f64).collect();
        let bank = NoiseBank {
            bw: Some(record),
            sources: vec!["bw".into()],
            ..Default::default()
        };
        let b = beat();
        let spec = NoiseSpec {
            kind: NoiseKind::NstdbBw,
            snr_db: 5.0,
            seed: 77,
        };
        let noisy = corrupt(&b, &spec, Some(&bank)).unwrap();
        assert!((measured_snr_db(&b, &noisy) - 5.0).abs() < 1e-9);
        assert_eq!(noisy, corrupt(&b, &spec, Some(&bank)).unwrap());
        let missing = NoiseSpec {
            kind: NoiseKind::NstdbEm,
            ..spec
        };
        assert!(matches!(
            corrupt(&b, &missing, Some(&bank)),
            Err(NoiseError::NoiseRecordMissing(NoiseKind::NstdbEm))
        ));
        assert!(matches!(
            corrupt(&b, &spec, None),
            Err(NoiseError::NoiseRecordMissing(_))
        ));
    }

    #[test]
    fn constant_beat_rejected() {
        let spec = NoiseSpec {
            kind: NoiseKind::Awgn,
            snr_db: 10.0,
            seed: 0,
        };
        assert!(matches!(corrupt(&[1.0; 10], &spec, None), Err(NoiseError::ZeroPowerSignal)));
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(7, 0, NoiseKind::Awgn, 10.0);
        assert_eq!(a, cell_seed(7, 0, NoiseKind::Awgn, 10.0));
        assert_ne!(a, cell_seed(7, 1, NoiseKind::Awgn, 10.0));
        assert_ne!(a, cell_seed(7, 0, NoiseKind::MuscleArtifact, 10.0));
        assert_ne!(a, cell_seed(7, 0, NoiseKind::Awgn, 5.0));
    }

    proptest! {
        #[test]
        fn achieved_snr_matches(seed in any::<u64>(), snr in 0.0f64..15.0, kind_idx in 0usize..4) {
            let b = beat();
            let spec = NoiseSpec { kind: NoiseKind::SYNTHETIC[kind_idx], snr_db: snr, seed };
            let noisy = corrupt(&b, &spec, None).unwrap();
            prop_assert!((measured_snr_db(&b, &noisy) - snr).abs() < 1e-9);
            let normalized = apply_noise(&b, &spec, None).unwrap();
            prop_assert!(normalized.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
