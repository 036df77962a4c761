use std::io::Write;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SweepConfig};
use super::experiment::{metrics_by_method, Method, TrainedSystem};
use super::metrics::{Average, Metrics};
use super::{HarnessError, Result};
use crate::beats::Beat;
use crate::noise::{apply_noise, cell_seed, NoiseBank, NoiseKind, NoiseSpec};

/// NSTDB sampling rate, used to size recorded-noise excerpts.
const NOISE_RATE: f64 = 360.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `None` for the clean baseline.
    pub kind: Option<NoiseKind>,
    /// `f64::INFINITY` for the clean baseline.
    pub snr_db: f64,
    pub method: Method,
    pub metrics: Metrics,
    pub seed: u64,
}

/// `(kind, snr)` cells in configuration order, duplicates dropped.
pub fn sweep_grid(sweep: &SweepConfig) -> Vec<(NoiseKind, f64)> {
    let mut grid: Vec<(NoiseKind, f64)> = Vec::new();
    for &kind in &sweep.kinds {
        for &snr in &sweep.snrs {
            if grid.iter().any(|&(k, s)| k == kind && s.to_bits() == snr.to_bits()) {
                log::warn!("duplicate sweep cell ({kind}, {snr} dB) ignored");
            } else {
                grid.push((kind, snr));
            }
        }
    }
    grid
}

/// Recorded noise for the configured kinds, if any need it.
pub fn load_noise_bank(config: &ExperimentConfig) -> Result<Option<NoiseBank>> {
    let recorded: Vec<NoiseKind> = config.sweep.kinds.iter().copied().filter(|k| k.is_recorded()).collect();
    if recorded.is_empty() {
        return Ok(None);
    }
    let dir = config.sweep.noise_dir.as_ref().ok_or_else(|| {
        HarnessError::Config(format!("sweep.kinds lists {} but sweep.noise_dir is not set", recorded[0]))
    })?;
    let ms = config
        .sweep
        .excerpt_ms
        .unwrap_or(config.dataset.pre_ms + config.dataset.post_ms);
    let bank = NoiseBank::load(dir, Some((ms * NOISE_RATE / 1000.0).round() as usize))?;
    if let Some(missing) = recorded.iter().find(|&&k| !bank.has(k)) {
        return Err(HarnessError::Config(format!(
            "sweep.noise_dir {} has no record for {missing}",
            dir.display()
        )));
    }
    Ok(Some(bank))
}

/// Test beats corrupted at one cell and normalized.
pub fn noisy_inputs(test: &[Beat], kind: NoiseKind, snr_db: f64, seed: u64, bank: Option<&NoiseBank>) -> Result<Vec<Vec<f64>>> {
    test.iter()
        .enumerate()
        .map(|(i, b)| {
            let spec = NoiseSpec {
                kind,
                snr_db,
                seed: cell_seed(seed, i, kind, snr_db),
            };
            Ok(apply_noise(&b.samples, &spec, bank)?)
        })
        .collect()
}

/// Evaluates every method on the clean test split and on each
/// `(kind, snr)` corruption of it. Rows come clean first, then in grid
/// order, methods in [`Method::ALL`] order within each cell.
pub fn noise_sweep(
    system: &TrainedSystem,
    test: &[Beat],
    m: usize,
    sweep: &SweepConfig,
    seed: u64,
    bank: Option<&NoiseBank>,
) -> Result<Vec<SweepRow>> {
    let truths: Vec<usize> = test.iter().map(|b| b.label.index()).collect();
    let mut cells: Vec<(Option<NoiseKind>, f64)> = vec![(None, f64::INFINITY)];
    cells.extend(sweep_grid(sweep).into_iter().map(|(k, s)| (Some(k), s)));

    let per_cell = cells
        .par_iter()
        .map(|&(kind, snr)| {
            let inputs = match kind {
                None => test.iter().map(|b| crate::beats::minmax_normalize(&b.samples)).collect(),
                Some(k) => noisy_inputs(test, k, snr, seed, bank)?,
            };
            let outputs = inputs.iter().map(|x| system.predict(x)).collect::<Result<Vec<_>>>()?;
            let metrics = metrics_by_method(&outputs, &truths, m)?;
            Ok(Method::ALL
                .iter()
                .map(|method| SweepRow {
                    kind,
                    snr_db: snr,
                    method: *method,
                    metrics: metrics[method].clone(),
                    seed,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// `kind,snr_db,method,accuracy,macro_precision,macro_recall,seed`. The
/// precision and recall columns follow `average`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], average: Average, mut out: W) -> std::io::Result<()> {
    writeln!(out, "kind,snr_db,method,accuracy,macro_precision,macro_recall,seed")?;
    for r in rows {
        let kind = r.kind.map_or("clean", NoiseKind::name);
        let snr = if r.snr_db.is_infinite() {
            "inf".to_string()
        } else {
            r.snr_db.to_string()
        };
        writeln!(
            out,
            "{kind},{snr},{},{:.6},{:.6},{:.6},{}",
            r.method,
            r.metrics.accuracy,
            r.metrics.precision(average),
            r.metrics.recall(average),
            r.seed
        )?;
    }
    out.flush()
}
