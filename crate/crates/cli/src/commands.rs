use std::collections::BTreeMap;
use std::path::Path;

use ecgfuse_core::beats::class_counts;
use ecgfuse_core::gaf::{self, GafMatrix};
use ecgfuse_core::harness::config::SourceFormat;
use ecgfuse_core::harness::experiment::{self, mlp_arch, prepare, record_beats, record_names, rnn_arch, train_system};
use ecgfuse_core::harness::{ExperimentConfig, HarnessError};
use ecgfuse_core::models::{grad_check as check, write_history_csv, ModelParams, ViewKind};
use ecgfuse_core::wfdb::{map_to_aami, write_beat_csv, BeatLabel, BeatRow, EcgRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::Result;

const RNN_TOLERANCE: f64 = 1e-4;
const MLP_TOLERANCE: f64 = 1e-6;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn synth(dir: &Path, seed: u64) -> Result<()> {
    let names = ecgfuse_core::synth::write_bundled_set(dir, seed)?;
    println!("wrote {} to {}", names.join(", "), dir.display());
    Ok(())
}

pub fn ingest(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let d = &config.dataset;
    let mut records = Vec::new();
    match d.format {
        SourceFormat::Csv => {
            let (beats, _) = experiment::load_beats(config)?;
            let counts: BTreeMap<String, usize> = class_counts(&beats).into_iter().map(|(c, n)| (c.to_string(), n)).collect();
            records.push(json!({ "source": d.source, "beats": counts }));
        }
        SourceFormat::Wfdb => {
            for name in record_names(config)? {
                let rec = EcgRecord::read(&d.source, &name, &d.annotator)?;
                let bad = rec.consistency_failures();
                let signals: Vec<_> = rec
                    .header
                    .signals
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        json!({
                            "description": s.description,
                            "gain": s.gain,
                            "baseline": s.baseline,
                            "initial_value": s.initial_value,
                            "checksum": s.checksum,
                            "consistent": !bad.contains(&i),
                        })
                    })
                    .collect();
                let mut symbols: BTreeMap<String, usize> = BTreeMap::new();
                let mut non_beats = 0;
                for a in &rec.annotations {
                    match map_to_aami(a.symbol) {
                        BeatLabel::Beat(c) => *symbols.entry(c.to_string()).or_default() += 1,
                        BeatLabel::NonBeat => non_beats += 1,
                    }
                }
                let segmented = record_beats(config, &name)?.len();
                records.push(json!({
                    "record": name,
                    "sampling_rate": rec.header.sampling_rate,
                    "n_samples": rec.signals.first().map_or(0, Vec::len),
                    "signals": signals,
                    "annotations": rec.annotations.len(),
                    "beats": symbols,
                    "non_beats": non_beats,
                    "segmented": segmented,
                }));
            }
        }
    }
    let report = json!({ "records": records });
    let path = dir.join("ingest.json");
    experiment::write_json(&path, &report)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("json value"));
    Ok(())
}

pub fn segment(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = prepare(config)?;
    let train: Vec<BeatRow> = data
        .train
        .iter()
        .map(|b| BeatRow {
            samples: b.samples.clone(),
            label: b.label.index(),
        })
        .collect();
    let test: Vec<BeatRow> = data
        .test_inputs()
        .into_iter()
        .zip(data.test_labels())
        .map(|(samples, label)| BeatRow { samples, label })
        .collect();
    write_beat_csv(&dir.join("train.csv"), &train)?;
    write_beat_csv(&dir.join("test.csv"), &test)?;
    let manifest = data.manifest(config);
    experiment::write_json(&dir.join("manifest.json"), &manifest)?;
    println!("{}", serde_json::to_string(&manifest.counts).expect("counts serialize"));
    Ok(())
}

fn resize(g: GafMatrix, res: Option<usize>) -> Result<GafMatrix> {
    Ok(match res {
        None => g,
        Some(r) if r == g.n() => g,
        Some(r) if r < g.n() => gaf::downsample(&g, r)?,
        Some(r) => gaf::upsample_bilinear(&g, r)?,
    })
}

pub fn gaf_export(config: &ExperimentConfig, dir: &Path, count: usize, res: Option<usize>, csv: bool) -> Result<()> {
    let data = prepare(config)?;
    let range = config.gaf.range;
    for (i, (x, beat)) in data.test_inputs().iter().zip(&data.dataset.test).take(count).enumerate() {
        let g = resize(gaf::gaf_encode(&range.rescale(x), range)?, res)?;
        let stem = format!("beat{i:04}_{}", beat.label.letter());
        gaf::export_pgm(&g, &dir.join(format!("{stem}.pgm")))?;
        if csv {
            let path = dir.join(format!("{stem}.csv"));
            let file = std::fs::File::create(&path).map_err(io(&path))?;
            gaf::write_csv(&g, std::io::BufWriter::new(file)).map_err(io(&path))?;
        }
    }
    println!("exported {} images to {}", count.min(data.dataset.test.len()), dir.display());
    Ok(())
}

pub fn train(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = prepare(config)?;
    let run = train_system(config, &data)?;
    run.system.save(dir, config)?;
    experiment::write_json(&dir.join("manifest.json"), &data.manifest(config))?;
    for (file, history) in [("history_rnn.csv", &run.rnn_history), ("history_mlp.csv", &run.mlp_history)] {
        let path = dir.join(file);
        let out = std::fs::File::create(&path).map_err(io(&path))?;
        write_history_csv(history, std::io::BufWriter::new(out)).map_err(io(&path))?;
    }
    println!(
        "trained recurrent view for {} epochs, image view for {}; checkpoints in {}",
        run.rnn_history.len(),
        run.mlp_history.len(),
        dir.display()
    );
    Ok(())
}

pub fn grad_check(config: &ExperimentConfig, coords: usize, eps: f64, input_len: Option<usize>, seed: u64) -> Result<()> {
    let mut config = config.clone();
    if let Some(len) = input_len {
        config.dataset.beat_len = len;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beat: Vec<f64> = (0..config.dataset.beat_len).map(|_| rng.gen()).collect();
    let image = gaf::image_features(&beat, config.gaf.range, config.gaf.res)?;
    let target = rng.gen_range(0..config.n_classes());

    let rnn = ModelParams::init(rnn_arch(&config), ViewKind::TimeSeries, seed);
    let mlp = ModelParams::init(mlp_arch(&config), ViewKind::Image, seed.wrapping_add(1));
    let r = check(&rnn, &beat, target, eps, coords, seed)?;
    let m = check(&mlp, &image, target, eps, coords, seed)?;
    let pass = r.max_relative_error < RNN_TOLERANCE && m.max_relative_error < MLP_TOLERANCE;
    let report = json!({
        "recurrent": { "report": r, "tolerance": RNN_TOLERANCE },
        "mlp": { "report": m, "tolerance": MLP_TOLERANCE },
        "pass": pass,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("json value"));
    if pass {
        Ok(())
    } else {
        Err(HarnessError::Numeric("gradient check exceeded tolerance".into()))
    }
}
