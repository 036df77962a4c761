use std::path::Path;

use ecgfuse_core::beats::minmax_normalize;
use ecgfuse_core::harness::experiment::{evaluate, load_beats, prepare, record_names, run_experiment, train_system};
use ecgfuse_core::harness::sweep::{noise_sweep, write_sweep_csv};
use ecgfuse_core::harness::{Average, ExperimentConfig, HarnessError, Method, SourceFormat, TrainedSystem};
use ecgfuse_core::noise::NoiseKind;
use ecgfuse_core::synth::{synth_record, SynthConfig};
use ecgfuse_core::wfdb::{write_beat_csv, BeatRow};

fn write_records(dir: &Path) {
    for (i, name) in ["a01", "a02", "a03"].iter().enumerate() {
        let cfg = SynthConfig {
            n_beats: 90,
            mix: [0.4, 0.15, 0.2, 0.1, 0.15],
            seed: 40 + i as u64,
            ..SynthConfig::default()
        };
        synth_record(name, &cfg).write(dir).unwrap();
    }
}

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_source(dir, SourceFormat::Wfdb);
    c.seed = 5;
    c.dataset.beat_len = 64;
    c.gaf.res = 8;
    c.models.rnn.hidden = 8;
    c.models.rnn.dense = vec![16];
    c.models.mlp.hidden = vec![16];
    c.models.train.max_epochs = 4;
    c.models.train.patience = None;
    c.sweep.snrs = vec![10.0, 0.0];
    c.sweep.kinds = vec![NoiseKind::Awgn, NoiseKind::BaselineWander];
    c
}

fn sweep_bytes(config: &ExperimentConfig) -> Vec<u8> {
    let data = prepare(config).unwrap();
    let run = train_system(config, &data).unwrap();
    let rows = noise_sweep(&run.system, &data.dataset.test, config.n_classes(), &config.sweep, config.seed, None).unwrap();
    let mut out = Vec::new();
    write_sweep_csv(&rows, Average::Macro, &mut out).unwrap();
    out
}

#[test]
fn sweep_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write_records(dir.path());
    let config = small_config(dir.path());
    let first = sweep_bytes(&config);
    assert_eq!(first, sweep_bytes(&config));

    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,snr_db,method,accuracy,macro_precision,macro_recall,seed");
    // clean plus 2 kinds x 2 SNRs, five methods each
    assert_eq!(lines.len(), 1 + 5 * 5);
    assert!(lines[1].starts_with("clean,inf,view1,"));
    assert!(lines[6].starts_with("awgn,10,view1,"));
}

#[test]
fn different_seed_changes_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    write_records(dir.path());
    let config = small_config(dir.path());
    let other = ExperimentConfig { seed: 6, ..config.clone() };
    assert_ne!(sweep_bytes(&config), sweep_bytes(&other));
}

#[test]
fn missing_source_is_a_config_error() {
    let config = ExperimentConfig::for_source("/nonexistent/ecg", SourceFormat::Wfdb);
    for err in [record_names(&config).unwrap_err(), load_beats(&config).unwrap_err()] {
        assert!(matches!(err, HarnessError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 1);
    }
}

#[test]
fn excluded_records_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    write_records(dir.path());
    let mut config = small_config(dir.path());
    assert_eq!(record_names(&config).unwrap(), ["a01", "a02", "a03"]);
    config.dataset.exclude = vec!["a02".into()];
    let (beats, names) = load_beats(&config).unwrap();
    assert_eq!(names, ["a01", "a03"]);
    assert!(beats.iter().all(|b| b.record_id != "a02"));
}

#[test]
fn record_split_keeps_records_apart() {
    let dir = tempfile::tempdir().unwrap();
    write_records(dir.path());
    let mut config = small_config(dir.path());
    config.dataset.split_mode = ecgfuse_core::beats::SplitMode::Record;
    let data = prepare(&config).unwrap();
    for b in &data.dataset.test {
        assert!(data.dataset.train.iter().all(|t| t.record_id != b.record_id));
    }
}

#[test]
fn fused_methods_track_the_views_on_training_beats() {
    let dir = tempfile::tempdir().unwrap();
    write_records(dir.path());
    let mut config = small_config(dir.path());
    config.models.train.max_epochs = 25;
    let data = prepare(&config).unwrap();
    let run = train_system(&config, &data).unwrap();
    let inputs: Vec<Vec<f64>> = data.dataset.train.iter().map(|b| minmax_normalize(&b.samples)).collect();
    let truths: Vec<usize> = data.dataset.train.iter().map(|b| b.label.index()).collect();
    let eval = evaluate(&run.system, &inputs, &truths, config.n_classes()).unwrap();
    let weakest = eval.accuracy(Method::View1).min(eval.accuracy(Method::View2));
    for method in [Method::Dst, Method::ScoreMean] {
        assert!(eval.accuracy(method) >= weakest, "{method} {} < {weakest}", eval.accuracy(method));
    }
}

#[test]
fn experiment_outputs_and_checkpoints_round_trip() {
    let data_dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_records(data_dir.path());
    let config = small_config(data_dir.path());
    let report = run_experiment(&config, Some(out.path())).unwrap();

    for file in [
        "metrics.json",
        "predictions.csv",
        "manifest.json",
        "rnn.ckpt.json",
        "mlp.ckpt.json",
        "head.ckpt.json",
        "history_rnn.csv",
        "history_mlp.csv",
    ] {
        assert!(out.path().join(file).exists(), "{file} missing");
    }
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["seed"], 5);
    for method in Method::ALL {
        assert!(metrics["methods"][method.name()]["accuracy"].is_number(), "{method}");
    }
    let predictions = std::fs::read_to_string(out.path().join("predictions.csv")).unwrap();
    assert!(predictions.starts_with("beat_id,record_id,r_peak,true_label,p1_N,"));
    assert_eq!(predictions.lines().count(), 1 + report.data.dataset.test.len());

    let loaded = TrainedSystem::load(out.path(), &config).unwrap();
    let inputs = report.data.test_inputs();
    let reloaded = evaluate(&loaded, &inputs, &report.data.test_labels(), config.n_classes()).unwrap();
    assert_eq!(reloaded.outputs, report.evaluation.outputs);

    let mut wider = config.clone();
    wider.models.mlp.hidden = vec![32];
    assert!(TrainedSystem::load(out.path(), &wider).is_err());
}

#[test]
fn csv_source_matches_segmented_beats() {
    let dir = tempfile::tempdir().unwrap();
    write_records(dir.path());
    let config = small_config(dir.path());
    let (beats, _) = load_beats(&config).unwrap();
    let rows: Vec<BeatRow> = beats
        .iter()
        .map(|b| BeatRow {
            samples: b.samples.clone(),
            label: b.label.index(),
        })
        .collect();
    let csv = dir.path().join("beats.csv");
    write_beat_csv(&csv, &rows).unwrap();

    let mut csv_config = config.clone();
    csv_config.dataset.source = csv;
    csv_config.dataset.format = SourceFormat::Csv;
    let (from_csv, names) = load_beats(&csv_config).unwrap();
    assert_eq!(names, ["beats"]);
    assert_eq!(from_csv.len(), beats.len());
    for (a, b) in from_csv.iter().zip(&beats) {
        assert_eq!(a.label, b.label);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            // written with ten significant digits
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-3), "{x} vs {y}");
        }
    }

    csv_config.dataset.beat_len = 65;
    assert!(matches!(load_beats(&csv_config).unwrap_err(), HarnessError::Data(_)));
}
